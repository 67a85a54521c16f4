import math

import numpy as np
import pytest

from pkbd import experiments as ex
from pkbd.synth import centroids_triple


@pytest.fixture
def tiny():
    return ex.ExperimentOptions(replications=2, seed=1, restarts=1, max_iterations=50, rhos=(0.9,), m_max=3)


def test_efficiency_table_shape():
    rows = ex.efficiency_table()
    assert len(rows) == len(ex.EFFICIENCY_GRID)
    assert all(0 < r["efficiency_uniform"] <= r["efficiency_vmf"] <= 1 for r in rows)


@pytest.mark.parametrize("c", [0.0, 0.3, 0.9, -0.2])
def test_triple_cosine_inverse(c):
    mus = np.array(centroids_triple(ex.triple_a_for_cosine(c)))
    g = mus @ mus.T
    off = g[~np.eye(3, dtype=bool)]
    assert np.allclose(off, c, atol=1e-12)


def test_selection_table_rows(tiny):
    rows = ex.selection_table(tiny)
    assert [r["m"] for r in rows] == [1, 2, 3]
    assert math.isclose(sum(r["share_estimated"] for r in rows), 1.0)
    assert all(r["ed1_mean"] >= 0 for r in rows)


def test_selection_replicate_is_seeded(tiny):
    a = ex.selection_replicate(0.9, np.random.default_rng(3), tiny)
    b = ex.selection_replicate(0.9, np.random.default_rng(3), tiny)
    assert a == b


def test_noise_and_overlap_grids(tiny, monkeypatch):
    monkeypatch.setattr(ex, "NOISE_PROPORTIONS", (0.3,))
    monkeypatch.setattr(ex, "PAIR_COSINES", (0.0,))
    monkeypatch.setattr(ex, "TRIPLE_COSINES", (0.0,))
    for fn, key in ((ex.noise_proportion_grid, "noise_proportion"), (ex.pair_overlap_grid, "cosine"), (ex.triple_overlap_grid, "cosine")):
        (row,) = fn(tiny)
        assert key in row
        assert -1.0 <= row["ari_mean"] <= 1.0
        assert 0.0 <= row["macro_precision_mean"] <= 1.0


def test_lda_grid_reports_sparsity(tiny, monkeypatch):
    monkeypatch.setattr(ex, "LDA_GRID", ((20, 30, 40),))
    (row,) = ex.lda_grid(tiny)
    assert 0.0 <= row["sparsity"] <= 1.0
    assert row["v_over_xi"] == pytest.approx(40 / 30)


def test_run_experiment_unknown_name(tiny):
    with pytest.raises((KeyError, ValueError)):
        ex.run_experiment("nope", tiny)
