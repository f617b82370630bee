import math

import numpy as np
import pytest
from scipy import stats

from shellmc.adjoint import build_importance
from shellmc.biased import (
    _biased_fly, _scatter, biased_flight_and_collide, biased_source_emit, cross_cell_weight_update, run_biased,
)
from shellmc.config import ProblemConfig
from shellmc.errors import ConfigError, DegenerateImportance
from shellmc.rng import make_stream
from shellmc.transport import run_analog


@pytest.fixture(scope="module")
def desk_table():
    return build_importance(0.1, 1.0, 90, 200, 0.9, 1.0)[1]


def test_cross_cell_examples():
    assert cross_cell_weight_update(1.3, 0.4, 0.4) == 1.3
    assert cross_cell_weight_update(2.0, 0.5, 0.25) == 1.0
    with pytest.raises(DegenerateImportance):
        cross_cell_weight_update(1.0, 0.0, 1.0)


def test_cross_cell_telescopes():
    rng = np.random.default_rng(0)
    path = rng.uniform(1e-3, 10.0, 500)
    w = 1.7
    for a, b in zip(path[:-1], path[1:]):
        w = cross_cell_weight_update(w, a, b)
    assert w == pytest.approx(1.7 * path[-1] / path[0], rel=1e-12)


def test_emission_support_and_histogram(desk_table):
    t = desk_table
    rng = make_stream(17)
    mus = np.array([biased_source_emit(rng, t, 1.0)[0] for _ in range(100_000)])
    assert np.all(mus < 0.0)
    counts, _ = np.histogram(mus, bins=t.mu_edges)
    prob = np.diff(np.concatenate([[0.0], t.boundary_emission_cdf]))
    keep = prob * mus.size >= 5
    expected = prob[keep] * mus.size
    chi = stats.chisquare(counts[keep], expected * counts[keep].sum() / expected.sum())
    assert chi.pvalue > 0.01


def test_emission_with_unit_importance_is_lambert():
    t = build_importance(0.1, 1.0, 10, 50, 0.0, 0.0)[1]
    # no target in the way at these directions only if the ray misses it, so
    # use the directions that do hit it: there I = 1 exactly
    assert np.allclose(t.boundary_importance[t.mu_edges[1:] < -0.995], 1.0)


def test_streaming_weight_telescopes(desk_table):
    # with the in-cell rate equal to kappa_t (both zero here, so no
    # collisions) the carried weight only changes at crossings, and the
    # product of crossing ratios is I_end / I_start
    t = desk_table
    ks = np.zeros_like(t.I)
    rng = make_stream(1)
    gen = np.random.default_rng(4)
    for _ in range(300):
        r0 = gen.uniform(0.12, 0.99)
        mu0 = gen.uniform(-1.0, 1.0)
        j = int(np.searchsorted(t.r_edges, r0, side="right") - 1)
        l = int(np.searchsorted(t.mu_edges, mu0, side="right") - 1)
        if t.I[j, l] <= 0.0:
            continue
        out = _biased_fly(r0, mu0, j, l, 1.0, math.inf, rng, t.r_edges, t.mu_edges, t.I, ks, 0.0,
                          t.direction_cdf)
        _, _, j1, l1, W, status, tally, events = out
        assert events >= 1
        assert W == pytest.approx(t.I[j1, l1] / t.I[j, l], rel=1e-10)


def test_collision_keeps_carried_weight(desk_table):
    t = desk_table
    ks = np.full_like(t.I, t.kappa_t)
    rng = make_stream(6)
    # one cell, one bin: no crossings can occur before census, so W is fixed
    for _ in range(100):
        out = _biased_fly(0.5, 0.0, 36, 100, 2.5, 1e-3, rng, t.r_edges, t.mu_edges, t.I, ks, t.kappa_t,
                          t.direction_cdf)
        assert out[4] == 2.5 or out[2] != 36 or out[3] != 100


def test_scatter_with_uniform_importance_is_uniform():
    edges = np.linspace(-1, 1, 101)
    cdf = np.linspace(0.01, 1.0, 100)
    rng = make_stream(2)
    mus = np.array([_scatter(rng, cdf, edges)[0] for _ in range(100_000)])
    assert stats.kstest(mus, "uniform", args=(-1, 2)).pvalue > 0.01


def test_uniform_importance_matches_analog():
    # with kappa_s = 0 the table is the pure boundary exponential; the biased
    # engine must still reproduce the analog answer
    cfg = ProblemConfig(n=20_000, kappa_s=0.0, kappa_t=1.0, n_mu=100, n_r=30)
    a = run_analog(cfg)
    b = run_biased(cfg.with_(importance=True))
    assert abs(a.flux_mean - b.flux_mean) <= 3 * math.sqrt(a.mean_variance + b.mean_variance)


def test_desk_reach_and_agreement():
    cfg = ProblemConfig(n=10_000, n_mu=200, importance=True)
    b = run_biased(cfg)
    a = run_analog(cfg.with_(importance=False))
    assert b.reach_fraction >= 0.8
    assert abs(a.flux_mean - b.flux_mean) <= 3 * math.sqrt(a.mean_variance + b.mean_variance)
    assert b.mean_variance < a.mean_variance
    assert b.setup_time > 0.0 and b.wall_time > b.setup_time


def test_flight_wrapper(desk_table):
    rng = make_stream(8)
    r, mu, w, status, tally, events = biased_flight_and_collide(1.0, -0.9, 1e-3, desk_table, rng)
    assert status in ("exited_inner", "exited_outer")
    assert events >= 1
    assert (tally > 0) == (status == "exited_inner")


def test_determinism_and_workers():
    cfg = ProblemConfig(n=6000, n_mu=100, importance=True, seed=5)
    a, b = run_biased(cfg, workers=1), run_biased(cfg, workers=3)
    assert a.flux_mean == b.flux_mean and a.sample_variance == b.sample_variance


def test_config_guards():
    with pytest.raises(ConfigError):
        run_biased(ProblemConfig(importance=False))
    with pytest.raises(ConfigError):
        ProblemConfig(alpha=0.0, source="shell", importance=True)
