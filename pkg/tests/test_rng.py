import numpy as np
from scipy import stats

from shellmc.rng import make_stream, uniforms


def test_reproducible_and_distinct():
    a = uniforms(make_stream(1, 0), 1000)
    assert np.array_equal(a, uniforms(make_stream(1, 0), 1000))
    assert not np.array_equal(a, uniforms(make_stream(1, 1), 1000))
    assert not np.array_equal(a, uniforms(make_stream(2, 0), 1000))


def test_uniformity():
    u = uniforms(make_stream(9), 200_000)
    assert u.min() >= 0.0 and u.max() < 1.0
    assert stats.kstest(u, "uniform").pvalue > 0.01


def test_neighbouring_streams_uncorrelated():
    first = np.array([uniforms(make_stream(3, k), 1)[0] for k in range(20_000)])
    assert abs(np.corrcoef(first[:-1], first[1:])[0, 1]) < 4 / np.sqrt(first.size)
