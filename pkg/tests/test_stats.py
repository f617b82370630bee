import numpy as np
import pytest

from shellmc.errors import DomainError, InsufficientSamples
from shellmc.stats import SampleAccumulator, figure_of_merit


def test_examples():
    assert SampleAccumulator.from_samples([1, 1, 1]).finalize() == (1.0, 0.0, 0.0)
    assert SampleAccumulator.from_samples([0, 2]).finalize() == pytest.approx((1.0, 2.0, 1.0))


def test_incremental_matches_batch():
    xs = np.random.default_rng(0).normal(3.0, 2.0, 1000)
    acc = SampleAccumulator()
    for x in xs:
        acc.add(x)
    ref = SampleAccumulator.from_samples(xs).finalize()
    assert acc.finalize() == pytest.approx(ref, rel=1e-12)


def test_insufficient():
    with pytest.raises(InsufficientSamples):
        SampleAccumulator.from_samples([1.0]).finalize()


def test_exponential_variance():
    xs = np.random.default_rng(1).exponential(1.0, 1_000_000)
    _, var, _ = SampleAccumulator.from_samples(xs).finalize()
    assert abs(var - 1.0) <= 3 * np.sqrt(8 / 1e6)


def test_merge_associative():
    rng = np.random.default_rng(2)
    parts = [rng.exponential(1.0, n) for n in (17, 400, 3, 1000)]
    whole = SampleAccumulator.from_samples(np.concatenate(parts)).finalize()
    left = SampleAccumulator()
    for p in parts:
        left.merge(SampleAccumulator.from_samples(p))
    a, b, c, d = (SampleAccumulator.from_samples(p) for p in parts)
    right = a.merge(b.merge(c.merge(d)))
    acc = SampleAccumulator()
    acc.add_many(parts[0])
    for p in parts[1:]:
        acc.add_many(p)
    for res in (left.finalize(), right.finalize(), acc.finalize()):
        assert res == pytest.approx(whole, rel=1e-12)


def test_figure_of_merit():
    assert figure_of_merit(1e-6, 10.0) == pytest.approx(1e5)
    for bad in ((0.0, 1.0), (-1e-6, 1.0), (1e-6, 0.0), (1e-6, -2.0)):
        with pytest.raises(DomainError):
            figure_of_merit(*bad)


def test_fom_invariant_under_split():
    xs = np.random.default_rng(3).exponential(1.0, 2000)
    full = SampleAccumulator.from_samples(xs).finalize()[2]
    a = SampleAccumulator.from_samples(xs[:1000])
    a.merge(SampleAccumulator.from_samples(xs[1000:]))
    assert figure_of_merit(a.finalize()[2], 3.0 + 4.0) == pytest.approx(figure_of_merit(full, 7.0), rel=1e-12)


def test_published_row_arithmetic():
    # the tabulated value is 6.81e4; the definition gives ten times less
    assert figure_of_merit(1.6171619e-6, 90.81) == pytest.approx(6.81e3, rel=1e-3)
