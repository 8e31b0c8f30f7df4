"""The thermal/Poissonian mixture realisation of (mean, g2) noise."""

import numpy as np
import pytest

from photonmem.noise import NoiseLaw


@pytest.mark.parametrize("mean", [0.01, 0.3, 1.0, 4.0])
@pytest.mark.parametrize("g2", [1.0, 1.3, 1.8, 2.0, 2.7])
def test_pmf_hits_target_moments(mean, g2):
    law = NoiseLaw(mean, g2)
    k = np.arange(400.0)
    p = law.pmf(399)
    assert p.sum() == pytest.approx(1.0, abs=1e-9)
    got_mean = p @ k
    got_fact2 = p @ (k * (k - 1.0))
    assert got_mean == pytest.approx(mean, rel=1e-9)
    assert got_fact2 / got_mean**2 == pytest.approx(g2, rel=1e-9)


def test_zero_mean_is_vacuum():
    law = NoiseLaw(0.0, 2.0)
    p = law.pmf(5)
    assert p[0] == 1.0
    assert np.all(law.sample(np.random.default_rng(0), 100) == 0)
    assert law.pgf(0.3) == pytest.approx(1.0)


def test_sub_poissonian_not_realisable():
    with pytest.raises(ValueError):
        NoiseLaw(0.5, 0.5).components()


def test_pgf_consistent_with_pmf():
    law = NoiseLaw(0.7, 1.6)
    k = np.arange(200.0)
    p = law.pmf(199)
    for s in (0.0, 0.4, 1.0):
        assert law.pgf(s) == pytest.approx(float(p @ s**k), abs=1e-12)


def test_sampled_moments_match(seed=5):
    rng = np.random.default_rng(seed)
    law = NoiseLaw(0.4, 1.7)
    draws = law.sample(rng, 400_000)
    mean = draws.mean()
    fact2 = (draws * (draws - 1.0)).mean()
    assert mean == pytest.approx(0.4, rel=0.02)
    assert fact2 / mean**2 == pytest.approx(1.7, rel=0.05)


def test_p0_p1():
    law = NoiseLaw(0.2, 1.0)  # pure Poissonian
    p0, p1 = law.p0_p1()
    assert p0 == pytest.approx(np.exp(-0.2))
    assert p1 == pytest.approx(0.2 * np.exp(-0.2))
