import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cstau import noise
from cstau.noise import BrownianBundle, rotate_noise, sample_bundle

seeds = st.integers(min_value=0, max_value=2**63 - 1)


def test_same_seed_same_increments():
    a, b = sample_bundle(7, 4), sample_bundle(7, 4)
    for name in ("dB", "dW1", "dW2"):
        assert np.array_equal(getattr(a, name), getattr(b, name))


@given(seeds, st.integers(1, 200))
def test_bundle_invariants(seed, n):
    b = sample_bundle(seed, n)
    assert b.dB.shape == b.dW1.shape == b.dW2.shape == (n,)
    assert b.B()[0] == b.W1()[0] == b.W2()[0] == 0.0
    assert b.B()[-1] == pytest.approx(b.dB.sum(), abs=1e-12)
    assert b.dt == 1.0 / n
    assert not b.dB.flags.writeable


def test_streams_differ_and_seeds_differ():
    b = sample_bundle(3, 100)
    assert not np.array_equal(b.dB, b.dW1)
    assert not np.array_equal(b.dW1, b.dW2)
    assert not np.array_equal(b.dB, sample_bundle(4, 100).dB)


def test_zero_steps_rejected():
    with pytest.raises(ValueError):
        sample_bundle(1, 0)


def test_wrong_length_rejected():
    with pytest.raises(ValueError):
        BrownianBundle(0, 3, np.zeros(3), np.zeros(2), np.zeros(3))


@given(seeds, st.sampled_from([1, 2, 4, 8]))
def test_coarsen_keeps_endpoints(seed, factor):
    b = sample_bundle(seed, 16)
    c = b.coarsen(factor)
    assert c.n_steps == 16 // factor
    assert np.allclose(c.B(), b.B()[::factor], atol=1e-12)
    assert np.allclose(c.W2(), b.W2()[::factor], atol=1e-12)


def test_coarsen_requires_divisor():
    with pytest.raises(ValueError):
        sample_bundle(0, 10).coarsen(3)


def test_endpoint_variance_over_seeds():
    n = 10_000
    ends = np.array([sample_bundle(s, 8).dB.sum() for s in range(n)])
    assert abs(ends.var(ddof=1) - 1.0) < 3 * np.sqrt(2.0 / n)


def test_streams_uncorrelated():
    b = sample_bundle(11, 50_000)
    c = np.corrcoef([b.dB, b.dW1, b.dW2])
    off = c[np.triu_indices(3, 1)]
    assert np.all(np.abs(off) < 4 / np.sqrt(50_000))


def test_coarsened_distribution_matches_direct():
    # sums of fine increments have the coarse variance
    fine = np.array([sample_bundle(s, 64).coarsen(8).dW1 for s in range(2000)]).ravel()
    assert abs(fine.var() * 8 - 1.0) < 0.05


@given(seeds)
def test_rotation_at_zero_frequency(seed):
    b = sample_bundle(seed, 32)
    r = rotate_noise(b, 0.0)
    assert np.array_equal(r.dW1L, np.sqrt(2.0) * b.dB)
    assert np.all(r.dW2L == 0.0)


def test_rotation_uses_left_endpoints():
    b = sample_bundle(5, 10)
    r = rotate_noise(b, 3.0)
    t = np.arange(10) / 10
    assert np.allclose(r.dW1L, np.sqrt(2) * np.cos(6.0 * t) * b.dB, rtol=0, atol=1e-15)
    assert np.allclose(r.dW2L, np.sqrt(2) * np.sin(6.0 * t) * b.dB, rtol=0, atol=1e-15)


def test_rotation_rejects_negative_frequency():
    with pytest.raises(ValueError):
        rotate_noise(sample_bundle(0, 4), -1.0)


def test_rotated_noise_is_standard_and_uncorrelated():
    n = 10_000
    w1 = np.empty(n)
    w2 = np.empty(n)
    for s in range(n):
        dB = noise.gaussian_increments(s, noise.STREAM_B, 2000, 1.0 / 2000)
        r = rotate_noise(BrownianBundle(s, 2000, dB, dB, dB), 100.0)
        w1[s], w2[s] = r.dW1L.sum(), r.dW2L.sum()
    assert abs(w1.var() - 1.0) < 0.05
    cov = np.mean(w1 * w2) - w1.mean() * w2.mean()
    # standard error of a product moment of two (nearly) standard normals
    assert abs(cov) < 3.0 / np.sqrt(n)


def test_metadata_names_sampler():
    meta = noise.metadata()
    assert meta["rng"] == noise.RNG_ALGORITHM
    assert meta["normal_sampler"] == "ziggurat"
