"""Reproducible Brownian driving noise.

Every random quantity in the package is drawn from a Philox (counter-based)
generator keyed by ``(seed, stream)``.  Streams are fixed integers, so the
increments of one stream never depend on how many numbers were drawn from
another one, and ensembles over seeds can be evaluated in any order.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

RNG_ALGORITHM = "philox4x64-10"
NORMAL_METHOD = "ziggurat"

# stream indices
STREAM_B = 0
STREAM_W1 = 1
STREAM_W2 = 2
STREAM_ANDERSON = 3
STREAM_SHAPE_U = 4
STREAM_SHAPE_RIGHT = 5
STREAM_SHAPE_LEFT = 6
STREAM_SHAPE_BRIDGE = 7

_SEED_MASK = (1 << 64) - 1


def stream_generator(seed: int, stream: int) -> np.random.Generator:
    """Independent generator for the pair ``(seed, stream)``."""
    ss = np.random.SeedSequence(int(seed) & _SEED_MASK, spawn_key=(int(stream),))
    return np.random.Generator(np.random.Philox(ss))


def gaussian_increments(seed: int, stream: int, size: int, variance: float) -> np.ndarray:
    """``size`` i.i.d. N(0, variance) draws from one stream."""
    rng = stream_generator(seed, stream)
    return np.sqrt(variance) * rng.standard_normal(size)


def _frozen(a) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class BrownianBundle:
    """Increments of three independent Brownian motions on a uniform grid of [0, 1].

    ``dB`` drives the scalar potential, ``dW1`` and ``dW2`` the real and
    imaginary parts of the complex noise.  Paths are obtained on demand.
    """

    seed: int
    n_steps: int
    dB: np.ndarray
    dW1: np.ndarray
    dW2: np.ndarray

    def __post_init__(self):
        for name in ("dB", "dW1", "dW2"):
            arr = _frozen(getattr(self, name))
            if arr.shape != (self.n_steps,):
                raise ValueError(f"{name} must have length n_steps={self.n_steps}")
            object.__setattr__(self, name, arr)

    @property
    def dt(self) -> float:
        return 1.0 / self.n_steps

    @property
    def grid(self) -> np.ndarray:
        return np.arange(self.n_steps + 1) * self.dt

    @staticmethod
    def _path(inc: np.ndarray) -> np.ndarray:
        out = np.zeros(inc.size + 1)
        np.cumsum(inc, out=out[1:])
        return out

    def B(self) -> np.ndarray:
        return self._path(self.dB)

    def W1(self) -> np.ndarray:
        return self._path(self.dW1)

    def W2(self) -> np.ndarray:
        return self._path(self.dW2)

    def coarsen(self, factor: int) -> "BrownianBundle":
        """Same Brownian paths observed on a grid ``factor`` times coarser."""
        if factor < 1 or self.n_steps % factor:
            raise ValueError(f"factor {factor} does not divide n_steps={self.n_steps}")
        n = self.n_steps // factor

        def merge(a):
            return a.reshape(n, factor).sum(axis=1)

        return BrownianBundle(self.seed, n, merge(self.dB), merge(self.dW1), merge(self.dW2))

    @classmethod
    def zeros(cls, n_steps: int) -> "BrownianBundle":
        """Noise-free bundle, used to check deterministic limits."""
        z = np.zeros(n_steps)
        return cls(-1, n_steps, z, z, z)


def sample_bundle(seed: int, n_steps: int) -> BrownianBundle:
    """Draw ``n_steps`` N(0, 1/n_steps) increments for each of B, W1, W2."""
    if n_steps < 1:
        raise ValueError(f"n_steps must be >= 1, got {n_steps}")
    var = 1.0 / n_steps
    return BrownianBundle(
        seed=int(seed),
        n_steps=int(n_steps),
        dB=gaussian_increments(seed, STREAM_B, n_steps, var),
        dW1=gaussian_increments(seed, STREAM_W1, n_steps, var),
        dW2=gaussian_increments(seed, STREAM_W2, n_steps, var),
    )


@dataclass(frozen=True, eq=False)
class RotatedNoise:
    """Increments of the two Brownian motions obtained by modulating ``dB``
    with ``sqrt(2) cos(2 E' t)`` and ``sqrt(2) sin(2 E' t)``."""

    E_prime: float
    dW1L: np.ndarray
    dW2L: np.ndarray


def rotate_noise(bundle: BrownianBundle, E_prime: float) -> RotatedNoise:
    if E_prime < 0:
        raise ValueError(f"E_prime must be >= 0, got {E_prime}")
    t_left = np.arange(bundle.n_steps) * bundle.dt
    phase = 2.0 * E_prime * t_left
    s2 = np.sqrt(2.0)
    return RotatedNoise(
        float(E_prime),
        _frozen(s2 * np.cos(phase) * bundle.dB),
        _frozen(s2 * np.sin(phase) * bundle.dB),
    )


def metadata() -> dict:
    return {"rng": RNG_ALGORITHM, "normal_sampler": NORMAL_METHOD}
