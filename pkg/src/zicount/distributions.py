"""Probability kernels, samplers, Gauss-Hermite rules and seeded random streams.

Random numbers come from :class:`RngStream`, a Philox (counter-based) generator
keyed by ``(key, stream_id, substream_id)``. Each simulation replication owns
one stream, so results do not depend on how replications are scheduled.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import special

from .errors import DomainError

__all__ = [
    "RngStream",
    "QuadratureRule",
    "log_poisson_pmf",
    "log_nb2_pmf",
    "sample_poisson",
    "sample_bernoulli",
    "sample_std_normal",
    "normal_two_sided_p",
    "gauss_hermite",
    "DEFAULT_QUADRATURE_ORDER",
]

DEFAULT_QUADRATURE_ORDER = 32
_MASK64 = (1 << 64) - 1

# Below this mean Poisson draws use sequential-search inversion.
_INVERSION_LIMIT = 10.0


@dataclass
class RngStream:
    """Independent, reproducible random stream.

    Streams with any differing ``(key, stream_id, substream_id)`` are seeded
    from distinct :class:`numpy.random.SeedSequence` spawn keys and are
    statistically independent. A stream must be used by one worker at a time.
    """

    key: int
    stream_id: int = 0
    substream_id: int = 0
    _gen: np.random.Generator = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        for name in ("key", "stream_id", "substream_id"):
            value = getattr(self, name)
            if not 0 <= value <= _MASK64:
                raise DomainError(f"{name} must be an unsigned 64-bit integer, got {value}")
        self._gen = self._make_generator((self.stream_id, self.substream_id))

    def _make_generator(self, spawn_key):
        seq = np.random.SeedSequence(entropy=self.key, spawn_key=spawn_key)
        return np.random.Generator(np.random.Philox(seq))

    @property
    def counter(self) -> int:
        """Current 256-bit Philox counter (exposed for diagnostics)."""
        ctr = self._gen.bit_generator.state["state"]["counter"]
        return int(sum(int(c) << (64 * i) for i, c in enumerate(ctr)))

    def child(self, tag: int) -> "RngStream":
        """Derived stream for auxiliary draws (e.g. optimizer restarts).

        Drawing from the child leaves this stream untouched.
        """
        kid = RngStream.__new__(RngStream)
        kid.key, kid.stream_id, kid.substream_id = self.key, self.stream_id, self.substream_id
        kid._gen = self._make_generator((self.stream_id, self.substream_id, tag))
        return kid

    def uniform(self, size=None):
        return self._gen.random(size)


def _check_count(y):
    y = np.asarray(y)
    if np.any(y < 0):
        raise DomainError("counts must be nonnegative")
    return y


def log_poisson_pmf(y, mean):
    """Log probability mass of Poisson(``mean``) at ``y``; vectorized."""
    y = _check_count(y)
    mean = np.asarray(mean, dtype=float)
    if np.any(~(mean > 0)):
        raise DomainError("Poisson mean must be positive")
    out = special.xlogy(y, mean) - mean - special.gammaln(y + 1.0)
    return float(out) if np.ndim(out) == 0 else out


def log_nb2_pmf(y, mean, k):
    """Log probability mass of the NB2 distribution with variance mean + mean**2/k."""
    y = _check_count(y)
    mean = np.asarray(mean, dtype=float)
    k = np.asarray(k, dtype=float)
    if np.any(~(mean > 0)) or np.any(~(k > 0)):
        raise DomainError("NB2 mean and dispersion must be positive")
    # log(k / (k + mean)) written to stay accurate when k >> mean
    log_p0 = -np.log1p(mean / k)
    out = (
        special.gammaln(y + k)
        - special.gammaln(k)
        - special.gammaln(y + 1.0)
        + k * log_p0
        + special.xlogy(y, mean) - y * np.log(k + mean)
    )
    return float(out) if np.ndim(out) == 0 else out


def _draw_shape(param, size):
    if size is None:
        return param.shape
    return np.broadcast_shapes(param.shape, tuple(np.atleast_1d(size)))


def _poisson_inversion(u, mean):
    """Sequential-search inversion of the Poisson CDF, vectorized over ``u``."""
    u = np.asarray(u, dtype=float)
    mean = np.broadcast_to(np.asarray(mean, dtype=float), u.shape)
    k = np.zeros(u.shape, dtype=np.int64)
    p = np.exp(-mean)
    cdf = p.copy()
    active = u > cdf
    # P(X > 80) for mean < 10 is below 1e-30; the cap only guards round-off.
    for j in range(1, 200):
        if not active.any():
            break
        p = np.where(active, p * mean / j, p)
        cdf = np.where(active, cdf + p, cdf)
        k = np.where(active, j, k)
        active &= u > cdf
    return k


def sample_poisson(rng: RngStream, mean, size=None):
    """Poisson draws: inversion for mean < 10, numpy's PTRS rejection above."""
    mean = np.asarray(mean, dtype=float)
    if np.any(~(mean > 0)):
        raise DomainError("Poisson mean must be positive")
    shape = _draw_shape(mean, size)
    mean = np.broadcast_to(mean, shape)
    u = rng.uniform(shape)
    out = _poisson_inversion(u, np.minimum(mean, _INVERSION_LIMIT))
    big = mean >= _INVERSION_LIMIT
    if np.any(big):
        out = np.asarray(out)
        out[big] = rng._gen.poisson(mean[big])
    if np.ndim(out) == 0:
        return int(out)
    return out


def sample_bernoulli(rng: RngStream, p, size=None):
    p = np.asarray(p, dtype=float)
    if np.any((p < 0) | (p > 1)) or np.any(np.isnan(p)):
        raise DomainError("Bernoulli probability must lie in [0, 1]")
    shape = _draw_shape(p, size)
    out = (rng.uniform(shape) < p).astype(np.int64)
    return int(out) if np.ndim(out) == 0 else out


def sample_std_normal(rng: RngStream, size=None):
    """Standard normal draws by inversion of the normal CDF."""
    u = rng.uniform(size)
    # Philox doubles lie in [0, 1); map 0 to the smallest positive double.
    u = np.where(u > 0.0, u, np.nextafter(0.0, 1.0))
    out = special.ndtri(u)
    return float(out) if np.ndim(out) == 0 else out


def normal_two_sided_p(z):
    """Two-sided standard normal tail probability ``2 * (1 - Phi(|z|))``."""
    z = np.abs(np.asarray(z, dtype=float))
    out = special.erfc(z / np.sqrt(2.0))
    return float(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True)
class QuadratureRule:
    """Gauss-Hermite nodes and weights for the weight function exp(-x**2)."""

    nodes: np.ndarray
    weights: np.ndarray

    def normal_expectation(self, values) -> np.ndarray:
        """``E[g(Z)]`` for Z ~ N(0, 1) given ``g`` evaluated at :attr:`normal_nodes`.

        The node axis is the last axis of ``values``.
        """
        return np.asarray(values) @ self.weights / np.sqrt(np.pi)

    @property
    def normal_nodes(self) -> np.ndarray:
        return np.sqrt(2.0) * self.nodes


@lru_cache(maxsize=None)
def _hermgauss(n):
    x, w = np.polynomial.hermite.hermgauss(n)
    x = 0.5 * (x - x[::-1])  # enforce exact symmetry
    w = 0.5 * (w + w[::-1])
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


def gauss_hermite(n: int = DEFAULT_QUADRATURE_ORDER) -> QuadratureRule:
    if not isinstance(n, (int, np.integer)) or not 1 <= n <= 64:
        raise DomainError("quadrature order must be an integer in [1, 64]")
    x, w = _hermgauss(int(n))
    return QuadratureRule(x, w)
