"""Diagonal Gaussian distributions over a bounded context space.

Samples are clipped into the context box, but densities and KL divergences
always refer to the unclipped Gaussian.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

LOG_2PI = float(np.log(2.0 * np.pi))


class DegenerateFitError(ValueError):
    """Raised when a weighted fit cannot determine a positive variance."""


def _as_bounds(bounds, dim: int) -> np.ndarray:
    if bounds is None:
        b = np.empty((dim, 2))
        b[:, 0] = -np.inf
        b[:, 1] = np.inf
        return b
    b = np.array(bounds, dtype=float).reshape(dim, 2)
    return b


@dataclass(frozen=True, eq=False)
class ContextDistribution:
    """Axis-aligned Gaussian ``N(mean, diag(std**2))`` with a clipping box.

    ``bounds`` has shape ``(d, 2)`` holding ``[lo, hi]`` per dimension; it
    defaults to the whole real line.
    """

    mean: np.ndarray
    std: np.ndarray
    bounds: np.ndarray = None

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=float)).copy()
        std = np.atleast_1d(np.asarray(self.std, dtype=float)).copy()
        if mean.ndim != 1 or mean.shape != std.shape:
            raise ValueError(f"mean {mean.shape} and std {std.shape} must be matching vectors")
        if not np.all(np.isfinite(mean)):
            raise ValueError("mean must be finite")
        if not np.all(np.isfinite(std)) or np.any(std <= 0.0):
            raise ValueError(f"std must be finite and strictly positive, got {std}")
        bounds = _as_bounds(self.bounds, mean.size)
        if np.any(bounds[:, 0] >= bounds[:, 1]):
            raise ValueError(f"bounds need lo < hi per dimension, got {bounds.tolist()}")
        for arr in (mean, std, bounds):
            arr.setflags(write=False)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "std", std)
        object.__setattr__(self, "bounds", bounds)

    @classmethod
    def from_log_std(cls, mean, log_std, bounds=None) -> ContextDistribution:
        return cls(mean, np.exp(np.asarray(log_std, dtype=float)), bounds)

    @property
    def dim(self) -> int:
        return self.mean.size

    @property
    def log_std(self) -> np.ndarray:
        return np.log(self.std)

    @property
    def variance(self) -> np.ndarray:
        return self.std**2

    def with_params(self, mean=None, std=None) -> ContextDistribution:
        return ContextDistribution(
            self.mean if mean is None else mean,
            self.std if std is None else std,
            self.bounds,
        )

    def clip(self, c) -> np.ndarray:
        return np.clip(c, self.bounds[:, 0], self.bounds[:, 1])

    def sample(self, rng: np.random.Generator, size: int | None = None) -> np.ndarray:
        """Draw from the Gaussian and clip component-wise into ``bounds``."""
        shape = (self.dim,) if size is None else (size, self.dim)
        raw = self.mean + self.std * rng.standard_normal(shape)
        return self.clip(raw)

    def log_pdf(self, c) -> np.ndarray | float:
        """Log density of the unclipped Gaussian; vectorised over leading axes."""
        c = np.asarray(c, dtype=float)
        if c.shape[-1] != self.dim:
            raise ValueError(f"context dimension {c.shape[-1]} != {self.dim}")
        z = (c - self.mean) / self.std
        out = -0.5 * np.sum(z * z, axis=-1) - np.sum(np.log(self.std)) - 0.5 * self.dim * LOG_2PI
        return float(out) if np.ndim(out) == 0 else out

    def log_pdf_grad(self, c) -> np.ndarray:
        """Gradient of :meth:`log_pdf` with respect to the context."""
        c = np.asarray(c, dtype=float)
        return -(c - self.mean) / self.variance

    def __repr__(self) -> str:
        return f"ContextDistribution(mean={self.mean.tolist()}, std={self.std.tolist()})"


def kl_divergence(p: ContextDistribution, q: ContextDistribution) -> float:
    """Closed-form ``KL(p || q)`` for diagonal Gaussians (clipping ignored)."""
    if p.dim != q.dim:
        raise ValueError(f"dimension mismatch: {p.dim} vs {q.dim}")
    ratio = p.variance / q.variance
    maha = (q.mean - p.mean) ** 2 / q.variance
    return float(0.5 * np.sum(ratio + maha - 1.0 - np.log(ratio)))


def kl_divergence_grad(p: ContextDistribution, q: ContextDistribution) -> tuple[np.ndarray, np.ndarray]:
    """Gradient of ``KL(p || q)`` w.r.t. ``p``'s mean and log-std."""
    d_mean = (p.mean - q.mean) / q.variance
    d_log_std = p.variance / q.variance - 1.0
    return d_mean, d_log_std


def fit_weighted(samples, weights, bounds=None, min_std: float = 1e-12) -> ContextDistribution:
    """Weighted maximum-likelihood diagonal Gaussian.

    Weights are normalised internally and the variance uses the population
    convention. Raises :class:`DegenerateFitError` for all-zero weights, fewer
    than two positively weighted samples, or a collapsed variance.
    """
    x = np.asarray(samples, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    w = np.asarray(weights, dtype=float)
    if w.shape != (x.shape[0],):
        raise ValueError(f"{w.size} weights for {x.shape[0]} samples")
    if np.any(w < 0) or not np.all(np.isfinite(w)):
        raise ValueError("weights must be finite and nonnegative")
    total = w.sum()
    if total <= 0.0:
        raise DegenerateFitError("all weights are zero")
    if np.count_nonzero(w) < 2:
        raise DegenerateFitError("need at least two samples with positive weight")
    w = w / total
    mean = w @ x
    var = w @ (x - mean) ** 2
    std = np.sqrt(var)
    floor = min_std * np.maximum(1.0, np.abs(mean))
    if np.any(std <= floor):
        raise DegenerateFitError(f"weighted variance collapsed: std={std}")
    return ContextDistribution(mean, std, bounds)
