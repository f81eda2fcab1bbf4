"""
Geometry of the unit hypersphere S^{d-1} embedded in R^d.

Points are plain numpy arrays. A single point has shape ``(d,)`` and an
ensemble of agents is a dense ``(N, d)`` array with one agent per row.
"""

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateVectorError, InvalidDimensionError, InvalidInputError

__all__ = [
    "DEGENERATE_NORM",
    "EnsembleStats",
    "as_unit_vector",
    "ensemble_stats",
    "project_tangent",
    "renormalize",
    "sample_uniform",
    "sample_vmf",
]

DEGENERATE_NORM = 1e-14
UNIT_TOL = 1e-12


def as_unit_vector(v, tol=UNIT_TOL):
    """Validate that ``v`` lies on the sphere and return it as a float array."""
    v = np.asarray(v, dtype=float)
    if v.ndim != 1:
        raise InvalidInputError(f"expected a 1-D vector, got shape {v.shape}")
    if v.size < 2:
        raise InvalidDimensionError(f"dimension must be >= 2, got {v.size}")
    norm = np.linalg.norm(v)
    if abs(norm - 1.0) > tol:
        raise InvalidInputError(f"vector is not unit norm (|v| = {norm!r})")
    return v


def _check_dim(d):
    if int(d) != d or d < 2:
        raise InvalidDimensionError(f"dimension must be an integer >= 2, got {d!r}")
    return int(d)


def sample_uniform(d, rng, size=None):
    """
    Draw points uniformly on S^{d-1} by normalizing standard Gaussian vectors.

    Parameters
    ----------
    d : int
        Ambient dimension, at least 2.
    rng : numpy.random.Generator
    size : int, optional
        Number of points. If omitted a single ``(d,)`` vector is returned,
        otherwise an ``(size, d)`` array.
    """
    d = _check_dim(d)
    shape = (d,) if size is None else (int(size), d)
    return renormalize(rng.standard_normal(shape))


def _wood_radial(kappa, d, n, rng):
    # Wood (1994) rejection sampler for the cosine t = <mu, v>
    dm1 = d - 1.0
    b = dm1 / (2.0 * kappa + np.sqrt(4.0 * kappa**2 + dm1**2))
    x0 = (1.0 - b) / (1.0 + b)
    c = kappa * x0 + dm1 * np.log(1.0 - x0**2)
    out = np.empty(n)
    filled = 0
    while filled < n:
        m = n - filled
        z = rng.beta(dm1 / 2.0, dm1 / 2.0, size=m)
        w = (1.0 - (1.0 + b) * z) / (1.0 - (1.0 - b) * z)
        u = rng.uniform(size=m)
        ok = kappa * w + dm1 * np.log(1.0 - x0 * w) - c >= np.log(u)
        k = int(ok.sum())
        out[filled:filled + k] = w[ok]
        filled += k
    return out


def sample_vmf(mu, kappa, rng, size=None):
    """
    Sample the von Mises-Fisher distribution with density proportional to
    ``exp(kappa * <mu, v>)`` on the sphere.

    ``kappa = 0`` reduces to the uniform distribution.
    """
    mu = as_unit_vector(mu)
    if not np.isfinite(kappa) or kappa < 0:
        raise InvalidInputError(f"kappa must be a finite nonnegative number, got {kappa!r}")
    d = mu.size
    n = 1 if size is None else int(size)
    t = _wood_radial(float(kappa), d, n, rng)
    # uniform direction in the tangent space at mu
    xi = project_tangent(mu, rng.standard_normal((n, d)))
    xi = renormalize(xi)
    v = t[:, None] * mu + np.sqrt(np.clip(1.0 - t**2, 0.0, None))[:, None] * xi
    v = renormalize(v)
    return v[0] if size is None else v


def project_tangent(v, y):
    """
    Apply the tangent projector ``P(v) = I - v v^T`` to ``y``.

    Broadcasts over leading axes, so ``v`` and ``y`` may both be ``(N, d)``
    ensembles (row-wise projection) or ``v`` may be a single point.
    """
    v = np.asarray(v, dtype=float)
    y = np.asarray(y, dtype=float)
    return y - np.sum(v * y, axis=-1, keepdims=True) * v


def renormalize(v):
    """Return ``v / |v|`` row-wise; refuses vectors with norm below 1e-14."""
    v = np.asarray(v, dtype=float)
    norm = np.linalg.norm(v, axis=-1, keepdims=True)
    small = norm < DEGENERATE_NORM
    if np.any(small):
        rows = np.flatnonzero(small.reshape(-1)).tolist()
        where = f" (rows {rows[:10]})" if v.ndim > 1 else ""
        raise DegenerateVectorError(f"cannot renormalize a vector of norm < {DEGENERATE_NORM}{where}")
    return v / norm


@dataclass(frozen=True)
class EnsembleStats:
    """
    Barycenter and spread of an ensemble of unit vectors.

    ``sigma`` is the empirical variance ``mean_j |V_j - mean|^2`` used to decide
    how many agents to discard. ``variance`` is half of it,
    ``(1 - |mean|^2) / 2``, the convention used by the convergence theory.
    """

    mean: np.ndarray
    sigma: float
    variance: float


def ensemble_stats(agents):
    agents = np.asarray(agents, dtype=float)
    if agents.ndim != 2 or agents.shape[0] == 0:
        raise InvalidInputError("ensemble must be a non-empty (N, d) array")
    mean = agents.mean(axis=0)
    sigma = float(np.mean(np.sum((agents - mean) ** 2, axis=1)))
    variance = max(0.0, 0.5 * (1.0 - float(mean @ mean)))
    return EnsembleStats(mean=mean, sigma=sigma, variance=variance)
