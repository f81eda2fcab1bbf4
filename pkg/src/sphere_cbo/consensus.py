"""
Weighted consensus point and agent batching.

The consensus point is the softmin-weighted barycenter
``sum_j w_j V_j / sum_j w_j`` with ``w_j = exp(-alpha E(V_j))``. Weights are
always evaluated after shifting by the smallest value, so the best agent
carries weight exactly 1 and the normalizer never drops below 1.
"""

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import InvalidObjectiveValueError, InvalidParameterError
from .sphere import ensemble_stats

__all__ = [
    "ConsensusPoint",
    "consensus_point",
    "laplace_functional",
    "moment_bounds",
    "partition_batches",
    "select_batch",
]


@dataclass(frozen=True)
class ConsensusPoint:
    point: np.ndarray
    best_index: int
    best_value: float
    weights: Optional[np.ndarray] = None


def _check_values(values, n):
    values = np.asarray(values, dtype=float)
    if values.shape != (n,):
        raise InvalidParameterError(f"expected {n} objective values, got shape {values.shape}")
    bad = ~np.isfinite(values)
    if np.any(bad):
        j = int(np.flatnonzero(bad)[0])
        raise InvalidObjectiveValueError(f"objective value of agent {j} is not finite: {values[j]!r}")
    return values


def consensus_point(agents, values, alpha):
    """
    Stabilized consensus point of an ensemble.

    Parameters
    ----------
    agents : ndarray, shape (N, d)
    values : ndarray, shape (N,)
        Objective values ``E(agents[j])``.
    alpha : float
        Weight exponent, ``>= 0``. ``math.inf`` selects the best agent.

    Ties in the minimum go to the lowest index.
    """
    agents = np.asarray(agents, dtype=float)
    values = _check_values(values, agents.shape[0])
    if not alpha >= 0:
        raise InvalidParameterError(f"alpha must be >= 0, got {alpha!r}")
    best = int(np.argmin(values))
    vmin = float(values[best])
    if math.isinf(alpha):
        weights = np.zeros(values.size)
        weights[best] = 1.0
        return ConsensusPoint(agents[best].copy(), best, vmin, weights)
    w = np.exp(-alpha * (values - vmin))
    weights = w / w.sum()
    return ConsensusPoint(weights @ agents, best, vmin, weights)


def select_batch(n, m, rng):
    """``m`` distinct indices out of ``range(n)``, uniformly, in ascending order.

    ``m >= n`` returns every index without touching ``rng``.
    """
    if m < 1:
        raise InvalidParameterError(f"batch size must be >= 1, got {m}")
    if m >= n:
        return np.arange(n)
    return np.sort(rng.choice(n, size=m, replace=False))


def partition_batches(n, m, rng):
    """Split ``range(n)`` into ``n // m`` disjoint random batches of size ``m``."""
    if m < 1 or n % m:
        raise InvalidParameterError(f"batch size {m} does not divide agent count {n}")
    perm = rng.permutation(n)
    return [np.sort(chunk) for chunk in perm.reshape(n // m, m)]


def laplace_functional(values, alpha):
    """``-(1/alpha) log mean_j exp(-alpha E_j)``, evaluated without underflow."""
    values = np.asarray(values, dtype=float)
    vmin = values.min()
    return vmin - math.log(np.mean(np.exp(-alpha * (values - vmin)))) / alpha


def moment_bounds(agents, values, alpha):
    """
    Quantities in the moment estimates for the empirical measure of an ensemble.

    Returns a dict with the second moment ``mean |V_j - v_alpha|^2`` and its two
    upper bounds ``4 e^{-a Emin}/|w|_1 V`` and ``4 C V``, plus the first moment
    ``mean |V_j - v_alpha|`` with ``2 e^{-a Emin}/|w|_1 sqrt(V)`` and
    ``2 C sqrt(V)``, where ``C = exp(alpha (Emax - Emin))`` and ``V`` is the
    halved variance.
    """
    agents = np.asarray(agents, dtype=float)
    values = np.asarray(values, dtype=float)
    cons = consensus_point(agents, values, alpha)
    dist = np.linalg.norm(agents - cons.point, axis=1)
    var = ensemble_stats(agents).variance
    vmin, vmax = values.min(), values.max()
    # e^{-a Emin} / mean_j e^{-a E_j}, shifted to avoid underflow
    ratio = 1.0 / np.mean(np.exp(-alpha * (values - vmin)))
    c_alpha = math.exp(alpha * (vmax - vmin))
    return {
        "second_moment": float(np.mean(dist**2)),
        "second_bound": 4.0 * ratio * var,
        "second_bound_c": 4.0 * c_alpha * var,
        "first_moment": float(np.mean(dist)),
        "first_bound": 2.0 * ratio * math.sqrt(var),
        "first_bound_c": 2.0 * c_alpha * math.sqrt(var),
        "c_alpha": c_alpha,
        "variance": var,
    }
