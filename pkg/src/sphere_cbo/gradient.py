"""
Gradient-KV: occasional projected gradient steps on a single agent.

Every ``ell`` iterations one agent, chosen uniformly, takes a descent step
along the tangential gradient with a backtracked Armijo step size and is
projected back to the sphere. The rest of the iteration is plain KV.
"""

from dataclasses import dataclass

import numpy as np

from .errors import InvalidParameterError, UnsupportedObjectiveError
from .sphere import project_tangent, renormalize

__all__ = [
    "GkvParams",
    "armijo_linesearch",
    "gkv_inject",
    "tangential_gradient",
]

GRADIENT_SOURCES = ("analytic", "fd")


@dataclass
class GkvParams:
    ell: int = 10
    c_armijo: float = 1e-4
    tau_backtrack: float = 0.5
    h0: float = 1.0
    max_backtracks: int = 40
    gradient_source: str = "analytic"
    h_fd: float = 1e-6
    # check sufficient decrease after projecting the trial point
    retraction: bool = False

    def validate(self):
        if not (self.ell >= 1 and 0 < self.c_armijo < 1 and 0 < self.tau_backtrack < 1
                and self.h0 > 0 and self.max_backtracks >= 0 and self.h_fd > 0):
            raise InvalidParameterError(f"invalid gradient-KV parameters: {self}")
        if self.gradient_source not in GRADIENT_SOURCES:
            raise InvalidParameterError(f"gradient_source must be one of {GRADIENT_SOURCES}")
        return self


def tangential_gradient(obj, v, source="analytic", h_fd=1e-6):
    """
    Riemannian gradient ``P(v) grad E(v)`` on the sphere.

    ``source="analytic"`` uses ``obj.gradient``; ``source="fd"`` uses central
    differences of step ``h_fd`` in each coordinate (``2 d`` evaluations).
    """
    v = np.asarray(v, dtype=float)
    if source == "analytic":
        if obj.gradient is None:
            raise UnsupportedObjectiveError(f"objective {obj.name!r} has no analytic gradient")
        g = np.asarray(obj.gradient(v), dtype=float)
    elif source == "fd":
        d = v.size
        probes = np.vstack([v + h_fd * np.eye(d), v - h_fd * np.eye(d)])
        vals = obj(probes)
        g = (vals[:d] - vals[d:]) / (2.0 * h_fd)
    else:
        raise InvalidParameterError(f"unknown gradient source {source!r}")
    return project_tangent(v, g)


def _armijo(obj, v, grad, gp, f0=None):
    evals = 0
    if f0 is None:
        f0 = obj(v)
        evals += 1
    slope = float(grad @ grad)
    if slope == 0.0:
        return 0.0, evals
    h = gp.h0
    for _ in range(gp.max_backtracks + 1):
        trial = v - h * grad
        if gp.retraction:
            trial = renormalize(trial)
        evals += 1
        if obj(trial) <= f0 - gp.c_armijo * h * slope:
            return h, evals
        h *= gp.tau_backtrack
    return 0.0, evals


def armijo_linesearch(obj, v, grad, gp=None):
    """
    Largest ``h0 tau^k`` (``k = 0 .. max_backtracks``) with
    ``E(v - h g) <= E(v) - c h |g|^2``; 0 when none qualifies.
    """
    gp = GkvParams() if gp is None else gp
    return _armijo(obj, np.asarray(v, dtype=float), np.asarray(grad, dtype=float), gp)[0]


def gkv_inject(agents, obj, gp, rng):
    """
    Replace one uniformly chosen agent by its backtracked gradient step.

    Returns the (possibly copied) ensemble and the number of objective
    evaluations spent.
    """
    j = int(rng.integers(agents.shape[0]))
    v = agents[j]
    evals = 2 * v.size if gp.gradient_source == "fd" else 0
    g = tangential_gradient(obj, v, gp.gradient_source, gp.h_fd)
    if not np.any(g):
        return agents, evals
    h, used = _armijo(obj, v, g, gp)
    evals += used
    if h > 0.0:
        agents = agents.copy()
        agents[j] = renormalize(v - h * g)
    return agents, evals
