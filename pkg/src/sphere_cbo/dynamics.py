"""
Projected Euler-Maruyama iteration of the Kuramoto-Vicsek consensus dynamics.

One iteration moves every agent ``V`` by

    drift       tau P(V) v_alpha
    noise       nu sqrt(tau) P(V) (F * Z)           (anisotropic)
                nu sqrt(tau) |F| P(V) Z             (isotropic)
    correction  -tau nu^2/2 (|F|^2 V + F^2 * V - 2 |F * V|^2 V)   (anisotropic)
                -tau nu^2/2 (d - 1) |F|^2 V                       (isotropic)

and projects back onto the sphere. Here ``F = V - v_alpha``, ``Z`` is a
standard normal vector and ``*`` is the componentwise product. The step is
written in the rescaled variables ``tau = lambda dt`` and
``nu = sigma / sqrt(lambda)``; this is the same scheme as the
(lambda, sigma, dt) form with Brownian increments ``sqrt(dt) Z``, and it
makes runs related by the time rescaling agree bit for bit.
"""

import math
from dataclasses import dataclass, field, asdict
from typing import Callable, List, Optional

import numpy as np

from .consensus import ConsensusPoint, consensus_point, partition_batches, select_batch
from .errors import InvalidParameterError, SphereCBOError
from .sphere import ensemble_stats, project_tangent, renormalize, sample_uniform, sample_vmf

__all__ = [
    "NOISE_MODES",
    "RunReport",
    "SolverParams",
    "StepParts",
    "check_stall",
    "discard_update",
    "em_increment",
    "initial_ensemble",
    "run",
    "step",
    "step_anisotropic",
    "step_isotropic",
    "success_error",
]

NOISE_MODES = ("anisotropic", "isotropic")
BATCH_MODES = ("random", "full", "partition")
SUCCESS_TOL = 0.05


@dataclass
class SolverParams:
    """Scalar knobs of the fast KV-CBO loop."""

    lam: float = 1.0
    sigma: float = 1.0
    dt: float = 0.01
    alpha: float = 5e4
    n_agents: int = 100
    batch_size: Optional[int] = None
    mu: float = 0.0
    n_min: int = 10
    max_iter: int = 20000
    n_stall: int = 250
    delta_stall: float = 1e-4
    noise: str = "anisotropic"
    discard_period: int = 10
    batch_mode: str = "random"
    seed: int = 0

    @property
    def m(self):
        return self.n_agents if self.batch_size is None else self.batch_size

    def validate(self):
        checks = [
            ("lambda", self.lam > 0, "lambda > 0"),
            ("sigma", self.sigma >= 0, "sigma >= 0"),
            ("dt", self.dt > 0, "dt > 0"),
            ("alpha", self.alpha >= 0, "alpha >= 0"),
            ("n_agents", self.n_agents >= 1, "n_agents >= 1"),
            ("batch_size", 1 <= self.m <= self.n_agents, "1 <= batch_size <= n_agents"),
            ("mu", 0.0 <= self.mu <= 1.0, "0 <= mu <= 1"),
            ("n_min", 1 <= self.n_min <= self.n_agents, "1 <= n_min <= n_agents"),
            ("max_iter", self.max_iter >= 1, "max_iter >= 1"),
            ("n_stall", self.n_stall >= 1, "n_stall >= 1"),
            ("delta_stall", self.delta_stall > 0, "delta_stall > 0"),
            ("noise", self.noise in NOISE_MODES, f"noise in {NOISE_MODES}"),
            ("discard_period", self.discard_period >= 1, "discard_period >= 1"),
            ("batch_mode", self.batch_mode in BATCH_MODES, f"batch_mode in {BATCH_MODES}"),
        ]
        for key, ok, what in checks:
            if not ok:
                err = InvalidParameterError(f"{key}: constraint violated ({what})")
                err.key = key
                raise err
        return self

    def replace(self, **changes):
        d = asdict(self)
        d.update(changes)
        return SolverParams(**d)


@dataclass
class StepParts:
    drift: np.ndarray
    noise: np.ndarray
    correction: np.ndarray

    def total(self, agents):
        return agents + self.drift + self.noise + self.correction


def _point(vcons):
    return vcons.point if isinstance(vcons, ConsensusPoint) else np.asarray(vcons, dtype=float)


def em_increment(agents, vcons, lam, sigma, dt, normals, noise="anisotropic"):
    """
    The three pieces of one Euler-Maruyama increment, before projection.

    ``vcons`` is a single ``(d,)`` consensus point or one per agent, and
    ``normals`` are standard normal draws of the same shape as ``agents``.
    """
    V = np.asarray(agents, dtype=float)
    vc = _point(vcons)
    tau = lam * dt
    nu = sigma / math.sqrt(lam)
    F = V - vc
    drift = tau * project_tangent(V, np.broadcast_to(vc, V.shape))
    half_nu2_tau = tau * nu**2 / 2.0
    if noise == "anisotropic":
        shock = nu * math.sqrt(tau) * project_tangent(V, F * normals)
        fv = F * V
        scalar = np.sum(F * F, axis=1) - 2.0 * np.sum(fv * fv, axis=1)
        correction = -half_nu2_tau * (scalar[:, None] * V + F * fv)
    elif noise == "isotropic":
        fnorm = np.linalg.norm(F, axis=1)
        shock = nu * math.sqrt(tau) * fnorm[:, None] * project_tangent(V, normals)
        correction = -half_nu2_tau * ((V.shape[1] - 1) * fnorm**2)[:, None] * V
    else:
        raise InvalidParameterError(f"unknown noise mode {noise!r}")
    return StepParts(drift, shock, correction)


def step(agents, vcons, params, rng=None, normals=None):
    """Advance an ensemble by one projected Euler-Maruyama step."""
    agents = np.asarray(agents, dtype=float)
    if normals is None:
        normals = rng.standard_normal(agents.shape)
    parts = em_increment(agents, vcons, params.lam, params.sigma, params.dt, normals, params.noise)
    return renormalize(parts.total(agents))


def step_anisotropic(agents, vcons, params, rng=None, normals=None):
    return step(agents, vcons, params.replace(noise="anisotropic"), rng, normals)


def step_isotropic(agents, vcons, params, rng=None, normals=None):
    return step(agents, vcons, params.replace(noise="isotropic"), rng, normals)


def discard_update(n, sigma_prev, sigma_next, mu, n_min):
    """
    New agent count after a variance check.

    Shrinks ``n`` proportionally to the relative variance decrease, only when
    the variance did not grow, and never below ``n_min``.
    """
    if sigma_prev <= 0.0 or sigma_next > sigma_prev or mu == 0.0:
        return n
    target = math.floor(n * (1.0 + mu * ((sigma_next - sigma_prev) / sigma_prev)))
    return int(min(n, max(n_min, target)))


def check_stall(trace, delta_stall, n_stall):
    """True iff the last ``n_stall`` consecutive consensus moves are all below ``delta_stall``."""
    if len(trace) < n_stall + 1:
        return False
    recent = np.asarray(trace[-(n_stall + 1):], dtype=float)
    steps = np.linalg.norm(np.diff(recent, axis=0), axis=1)
    return bool(np.all(steps < delta_stall))


def success_error(point, vstar, even=False):
    """Sup-norm distance to the minimizer, up to sign for even objectives."""
    err = float(np.max(np.abs(point - vstar)))
    if even:
        err = min(err, float(np.max(np.abs(point + vstar))))
    return err


@dataclass
class RunReport:
    final_consensus: ConsensusPoint
    iterations: int
    avg_agents: float
    objective_evals: int
    stop_reason: str
    n_final: int
    success: Optional[bool] = None
    sup_error: Optional[float] = None
    consensus_trace: Optional[List[np.ndarray]] = None
    variance_trace: List[tuple] = field(default_factory=list)

    def record(self):
        """Flat dict of scalar outcomes (for CSV/JSON emission)."""
        return {
            "iterations": self.iterations,
            "success": self.success,
            "sup_error": self.sup_error,
            "avg_agents": self.avg_agents,
            "objective_evals": self.objective_evals,
            "stop_reason": self.stop_reason,
            "n_final": self.n_final,
            "best_value": self.final_consensus.best_value,
            "consensus": [float(x) for x in self.final_consensus.point],
        }


def initial_ensemble(init, n, d, rng):
    """
    Build the starting ensemble.

    ``init`` is ``"uniform"``, a tuple ``("vmf", mu, kappa)``, or an explicit
    ``(N, d)`` array of unit vectors (used as given).
    """
    if isinstance(init, str) and init == "uniform":
        return sample_uniform(d, rng, size=n)
    if isinstance(init, tuple) and init and init[0] == "vmf":
        _, mu, kappa = init
        return sample_vmf(mu, kappa, rng, size=n)
    agents = np.array(init, dtype=float)
    if agents.ndim != 2 or agents.shape[1] != d or agents.shape[0] < 1:
        raise InvalidParameterError(f"explicit ensemble must have shape (N, {d})")
    return renormalize(agents)


def _consensus_for(agents, obj, params, rng):
    """Return (per-agent target, reported consensus, evaluations used)."""
    n = agents.shape[0]
    m = params.m
    if params.batch_mode == "partition" and m < n:
        if n % m == 0:
            groups = partition_batches(n, m, rng)
        else:
            groups = np.array_split(rng.permutation(n), max(1, n // m))
        values = np.empty(n)
        target = np.empty_like(agents)
        for g in groups:
            values[g] = obj(agents[g])
            target[g] = consensus_point(agents[g], values[g], params.alpha).point
        return target, consensus_point(agents, values, params.alpha), n
    if params.batch_mode == "random" and m <= n:
        idx = select_batch(n, m, rng)
    else:
        idx = np.arange(n)
    values = obj(agents[idx])
    c = consensus_point(agents[idx], values, params.alpha)
    c = ConsensusPoint(c.point, int(idx[c.best_index]), c.best_value, c.weights)
    return c.point, c, idx.size


def run(obj, params, init="uniform", rng=None, gkv=None, callback: Optional[Callable] = None,
        keep_trace=False):
    """
    Fast KV-CBO loop: batch consensus, projected step, periodic variance-driven
    discarding, and the stall / max-iteration stopping rules.

    Parameters
    ----------
    obj : Objective
    params : SolverParams
    init : see :func:`initial_ensemble`
    rng : numpy.random.Generator, optional
        Master stream; defaults to ``default_rng(params.seed)``.
    gkv : GkvParams, optional
        Inject a gradient step on one agent every ``gkv.ell`` iterations.
    callback : callable, optional
        ``callback(n, agents, consensus)`` after every iteration.
    keep_trace : bool
        Keep every consensus point in the report.

    Returns
    -------
    RunReport
    """
    from .gradient import gkv_inject

    params.validate()
    if rng is None:
        rng = np.random.default_rng(params.seed)
    agents = initial_ensemble(init, params.n_agents, obj.dim, rng)
    sigma_prev = ensemble_stats(agents).sigma
    variance_trace = [(0, sigma_prev)]
    trace = [] if keep_trace else None
    prev = None
    quiet = 0
    agent_sum = 0
    evals = 0
    stop = "max-iter"
    n_done = 0
    inject_every = None if gkv is None else gkv.ell

    for n in range(params.max_iter):
        try:
            if inject_every is not None and n > 0 and n % inject_every == 0:
                agents, used = gkv_inject(agents, obj, gkv, rng)
                evals += used
            n_active = agents.shape[0]
            target, cons, used = _consensus_for(agents, obj, params, rng)
            evals += used
            agents = step(agents, target, params, rng)
        except (SphereCBOError, ArithmeticError) as exc:
            err = type(exc)(f"iteration {n}: {exc}")
            err.iteration = n
            raise err from exc

        agent_sum += n_active
        n_done = n + 1
        if keep_trace:
            trace.append(cons.point)
        if callback is not None:
            callback(n, agents, cons)

        if prev is not None and np.linalg.norm(cons.point - prev) < params.delta_stall:
            quiet += 1
        else:
            quiet = 0
        prev = cons.point
        if quiet >= params.n_stall:
            stop = "stall"
            break

        if n_done % params.discard_period == 0:
            sigma_next = ensemble_stats(agents).sigma
            variance_trace.append((n_done, sigma_next))
            keep = discard_update(n_active, sigma_prev, sigma_next, params.mu, params.n_min)
            if keep < n_active:
                agents = agents[np.sort(rng.choice(n_active, size=keep, replace=False))]
            sigma_prev = sigma_next

    values = obj(agents)
    evals += agents.shape[0]
    final = consensus_point(agents, values, params.alpha)
    report = RunReport(
        final_consensus=final,
        iterations=n_done,
        avg_agents=agent_sum / n_done,
        objective_evals=evals,
        stop_reason=stop,
        n_final=agents.shape[0],
        consensus_trace=trace,
        variance_trace=variance_trace,
    )
    if obj.known_minimizer is not None:
        report.sup_error = success_error(final.point, obj.known_minimizer, obj.even)
        report.success = report.sup_error <= SUCCESS_TOL
    return report
