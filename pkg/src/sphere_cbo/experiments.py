"""
Experiment drivers: benchmark sweeps over the test functions, robust PCA on
Haystack clouds, phase-retrieval success curves, and a quick property suite.

Each run ``i`` of an experiment with master seed ``s`` draws from
``default_rng([s, i, 0])`` (solver) and ``default_rng([s, i, 1])`` (problem
data / stochastic objective), so results do not depend on how runs are
scheduled across threads.
"""

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from .consensus import consensus_point, laplace_functional, moment_bounds
from .dynamics import em_increment, run
from .errors import ConvergenceError, InvalidParameterError
from .objectives import (
    PointCloud,
    gaussian_frame,
    haystack,
    make_test_function,
    pca_energy,
    phase_retrieval_risk,
    rotated_minimizer,
)
from .sphere import ensemble_stats, renormalize, sample_uniform

__all__ = [
    "PcaRow",
    "PhaseRow",
    "SweepRow",
    "benchmark_sweep",
    "phase_retrieval_curve",
    "power_iteration_top_direction",
    "property_suite",
    "robust_pca_experiment",
    "run_streams",
    "sign_folded_distance",
    "wilson_interval",
]


def run_streams(seed, index):
    """(solver stream, data stream) for run ``index`` of an experiment."""
    return np.random.default_rng([seed, index, 0]), np.random.default_rng([seed, index, 1])


def _map_runs(fn, runs, threads):
    if threads <= 1:
        return [fn(i) for i in range(runs)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, range(runs)))


def wilson_interval(successes, n, z=1.959963984540054):
    """95% Wilson score interval for a binomial proportion."""
    if n == 0:
        return 0.0, 1.0
    p = successes / n
    denom = 1.0 + z**2 / n
    centre = (p + z**2 / (2 * n)) / denom
    half = z * math.sqrt(p * (1 - p) / n + z**2 / (4 * n**2)) / denom
    # round-off can push the bounds past p at k = 0 or k = n
    return max(0.0, min(p, centre - half)), min(1.0, max(p, centre + half))


def sign_folded_distance(v, u):
    v = np.asarray(v, dtype=float)
    u = np.asarray(u, dtype=float)
    return float(min(np.linalg.norm(v - u), np.linalg.norm(v + u)))


# -- benchmark sweeps ---------------------------------------------------------

@dataclass
class SweepRow:
    function: str
    noise: str
    d: int
    N: int
    M: int
    runs: int
    success_rate: float
    mean_error: Optional[float]
    N_avg: float
    n_avg: float
    seed: int
    wilson: tuple = (0.0, 1.0)
    stop_reasons: dict = field(default_factory=dict)
    records: List[dict] = field(default_factory=list)

    CSV_COLUMNS = ("function", "noise", "d", "N", "M", "runs", "success_rate",
                   "mean_error", "N_avg", "n_avg", "seed")

    def csv_row(self):
        return [getattr(self, c) for c in self.CSV_COLUMNS]


def benchmark_sweep(function, d, params_list, runs, seed=0, angle=0.0, init="uniform", threads=1):
    """
    Success statistics of repeated seeded runs on one test function.

    ``params_list`` holds one :class:`SolverParams` per output row (e.g.
    one per agent count). The mean error is the sup-norm error averaged over
    successful runs only and is ``None`` when no run succeeded.
    """
    if runs < 1:
        raise InvalidParameterError("runs must be >= 1")
    vstar = rotated_minimizer(d, angle)
    rows = []
    for params in params_list:
        params.validate()

        def one(i, params=params):
            rng, data_rng = run_streams(seed, i)
            obj = make_test_function(function, d, vstar, rng=data_rng)
            rec = run(obj, params, init=init, rng=rng).record()
            rec["run"] = i
            return rec

        records = _map_runs(one, runs, threads)
        wins = [r for r in records if r["success"]]
        reasons = {}
        for r in records:
            reasons[r["stop_reason"]] = reasons.get(r["stop_reason"], 0) + 1
        rows.append(SweepRow(
            function=function,
            noise=params.noise,
            d=d,
            N=params.n_agents,
            M=params.m,
            runs=runs,
            success_rate=len(wins) / runs,
            mean_error=float(np.mean([r["sup_error"] for r in wins])) if wins else None,
            N_avg=float(np.mean([r["avg_agents"] for r in records])),
            n_avg=float(np.mean([r["iterations"] for r in records])),
            seed=seed,
            wilson=wilson_interval(len(wins), runs),
            stop_reasons=reasons,
            records=records,
        ))
    return rows


# -- robust PCA -----------------------------------------------------------------

def power_iteration_top_direction(cloud, iters=10000, tol=1e-10, rng=None):
    """
    Dominant eigenvector of ``(1/P) sum_i x_i x_i^T`` by power iteration.

    The sign is fixed so that the largest-magnitude entry is positive.
    """
    X = np.asarray(cloud.points if isinstance(cloud, PointCloud) else cloud, dtype=float)
    if X.ndim != 2 or X.shape[0] == 0:
        raise InvalidParameterError("point cloud must be a non-empty (P, d) array")
    C = X.T @ X / X.shape[0]
    rng = np.random.default_rng(0) if rng is None else rng
    v = sample_uniform(X.shape[1], rng)
    resid = math.inf
    for _ in range(iters):
        w = C @ v
        nw = np.linalg.norm(w)
        if nw == 0.0:
            raise ConvergenceError("covariance annihilates the iterate (zero point cloud?)")
        v = w / nw
        Cv = C @ v
        theta = float(v @ Cv)
        resid = float(np.linalg.norm(Cv - theta * v))
        if resid <= tol * theta:
            break
    else:
        raise ConvergenceError(f"power iteration did not converge in {iters} steps "
                               f"(residual {resid:.3e})")
    k = int(np.argmax(np.abs(v)))
    return -v if v[k] < 0 else v


@dataclass
class PcaRow:
    outlier_fraction: float
    method: str
    d: int
    P: int
    p: float
    runs: int
    mean_error: float
    median_error: float
    max_error: float
    success_rate: float
    seed: int
    errors: List[float] = field(default_factory=list)

    CSV_COLUMNS = ("outlier_fraction", "method", "d", "P", "p", "runs", "mean_error",
                   "median_error", "max_error", "success_rate", "seed")

    def csv_row(self):
        return [getattr(self, c) for c in self.CSV_COLUMNS]


def robust_pca_experiment(d, P, fractions, p, params, runs, seed=0, gkv=None, tol=5e-2,
                          threads=1):
    """
    Recover the inlier direction of Haystack clouds by minimizing ``E_p``.

    The error of a run is the sign-folded Euclidean distance between the
    normalized final consensus and the top direction of the noiseless inliers.
    ``success_rate`` is the fraction of runs with error at most ``tol``.
    """
    params.validate()
    method = "GKV" if gkv is not None else "KV"
    rows = []
    for frac in fractions:
        if not 0.0 <= frac < 1.0:
            raise InvalidParameterError(f"outlier fraction must lie in [0, 1), got {frac}")
        n_out = int(round(P * frac))

        def one(i):
            rng, data_rng = run_streams(seed, i)
            cloud = haystack(d, P - n_out, n_out, data_rng)
            oracle = power_iteration_top_direction(cloud.noiseless_inliers)
            rep = run(pca_energy(cloud, p), params, rng=rng, gkv=gkv)
            return sign_folded_distance(renormalize(rep.final_consensus.point), oracle)

        errs = _map_runs(one, runs, threads)
        rows.append(PcaRow(frac, method, d, P, p, runs, float(np.mean(errs)),
                           float(np.median(errs)), float(np.max(errs)),
                           float(np.mean(np.asarray(errs) <= tol)), seed, errs))
    return rows


# -- phase retrieval --------------------------------------------------------------

@dataclass
class PhaseRow:
    frame_size: int
    noise: str
    d: int
    runs: int
    success_rate: float
    mean_error: Optional[float]
    n_avg: float
    seed: int
    wilson: tuple = (0.0, 1.0)

    CSV_COLUMNS = ("frame_size", "noise", "d", "runs", "success_rate", "wilson_low",
                   "wilson_high", "mean_error", "n_avg", "seed")

    def csv_row(self):
        vals = dict(self.__dict__, wilson_low=self.wilson[0], wilson_high=self.wilson[1])
        return [vals[c] for c in self.CSV_COLUMNS]


def phase_retrieval_curve(d, frame_sizes, params, runs, seed=0, threads=1):
    """Success rate against the number of Gaussian measurement vectors."""
    if not frame_sizes:
        raise InvalidParameterError("frame_sizes must be non-empty")
    params.validate()
    rows = []
    for mf in frame_sizes:
        def one(i):
            rng, data_rng = run_streams(seed, i)
            truth = sample_uniform(d, data_rng)
            obj = phase_retrieval_risk(gaussian_frame(d, mf, truth, data_rng))
            return run(obj, params, rng=rng).record()

        records = _map_runs(one, runs, threads)
        wins = [r for r in records if r["success"]]
        rows.append(PhaseRow(
            frame_size=mf, noise=params.noise, d=d, runs=runs,
            success_rate=len(wins) / runs,
            mean_error=float(np.mean([r["sup_error"] for r in wins])) if wins else None,
            n_avg=float(np.mean([r["iterations"] for r in records])),
            seed=seed, wilson=wilson_interval(len(wins), runs),
        ))
    return rows


# -- property suite -------------------------------------------------------------------

def property_suite(seed=0, trials=200):
    """
    Fast randomized checks of the structural properties of the scheme.

    Returns a list of ``{"name", "passed", "detail"}`` dicts.
    """
    rng = np.random.default_rng(seed)
    out = []

    def check(name, passed, detail):
        out.append({"name": name, "passed": bool(passed), "detail": detail})

    worst_norm = worst_tan = worst_var = 0.0
    for _ in range(trials):
        d = int(rng.choice([2, 3, 10, 50]))
        n = int(rng.integers(2, 40))
        V = sample_uniform(d, rng, size=n)
        vc = consensus_point(V, rng.uniform(0, 5, n), float(rng.uniform(0, 20))).point
        noise = "anisotropic" if rng.random() < 0.5 else "isotropic"
        parts = em_increment(V, vc, float(rng.uniform(0.1, 3)), float(rng.uniform(0, 5)),
                             float(rng.uniform(1e-3, 0.1)), rng.standard_normal(V.shape), noise)
        nxt = renormalize(parts.total(V))
        worst_norm = max(worst_norm, float(np.max(np.abs(np.linalg.norm(nxt, axis=1) - 1))))
        tan = np.abs(np.sum(V * parts.noise, axis=1))
        scale = np.maximum(np.linalg.norm(parts.noise, axis=1), 1e-300)
        worst_tan = max(worst_tan, float(np.max(tan / scale)))
        st = ensemble_stats(nxt)
        worst_var = max(worst_var, abs(2 * st.variance - (1 - st.mean @ st.mean)))
    check("sphere_preservation", worst_norm <= 1e-12, f"max | |V|-1 | = {worst_norm:.2e}")
    check("noise_tangency", worst_tan <= 1e-12, f"max |<V,noise>|/|noise| = {worst_tan:.2e}")
    check("variance_identity", worst_var <= 1e-10, f"max |2V-(1-|E|^2)| = {worst_var:.2e}")

    ok = True
    for _ in range(trials // 4):
        vals = rng.uniform(0, 3, 20)
        seq = [laplace_functional(vals, a) for a in (1.0, 10.0, 100.0, 1000.0)]
        ok &= all(b <= a + 1e-10 for a, b in zip(seq, seq[1:])) and seq[-1] >= vals.min() - 1e-12
    check("laplace_monotone", ok, "alpha in {1,10,100,1000}")

    ok = True
    for _ in range(trials // 2):
        V = sample_uniform(5, rng, size=30)
        mb = moment_bounds(V, rng.uniform(0, 0.5, 30), float(rng.uniform(0, 5)))
        ok &= (mb["second_moment"] <= mb["second_bound"] * (1 + 1e-12) <= mb["second_bound_c"] * (1 + 1e-12)
               and mb["first_moment"] <= mb["first_bound"] * (1 + 1e-12) <= mb["first_bound_c"] * (1 + 1e-12))
    check("moment_bounds", ok, "second and first moment estimates")

    V = sample_uniform(8, rng, size=50)
    vals = rng.permutation(np.arange(50) * 0.1)
    big = np.linalg.norm(consensus_point(V, vals, 1e6).point - V[np.argmin(vals)])
    check("alpha_concentration", big < 1e-6, f"|v_alpha - V_best| = {big:.2e} at alpha=1e6")
    return out
