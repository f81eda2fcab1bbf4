"""
Objective functions on the sphere and the data generators behind them.

Every objective evaluates a batch of points at once: calling it with an
``(n, d)`` array returns ``n`` values, calling it with a single ``(d,)``
vector returns a float.
"""

import csv
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import InvalidParameterError, ParseError
from .sphere import as_unit_vector, renormalize, sample_uniform

__all__ = [
    "Frame",
    "Objective",
    "PointCloud",
    "TEST_FUNCTIONS",
    "ackley",
    "alpine",
    "gaussian_frame",
    "griewank",
    "haystack",
    "load_pointcloud_csv",
    "make_test_function",
    "pca_energy",
    "phase_retrieval_risk",
    "rastrigin",
    "rotate_minimizer",
    "rotated_minimizer",
    "salomon",
    "xsy_random",
]

GRAD_EPS = 1e-12


@dataclass
class Objective:
    """
    Black-box objective ``E : S^{d-1} -> R``.

    Parameters
    ----------
    name : str
    func : callable
        Maps an ``(n, d)`` array to ``n`` values.
    dim : int
    known_minimizer : ndarray, optional
        Global minimizer, used to score runs.
    minimum : float, optional
        Value at the known minimizer.
    gradient : callable, optional
        Ambient (Euclidean) gradient, ``(d,) -> (d,)``.
    even : bool
        ``E(v) == E(-v)``; success is then measured up to sign.
    """

    name: str
    func: Callable[[np.ndarray], np.ndarray]
    dim: int
    known_minimizer: Optional[np.ndarray] = None
    minimum: Optional[float] = None
    gradient: Optional[Callable[[np.ndarray], np.ndarray]] = None
    even: bool = False
    params: dict = field(default_factory=dict)

    def __call__(self, v):
        v = np.asarray(v, dtype=float)
        if v.ndim == 1:
            return float(self.func(v[None, :])[0])
        return np.asarray(self.func(v), dtype=float)


def _minimizer(d, vstar):
    if vstar is None:
        vstar = np.zeros(d)
        vstar[-1] = 1.0
    vstar = as_unit_vector(vstar)
    if vstar.size != d:
        raise InvalidParameterError(f"minimizer has dimension {vstar.size}, expected {d}")
    return vstar


def ackley(d, vstar=None, A=20.0, a=0.2, b=32.0, B=20.0):
    vstar = _minimizer(d, vstar)

    def f(V):
        F = V - vstar
        r = np.linalg.norm(F, axis=1)
        return (-A * np.exp(-a * b / math.sqrt(d) * r)
                - np.exp(np.mean(np.cos(2.0 * np.pi * b * F), axis=1)) + math.e + B)

    return Objective("ackley", f, d, vstar, 0.0, params=dict(A=A, a=a, b=b, B=B))


def rastrigin(d, vstar=None, A=10.0, b=5.12, B=10.0):
    vstar = _minimizer(d, vstar)

    def f(V):
        F = V - vstar
        return (b**2 / d * np.sum(F * F, axis=1)
                - A / d * np.sum(np.cos(2.0 * np.pi * b * F), axis=1) + B)

    return Objective("rastrigin", f, d, vstar, 0.0, params=dict(A=A, b=b, B=B))


def griewank(d, vstar=None, A=1.0 / 4000.0, b=600.0, B=1.0):
    vstar = _minimizer(d, vstar)
    root_k = np.sqrt(np.arange(1, d + 1))

    def f(V):
        F = V - vstar
        return A * b**2 * np.sum(F * F, axis=1) - np.prod(np.cos(b * F / root_k), axis=1) + B

    return Objective("griewank", f, d, vstar, 0.0, params=dict(A=A, b=b, B=B))


def salomon(d, vstar=None, a=0.1, b=100.0, A=-1.0, B=1.0):
    vstar = _minimizer(d, vstar)

    def f(V):
        r = np.linalg.norm(V - vstar, axis=1)
        return A * np.cos(2.0 * np.pi * b * r) + a * b * r + B

    return Objective("salomon", f, d, vstar, 0.0, params=dict(a=a, b=b, A=A, B=B))


def alpine(d, vstar=None, a=0.1, b=10.0):
    vstar = _minimizer(d, vstar)

    def f(V):
        F = V - vstar
        return b * np.sum(np.abs(F * np.sin(b * F) - a * F), axis=1)

    return Objective("alpine", f, d, vstar, 0.0, params=dict(a=a, b=b))


def xsy_random(d, vstar=None, rng=None, b=5.0, frozen=False):
    """
    Xin-She Yang stochastic function ``sum_k xi_k |b (V_k - v*_k)|^k``.

    The weights ``xi_k ~ U[0, 1]`` are redrawn for every evaluated point from
    ``rng`` (the objective owns it, so give each run its own generator). With
    ``frozen=True`` one draw is fixed at construction and the function is
    deterministic.
    """
    vstar = _minimizer(d, vstar)
    if rng is None:
        rng = np.random.default_rng()
    powers = np.arange(1, d + 1, dtype=float)
    fixed = rng.uniform(size=d) if frozen else None

    def f(V):
        terms = np.abs(b * (V - vstar)) ** powers
        xi = fixed if frozen else rng.uniform(size=V.shape)
        return np.sum(xi * terms, axis=1)

    return Objective("xsy_random", f, d, vstar, 0.0, params=dict(b=b, frozen=frozen))


TEST_FUNCTIONS = {
    "ackley": ackley,
    "rastrigin": rastrigin,
    "griewank": griewank,
    "salomon": salomon,
    "alpine": alpine,
    "xsy_random": xsy_random,
}


def make_test_function(name, d, vstar=None, rng=None):
    try:
        factory = TEST_FUNCTIONS[name]
    except KeyError:
        raise InvalidParameterError(
            f"unknown test function {name!r}; choose from {sorted(TEST_FUNCTIONS)}") from None
    if factory is xsy_random:
        return factory(d, vstar, rng=rng)
    return factory(d, vstar)


def rotated_minimizer(d, angle):
    """``e_d`` rotated by ``angle`` towards ``e_1`` in the (e_1, e_d) plane."""
    if not 0.0 <= angle <= math.pi:
        raise InvalidParameterError(f"angle must lie in [0, pi], got {angle!r}")
    v = np.zeros(d)
    v[0] = math.sin(angle)
    v[-1] = math.cos(angle)
    return v


def rotate_minimizer(family, d, angle, rng=None):
    """Rebuild a test function family (name or factory) with a rotated minimizer."""
    vstar = rotated_minimizer(d, angle)
    if callable(family):
        family = next((k for k, v in TEST_FUNCTIONS.items() if v is family), family)
    if isinstance(family, str):
        return make_test_function(family, d, vstar, rng=rng)
    return family(d, vstar)


# -- robust PCA ---------------------------------------------------------------

@dataclass
class PointCloud:
    points: np.ndarray
    inlier_direction: Optional[np.ndarray] = None
    # rank-1 inlier samples before the isotropic perturbation
    noiseless_inliers: Optional[np.ndarray] = None

    @property
    def dim(self):
        return self.points.shape[1]


def pca_energy(cloud, p):
    """
    Robust PCA energy ``E_p(v) = sum_i (|x_i|^2 - <x_i, v>^2)^(p/2)``.

    Inputs are projected onto the sphere before evaluation, so the energy
    is constant along rays; negative round-off residuals are clipped to 0.
    The ambient gradient treats terms with residual below 1e-12 as flat.
    """
    if not 0.0 < p <= 2.0:
        raise InvalidParameterError(f"p must satisfy 0 < p <= 2, got {p!r}")
    X = np.asarray(cloud.points if isinstance(cloud, PointCloud) else cloud, dtype=float)
    sq = np.sum(X * X, axis=1)
    half_p = 0.5 * p

    def f(V):
        U = renormalize(V)
        proj = X @ U.T
        resid = np.clip(sq[:, None] - proj**2, 0.0, None)
        return np.sum(resid**half_p, axis=0)

    def grad(v):
        v = np.asarray(v, dtype=float)
        proj = X @ v
        resid = sq - proj**2
        live = resid >= GRAD_EPS
        coef = np.zeros_like(resid)
        coef[live] = -p * resid[live] ** (half_p - 1.0) * proj[live]
        return coef @ X

    direction = cloud.inlier_direction if isinstance(cloud, PointCloud) else None
    return Objective(f"pca_energy(p={p:g})", f, X.shape[1], known_minimizer=None,
                     gradient=grad, even=True, params=dict(p=p, direction=direction))


def haystack(d, n_in, n_out, rng):
    """
    Haystack point cloud: ``n_in`` inliers from N(0, w w^T + 1e-4 I) around a
    uniformly random direction ``w`` and ``n_out`` outliers from N(0, I/d).
    """
    if d < 2 or n_in < 1 or n_out < 0:
        raise InvalidParameterError("haystack needs d >= 2, n_in >= 1, n_out >= 0")
    w = sample_uniform(d, rng)
    g = rng.standard_normal(n_in)
    clean = g[:, None] * w
    inliers = clean + 1e-2 * rng.standard_normal((n_in, d))
    outliers = rng.standard_normal((n_out, d)) / math.sqrt(d)
    return PointCloud(np.vstack([inliers, outliers]), inlier_direction=w, noiseless_inliers=clean)


def load_pointcloud_csv(path):
    """Read a header-less numeric CSV (one point per row) and center it."""
    rows = []
    width = None
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or all(not c.strip() for c in row):
                continue
            if width is None:
                width = len(row)
            elif len(row) != width:
                raise ParseError(f"{path}: row {lineno} has {len(row)} columns, expected {width}")
            vals = []
            for col, cell in enumerate(row, start=1):
                try:
                    vals.append(float(cell))
                except ValueError:
                    raise ParseError(f"{path}: row {lineno}, column {col}: "
                                     f"not a number: {cell!r}") from None
            rows.append(vals)
    if not rows:
        raise ParseError(f"{path}: empty file")
    X = np.array(rows, dtype=float)
    if not np.all(np.isfinite(X)):
        r, c = np.argwhere(~np.isfinite(X))[0]
        raise ParseError(f"{path}: row {r + 1}, column {c + 1}: non-finite value")
    return PointCloud(X - X.mean(axis=0))


# -- phase retrieval ------------------------------------------------------------

@dataclass
class Frame:
    vectors: np.ndarray
    measurements: np.ndarray
    truth: np.ndarray


def gaussian_frame(d, m, vstar, rng):
    """Noiseless quadratic measurements ``y_i = <v*, a_i>^2`` with ``a_i ~ N(0, I)``."""
    if m < 1:
        raise InvalidParameterError(f"frame size must be >= 1, got {m}")
    vstar = as_unit_vector(vstar)
    A = rng.standard_normal((int(m), d))
    return Frame(A, (A @ vstar) ** 2, vstar)


def phase_retrieval_risk(frame):
    A = np.asarray(frame.vectors, dtype=float)
    y = np.asarray(frame.measurements, dtype=float)
    if A.shape[0] == 0:
        raise InvalidParameterError("frame is empty")
    m = A.shape[0]

    def f(V):
        return np.mean(((V @ A.T) ** 2 - y) ** 2, axis=1)

    def grad(v):
        s = A @ np.asarray(v, dtype=float)
        return (4.0 / m) * ((s**2 - y) * s) @ A

    return Objective("phase_retrieval", f, A.shape[1], known_minimizer=np.asarray(frame.truth),
                     minimum=0.0, gradient=grad, even=True)
