import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import aniso_agent, iso_agent, normalized
from sphere_cbo.dynamics import (
    SolverParams,
    check_stall,
    discard_update,
    em_increment,
    run,
    step,
    step_anisotropic,
    step_isotropic,
    success_error,
)
from sphere_cbo.errors import InvalidParameterError
from sphere_cbo.gradient import GkvParams
from sphere_cbo.objectives import make_test_function
from sphere_cbo.sphere import sample_uniform


def random_config(rng, d):
    n = int(rng.integers(1, 6))
    V = sample_uniform(d, rng, size=n)
    vc = sample_uniform(d, rng) * rng.uniform(0.2, 1.0)
    lam, sigma, dt = rng.uniform(0.1, 3), rng.uniform(0, 3), rng.uniform(1e-3, 0.2)
    Z = rng.standard_normal((n, d))
    return V, vc, SolverParams(lam=lam, sigma=sigma, dt=dt), Z


def oracle_step(fn, V, vc, p, Z):
    sq = math.sqrt(p.dt)
    return np.array([normalized(fn(list(v), list(vc), p.lam, p.sigma, p.dt, list(sq * z)))
                     for v, z in zip(V, Z)])


def test_drift_only_example():
    p = SolverParams(lam=1.0, sigma=0.0, dt=0.1)
    out = step(np.array([[1.0, 0.0]]), np.array([0.0, 1.0]), p, normals=np.zeros((1, 2)))
    assert np.allclose(out, np.array([[1.0, 0.1]]) / math.sqrt(1.01), atol=1e-16)
    iso = step_isotropic(np.array([[1.0, 0.0]]), np.array([0.0, 1.0]), p, normals=np.zeros((1, 2)))
    assert np.array_equal(out, iso)


@pytest.mark.parametrize("d", [3, 5])
def test_matches_straight_line_oracle(d):
    rng = np.random.default_rng(d)
    for _ in range(100):
        V, vc, p, Z = random_config(rng, d)
        assert np.max(np.abs(step_anisotropic(V, vc, p, normals=Z) - oracle_step(aniso_agent, V, vc, p, Z))) <= 1e-14
        assert np.max(np.abs(step_isotropic(V, vc, p, normals=Z) - oracle_step(iso_agent, V, vc, p, Z))) <= 1e-14


@pytest.mark.parametrize("noise", ["anisotropic", "isotropic"])
def test_agent_at_consensus_unchanged(noise):
    rng = np.random.default_rng(1)
    v = sample_uniform(6, rng)
    p = SolverParams(sigma=2.0, dt=0.1, noise=noise)
    out = step(v[None], v, p, rng)
    assert np.allclose(out[0], v, atol=1e-15)


def test_d2_noise_modes_coincide_on_one_dim_tangent():
    # in d=2 with F tangent to V, |F| = |F_k| on the single tangent coordinate
    V = np.array([[1.0, 0.0]])
    vc = np.array([1.0, -0.3])
    Z = np.array([[0.0, 0.7]])
    a = em_increment(V, vc, 1.0, 1.0, 0.01, Z, "anisotropic").noise
    b = em_increment(V, vc, 1.0, 1.0, 0.01, Z, "isotropic").noise
    assert np.allclose(a, b, atol=1e-16)


@settings(max_examples=50)
@given(st.integers(0, 2**32 - 1), st.sampled_from([2, 3, 10, 50]),
       st.sampled_from(["anisotropic", "isotropic"]))
def test_noise_tangent_and_norm_preserved(seed, d, noise):
    rng = np.random.default_rng(seed)
    V, vc, p, Z = random_config(rng, d)
    parts = em_increment(V, vc, p.lam, p.sigma, p.dt, Z, noise)
    assert np.max(np.abs(np.sum(V * parts.noise, axis=1))) <= 1e-12
    out = step(V, vc, p.replace(noise=noise), normals=Z)
    assert np.max(np.abs(np.linalg.norm(out, axis=1) - 1)) <= 1e-12


def test_discard_update_examples():
    assert discard_update(100, 1.0, 0.8, 0.1, 10) == 98
    assert discard_update(100, 1.0, 0.1, 0.0, 10) == 100
    assert discard_update(20, 1.0, 0.0, 0.65, 10) == 10
    assert discard_update(100, 0.0, 0.0, 0.5, 10) == 100
    assert discard_update(100, 1.0, 1.2, 0.5, 10) == 100


@given(st.integers(1, 500), st.floats(1e-6, 10), st.floats(0, 10), st.floats(0, 1), st.integers(1, 500))
def test_discard_bounds(n, sp, sn, mu, n_min):
    n_min = min(n_min, n)
    out = discard_update(n, sp, sn, mu, n_min)
    assert n_min <= out <= n or out == n


def test_check_stall_examples():
    d = 1e-4
    const = [np.zeros(3)] * 5
    assert not check_stall(const[:4], d, 4)
    assert check_stall(const, d, 4)
    jump = [np.zeros(3)] * 3 + [np.array([2 * d, 0, 0])] * 2
    assert not check_stall(jump, d, 4)
    # steps of exactly the threshold (exactly representable) do not count
    exact = [np.array([0.0, 0.0, 0.0]), np.array([0.5, 0, 0]), np.array([0.5 + 2**-14, 0, 0])]
    assert not check_stall(exact, 2**-14, 1)


def test_success_error_sign_folding():
    v = np.array([0.0, 1.0])
    assert success_error(-v, v) == 2.0
    assert success_error(-v, v, even=True) == 0.0


def test_fixed_point_run():
    obj = make_test_function("ackley", 5)
    p = SolverParams(sigma=0.0, dt=0.1, n_agents=8, n_min=8, n_stall=5, max_iter=100)
    init = np.tile(obj.known_minimizer, (8, 1))
    rep = run(obj, p, init=init, rng=np.random.default_rng(0))
    assert rep.stop_reason == "stall" and rep.iterations <= 5 + 1 and rep.success


def test_run_deterministic():
    obj = make_test_function("rastrigin", 6)
    p = SolverParams(sigma=1.0, dt=0.05, n_agents=40, batch_size=20, mu=0.3, max_iter=300)
    a = run(obj, p, rng=np.random.default_rng(3), keep_trace=True)
    b = run(obj, p, rng=np.random.default_rng(3), keep_trace=True)
    assert a.record() == b.record()
    assert all(np.array_equal(x, y) for x, y in zip(a.consensus_trace, b.consensus_trace))


def test_run_respects_discard_floor_and_sphere():
    obj = make_test_function("ackley", 5)
    p = SolverParams(sigma=0.5, dt=0.05, n_agents=60, batch_size=30, mu=1.0, n_min=12, max_iter=400)
    counts, norms = [], []

    def cb(n, agents, cons):
        counts.append(agents.shape[0])
        norms.append(np.max(np.abs(np.linalg.norm(agents, axis=1) - 1)))

    run(obj, p, rng=np.random.default_rng(4), callback=cb)
    assert all(b <= a for a, b in zip(counts, counts[1:])) and min(counts) >= 12
    assert max(norms) <= 1e-12


@pytest.mark.parametrize("mode", ["random", "full", "partition"])
def test_batch_modes_run(mode):
    obj = make_test_function("ackley", 4)
    p = SolverParams(sigma=1.0, dt=0.05, n_agents=30, batch_size=10, batch_mode=mode, max_iter=50)
    rep = run(obj, p, rng=np.random.default_rng(5))
    assert rep.iterations == 50 and np.isfinite(rep.final_consensus.point).all()


def test_variance_decay():
    obj = make_test_function("ackley", 10)
    p = SolverParams(sigma=0.5, dt=0.01, n_agents=100, max_iter=500, n_stall=10**6)
    hits = 0
    for seed in range(10):
        rep = run(obj, p, rng=np.random.default_rng(seed))
        trace = dict(rep.variance_trace)
        hits += trace[500] < trace[0] / 2
    assert hits >= 9


def test_gkv_never_injecting_equals_plain():
    obj = make_test_function("ackley", 5)
    p = SolverParams(sigma=1.0, dt=0.05, n_agents=20, max_iter=60)
    a = run(obj, p, rng=np.random.default_rng(6)).record()
    b = run(obj, p, rng=np.random.default_rng(6), gkv=GkvParams(ell=10**9)).record()
    assert a == b


def test_time_rescaling_bitwise():
    obj = make_test_function("ackley", 5)
    lam, sigma, dt = 2.5, 1.3, 0.004
    a = SolverParams(lam=lam, sigma=sigma, dt=dt, n_agents=30, max_iter=100, n_stall=10**6)
    b = a.replace(lam=1.0, sigma=sigma / math.sqrt(lam), dt=lam * dt)
    ra = run(obj, a, rng=np.random.default_rng(8), keep_trace=True)
    rb = run(obj, b, rng=np.random.default_rng(8), keep_trace=True)
    assert max(np.max(np.abs(x - y)) for x, y in zip(ra.consensus_trace, rb.consensus_trace)) <= 1e-12


def test_invalid_params():
    with pytest.raises(InvalidParameterError, match="mu"):
        SolverParams(mu=1.5).validate()
    with pytest.raises(InvalidParameterError, match="batch_size"):
        SolverParams(n_agents=10, batch_size=11).validate()


def test_errors_carry_iteration():
    obj = make_test_function("ackley", 3)
    bad = type(obj)("nan", lambda V: np.where(V[:, 0] > 2, 0.0, np.nan), 3)
    with pytest.raises(Exception) as info:
        run(bad, SolverParams(n_agents=5, n_min=5, max_iter=3), rng=np.random.default_rng(0))
    assert "iteration 0" in str(info.value) and info.value.iteration == 0
