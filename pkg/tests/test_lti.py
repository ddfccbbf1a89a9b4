import math

import numpy as np
import pytest

from conftest import random_gaussian, random_spd, random_system
from wdp_lti.errors import DimensionMismatch
from wdp_lti.lti import (
    LtiSystem,
    build_stacked,
    lipschitz_bound,
    pushforward,
    rollout,
    sensitivity,
    simulate_outputs,
)
from wdp_lti.matgauss import Gaussian, eig_extremes, w2_distance

BUILDING = LtiSystem(0.9, 1.0, 1.0, 0.0)


def loop_outputs(sys, x0, us):
    """Reference: iterate the state equation one sample at a time."""
    x = np.array(x0, dtype=float)
    ys = []
    for u in us:
        ys.append(sys.C @ x + sys.D @ u)
        x = sys.A @ x + sys.B @ u
    return np.concatenate(ys)


def test_system_validation():
    with pytest.raises(DimensionMismatch):
        LtiSystem(np.eye(2), np.ones((3, 1)), np.ones((1, 2)), np.zeros((1, 1)))
    with pytest.raises(DimensionMismatch):
        LtiSystem(np.eye(2), np.ones((2, 1)), np.ones((1, 2)), np.zeros((2, 1)))
    with pytest.raises(DimensionMismatch):
        LtiSystem(np.ones((2, 3)), np.ones((2, 1)), np.ones((1, 3)), np.zeros((1, 1)))


def test_system_json_scalars():
    sys = LtiSystem.from_json({"A": 0.9, "B": [[1]], "C": 1, "D": 0})
    assert sys.A.shape == (1, 1) and sys.A[0, 0] == 0.9
    assert LtiSystem.from_json(sys.to_json()).to_json() == sys.to_json()


def test_horizon_zero(rng):
    sys = random_system(rng)
    maps = build_stacked(sys, 0)
    assert np.array_equal(maps.O, sys.C) and np.array_equal(maps.N, sys.D)


def test_building_stack():
    maps = build_stacked(BUILDING, 2)
    assert np.allclose(maps.O.ravel(), [1, 0.9, 0.81], atol=1e-15)
    assert np.allclose(maps.N, [[0, 0, 0], [1, 0, 0], [0.9, 1, 0]], atol=1e-15)


def test_identity_dynamics():
    I = np.eye(2)
    maps = build_stacked(LtiSystem(I, I, I, np.zeros((2, 2))), 1)
    assert np.array_equal(maps.O, np.vstack([I, I]))
    expected = np.zeros((4, 4))
    expected[2:, :2] = I
    assert np.array_equal(maps.N, expected)


def test_stack_matches_rollout(rng):
    for _ in range(50):
        sys = random_system(rng)
        t = int(rng.integers(0, 6))
        maps = build_stacked(sys, t)
        x0 = rng.standard_normal(sys.n)
        us = rng.standard_normal((t + 1, sys.m))
        Y = maps.O @ x0 + maps.N @ us.ravel()
        assert np.allclose(Y, loop_outputs(sys, x0, us), rtol=1e-12, atol=1e-12)
        batch = rollout(sys, x0[None], us.ravel()[None], t)
        assert np.allclose(batch[0], Y, rtol=1e-12, atol=1e-12)


def test_stack_block_structure(rng):
    sys = random_system(rng, n=3, m=2, q=2)
    t = 4
    maps = build_stacked(sys, t)
    q, m = sys.q, sys.m
    for k in range(t + 1):
        assert np.allclose(maps.O[k * q:(k + 1) * q], sys.C @ np.linalg.matrix_power(sys.A, k))
    for i in range(t + 1):
        for j in range(t + 1):
            blk = maps.N[i * q:(i + 1) * q, j * m:(j + 1) * m]
            if i == j:
                assert np.array_equal(blk, sys.D)
            elif i > j:
                assert np.allclose(blk, sys.C @ np.linalg.matrix_power(sys.A, i - j - 1) @ sys.B)
            else:
                assert not blk.any()
    F = np.hstack([maps.O, maps.N])
    assert np.linalg.norm(maps.gram - F.T @ F) <= 1e-10 * np.linalg.norm(F.T @ F)


def test_nesting(rng):
    sys = random_system(rng)
    t = 5
    big = build_stacked(sys, t)
    for s in range(t + 1):
        small = build_stacked(sys, s)
        rows, cols = (s + 1) * sys.q, (s + 1) * sys.m
        assert np.array_equal(big.O[:rows], small.O)
        assert np.array_equal(big.N[:rows, :cols], small.N)


def test_sensitivity_examples():
    zero = LtiSystem(0.0, 0.0, 0.0, 0.0)
    assert sensitivity(build_stacked(zero, 3)) == 0.0
    assert sensitivity(build_stacked(LtiSystem(0.0, 0.0, 1.0, 1.0), 0)) == pytest.approx(2.0, rel=1e-14)


def test_sensitivity_building():
    maps = build_stacked(BUILDING, 2)
    F = np.array([[1.0, 0, 0, 0], [0.9, 1, 0, 0], [0.81, 0.9, 1, 0]])
    # oracle: largest root of the characteristic polynomial of F F^T
    assert sensitivity(maps) == pytest.approx(np.max(np.roots(np.poly(F @ F.T)).real), rel=1e-10)
    NtN = maps.N.T @ maps.N
    assert eig_extremes(NtN)[1] == pytest.approx((2.81 + math.sqrt(3.8961)) / 2, rel=1e-12)
    assert eig_extremes(NtN)[1] == pytest.approx(2.39192, abs=1e-5)


def test_sensitivity_monotone_in_horizon(rng):
    for _ in range(20):
        sys = random_system(rng, stable=bool(rng.integers(0, 2)))
        vals = [sensitivity(build_stacked(sys, t)) for t in range(7)]
        assert all(b >= a * (1 - 1e-12) for a, b in zip(vals, vals[1:]))


def test_lipschitz_bound_examples():
    assert lipschitz_bound(np.eye(4)) == pytest.approx(1.0, rel=1e-14)
    assert lipschitz_bound(np.diag([3.0, 1.0])) == pytest.approx(3.0, rel=1e-14)
    maps = build_stacked(BUILDING, 2)
    assert lipschitz_bound(maps.F) == pytest.approx(math.sqrt(sensitivity(maps)), rel=1e-12)


def test_lipschitz_bound_vs_svd(rng):
    for _ in range(100):
        F = rng.standard_normal((int(rng.integers(1, 8)), int(rng.integers(1, 8))))
        assert lipschitz_bound(F) == pytest.approx(np.linalg.svd(F, compute_uv=False)[0], rel=1e-10)


def test_pushforward_zero_system():
    maps = build_stacked(LtiSystem(0.0, 0.0, 0.0, 0.0), 2)
    Y = pushforward(maps, Gaussian([5.0], [[3.0]]), Gaussian(np.ones(3), np.eye(3)), 2.5 * np.eye(3))
    assert np.array_equal(Y.mean, np.zeros(3)) and np.allclose(Y.cov, 2.5 * np.eye(3), atol=0)


def test_pushforward_scalar_sum():
    maps = build_stacked(LtiSystem(0.0, 0.0, 1.0, 1.0), 0)
    Y = pushforward(maps, Gaussian([2.0], [[3.0]]), Gaussian([5.0], [[7.0]]), [[0.5]])
    assert Y.mean[0] == 7.0 and Y.cov[0, 0] == 10.5


def test_pushforward_building_mean():
    maps = build_stacked(BUILDING, 2)
    Y = pushforward(maps, Gaussian([90.0], [[10.0]]), Gaussian(21 * np.ones(3), 0.1 * np.eye(3)), np.zeros((3, 3)))
    assert np.allclose(Y.mean, [90, 102, 112.8], rtol=1e-14)
    assert np.allclose(Y.mean, [90, 0.9 * 90 + 21, 0.81 * 90 + 0.9 * 21 + 21], rtol=1e-14)


def test_pushforward_dimension_checks():
    maps = build_stacked(BUILDING, 2)
    x0, u = Gaussian([90.0], [[10.0]]), Gaussian(np.ones(3), np.eye(3))
    with pytest.raises(DimensionMismatch):
        pushforward(maps, x0, Gaussian(np.ones(2), np.eye(2)), np.eye(3))
    with pytest.raises(DimensionMismatch):
        pushforward(maps, x0, u, np.eye(2))


def test_pushforward_contraction():
    """W2 of affine images with shared independent noise is at most ||F|| times the input W2."""
    rng = np.random.default_rng(7)
    violations = 0
    for _ in range(500):
        n, k = int(rng.integers(1, 6)), int(rng.integers(1, 6))
        F = rng.standard_normal((k, n)) * rng.uniform(0.1, 3)
        P, Q = random_gaussian(rng, n), random_gaussian(rng, n)
        noise = random_spd(rng, k, 0.0, 5.0) if rng.integers(0, 2) else np.zeros((k, k))
        Py = Gaussian(F @ P.mean, F @ P.cov @ F.T + noise)
        Qy = Gaussian(F @ Q.mean, F @ Q.cov @ F.T + noise)
        violations += w2_distance(Py, Qy) > lipschitz_bound(F) * w2_distance(P, Q) + 1e-9
    assert violations == 0


def test_simulation_matches_pushforward(rng):
    sys = random_system(rng, n=2, m=1, q=2)
    t = 3
    maps = build_stacked(sys, t)
    px0 = random_gaussian(rng, 2, mean_scale=2)
    pu = random_gaussian(rng, t + 1, mean_scale=2)
    V = random_spd(rng, (t + 1) * 2, 0.1, 1.0)
    n = 100_000
    Y = simulate_outputs(sys, t, px0, pu, V, n, seed=3)
    an = pushforward(maps, px0, pu, V)
    se_mean = np.sqrt(np.diag(an.cov) / n)
    assert np.all(np.abs(Y.mean(axis=0) - an.mean) <= 4 * se_mean)
    S = an.cov
    se_cov = np.sqrt((np.outer(np.diag(S), np.diag(S)) + S ** 2) / n)
    assert np.all(np.abs(np.cov(Y.T) - S) <= 4 * se_cov)


def test_simulation_deterministic(rng, monkeypatch):
    sys = random_system(rng)
    px0 = random_gaussian(rng, sys.n)
    pu = random_gaussian(rng, 3 * sys.m)
    outs = []
    for threads in ("1", "4"):
        monkeypatch.setenv("WDP_LTI_THREADS", threads)
        outs.append(simulate_outputs(sys, 2, px0, pu, np.eye(3 * sys.q), 150_000, seed=9))
    assert outs[0].tobytes() == outs[1].tobytes()
