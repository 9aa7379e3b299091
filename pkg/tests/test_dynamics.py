import math
import random
from fractions import Fraction

import numpy as np
import pytest

from ssburgers.coefficients import ModelCoefficients, random_valid_coefficients
from ssburgers.dynamics import (
    CHUNK,
    DT_STABILITY_CAP,
    LatticeState,
    NoiseSource,
    SimulationUnstableError,
    drift_eval,
    em_step,
    load_trajectory,
    sample_stationary,
    save_trajectory,
    simulate,
    step_noise,
    summary_csv,
)
from ssburgers.symbolic import GeneratorParams, drift_polynomial


def _zero_params(K, M, eps=0.0):
    return GeneratorParams(ModelCoefficients(K, [0.0] * K), eps, M)


def _random_params(K, M, rng, eps=0.25):
    return GeneratorParams(random_valid_coefficients(K, rng).float_copy(), eps, M)


# ---------------------------------------------------------------------------
# stationary sampling
# ---------------------------------------------------------------------------


def test_sample_stationary_deterministic():
    a = sample_stationary(2, 16, 42)
    b = sample_stationary(2, 16, 42)
    assert np.array_equal(a.u, b.u)
    c = sample_stationary(2, 16, 43)
    assert not np.array_equal(a.u, c.u)


def test_sample_stationary_moments():
    n = 10**6
    u = sample_stationary(1, n, 7).u[0]
    assert abs(u.mean()) <= 4 / math.sqrt(n)
    assert abs(u.var() - 1.0) <= 4 * math.sqrt(2 / n)


# ---------------------------------------------------------------------------
# noise stream
# ---------------------------------------------------------------------------


def test_step_noise_pure_in_seed_and_step():
    src = NoiseSource(11, 2, 8)
    blk = src.block(CHUNK - 3, 7)  # straddles a chunk boundary
    for off in range(7):
        assert np.array_equal(blk[off], step_noise(11, CHUNK - 3 + off, 2, 8))


def test_noise_independent_of_block_partition():
    src = NoiseSource(5, 1, 4)
    whole = src.block(0, 3 * CHUNK)
    parts = np.concatenate(
        [NoiseSource(5, 1, 4).block(s, 17) for s in range(0, 3 * CHUNK, 17)]
    )[: 3 * CHUNK]
    assert np.array_equal(whole, parts)


# ---------------------------------------------------------------------------
# drift
# ---------------------------------------------------------------------------


def test_drift_zero_on_constant(rng):
    p = _random_params(2, 8, rng)
    state = LatticeState(np.full((2, 8), 1.7))
    assert np.allclose(drift_eval(state, p), 0.0, atol=1e-14)


def test_drift_hand_example():
    p = _zero_params(1, 3)
    p.coefficients.alpha[0] = 1.0
    state = LatticeState(np.array([[1.0, 2.0, 0.0]]))
    assert np.allclose(drift_eval(state, p), [[2.0, -1.0, -1.0]], atol=1e-14)


def test_drift_matches_symbolic(rng):
    checked = 0
    for K in (1, 2, 3):
        for M in (3, 5, 8):
            c = random_valid_coefficients(K, rng)
            p_num = GeneratorParams(c.float_copy(), 0.3, M)
            p_sym = GeneratorParams(c, Fraction(3, 10), M)
            polys = [
                [drift_polynomial(k, j, p_sym) for j in range(M)] for k in range(K)
            ]
            for _ in range(12):
                state = sample_stationary(K, M, rng.randrange(2**32))
                B = drift_eval(state, p_num)
                for k in range(K):
                    for j in range(M):
                        ref = float(polys[k][j].evaluate(state.u))
                        assert abs(B[k, j] - ref) <= 1e-10 * max(1.0, abs(ref))
                checked += 1
    assert checked >= 100


def test_drift_telescopes_numerically(rng):
    p = _random_params(3, 8, rng)
    state = sample_stationary(3, 8, 3)
    B = drift_eval(state, p)
    for k in range(3):
        assert abs(math.fsum(B[k])) <= 1e-12 * max(1.0, np.abs(B[k]).sum())


# ---------------------------------------------------------------------------
# single step
# ---------------------------------------------------------------------------


def test_zero_state_zero_noise_fixed_point(rng):
    p = _random_params(2, 6, rng)
    state = LatticeState(np.zeros((2, 6)))
    out = em_step(state, p, 0.01, np.zeros((2, 6)))
    assert np.array_equal(out.u, np.zeros((2, 6)))


def test_dt_cap_enforced(rng):
    p = _random_params(1, 4, rng)
    state = sample_stationary(1, 4, 1)
    noise = np.zeros((1, 4))
    with pytest.raises(ValueError, match="stability"):
        em_step(state, p, DT_STABILITY_CAP * 1.01, noise)
    with pytest.raises(ValueError):
        em_step(state, p, 0.0, noise)
    em_step(state, p, DT_STABILITY_CAP, noise)  # boundary值 allowed


def test_step_conserves_component_sums(rng):
    p = _random_params(2, 64, rng, eps=64**-0.5)
    state = sample_stationary(2, 64, 9)
    s0 = [math.fsum(state.u[k]) for k in range(2)]
    u = state
    for s in range(500):
        u = em_step(u, p, 0.01, step_noise(9, s, 2, 64))
    for k in range(2):
        drift = abs(math.fsum(u.u[k]) - s0[k]) / max(1.0, abs(s0[k]))
        assert drift <= 1e-12


def test_one_step_covariance_matches_linear_oracle():
    # eps = 0 turns the step into u' = A u + sqrt(dt) D eta with
    # A = I + dt/2 * Lap and D the bond-difference operator; starting from
    # iid normals the exact one-step covariance is A A^T + dt (2I - S - S^T).
    M, dt = 8, 0.05
    lap = np.zeros((M, M))
    shift = np.zeros((M, M))
    for j in range(M):
        lap[j, (j + 1) % M] += 1.0
        lap[j, (j - 1) % M] += 1.0
        lap[j, j] -= 2.0
        shift[j, (j - 1) % M] = 1.0
    A = np.eye(M) + 0.5 * dt * lap
    ddt = 2.0 * np.eye(M) - shift - shift.T
    C_exact = A @ A.T + dt * ddt

    # replicate across independent components (all-zero coefficients)
    K, reps = 10, 10_000
    p = _zero_params(K, M)
    gen = np.random.default_rng(2024)
    rows = np.empty((K * reps, M))
    for r in range(reps):
        state = LatticeState(gen.standard_normal((K, M)))
        out = em_step(state, p, dt, gen.standard_normal((K, M)))
        rows[r * K : (r + 1) * K] = out.u
    C_emp = np.cov(rows.T, ddof=1)
    N = rows.shape[0]
    tol = 4.0 * np.sqrt(
        (np.outer(np.diag(C_exact), np.diag(C_exact)) + C_exact**2) / N
    )
    assert np.all(np.abs(C_emp - C_exact) <= tol)


# ---------------------------------------------------------------------------
# trajectories
# ---------------------------------------------------------------------------


def test_simulate_zero_steps(rng):
    p = _random_params(1, 8, rng)
    init = sample_stationary(1, 8, 4)
    traj = simulate(init, p, 0.01, 0, 4, seed=4)
    assert traj.n_snapshots == 1
    assert np.array_equal(traj.snapshots[0], init.u)


def test_simulate_deterministic(rng):
    p = _random_params(2, 16, rng, eps=0.25)
    init = sample_stationary(2, 16, 8)
    a = simulate(init, p, 0.01, 128, 16, seed=8)
    b = simulate(init, p, 0.01, 128, 16, seed=8)
    assert np.array_equal(a.snapshots, b.snapshots)
    c = simulate(init, p, 0.01, 128, 16, seed=9)
    assert not np.array_equal(a.snapshots, c.snapshots)


def test_simulate_stride_does_not_change_path(rng):
    p = _random_params(2, 8, rng)
    init = sample_stationary(2, 8, 6)
    fine = simulate(init, p, 0.01, 96, 4, seed=6)
    coarse = simulate(init, p, 0.01, 96, 12, seed=6)
    # common snapshots (every 12 steps) agree bitwise
    assert np.array_equal(fine.snapshots[::3], coarse.snapshots)


def test_simulate_validates_arguments(rng):
    p = _random_params(1, 8, rng)
    init = sample_stationary(1, 8, 1)
    with pytest.raises(ValueError, match="multiple"):
        simulate(init, p, 0.01, 10, 4, seed=1)
    with pytest.raises(ValueError, match="stride"):
        simulate(init, p, 0.01, 8, 0, seed=1)


def test_instability_reports_step_index():
    p = _zero_params(1, 8, eps=10.0)
    p.coefficients.alpha[0] = 1.0
    init = LatticeState(np.full((1, 8), 40.0) * np.linspace(1, 2, 8))
    with np.errstate(over="ignore", invalid="ignore"):
        with pytest.raises(SimulationUnstableError) as err:
            simulate(init, p, 0.25, 256, 16, seed=0)
    assert 0 <= err.value.step < 256


def test_trajectory_round_trip(tmp_path, rng):
    p = _random_params(2, 8, rng)
    init = sample_stationary(2, 8, 12)
    traj = simulate(init, p, 0.02, 64, 8, seed=12)
    path = tmp_path / "traj.bin"
    save_trajectory(traj, path)
    back = load_trajectory(path)
    assert np.array_equal(back.snapshots, traj.snapshots)
    assert np.array_equal(back.steps, traj.steps)
    assert (back.K, back.M, back.stride, back.seed) == (2, 8, 8, 12)
    assert back.dt == traj.dt
    assert back.params.coefficients == traj.params.coefficients
    assert float(back.params.epsilon) == float(traj.params.epsilon)


def test_trajectory_rejects_bad_magic(tmp_path):
    path = tmp_path / "junk.bin"
    path.write_bytes(b"NOTATRAJ" + b"\0" * 64)
    with pytest.raises(ValueError, match="magic"):
        load_trajectory(path)


def test_summary_csv(tmp_path, rng):
    p = _random_params(1, 8, rng)
    traj = simulate(sample_stationary(1, 8, 2), p, 0.01, 16, 8, seed=2)
    path = tmp_path / "summary.csv"
    summary_csv(traj, path)
    lines = path.read_text().splitlines()
    assert lines[0].startswith("# ssburgers-summary-csv")
    assert lines[1].split(",")[:4] == ["snapshot", "step", "t_micro", "k"]
    assert len(lines) == 2 + traj.n_snapshots  # K = 1


def test_times_macro(rng):
    p = _random_params(1, 4, rng)
    traj = simulate(sample_stationary(1, 4, 3), p, 0.01, 32, 16, seed=3)
    assert np.allclose(traj.times_macro(), [0.0, 16 * 0.01 / 16, 32 * 0.01 / 16])


# ---------------------------------------------------------------------------
# slow: first-order dt bias of the stationary covariance (eps = 0 chain)
# ---------------------------------------------------------------------------


def _mode_variances(traj, burn_snapshots):
    snaps = traj.snapshots[burn_snapshots:, 0, :]
    F = np.fft.rfft(snaps, axis=1)
    M = snaps.shape[1]
    return (np.abs(F) ** 2).mean(axis=0) / M


def test_ou_stationary_covariance_dt_bias():
    # per Fourier mode the eps=0 chain has fixed-point variance
    # c_m(dt) = 1/(1 - dt*mu_m/4) with mu_m = 4 sin^2(pi m / M): the distance
    # to the invariant variance 1 is first order in dt, so halving dt halves
    # the covariance error (ratio ~ 2 +/- 0.5).
    M = 32
    mu = 4.0 * np.sin(np.pi * np.arange(M // 2 + 1) / M) ** 2
    used = mu >= 1.0

    errors = {}
    for dt, n_steps, stride in [(0.05, 1_600_000, 40), (0.025, 3_200_000, 80)]:
        p = _zero_params(1, M)
        init = sample_stationary(1, M, 77)
        traj = simulate(init, p, dt, n_steps, stride, seed=77)
        burn = 8192 // stride
        c_hat = _mode_variances(traj, burn)
        c_exact = 1.0 / (1.0 - dt * mu / 4.0)
        n_snap = traj.n_snapshots - burn
        # direct check of the fixed-point spectrum on the fast modes
        tol = 6.0 * c_exact * math.sqrt(2.0 / n_snap)
        assert np.all(np.abs(c_hat[used] - c_exact[used]) <= tol[used])
        # precision-weighted pooled covariance error
        w = mu[used] ** 2
        per_mode = (c_hat[used] - 1.0) * 4.0 / mu[used]
        errors[dt] = float((w * per_mode).sum() / w.sum())

    ratio = errors[0.05] / errors[0.025]
    assert 1.5 <= ratio <= 2.5, (errors, ratio)
