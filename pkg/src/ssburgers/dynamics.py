"""Time integration of the coupled lattice SDE.

Explicit Euler steps of

    du[k,j] = (Laplacian(u)[k,j]/2 + eps*B[k,j](u)) dt + dxi[k,j] - dxi[k,j-1]

on the doubly periodic (component, site) lattice.  One noise variable per
bond, shared by the two neighboring sites: that gradient structure is what
conserves every component's site sum exactly, and it is preserved bit-exactly
(a single (K, M) normal array per step, differenced along j).

Noise is counter-based: chunk ``c`` of ``CHUNK`` steps is drawn from a Philox
stream keyed by (seed, c), so the noise of any step is a pure function of
(seed, step) and trajectories are reproducible under any snapshot
post-processing, parallel or not.  Everything works in microscopic time;
callers wanting a macroscopic horizon t supply ``n_steps = round(t*n^2/dt)``.
"""

from __future__ import annotations

import csv
import json
import struct
from dataclasses import dataclass

import numpy as np

from . import backend
from .coefficients import ModelCoefficients, model_from_json, model_to_json
from .symbolic import GeneratorParams

#: Steps per noise chunk.  A module constant (independent of dt, stride and
#: params) so that step -> noise is a fixed map for a given seed.
CHUNK = 64

#: Linear-stability cap on dt: the discrete half-Laplacian has spectral
#: radius <= 2, and the pure diffusion recursion is stable for dt < 1, so
#: 0.25 keeps a 4x margin.
DT_STABILITY_CAP = 0.25

_STATE_TAG = 0x5353_0001
_NOISE_TAG = 0x5353_0002


class SimulationUnstableError(RuntimeError):
    """State left the finite range; carries the 0-based step that produced it."""

    def __init__(self, step: int):
        self.step = step
        super().__init__(f"state became non-finite applying step {step}")


@dataclass
class LatticeState:
    """K x M array of slope variables, periodic in both indices."""

    u: np.ndarray

    def __post_init__(self):
        self.u = np.asarray(self.u, dtype=np.float64)
        if self.u.ndim != 2:
            raise ValueError(f"state must be 2-d (K, M), got shape {self.u.shape}")
        if not np.isfinite(self.u).all():
            raise ValueError("state entries must be finite")

    @property
    def K(self) -> int:
        return self.u.shape[0]

    @property
    def M(self) -> int:
        return self.u.shape[1]

    def copy(self) -> "LatticeState":
        return LatticeState(self.u.copy())


def sample_stationary(K: int, M: int, seed: int) -> LatticeState:
    """I.i.d. standard-normal entries; deterministic given seed."""
    rng = np.random.default_rng(np.random.SeedSequence([_STATE_TAG, seed]))
    return LatticeState(rng.standard_normal((K, M)))


class NoiseSource:
    """Counter-based bond-noise stream for one trajectory."""

    def __init__(self, seed: int, K: int, M: int):
        self.K, self.M = K, M
        self._key = np.random.SeedSequence([_NOISE_TAG, seed]).generate_state(
            2, np.uint64
        )
        self._chunk_idx = -1
        self._chunk = None

    def _load(self, c: int) -> np.ndarray:
        if c != self._chunk_idx:
            bg = np.random.Philox(key=self._key, counter=c << 192)
            self._chunk = np.random.Generator(bg).standard_normal(
                (CHUNK, self.K, self.M)
            )
            self._chunk_idx = c
        return self._chunk

    def block(self, step0: int, count: int) -> np.ndarray:
        """Noise arrays for steps step0 .. step0+count-1, shape (count, K, M)."""
        out = np.empty((count, self.K, self.M))
        filled = 0
        while filled < count:
            s = step0 + filled
            c, off = divmod(s, CHUNK)
            take = min(CHUNK - off, count - filled)
            out[filled : filled + take] = self._load(c)[off : off + take]
            filled += take
        return out


def step_noise(seed: int, step: int, K: int, M: int) -> np.ndarray:
    """The (K, M) normal array used at a given step; pure in (seed, step)."""
    return NoiseSource(seed, K, M).block(step, 1)[0]


def coeff_arrays(c: ModelCoefficients):
    """Dense float64 views of the drift coefficients for the kernels.

    beta/gamma are (K, K) with column l in 1..K-1; lam is (K, K, K) keyed
    exactly as stored ((k, a, a') with a = k-l, a' = k-l').
    """
    K = c.K
    alpha = np.array([float(x) for x in c.alpha])
    beta = np.zeros((K, K))
    gammac = np.zeros((K, K))
    lam = np.zeros((K, K, K))
    for (k, l), v in c.beta.items():
        beta[k, l] = float(v)
    for (k, l), v in c.gamma.items():
        gammac[k, l] = float(v)
    for (k, a, ap), v in c.lam.items():
        lam[k, a, ap] = float(v)
    return alpha, beta, gammac, lam


def _check_dt(dt: float) -> None:
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    if dt > DT_STABILITY_CAP:
        raise ValueError(
            f"dt={dt} exceeds the linear-stability cap {DT_STABILITY_CAP}; "
            "this configuration is unstable, not merely inaccurate"
        )


def drift_eval(state: LatticeState, p: GeneratorParams) -> np.ndarray:
    """Numeric drift B[k,j] for every site of the state."""
    if (state.K, state.M) != (p.K, p.M):
        raise ValueError(
            f"state lattice ({state.K},{state.M}) does not match params "
            f"({p.K},{p.M})"
        )
    return backend.drift(state.u, *coeff_arrays(p.coefficients))


def g_eval(state_u: np.ndarray, p: GeneratorParams) -> np.ndarray:
    """Numeric drift current G[k,j] (the drift is its discrete gradient)."""
    return backend.g_values(state_u, *coeff_arrays(p.coefficients))


def em_step(
    state: LatticeState, p: GeneratorParams, dt: float, noise: np.ndarray
) -> LatticeState:
    """One explicit Euler step with the supplied (K, M) bond noise."""
    _check_dt(dt)
    noise = np.asarray(noise, dtype=np.float64)
    if noise.shape != (state.K, state.M):
        raise ValueError(
            f"noise shape {noise.shape} does not match state ({state.K},{state.M})"
        )
    u = backend.em_block(
        state.u, *coeff_arrays(p.coefficients), float(p.epsilon), dt, noise[None]
    )
    return LatticeState(u)


@dataclass
class Trajectory:
    """Snapshots of one realization, with everything needed to replay it."""

    params: GeneratorParams
    dt: float
    stride: int
    seed: int
    scheme: str
    steps: np.ndarray  # snapshot step indices, shape (S,)
    snapshots: np.ndarray  # (S, K, M)

    @property
    def K(self) -> int:
        return self.snapshots.shape[1]

    @property
    def M(self) -> int:
        return self.snapshots.shape[2]

    @property
    def n_snapshots(self) -> int:
        return self.snapshots.shape[0]

    def times_micro(self) -> np.ndarray:
        return self.steps * self.dt

    def times_macro(self) -> np.ndarray:
        """Macroscopic snapshot times t = step*dt/n^2 with n = M."""
        return self.steps * (self.dt / self.M**2)

    def state_at(self, i: int) -> LatticeState:
        return LatticeState(self.snapshots[i].copy())


def simulate(
    initial: LatticeState,
    p: GeneratorParams,
    dt: float,
    n_steps: int,
    stride: int,
    seed: int,
) -> Trajectory:
    """Iterate Euler steps with fresh counter-based noise; snapshot every
    ``stride`` steps (the initial state is snapshot 0).

    Bit-reproducible from (seed, params, dt, stride).  Aborts with
    :class:`SimulationUnstableError` (reporting the step) if the state leaves
    the finite range.
    """
    _check_dt(dt)
    if n_steps < 0:
        raise ValueError(f"n_steps must be >= 0, got {n_steps}")
    if stride < 1:
        raise ValueError(f"stride must be >= 1, got {stride}")
    if n_steps % stride:
        raise ValueError(f"n_steps={n_steps} is not a multiple of stride={stride}")
    K, M = initial.K, initial.M
    if p.K != K or p.M != M:
        raise ValueError(
            f"initial state ({K},{M}) does not match params ({p.K},{p.M})"
        )
    arrays = coeff_arrays(p.coefficients)
    eps = float(p.epsilon)
    source = NoiseSource(seed, K, M)
    n_blocks = n_steps // stride
    snapshots = np.empty((n_blocks + 1, K, M))
    snapshots[0] = initial.u
    u = initial.u
    for blk in range(n_blocks):
        step0 = blk * stride
        noise = source.block(step0, stride)
        u_next = backend.em_block(u, *arrays, eps, dt, noise)
        if not np.isfinite(u_next).all():
            # locate the offending step by replaying the block one step at a time
            v = u
            for off in range(stride):
                v = backend.em_block(v, *arrays, eps, dt, noise[off : off + 1])
                if not np.isfinite(v).all():
                    raise SimulationUnstableError(step0 + off)
            raise SimulationUnstableError(step0 + stride - 1)
        u = u_next
        snapshots[blk + 1] = u
    return Trajectory(
        params=p.float_copy(),
        dt=float(dt),
        stride=int(stride),
        seed=int(seed),
        scheme="em",
        steps=np.arange(n_blocks + 1, dtype=np.int64) * stride,
        snapshots=snapshots,
    )


# ---------------------------------------------------------------------------
# Persistence: little-endian binary snapshots + JSON params sidecar + CSV
# summaries.
# ---------------------------------------------------------------------------

TRAJ_MAGIC = b"SSBTRAJ1"
TRAJ_VERSION = 1
_HEADER_FMT = "<8sIIIQQQd"  # magic, version, K, M, stride, n_snap, seed, dt


def sidecar_path(path) -> str:
    return str(path) + ".params.json"


def save_trajectory(traj: Trajectory, path) -> None:
    header = struct.pack(
        _HEADER_FMT,
        TRAJ_MAGIC,
        TRAJ_VERSION,
        traj.K,
        traj.M,
        traj.stride,
        traj.n_snapshots,
        traj.seed % 2**64,
        traj.dt,
    )
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(traj.steps.astype("<u8").tobytes())
        fh.write(traj.snapshots.astype("<f8").tobytes())
    sidecar = {
        "schema": "ssburgers-trajectory-params v1",
        "scheme": traj.scheme,
        "coefficients": model_to_json(traj.params.coefficients),
        "epsilon": float(traj.params.epsilon),
        "K": traj.K,
        "M": traj.M,
        "dt": traj.dt,
        "stride": traj.stride,
        "seed": traj.seed,
    }
    with open(sidecar_path(path), "w") as fh:
        json.dump(sidecar, fh, indent=2)
        fh.write("\n")


def load_trajectory(path) -> Trajectory:
    with open(path, "rb") as fh:
        header = fh.read(struct.calcsize(_HEADER_FMT))
        magic, version, K, M, stride, n_snap, seed, dt = struct.unpack(
            _HEADER_FMT, header
        )
        if magic != TRAJ_MAGIC:
            raise ValueError(f"{path}: not a trajectory file (bad magic {magic!r})")
        if version != TRAJ_VERSION:
            raise ValueError(f"{path}: unsupported version {version}")
        steps = np.frombuffer(fh.read(8 * n_snap), dtype="<u8").astype(np.int64)
        data = np.frombuffer(fh.read(8 * n_snap * K * M), dtype="<f8")
    snapshots = data.reshape(n_snap, K, M).copy()
    with open(sidecar_path(path)) as fh:
        side = json.load(fh)
    params = GeneratorParams(
        model_from_json(side["coefficients"]), float(side["epsilon"]), M
    )
    return Trajectory(
        params=params,
        dt=dt,
        stride=stride,
        seed=int(seed),
        scheme=side.get("scheme", "em"),
        steps=steps,
        snapshots=snapshots,
    )


def summary_csv(traj: Trajectory, path) -> None:
    """Per-snapshot, per-component summary statistics."""
    with open(path, "w", newline="") as fh:
        fh.write("# ssburgers-summary-csv v1\n")
        writer = csv.writer(fh)
        writer.writerow(
            ["snapshot", "step", "t_micro", "k", "mean", "m2", "m4", "site_sum"]
        )
        for i in range(traj.n_snapshots):
            step = int(traj.steps[i])
            for k in range(traj.K):
                row = traj.snapshots[i, k]
                writer.writerow(
                    [
                        i,
                        step,
                        repr(step * traj.dt),
                        k,
                        repr(float(np.mean(row))),
                        repr(float(np.mean(row**2))),
                        repr(float(np.mean(row**4))),
                        repr(float(np.sum(row))),
                    ]
                )
