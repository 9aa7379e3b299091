"""Ensemble orchestration and statistical inference.

``run_ensemble`` turns an :class:`ExperimentSpec` (a picklable description of
one estimator over one model/lattice configuration) into independent seeded
trajectories, applies the named estimator to each and aggregates.  Trajectory
i derives its seed from a splittable hash of (base_seed, i), so results are
deterministic in (spec, n_traj, base_seed) regardless of worker count or
completion order.

Inference helpers: second moments with standard errors, log-log scaling fits
(the testable surrogate for the l/n decay bounds), and a fixed-threshold
moment-based Gaussianity check (|z| > 4 flags; no p-values, by design).
"""

from __future__ import annotations

import hashlib
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from . import fields
from .coefficients import coefficients_for, load_model_document
from .dynamics import Trajectory, sample_stationary, simulate
from .symbolic import GeneratorParams

_ENSEMBLE_TAG = 0x5353_0003


def derive_seed(base_seed: int, i: int) -> int:
    """Splittable per-trajectory seed; pure in (base_seed, i)."""
    ss = np.random.SeedSequence([_ENSEMBLE_TAG, base_seed, i])
    return int(ss.generate_state(1, np.uint64)[0])


# ---------------------------------------------------------------------------
# Experiment description and estimator registry.
# ---------------------------------------------------------------------------


@dataclass
class ExperimentSpec:
    """One estimator over one configuration; JSON/pickle friendly."""

    label: str
    model: dict  # coefficients or tensor document (see coefficients module)
    n: int
    epsilon: float | str  # number, or "weak-asymmetry" for n^(-1/2)
    dt: float
    t_final: float  # macroscopic horizon
    stride: int
    estimator: str
    args: dict = field(default_factory=dict)

    def resolve_epsilon(self) -> float:
        if self.epsilon == "weak-asymmetry":
            return self.n ** -0.5
        return float(self.epsilon)

    def n_steps(self) -> int:
        raw = round(self.t_final * self.n**2 / self.dt)
        blocks = max(1, math.ceil(raw / self.stride)) if raw > 0 else 0
        return blocks * self.stride

    def actual_t(self) -> float:
        """Horizon after rounding the step count to whole snapshot strides."""
        return self.n_steps() * self.dt / self.n**2

    def params(self) -> GeneratorParams:
        coeffs = coefficients_for(load_model_document(self.model)).float_copy()
        return GeneratorParams(coeffs, self.resolve_epsilon(), self.n)

    def to_doc(self) -> dict:
        return asdict(self)


def _phi(args: dict) -> fields.TestFunction:
    return fields.TestFunction.from_id(args.get("phi", "cos:1"))


def _est_bg(traj: Trajectory, args: dict) -> float:
    return fields.bg_discrepancy(
        traj, _phi(args), args["k"], args["l"], args["t"],
        weight=args.get("weight", "grad"),
    )


def _est_crossed_bg(traj: Trajectory, args: dict) -> float:
    return fields.crossed_bg_discrepancy(
        traj, _phi(args), args["k"], args["kbar"], args["l"], args["t"],
        weight=args.get("weight", "grad"),
    )


def _est_y(traj: Trajectory, args: dict) -> float:
    return fields.y_remainder(
        traj, _phi(args), args["k"], args["t"], weight=args.get("weight", "phi")
    )


def _est_bg_suite(traj: Trajectory, args: dict) -> np.ndarray:
    """(diagonal, crossed, y-remainder) from one trajectory pass."""
    phi = _phi(args)
    k, kbar, l, t = args["k"], args["kbar"], args["l"], args["t"]
    return np.array(
        [
            fields.bg_discrepancy(traj, phi, k, l, t),
            fields.crossed_bg_discrepancy(traj, phi, k, kbar, l, t),
            fields.y_remainder(traj, phi, k, t),
        ]
    )


def _est_qv_mart(traj: Trajectory, args: dict) -> float:
    _, _, mart = fields.martingale_decomposition(traj, _phi(args), args["k"])
    return mart.at(args["t"])


def _est_field_at_t(traj: Trajectory, args: dict) -> np.ndarray:
    phi = _phi(args)
    return np.array(
        [fields.field_series(traj, phi, k).at(args["t"]) for k in args["ks"]]
    )


def _est_ec_pairs(traj: Trajectory, args: dict) -> np.ndarray:
    """Cauchy increments A^(eps) - A^(delta) of the quadratic field, one per
    configured (l_eps, l_delta) pair (lengths in grid units)."""
    phi = _phi(args)
    i, j_comp = args["i"], args["j"]
    s, t = args.get("s", 0.0), args["t"]
    n = traj.M
    out = []
    for l_eps, l_delta in args["pairs"]:
        a_eps = fields.quadratic_field(traj, phi, i, j_comp, l_eps / n, s, t)
        a_del = fields.quadratic_field(traj, phi, i, j_comp, l_delta / n, s, t)
        out.append(a_eps - a_del)
    return np.array(out)


def _est_site_moments(traj: Trajectory, args: dict) -> np.ndarray:
    """Pooled raw moments (m1, m2, m3, m4) over all sites of all snapshots
    after the initial one (the initial state tests the sampler, not the
    dynamics)."""
    data = traj.snapshots[1:] if traj.n_snapshots > 1 else traj.snapshots
    flat = data.reshape(-1)
    return np.array(
        [flat.mean(), (flat**2).mean(), (flat**3).mean(), (flat**4).mean()]
    )


ESTIMATORS = {
    "bg": _est_bg,
    "crossed_bg": _est_crossed_bg,
    "y": _est_y,
    "bg_suite": _est_bg_suite,
    "qv_mart": _est_qv_mart,
    "field_at_t": _est_field_at_t,
    "ec_pairs": _est_ec_pairs,
    "site_moments": _est_site_moments,
}


# ---------------------------------------------------------------------------
# Ensemble running.
# ---------------------------------------------------------------------------


@dataclass
class EnsembleResult:
    label: str
    values: np.ndarray  # (N,) or (N, d)
    n_samples: int
    mean: np.ndarray | float
    variance: np.ndarray | float | None  # ddof=1; None when N == 1
    std_error: np.ndarray | float | None
    fingerprint: str

    def second_moment(self):
        return np.mean(np.square(self.values), axis=0)

    def second_moment_se(self):
        sq = np.square(self.values)
        return np.std(sq, axis=0, ddof=1) / math.sqrt(self.n_samples)

    def to_doc(self) -> dict:
        def conv(x):
            if x is None:
                return None
            return np.asarray(x).tolist()

        return {
            "label": self.label,
            "n_samples": self.n_samples,
            "mean": conv(self.mean),
            "variance": conv(self.variance),
            "std_error": conv(self.std_error),
            "fingerprint": self.fingerprint,
            "values": conv(self.values),
        }


def fingerprint(spec: ExperimentSpec, n_traj: int, base_seed: int) -> str:
    doc = {"spec": spec.to_doc(), "n_traj": n_traj, "base_seed": base_seed}
    blob = json.dumps(doc, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def run_trajectory(spec: ExperimentSpec, seed: int) -> Trajectory:
    params = spec.params()
    init = sample_stationary(params.K, spec.n, seed)
    return simulate(init, params, spec.dt, spec.n_steps(), spec.stride, seed)


def _run_one(spec: ExperimentSpec, base_seed: int, i: int):
    try:
        estimator = ESTIMATORS[spec.estimator]
    except KeyError:
        raise ValueError(
            f"unknown estimator {spec.estimator!r}; known: {sorted(ESTIMATORS)}"
        ) from None
    seed = derive_seed(base_seed, i)
    traj = run_trajectory(spec, seed)
    return estimator(traj, spec.args)


def _run_one_packed(packed):
    spec_doc, base_seed, i = packed
    return _run_one(ExperimentSpec(**spec_doc), base_seed, i)


def run_ensemble(
    spec: ExperimentSpec, n_traj: int, base_seed: int, workers: int = 1
) -> EnsembleResult:
    """Apply the spec's estimator to n_traj independent trajectories.

    Deterministic in (spec, n_traj, base_seed); aggregation is done in
    trajectory order whatever the worker count.  Failures propagate with the
    trajectory index attached.
    """
    if n_traj < 1:
        raise ValueError(f"n_traj must be >= 1, got {n_traj}")
    results = [None] * n_traj
    if workers > 1:
        jobs = [(spec.to_doc(), base_seed, i) for i in range(n_traj)]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            chunk = max(1, n_traj // (workers * 8))
            for i, val in enumerate(pool.map(_run_one_packed, jobs, chunksize=chunk)):
                results[i] = val
    else:
        for i in range(n_traj):
            try:
                results[i] = _run_one(spec, base_seed, i)
            except Exception as e:
                raise RuntimeError(f"trajectory {i} failed: {e}") from e
    values = np.asarray(results, dtype=np.float64)
    mean = values.mean(axis=0)
    if n_traj > 1:
        variance = values.var(axis=0, ddof=1)
        std_error = np.sqrt(variance / n_traj)
    else:
        variance = None
        std_error = None
    return EnsembleResult(
        label=spec.label,
        values=values,
        n_samples=n_traj,
        mean=mean,
        variance=variance,
        std_error=std_error,
        fingerprint=fingerprint(spec, n_traj, base_seed),
    )


# ---------------------------------------------------------------------------
# Scaling fits and Gaussianity checks.
# ---------------------------------------------------------------------------


@dataclass
class ScalingFit:
    abscissae: np.ndarray
    ordinates: np.ndarray
    slope: float
    intercept: float
    slope_se: float
    resid_se: float

    def to_doc(self) -> dict:
        return {
            "abscissae": np.asarray(self.abscissae).tolist(),
            "ordinates": np.asarray(self.ordinates).tolist(),
            "slope": self.slope,
            "intercept": self.intercept,
            "slope_se": self.slope_se,
            "resid_se": self.resid_se,
        }


def scaling_fit(points) -> ScalingFit:
    """Least-squares fit of log(value) against log(n).

    Needs >= 3 strictly increasing abscissae and positive values (a power law
    has nothing to say about zeros or sign changes).
    """
    pts = sorted(points)
    if len(pts) < 3:
        raise ValueError(f"need >= 3 points, got {len(pts)}")
    ns = np.array([p[0] for p in pts], dtype=float)
    vals = np.array([p[1] for p in pts], dtype=float)
    if np.any(np.diff(ns) <= 0):
        raise ValueError("abscissae must be strictly increasing")
    if np.any(vals <= 0):
        raise ValueError("values must be positive for a log-log fit")
    lx, ly = np.log(ns), np.log(vals)
    dx = lx - lx.mean()
    sxx = float(dx @ dx)
    slope = float(dx @ (ly - ly.mean())) / sxx
    intercept = float(ly.mean() - slope * lx.mean())
    resid = ly - (slope * lx + intercept)
    dof = len(pts) - 2
    resid_var = float(resid @ resid) / dof if dof > 0 else 0.0
    return ScalingFit(
        ns, vals, slope, intercept,
        slope_se=math.sqrt(resid_var / sxx),
        resid_se=math.sqrt(resid_var),
    )


@dataclass
class GaussianityReport:
    n_samples: int
    sigma2: float
    moments: tuple[float, float, float, float]
    z_scores: tuple[float, float, float, float]
    threshold: float
    flagged: list[int]
    passed: bool

    def to_doc(self) -> dict:
        return {
            "n_samples": self.n_samples,
            "sigma2": self.sigma2,
            "moments": list(self.moments),
            "z_scores": list(self.z_scores),
            "threshold": self.threshold,
            "flagged": self.flagged,
            "passed": self.passed,
        }


def gaussianity_check(
    samples, sigma2: float = 1.0, z_max: float = 4.0
) -> GaussianityReport:
    """Compare raw moments 1..4 to (0, sigma2, 0, 3*sigma2^2) with CLT z-scores.

    The z denominators are the exact Gaussian sampling variances of each raw
    moment (sigma^2/N, 2 sigma^4/N, 15 sigma^6/N, 96 sigma^8/N), square-rooted.
    |z| above the threshold flags; the fixed threshold of 4 tolerates multiple
    testing without p-value bookkeeping.
    """
    x = np.asarray(samples, dtype=float).reshape(-1)
    n = x.size
    if n < 1000:
        raise ValueError(f"need >= 1000 samples, got {n}")
    s2 = float(sigma2)
    if s2 <= 0:
        raise ValueError(f"sigma2 must be positive, got {sigma2}")
    m = tuple(float(np.mean(x**p)) for p in (1, 2, 3, 4))
    root_n = math.sqrt(n)
    z = (
        m[0] / (math.sqrt(s2) / root_n),
        (m[1] - s2) / (s2 * math.sqrt(2.0) / root_n),
        m[2] / (math.sqrt(15.0 * s2**3) / root_n),
        (m[3] - 3.0 * s2**2) / (math.sqrt(96.0 * s2**4) / root_n),
    )
    flagged = [i + 1 for i, zi in enumerate(z) if abs(zi) > z_max]
    return GaussianityReport(n, s2, m, z, z_max, flagged, not flagged)
