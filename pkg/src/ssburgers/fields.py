"""Fluctuation fields and their estimators.

The field pairs the rescaled lattice state with a test function on the unit
torus: ``X_k(phi) = n^(-1/2) * sum_j u[k,j] * phi(j/n)``, evaluated along a
trajectory in macroscopic time t = (microscopic time)/n^2.  On top of it this
module builds

* the decomposition of ``X_t - X_0`` into a symmetric (discrete-Laplacian)
  integral, an antisymmetric (drift-current) integral and the martingale
  remainder,
* one-sided block averages and the two second-order replacement
  discrepancies (same-component and crossed) whose mean squares decay like
  l/n,
* the epsilon-regularized quadratic field (block-window realization of the
  continuum quadratic term) and its Cauchy-in-epsilon increments,
* the cubic-telescope remainder that trades u^2 for the product of
  neighbors.

All time integrals are trapezoidal over the stored snapshots; choose the
snapshot stride so the quadrature error is well below the Monte Carlo
standard error of whatever ensemble the estimate feeds (halving the stride
once and comparing is the cheap way to confirm).

Trajectories are read-only here; every estimator is safe to evaluate in
parallel over a shared trajectory.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import backend
from .dynamics import LatticeState, Trajectory, coeff_arrays

CSV_SCHEMA = "seed,n,K,k,phi_id,l_or_eps,t,value"


class FieldError(ValueError):
    pass


# ---------------------------------------------------------------------------
# Test functions on the torus.
# ---------------------------------------------------------------------------


class TestFunction:
    """Closed-form periodic test function plus cached grid values phi(j/n)."""

    __test__ = False  # not a pytest class, despite the name

    def __init__(self, phi_id: str, fn):
        self.id = phi_id
        self.fn = fn
        self._grids: dict[int, np.ndarray] = {}

    @classmethod
    def from_id(cls, phi_id: str) -> "TestFunction":
        """Fourier-mode ids: ``const``, ``cos:m`` or ``sin:m`` (sqrt(2)-normalized)."""
        if phi_id == "const":
            return cls(phi_id, lambda x: np.ones_like(np.asarray(x, dtype=float)))
        try:
            kind, m_str = phi_id.split(":")
            m = int(m_str)
            if m < 1:
                raise ValueError
        except ValueError:
            raise FieldError(
                f"unknown test function id {phi_id!r} "
                "(expected 'const', 'cos:m' or 'sin:m')"
            ) from None
        root2 = math.sqrt(2.0)
        if kind == "cos":
            return cls(phi_id, lambda x, m=m: root2 * np.cos(2 * np.pi * m * np.asarray(x)))
        if kind == "sin":
            return cls(phi_id, lambda x, m=m: root2 * np.sin(2 * np.pi * m * np.asarray(x)))
        raise FieldError(f"unknown test function id {phi_id!r}")

    def __call__(self, x):
        return self.fn(x)

    def grid(self, n: int) -> np.ndarray:
        """phi(j/n) for j = 0..n-1 (cached)."""
        if n not in self._grids:
            self._grids[n] = np.asarray(self.fn(np.arange(n) / n), dtype=np.float64)
        return self._grids[n]

    def grad_grid(self, n: int) -> np.ndarray:
        return grad_n(self.grid(n), n)

    def lap_grid(self, n: int) -> np.ndarray:
        return lap_n(self.grid(n), n)

    def __repr__(self) -> str:
        return f"TestFunction({self.id!r})"


def fourier_family(max_mode: int = 4) -> list[TestFunction]:
    out = [TestFunction.from_id("const")]
    for m in range(1, max_mode + 1):
        out.append(TestFunction.from_id(f"cos:{m}"))
        out.append(TestFunction.from_id(f"sin:{m}"))
    return out


# -- discrete calculus on grid functions ------------------------------------


def grad_n(values: np.ndarray, n: int) -> np.ndarray:
    """Forward difference n*(f[j+1] - f[j]) on the periodic grid."""
    return n * (np.roll(values, -1) - values)


def lap_n(values: np.ndarray, n: int) -> np.ndarray:
    """n^2*(f[j+1] + f[j-1] - 2 f[j]) on the periodic grid."""
    return n * n * (np.roll(values, -1) + np.roll(values, 1) - 2.0 * values)


def grid_energy(values: np.ndarray, n: int) -> float:
    """(1/n) * sum_j values[j]^2."""
    values = np.asarray(values)
    return float(values @ values) / n


# ---------------------------------------------------------------------------
# The field and block averages.
# ---------------------------------------------------------------------------


def _require_square(M: int, n: int, what: str) -> None:
    if M != n:
        raise FieldError(f"{what} requires M = n, got M={M}, n={n}")


def fluctuation_field(state: LatticeState, phi: TestFunction, n: int, k: int) -> float:
    """n^(-1/2) * sum_j u[k,j] * phi(j/n)."""
    _require_square(state.M, n, "fluctuation_field")
    return float(state.u[k % state.K] @ phi.grid(n)) / math.sqrt(n)


def block_averages(state: LatticeState, k: int, j: int, l: int) -> tuple[float, float]:
    """One-sided window means at site j: (forward over j+1..j+l,
    backward over j-l+1..j), periodic indexing."""
    M = state.M
    if not 1 <= l <= M:
        raise FieldError(f"block length l={l} out of range 1..{M}")
    row = state.u[k % state.K]
    fwd = sum(row[(j + q) % M] for q in range(1, l + 1)) / l
    bwd = sum(row[(j - q) % M] for q in range(0, l)) / l
    return float(fwd), float(bwd)


def block_average_arrays(row: np.ndarray, l: int) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized forward/backward window means over all sites."""
    M = row.shape[0]
    if not 1 <= l <= M:
        raise FieldError(f"block length l={l} out of range 1..{M}")
    if l == 1:
        # a window of one is the value itself; keep it exact so the l=1
        # replacement discrepancies vanish identically, not just to rounding
        return np.roll(row, -1), row.copy()
    ext = np.concatenate([row, row[:l]])
    cs = np.concatenate([[0.0], np.cumsum(ext)])
    fwd = (cs[l + 1 : l + 1 + M] - cs[1 : 1 + M]) / l
    ext2 = np.concatenate([row[M - l :], row])
    cs2 = np.concatenate([[0.0], np.cumsum(ext2)])
    bwd = (cs2[l + 1 : l + 1 + M] - cs2[1 : 1 + M]) / l
    return fwd, bwd


# ---------------------------------------------------------------------------
# Series along a trajectory.
# ---------------------------------------------------------------------------


@dataclass
class FieldSeries:
    """Scalar series at the trajectory's macroscopic snapshot times."""

    times: np.ndarray
    values: np.ndarray
    phi_id: str
    n: int
    k: int
    seed: int
    label: str = ""

    def __post_init__(self):
        if len(self.times) != len(self.values):
            raise FieldError("times and values must align")
        if np.any(np.diff(self.times) <= 0):
            raise FieldError("times must be strictly increasing")

    def at(self, t: float) -> float:
        return float(self.values[_time_index(self.times, t)])


def _time_index(times: np.ndarray, t: float) -> int:
    i = int(np.argmin(np.abs(times - t)))
    spacing = times[1] - times[0] if len(times) > 1 else 1.0
    if abs(times[i] - t) > 1e-9 * max(1.0, abs(t)) + 1e-6 * spacing:
        raise FieldError(
            f"t={t} does not align with the snapshot grid "
            f"(nearest {times[i]}, spacing {spacing})"
        )
    return i


def _cum_trapz(times: np.ndarray, integrand: np.ndarray) -> np.ndarray:
    inner = 0.5 * (integrand[1:] + integrand[:-1]) * np.diff(times)
    return np.concatenate([[0.0], np.cumsum(inner)])


def _trapz_between(times, integrand, t0: float, t1: float) -> float:
    i0, i1 = _time_index(times, t0), _time_index(times, t1)
    if i1 < i0:
        raise FieldError(f"need t0 <= t1, got {t0} > {t1}")
    return float(np.trapezoid(integrand[i0 : i1 + 1], times[i0 : i1 + 1]))


def field_series(traj: Trajectory, phi: TestFunction, k: int) -> FieldSeries:
    n = traj.M
    x = traj.snapshots[:, k % traj.K, :] @ phi.grid(n) / math.sqrt(n)
    return FieldSeries(traj.times_macro(), x, phi.id, n, k, traj.seed, "X")


def martingale_decomposition(
    traj: Trajectory, phi: TestFunction, k: int
) -> tuple[FieldSeries, FieldSeries, FieldSeries]:
    """Split X_t - X_0 into (symmetric, antisymmetric, martingale) series.

    The symmetric integrand pairs the state with the discrete Laplacian of
    phi; the antisymmetric one pairs the drift current G with the discrete
    gradient, carrying the eps*sqrt(n) prefactor that the weak-asymmetry
    scaling produces (at eps = n^(-1/2) it is 1; at eps = 0 the series is
    identically zero).  The martingale part is defined by the decomposition
    identity itself, so X_t - X_0 - S_t - A_t - M_t = 0 holds exactly by
    construction.
    """
    if traj.params is None:
        raise FieldError("trajectory has no generator params attached")
    n = traj.M
    k = k % traj.K
    times = traj.times_macro()
    root_n = math.sqrt(n)
    x = traj.snapshots[:, k, :] @ phi.grid(n) / root_n

    s_integrand = traj.snapshots[:, k, :] @ phi.lap_grid(n) / (2.0 * root_n)
    s_vals = _cum_trapz(times, s_integrand)

    eps = float(traj.params.epsilon)
    if eps == 0.0:
        a_vals = np.zeros_like(s_vals)
    else:
        grad = phi.grad_grid(n)
        arrays = coeff_arrays(traj.params.coefficients)
        a_integrand = np.array(
            [backend.g_values(traj.snapshots[i], *arrays)[k] @ grad
             for i in range(traj.n_snapshots)]
        )
        a_vals = -eps * root_n * _cum_trapz(times, a_integrand)

    m_vals = x - x[0] - s_vals - a_vals
    meta = dict(phi_id=phi.id, n=n, k=k, seed=traj.seed)
    return (
        FieldSeries(times, s_vals, label="S", **meta),
        FieldSeries(times, a_vals, label="A", **meta),
        FieldSeries(times, m_vals, label="M", **meta),
    )


# ---------------------------------------------------------------------------
# Second-order replacement discrepancies and quadratic fields.
# ---------------------------------------------------------------------------


def _bg_weight(phi: TestFunction, n: int, weight: str) -> np.ndarray:
    if weight == "grad":
        return phi.grad_grid(n)
    if weight == "phi":
        return phi.grid(n)
    raise FieldError(f"weight must be 'grad' or 'phi', got {weight!r}")


def _check_block_length(l: int, M: int) -> None:
    if not 1 <= l <= M // 2:
        raise FieldError(f"block length l={l} out of range 1..{M // 2} (= M/2)")


def bg_discrepancy(
    traj: Trajectory,
    phi: TestFunction,
    k: int,
    l: int,
    t: float,
    weight: str = "grad",
) -> float:
    """Time integral of sum_j (u[k,j] u[k,j+1] - bwd^l[k,j] fwd^l[k,j]) psi_j.

    psi defaults to the discrete gradient of phi (the form in which the
    replacement is applied to the drift).  Identically zero at l = 1.
    """
    n = traj.M
    _check_block_length(l, n)
    psi = _bg_weight(phi, n, weight)
    k = k % traj.K
    times = traj.times_macro()
    vals = np.empty(traj.n_snapshots)
    for i in range(traj.n_snapshots):
        row = traj.snapshots[i, k]
        fwd, bwd = block_average_arrays(row, l)
        vals[i] = (row * np.roll(row, -1) - bwd * fwd) @ psi
    return _trapz_between(times, vals, 0.0, t)


def crossed_bg_discrepancy(
    traj: Trajectory,
    phi: TestFunction,
    k: int,
    kbar: int,
    l: int,
    t: float,
    weight: str = "grad",
) -> float:
    """Crossed variant: u[k,j] u[kbar,j] - fwd^l[k,j-1] fwd^l[kbar,j-1]."""
    k, kbar = k % traj.K, kbar % traj.K
    if k == kbar:
        raise FieldError("crossed discrepancy needs two distinct components")
    n = traj.M
    _check_block_length(l, n)
    psi = _bg_weight(phi, n, weight)
    times = traj.times_macro()
    vals = np.empty(traj.n_snapshots)
    for i in range(traj.n_snapshots):
        ra, rb = traj.snapshots[i, k], traj.snapshots[i, kbar]
        fa, _ = block_average_arrays(ra, l)
        fb, _ = block_average_arrays(rb, l)
        vals[i] = (ra * rb - np.roll(fa, 1) * np.roll(fb, 1)) @ psi
    return _trapz_between(times, vals, 0.0, t)


def quadratic_field(
    traj: Trajectory,
    phi: TestFunction,
    i: int,
    j_comp: int,
    eps_reg: float,
    s: float,
    t: float,
    variant: str = "bf",
) -> float:
    """Window-regularized quadratic field over the macroscopic window [s, t].

    The regularization scale must sit on the grid: eps_reg = l/n for an
    integer block length l.  For i == j_comp the backward-forward product is
    used (variant 'bf'); 'ff' selects the forward-forward flavor, which is
    equivalent in the small-eps_reg limit and exposed for diagnostics only.
    Distinct components always use forward-forward at the left-shifted site.
    """
    n = traj.M
    l_float = eps_reg * n
    l = int(round(l_float))
    if abs(l_float - l) > 1e-9 or l < 1:
        raise FieldError(
            f"eps_reg={eps_reg} is not a positive grid multiple (l/n with n={n})"
        )
    _check_block_length(l, n)
    if variant not in ("bf", "ff"):
        raise FieldError(f"variant must be 'bf' or 'ff', got {variant!r}")
    i, j_comp = i % traj.K, j_comp % traj.K
    grad = phi.grad_grid(n)
    times = traj.times_macro()
    vals = np.empty(traj.n_snapshots)
    for idx in range(traj.n_snapshots):
        if i == j_comp:
            row = traj.snapshots[idx, i]
            fwd, bwd = block_average_arrays(row, l)
            left = bwd if variant == "bf" else fwd
            vals[idx] = (left * fwd) @ grad
        else:
            fa, _ = block_average_arrays(traj.snapshots[idx, i], l)
            fb, _ = block_average_arrays(traj.snapshots[idx, j_comp], l)
            vals[idx] = (np.roll(fa, 1) * np.roll(fb, 1)) @ grad
    return _trapz_between(times, vals, s, t)


def y_remainder(
    traj: Trajectory, phi: TestFunction, k: int, t: float, weight: str = "phi"
) -> float:
    """Integral of sum_j phi_j * (u[k,j] u[k,j+1] - u[k,j]^2 + 1).

    The +1 compensator makes the integrand mean-zero under the product
    Gaussian; pathwise (e.g. at u = 0) it contributes t * sum_j phi_j.
    """
    n = traj.M
    psi = _bg_weight(phi, n, weight)
    k = k % traj.K
    times = traj.times_macro()
    vals = np.empty(traj.n_snapshots)
    for i in range(traj.n_snapshots):
        row = traj.snapshots[i, k]
        vals[i] = (row * np.roll(row, -1) - row * row + 1.0) @ psi
    return _trapz_between(times, vals, 0.0, t)


# ---------------------------------------------------------------------------
# CSV export (shared schema for series and discrepancy ensembles).
# ---------------------------------------------------------------------------


def write_rows_csv(path, rows) -> None:
    """Rows are dicts with keys seed, n, K, k, phi_id, l_or_eps, t, value."""
    cols = CSV_SCHEMA.split(",")
    with open(path, "w") as fh:
        fh.write("# ssburgers-fields-csv v1\n")
        fh.write(CSV_SCHEMA + "\n")
        for row in rows:
            fh.write(",".join(repr(row[c]) if isinstance(row[c], float) else str(row[c]) for c in cols) + "\n")


def series_rows(series: FieldSeries, K: int, l_or_eps="") -> list[dict]:
    return [
        dict(
            seed=series.seed,
            n=series.n,
            K=K,
            k=series.k,
            phi_id=series.phi_id,
            l_or_eps=l_or_eps,
            t=float(t),
            value=float(v),
        )
        for t, v in zip(series.times, series.values)
    ]
