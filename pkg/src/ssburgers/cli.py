"""Command-line front end.

Subcommands:

* ``verify``    exact algebraic suite (constraints, round-trip, divergence
                identity, stationarity residuals, adjoint identity)
* ``convert``   coupling-tensor <-> drift-coefficient JSON documents
* ``simulate``  one seeded trajectory to disk (binary + sidecar + summary CSV)
* ``scan``      ensemble scaling scans (bg, crossed-bg, y, ec, qv)
* ``report``    aggregate verdict documents from an output directory

Configuration is a single JSON document; command-line flags override fields;
the resolved configuration is echoed into every output for provenance.

Exit codes: 0 pass, 1 identity/acceptance failure, 2 configuration error,
3 runtime instability.
"""

from __future__ import annotations

import json
import math
import os
import sys
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import click
import numpy as np

from . import backend, fields, stats, symbolic
from .coefficients import (
    CoefficientError,
    GammaTensor,
    ModelCoefficients,
    check_model_constraints_exact,
    check_trilinear_exact,
    gamma_to_model,
    load_model_document,
    model_to_gamma,
    model_to_json,
    tensor_to_json,
)
from .dynamics import (
    SimulationUnstableError,
    sample_stationary,
    save_trajectory,
    simulate,
    summary_csv,
)
from .symbolic import GeneratorParams

EXIT_PASS = 0
EXIT_FAIL = 1
EXIT_CONFIG = 2
EXIT_UNSTABLE = 3

OUTDIR_ENV = "SSBURGERS_OUTDIR"


class ConfigError(Exception):
    pass


@dataclass
class ExperimentConfig:
    model: dict
    n: int = 64
    epsilon: float | str = "weak-asymmetry"
    dt: float = 0.01
    T: float = 0.05
    stride: int = 32
    test_functions: list[str] = field(default_factory=lambda: ["cos:1"])
    ensemble: int = 200
    base_seed: int = 20240801
    output_dir: str | None = None
    workers: int = 1
    k: int = 0
    scan: dict = field(default_factory=dict)
    verify: dict = field(default_factory=dict)

    @classmethod
    def load(cls, path: str, **overrides) -> "ExperimentConfig":
        try:
            with open(path) as fh:
                doc = json.load(fh)
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigError(f"cannot read config {path}: {e}") from e
        if "model" in doc and isinstance(doc["model"], dict) and "file" in doc["model"]:
            ref = Path(path).parent / doc["model"]["file"]
            try:
                with open(ref) as fh:
                    doc["model"] = json.load(fh)
            except (OSError, json.JSONDecodeError) as e:
                raise ConfigError(f"cannot read model file {ref}: {e}") from e
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(doc) - known
        if unknown:
            raise ConfigError(f"unknown config fields: {sorted(unknown)}")
        doc.update({k: v for k, v in overrides.items() if v is not None})
        try:
            cfg = cls(**doc)
        except TypeError as e:
            raise ConfigError(f"bad config: {e}") from e
        cfg.validate()
        return cfg

    def validate(self) -> None:
        if "model" not in self.__dict__ or not isinstance(self.model, dict):
            raise ConfigError("config must carry a 'model' document")
        try:
            load_model_document(self.model)
        except CoefficientError as e:
            raise ConfigError(f"bad model document: {e}") from e
        if self.n < 1:
            raise ConfigError(f"n must be >= 1, got {self.n}")
        if not 0 < self.dt <= 0.25:
            raise ConfigError(f"dt must be in (0, 0.25], got {self.dt}")
        if self.T < 0:
            raise ConfigError(f"T must be >= 0, got {self.T}")
        if self.stride < 1:
            raise ConfigError(f"stride must be >= 1, got {self.stride}")
        if self.ensemble < 1:
            raise ConfigError(f"ensemble must be >= 1, got {self.ensemble}")
        if self.workers < 1:
            raise ConfigError(f"workers must be >= 1, got {self.workers}")
        if self.epsilon != "weak-asymmetry":
            try:
                eps = float(self.epsilon)
            except (TypeError, ValueError):
                raise ConfigError(
                    f"epsilon must be a number or 'weak-asymmetry', got {self.epsilon!r}"
                ) from None
            if not math.isfinite(eps):
                raise ConfigError(f"epsilon must be finite, got {eps}")
        for phi_id in self.test_functions:
            try:
                fields.TestFunction.from_id(phi_id)
            except fields.FieldError as e:
                raise ConfigError(str(e)) from e

    def outdir(self) -> Path:
        path = self.output_dir or os.environ.get(OUTDIR_ENV) or "."
        p = Path(path)
        p.mkdir(parents=True, exist_ok=True)
        return p

    def resolved_doc(self) -> dict:
        doc = {
            "model": self.model,
            "n": self.n,
            "epsilon": self.epsilon,
            "dt": self.dt,
            "T": self.T,
            "stride": self.stride,
            "test_functions": self.test_functions,
            "ensemble": self.ensemble,
            "base_seed": self.base_seed,
            "output_dir": str(self.outdir()),
            "workers": self.workers,
            "k": self.k,
            "scan": self.scan,
            "verify": self.verify,
            "backend": backend.active_backend(),
        }
        return doc

    def coefficients(self) -> ModelCoefficients:
        model = load_model_document(self.model)
        if isinstance(model, GammaTensor):
            return gamma_to_model(model)
        return model

    def epsilon_value(self) -> float:
        if self.epsilon == "weak-asymmetry":
            return self.n ** -0.5
        return float(self.epsilon)


def _write_json(path: Path, doc: dict) -> None:
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, default=str)
        fh.write("\n")


@click.group()
def main():
    """Coupled lattice Burgers: exact verification and scaling experiments."""


# ---------------------------------------------------------------------------
# verify
# ---------------------------------------------------------------------------


def _exact_epsilon(cfg: ExperimentConfig) -> Fraction:
    if cfg.epsilon == "weak-asymmetry":
        # the identities are linear in epsilon, so any nonzero rational does
        return Fraction(1, 8)
    return Fraction(float(cfg.epsilon))


@main.command()
@click.option("--config", "-c", "config_path", required=True, type=click.Path())
@click.option("--degree", type=int, default=None, help="stationarity monomial degree cap")
@click.option("--lattice-m", "lattice_m", type=int, default=None, help="exact-suite M")
@click.option("--adjoint-trials", type=int, default=None)
def verify(config_path, degree, lattice_m, adjoint_trials):
    """Run the exact algebraic verification suite."""
    try:
        cfg = ExperimentConfig.load(config_path)
        vcfg = dict(cfg.verify)
        if degree is not None:
            vcfg["degree"] = degree
        if lattice_m is not None:
            vcfg["M"] = lattice_m
        if adjoint_trials is not None:
            vcfg["adjoint_trials"] = adjoint_trials
        degree = int(vcfg.get("degree", 3))
        M = int(vcfg.get("M", 4))
        trials = int(vcfg.get("adjoint_trials", 20))
        seed = int(vcfg.get("seed", cfg.base_seed))
        model = load_model_document(cfg.model)
        K = model.K
        if K > 4 or M > 8 or M < 1:
            click.echo(
                f"cost guard: exact checks limited to K <= 4 and M <= 8 "
                f"(requested K={K}, M={M})"
            )
            sys.exit(EXIT_CONFIG)
    except (ConfigError, CoefficientError) as e:
        click.echo(f"config error: {e}")
        sys.exit(EXIT_CONFIG)

    checks: list[tuple[str, bool, str]] = []

    def add(name: str, ok: bool, detail: str):
        checks.append((name, ok, detail))
        click.echo(f"  {'ok  ' if ok else 'FAIL'}  {name}: {detail}")

    click.echo(f"verify: K={K}, M={M}, degree<={degree}, {trials} adjoint trials")
    if isinstance(model, GammaTensor):
        rep = check_trilinear_exact(model)
        add("trilinear condition", rep.valid, "0 (exact)" if rep.valid else rep.summary())
        coeffs = gamma_to_model(model, tol=0) if rep.valid else None
        if coeffs is not None:
            back = model_to_gamma(coeffs, tol=0)
            add("tensor round-trip", back == model,
                "0 (exact)" if back == model else "round-trip mismatch")
    else:
        rep = check_model_constraints_exact(model)
        add("model constraints", rep.valid, "0 (exact)" if rep.valid else rep.summary())
        coeffs = model if rep.valid else None
        if coeffs is not None:
            g = model_to_gamma(coeffs, tol=0)
            back = gamma_to_model(g, tol=0)
            add("coefficients round-trip", back == coeffs,
                "0 (exact)" if back == coeffs else "round-trip mismatch")

    if coeffs is not None:
        params = GeneratorParams(coeffs.exact_copy(), _exact_epsilon(cfg), M)

        residual = symbolic.divergence_identity(params)
        add("divergence identity", residual.is_zero(),
            "0 (exact)" if residual.is_zero()
            else f"nonzero: {residual.canonical_str()[:120]}")

        worst = Fraction(0)
        count = 0
        ok = True
        for mono in symbolic.monomials_up_to(K, M, degree):
            r = symbolic.stationarity_residual(mono, params)
            count += 1
            if r != 0:
                ok = False
                worst = max(worst, abs(r))
        add("stationarity residuals", ok,
            f"0 (exact) over {count} monomials" if ok else f"max |residual| = {worst}")

        import random as _random

        rng = _random.Random(seed)
        ok = True
        for _ in range(trials):
            f = symbolic.random_polynomial(K, M, 2, rng)
            g = symbolic.random_polynomial(K, M, 2, rng)
            lhs = symbolic.gaussian_expectation(symbolic.apply_generator(f, params) * g)
            rhs = symbolic.gaussian_expectation(f * symbolic.apply_adjoint(g, params))
            if lhs != rhs:
                ok = False
                break
        add("adjoint identity", ok,
            f"0 (exact) over {trials} random degree-2 pairs" if ok else "mismatch")

    passed = all(ok for _, ok, _ in checks)
    doc = {
        "command": "verify",
        "config": cfg.resolved_doc(),
        "exact_suite": {"M": M, "degree": degree, "adjoint_trials": trials},
        "checks": [
            {"name": n, "passed": ok, "detail": d} for n, ok, d in checks
        ],
        "passed": passed,
    }
    _write_json(cfg.outdir() / "verify.verdict.json", doc)
    click.echo("verify: PASS" if passed else "verify: FAIL")
    sys.exit(EXIT_PASS if passed else EXIT_FAIL)


# ---------------------------------------------------------------------------
# convert
# ---------------------------------------------------------------------------


@main.command()
@click.argument("src", type=click.Path(exists=True))
@click.argument("dst", type=click.Path())
@click.option("--to", "target", type=click.Choice(["model", "gamma"]), required=True)
def convert(src, dst, target):
    """Convert between coupling-tensor and drift-coefficient JSON documents."""
    try:
        with open(src) as fh:
            model = load_model_document(json.load(fh))
    except (OSError, json.JSONDecodeError, CoefficientError) as e:
        click.echo(f"config error: {e}")
        sys.exit(EXIT_CONFIG)
    try:
        if target == "model":
            obj = model if isinstance(model, ModelCoefficients) else gamma_to_model(model, tol=0)
            doc = model_to_json(obj)
        else:
            obj = model if isinstance(model, GammaTensor) else model_to_gamma(model, tol=0)
            doc = tensor_to_json(obj)
    except CoefficientError as e:
        click.echo(f"conversion rejected: {e}")
        sys.exit(EXIT_FAIL)
    _write_json(Path(dst), doc)
    click.echo(f"wrote {dst}")
    sys.exit(EXIT_PASS)


# ---------------------------------------------------------------------------
# simulate
# ---------------------------------------------------------------------------


def _steps_for(cfg: ExperimentConfig) -> int:
    raw = round(cfg.T * cfg.n**2 / cfg.dt)
    if raw == 0:
        return 0
    return max(1, math.ceil(raw / cfg.stride)) * cfg.stride


@main.command("simulate")
@click.option("--config", "-c", "config_path", required=True, type=click.Path())
@click.option("--outdir", "-o", type=click.Path(), default=None)
@click.option("--seed", type=int, default=None)
def simulate_cmd(config_path, outdir, seed):
    """Run one seeded trajectory and persist it (binary + sidecar + CSV)."""
    try:
        cfg = ExperimentConfig.load(config_path, output_dir=outdir, base_seed=seed)
        coeffs = cfg.coefficients().float_copy()
        params = GeneratorParams(coeffs, cfg.epsilon_value(), cfg.n)
    except (ConfigError, CoefficientError) as e:
        click.echo(f"config error: {e}")
        sys.exit(EXIT_CONFIG)
    out = cfg.outdir()
    n_steps = _steps_for(cfg)
    init = sample_stationary(params.K, cfg.n, cfg.base_seed)
    try:
        traj = simulate(init, params, cfg.dt, n_steps, cfg.stride, cfg.base_seed)
    except SimulationUnstableError as e:
        click.echo(f"unstable: {e}")
        sys.exit(EXIT_UNSTABLE)
    base = out / f"trajectory_seed{cfg.base_seed}"
    save_trajectory(traj, f"{base}.bin")
    summary_csv(traj, f"{base}.summary.csv")
    _write_json(out / "simulate.config.json", {
        "command": "simulate",
        "config": cfg.resolved_doc(),
        "n_steps": n_steps,
        "snapshots": traj.n_snapshots,
        "trajectory": f"{base}.bin",
    })
    click.echo(
        f"simulate: {n_steps} steps, {traj.n_snapshots} snapshots -> {base}.bin"
    )
    sys.exit(EXIT_PASS)


# ---------------------------------------------------------------------------
# scan
# ---------------------------------------------------------------------------


def _parse_l_rule(rule: str, n: int, t: float) -> int:
    if rule.startswith("fixed:"):
        return int(rule.split(":", 1)[1])
    if rule.startswith("eps:"):
        return max(1, round(float(rule.split(":", 1)[1]) * n))
    if rule == "sqrt":
        return max(1, round(math.sqrt(t) * n))
    raise ConfigError(f"l_rule must be fixed:<l>, eps:<e> or sqrt, got {rule!r}")


def _spec_for(cfg: ExperimentConfig, quantity: str, n: int, l_rule: str) -> stats.ExperimentSpec:
    phi = cfg.test_functions[0]
    scan = cfg.scan
    t = float(scan.get("t", cfg.T))
    base = dict(
        label=f"{quantity}_n{n}",
        model=cfg.model,
        n=n,
        epsilon=cfg.epsilon,
        dt=cfg.dt,
        t_final=t,
        stride=cfg.stride,
    )
    k = cfg.k
    if quantity == "bg":
        l = _parse_l_rule(l_rule, n, t)
        return stats.ExperimentSpec(
            estimator="bg", args=dict(phi=phi, k=k, l=l, t=t), **base
        )
    if quantity == "crossed-bg":
        l = _parse_l_rule(l_rule, n, t)
        return stats.ExperimentSpec(
            estimator="crossed_bg",
            args=dict(phi=phi, k=k, kbar=(k + 1), l=l, t=t),
            **base,
        )
    if quantity == "y":
        return stats.ExperimentSpec(
            estimator="y", args=dict(phi=phi, k=k, t=t), **base
        )
    if quantity == "qv":
        return stats.ExperimentSpec(
            estimator="qv_mart", args=dict(phi=phi, k=k, t=t), **base
        )
    if quantity == "ec":
        pairs = scan.get("ec_pairs", [[8, 2], [16, 4]])
        return stats.ExperimentSpec(
            estimator="ec_pairs",
            args=dict(phi=phi, i=k, j=k, pairs=pairs, s=0.0, t=t),
            **base,
        )
    raise ConfigError(f"unknown scan quantity {quantity!r}")


def _fix_spec_times(spec: stats.ExperimentSpec) -> stats.ExperimentSpec:
    # the step count is rounded to whole strides; keep estimator t on the grid
    t = spec.actual_t()
    spec.t_final = t
    if "t" in spec.args:
        spec.args["t"] = t
    return spec


def _ensemble_rows(
    spec: stats.ExperimentSpec, res, K: int, base_seed: int, tags=None
) -> list[dict]:
    """One CSV row per trajectory and estimator component.

    ``tags`` labels the components of vector-valued estimators (e.g. the ec
    pairs); scalar estimators get the block length or an empty tag.
    """
    vals = np.asarray(res.values, dtype=float)
    if vals.ndim == 1:
        vals = vals[:, None]
    if tags is None:
        tags = [spec.args.get("l", "")] * vals.shape[1]
    rows = []
    for i in range(res.n_samples):
        for c in range(vals.shape[1]):
            rows.append(
                dict(
                    seed=stats.derive_seed(base_seed, i),
                    n=spec.n,
                    K=K,
                    k=spec.args.get("k", spec.args.get("i", 0)),
                    phi_id=spec.args.get("phi", "cos:1"),
                    l_or_eps=tags[c],
                    t=spec.args.get("t", spec.t_final),
                    value=float(vals[i, c]),
                )
            )
    return rows


@main.command()
@click.option("--config", "-c", "config_path", required=True, type=click.Path())
@click.option(
    "--quantity",
    type=click.Choice(["bg", "crossed-bg", "y", "ec", "qv"]),
    required=True,
)
@click.option("--n-list", "n_list", default="32,64,128", help="comma-separated n values")
@click.option("--l-rule", "l_rule", default="fixed:4")
@click.option("--outdir", "-o", type=click.Path(), default=None)
@click.option("--ensemble", type=int, default=None)
@click.option("--workers", type=int, default=None)
def scan(config_path, quantity, n_list, l_rule, outdir, ensemble, workers):
    """Ensemble scaling scan; fits a log-log slope or checks a ratio."""
    try:
        cfg = ExperimentConfig.load(
            config_path, output_dir=outdir, ensemble=ensemble, workers=workers
        )
        ns = [int(s) for s in n_list.split(",") if s.strip()]
        if quantity in ("bg", "crossed-bg", "y") and len(ns) < 3:
            raise ConfigError(f"scan needs >= 3 n values, got {ns}")
        specs = [
            _fix_spec_times(_spec_for(cfg, quantity, n, l_rule)) for n in ns
        ]
    except (ConfigError, CoefficientError) as e:
        click.echo(f"config error: {e}")
        sys.exit(EXIT_CONFIG)

    out = cfg.outdir()
    K = cfg.coefficients().K
    points = []
    all_rows = []
    try:
        for spec, n in zip(specs, ns):
            res = stats.run_ensemble(spec, cfg.ensemble, cfg.base_seed, cfg.workers)
            points.append((spec, n, res))
            tags = None
            if quantity == "ec":
                tags = [f"{p[0]}/{n}-{p[1]}/{n}" for p in spec.args["pairs"]]
            all_rows.extend(_ensemble_rows(spec, res, K, cfg.base_seed, tags))
            click.echo(f"  n={n}: {res.n_samples} trajectories done")
    except SimulationUnstableError as e:
        click.echo(f"unstable: {e}")
        sys.exit(EXIT_UNSTABLE)

    fields.write_rows_csv(out / f"{quantity}.values.csv", all_rows)
    doc = {
        "command": "scan",
        "quantity": quantity,
        "config": cfg.resolved_doc(),
        "n_list": ns,
        "l_rule": l_rule,
    }

    if quantity in ("bg", "crossed-bg", "y"):
        tol = float(cfg.scan.get("tolerance", 0.3))
        pts, detail = [], []
        for spec, n, res in points:
            m2 = float(res.second_moment())
            se = float(res.second_moment_se())
            detail.append({"n": n, "E2": m2, "se": se})
            pts.append((n, m2))
        doc["points"] = detail
        if all(p[1] == 0.0 for p in pts):
            doc["verdict"] = "identically zero"
            doc["passed"] = True
            click.echo(f"{quantity}: identically zero (fit skipped)")
        else:
            fit = stats.scaling_fit(pts)
            doc["fit"] = fit.to_doc()
            ok = abs(fit.slope - (-1.0)) <= tol
            doc["expected_slope"] = -1.0
            doc["tolerance"] = tol
            doc["verdict"] = "pass" if ok else "fail"
            doc["passed"] = ok
            click.echo(
                f"{quantity}: slope {fit.slope:+.3f} (+/-{fit.slope_se:.3f}), "
                f"target -1 +/- {tol} -> {'PASS' if ok else 'FAIL'}"
            )
    elif quantity == "qv":
        tol = float(cfg.scan.get("qv_tolerance", 0.05))
        ok_all = True
        detail = []
        for spec, n, res in points:
            phi = fields.TestFunction.from_id(spec.args["phi"])
            target = spec.args["t"] * fields.grid_energy(phi.grad_grid(n), n)
            ratio = float(res.variance) / target
            ok = abs(ratio - 1.0) <= tol
            ok_all &= ok
            detail.append({"n": n, "qv": float(res.variance), "target": target,
                           "ratio": ratio, "passed": ok})
            click.echo(
                f"  qv n={n}: ratio {ratio:.4f} target 1 +/- {tol} -> "
                f"{'PASS' if ok else 'FAIL'}"
            )
        doc["points"] = detail
        doc["tolerance"] = tol
        doc["passed"] = ok_all
        doc["verdict"] = "pass" if ok_all else "fail"
    else:  # ec
        detail = []
        ok_all = True
        for spec, n, res in points:
            phi = fields.TestFunction.from_id(spec.args["phi"])
            t = spec.args["t"]
            denom = (t - spec.args.get("s", 0.0)) * fields.grid_energy(
                phi.grad_grid(n), n
            )
            m2 = np.asarray(res.second_moment()) / denom
            se = np.asarray(res.second_moment_se()) / denom
            eps_vals = np.array([p[0] / n for p in spec.args["pairs"]])
            kappa = float((m2 * eps_vals).sum() / (eps_vals**2).sum())
            # paired SE of the ratio difference across the shared ensemble
            pair_se = float(
                np.std(np.square(res.values[:, 1]) - np.square(res.values[:, 0]),
                       axis=0, ddof=1)
            ) / denom / math.sqrt(res.n_samples)
            monotone = (m2[1] - m2[0]) >= -2.0 * pair_se
            bounded = bool(np.all(m2 <= kappa * eps_vals + 2.0 * se))
            ok = bool(monotone and bounded)
            ok_all &= ok
            detail.append({
                "n": n, "eps": eps_vals.tolist(), "ratio": m2.tolist(),
                "se": se.tolist(), "kappa": kappa,
                "monotone_within_2se": bool(monotone),
                "bounded_by_kappa_eps": bounded, "passed": ok,
            })
            click.echo(
                f"  ec n={n}: ratios {np.round(m2, 4).tolist()} at eps "
                f"{eps_vals.tolist()}, kappa {kappa:.3f} -> "
                f"{'PASS' if ok else 'FAIL'}"
            )
        doc["points"] = detail
        doc["passed"] = ok_all
        doc["verdict"] = "pass" if ok_all else "fail"

    _write_json(out / f"{quantity}.verdict.json", doc)
    sys.exit(EXIT_PASS if doc["passed"] else EXIT_FAIL)


# ---------------------------------------------------------------------------
# report
# ---------------------------------------------------------------------------


@main.command()
@click.argument("directory", type=click.Path(exists=True))
def report(directory):
    """Aggregate *.verdict.json files into one report (table + JSON)."""
    root = Path(directory)
    docs = []
    for path in sorted(root.glob("*.verdict.json")):
        with open(path) as fh:
            docs.append((path.name, json.load(fh)))
    if not docs:
        click.echo(f"no verdict documents in {root}")
        sys.exit(EXIT_CONFIG)
    all_ok = True
    width = max(len(name) for name, _ in docs)
    for name, doc in docs:
        ok = bool(doc.get("passed"))
        all_ok &= ok
        label = doc.get("quantity", doc.get("command", "?"))
        click.echo(f"{name:<{width}}  {label:<12} {'PASS' if ok else 'FAIL'}")
    _write_json(root / "report.json", {
        "command": "report",
        "entries": [
            {"file": name, "passed": bool(doc.get("passed"))} for name, doc in docs
        ],
        "passed": all_ok,
    })
    click.echo("report: PASS" if all_ok else "report: FAIL")
    sys.exit(EXIT_PASS if all_ok else EXIT_FAIL)


if __name__ == "__main__":
    main()
