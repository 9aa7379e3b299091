"""Coupling coefficients for coupled lattice Burgers dynamics.

Two equivalent parametrizations are supported:

* ``GammaTensor`` -- the K x K x K coupling array of the continuum system,
  where component ``k`` feels a nonlinearity ``sum_{i,j} gamma[k][i][j] *
  d_x(u_i u_j)``.
* ``ModelCoefficients`` -- the (alpha, beta, gamma, lambda) family that
  drives the discrete drift.

A tensor is *trilinear* when ``gamma[k][i][j] == gamma[k][j][i] ==
gamma[i][k][j]`` for all indices; the discrete family has a matching pair of
constraints (``beta[k][a] == 2*gamma[k+a][a]`` and full symmetry of the
lambda family in its three distinct indices).  Both are checked properties,
not construction invariants: invalid objects must be representable so the
checkers have something to reject.

All conversions are index-for-index rational identities, so entries may be
ints, ``fractions.Fraction`` or floats; exact entries stay exact through
every conversion.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from itertools import permutations
import json
import math

Scalar = int | float | Fraction

#: Default tolerance of the floating checks.  Entries are O(1) user inputs;
#: anything looser masks genuine violations.
DEFAULT_TOL = 1e-12


class CoefficientError(ValueError):
    """Malformed or invalid coefficient data."""


@dataclass
class Violation:
    condition: str
    index: tuple
    residual: Scalar

    def __str__(self) -> str:
        return f"{self.condition} at {self.index}: residual {self.residual}"


@dataclass
class ValidityReport:
    valid: bool
    violations: list[Violation] = field(default_factory=list)

    def __bool__(self) -> bool:
        return self.valid

    def summary(self) -> str:
        if self.valid:
            return "valid"
        lines = [str(v) for v in self.violations[:8]]
        extra = len(self.violations) - len(lines)
        if extra > 0:
            lines.append(f"... and {extra} more")
        return "invalid:\n  " + "\n  ".join(lines)


def _as_exact(x: Scalar) -> Fraction:
    # Fraction(float) is exact (binary rational), so this never rounds.
    return x if isinstance(x, Fraction) else Fraction(x)


def _check_finite(x: Scalar, where: str) -> None:
    if isinstance(x, float) and not math.isfinite(x):
        raise CoefficientError(f"non-finite entry at {where}: {x!r}")


class GammaTensor:
    """K x K x K coupling array, indexed ``g[k, i, j]`` (indices mod K)."""

    def __init__(self, K: int, gamma) -> None:
        if K < 1:
            raise CoefficientError(f"K must be >= 1, got {K}")
        self.K = K
        rows = list(gamma)
        if len(rows) != K:
            raise CoefficientError(f"gamma must have {K} slices, got {len(rows)}")
        self.gamma: list[list[list[Scalar]]] = []
        for k, slice_k in enumerate(rows):
            slice_k = [list(r) for r in slice_k]
            if len(slice_k) != K or any(len(r) != K for r in slice_k):
                raise CoefficientError(f"slice {k} is not {K}x{K}")
            for i, row in enumerate(slice_k):
                for j, x in enumerate(row):
                    _check_finite(x, f"gamma[{k}][{i}][{j}]")
            self.gamma.append(slice_k)

    def __getitem__(self, kij: tuple[int, int, int]) -> Scalar:
        k, i, j = kij
        K = self.K
        return self.gamma[k % K][i % K][j % K]

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, GammaTensor)
            and self.K == other.K
            and self.gamma == other.gamma
        )

    def __repr__(self) -> str:
        return f"GammaTensor(K={self.K})"

    @classmethod
    def zeros(cls, K: int) -> "GammaTensor":
        return cls(K, [[[0] * K for _ in range(K)] for _ in range(K)])

    def is_exact(self) -> bool:
        return all(
            not isinstance(x, float) for s in self.gamma for r in s for x in r
        )


def symmetrize_tensor(g: GammaTensor) -> GammaTensor:
    """Average a tensor over the full symmetry orbit of the trilinear condition.

    The two generating identities (swap the subscripts; swap the superscript
    with the first subscript) generate all permutations of the index triple,
    so the projection is the symmetric-group average.  The result always
    passes ``check_trilinear`` (exactly, for exact entries).
    """
    K = g.K
    out = GammaTensor.zeros(K)
    for k in range(K):
        for i in range(K):
            for j in range(K):
                acc = sum(_as_exact(g[p]) for p in permutations((k, i, j)))
                val = acc / 6
                out.gamma[k][i][j] = val if g.is_exact() else float(val)
    return out


def check_trilinear(g: GammaTensor, tol: float = DEFAULT_TOL) -> ValidityReport:
    """Check ``g[k,i,j] == g[k,j,i]`` and ``g[k,i,j] == g[i,k,j]`` within tol."""
    if tol < 0:
        raise CoefficientError(f"tol must be nonnegative, got {tol}")
    violations = []
    for k in range(g.K):
        for i in range(g.K):
            for j in range(g.K):
                r1 = g[k, i, j] - g[k, j, i]
                if abs(r1) > tol:
                    violations.append(
                        Violation("gamma[k,i,j] == gamma[k,j,i]", (k, i, j), r1)
                    )
                r2 = g[k, i, j] - g[i, k, j]
                if abs(r2) > tol:
                    violations.append(
                        Violation("gamma[k,i,j] == gamma[i,k,j]", (k, i, j), r2)
                    )
    return ValidityReport(not violations, violations)


def check_trilinear_exact(g: GammaTensor) -> ValidityReport:
    """Exact-arithmetic trilinear check (floats compared as exact binary rationals)."""
    return check_trilinear(g, tol=0)


class ModelCoefficients:
    """The (alpha, beta, gamma, lambda) family of the discrete drift.

    ``alpha``: one value per component k.
    ``beta``, ``gamma``: sparse maps keyed by (k, l) with l in 1..K-1.
    ``lam``: sparse map keyed by (k, a, a') with k, a, a' pairwise distinct
    (this is the paper-style subscripting a = k-l, a' = k-l'; storing it this
    way turns the symmetry constraint into a literal index permutation).

    Missing keys default to 0; invalid keys (l == 0, repeated lambda indices)
    are rejected -- in particular diagonal lambda entries are *not* folded
    into gamma.
    """

    def __init__(self, K: int, alpha, beta=None, gamma=None, lam=None) -> None:
        if K < 1:
            raise CoefficientError(f"K must be >= 1, got {K}")
        self.K = K
        alpha = list(alpha)
        if len(alpha) != K:
            raise CoefficientError(f"alpha must have {K} entries, got {len(alpha)}")
        for k, x in enumerate(alpha):
            _check_finite(x, f"alpha[{k}]")
        self.alpha: list[Scalar] = alpha

        self.beta: dict[tuple[int, int], Scalar] = {}
        self.gamma: dict[tuple[int, int], Scalar] = {}
        self.lam: dict[tuple[int, int, int], Scalar] = {}
        for k in range(K):
            for l in range(1, K):
                self.beta[(k, l)] = 0
                self.gamma[(k, l)] = 0
        for k in range(K):
            for a in range(K):
                for ap in range(K):
                    if len({k, a, ap}) == 3:
                        self.lam[(k, a, ap)] = 0

        for name, given, store in (("beta", beta, self.beta), ("gamma", gamma, self.gamma)):
            for key, x in (given or {}).items():
                k, l = key
                if not (0 <= k < K) or not (1 <= l % K <= K - 1):
                    raise CoefficientError(f"invalid {name} key {key} for K={K}")
                _check_finite(x, f"{name}[{key}]")
                store[(k, l % K)] = x
        for key, x in (lam or {}).items():
            k, a, ap = key
            if len({k % K, a % K, ap % K}) != 3 or not all(0 <= t < K for t in key):
                raise CoefficientError(
                    f"invalid lambda key {key} for K={K}: indices must be "
                    "three distinct components (diagonal entries rejected)"
                )
            _check_finite(x, f"lambda[{key}]")
            self.lam[key] = x

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, ModelCoefficients)
            and self.K == other.K
            and self.alpha == other.alpha
            and self.beta == other.beta
            and self.gamma == other.gamma
            and self.lam == other.lam
        )

    def __repr__(self) -> str:
        return f"ModelCoefficients(K={self.K})"

    def is_exact(self) -> bool:
        vals = (
            list(self.alpha)
            + list(self.beta.values())
            + list(self.gamma.values())
            + list(self.lam.values())
        )
        return all(not isinstance(x, float) for x in vals)

    def exact_copy(self) -> "ModelCoefficients":
        """Copy with every entry promoted to Fraction (floats taken exactly)."""
        return ModelCoefficients(
            self.K,
            [_as_exact(x) for x in self.alpha],
            {k: _as_exact(v) for k, v in self.beta.items()},
            {k: _as_exact(v) for k, v in self.gamma.items()},
            {k: _as_exact(v) for k, v in self.lam.items()},
        )

    def float_copy(self) -> "ModelCoefficients":
        return ModelCoefficients(
            self.K,
            [float(x) for x in self.alpha],
            {k: float(v) for k, v in self.beta.items()},
            {k: float(v) for k, v in self.gamma.items()},
            {k: float(v) for k, v in self.lam.items()},
        )


def check_model_constraints(
    c: ModelCoefficients, tol: float = DEFAULT_TOL
) -> ValidityReport:
    """Check the discrete-drift constraints within tol.

    Entrywise: ``beta[k][a] == 2*gamma[k+a][a]`` for every k and a != 0, and
    the lambda family is invariant under swapping its last two indices and
    under swapping the first two.
    """
    if tol < 0:
        raise CoefficientError(f"tol must be nonnegative, got {tol}")
    K = c.K
    violations = []
    for k in range(K):
        for a in range(1, K):
            r = c.beta[(k, a)] - 2 * c.gamma[((k + a) % K, a)]
            if abs(r) > tol:
                violations.append(
                    Violation("beta[k,a] == 2*gamma[k+a,a]", (k, a), r)
                )
    for (k, a, ap), v in c.lam.items():
        r1 = v - c.lam[(k, ap, a)]
        if abs(r1) > tol:
            violations.append(
                Violation("lambda[k,a,a'] == lambda[k,a',a]", (k, a, ap), r1)
            )
        r2 = v - c.lam[(a, k, ap)]
        if abs(r2) > tol:
            violations.append(
                Violation("lambda[k,a,a'] == lambda[a,k,a']", (k, a, ap), r2)
            )
    return ValidityReport(not violations, violations)


def check_model_constraints_exact(c: ModelCoefficients) -> ValidityReport:
    return check_model_constraints(c, tol=0)


def gamma_to_model(g: GammaTensor, tol: float = DEFAULT_TOL) -> ModelCoefficients:
    """Read the (alpha, beta, gamma, lambda) family off a trilinear tensor.

    alpha_k = g[k,k,k]; beta_k^l = 2*g[k,k,k+l]; gamma_k^l = g[k,k-l,k-l];
    lambda_k^{k-l,k-l'} = g[k,k-l,k-l'].  Undefined off the trilinear
    manifold, so non-trilinear tensors are rejected.
    """
    report = check_trilinear(g, tol=tol)
    if not report:
        raise CoefficientError(
            "gamma_to_model requires a trilinear tensor; " + report.summary()
        )
    K = g.K
    alpha = [g[k, k, k] for k in range(K)]
    beta = {}
    gamma = {}
    lam = {}
    for k in range(K):
        for l in range(1, K):
            beta[(k, l)] = 2 * g[k, k, k + l]
            gamma[(k, l)] = g[k, k - l, k - l]
        for l in range(1, K):
            for lp in range(1, K):
                if lp == l:
                    continue
                a, ap = (k - l) % K, (k - lp) % K
                if len({k, a, ap}) == 3:
                    lam[(k, a, ap)] = g[k, a, ap]
    return ModelCoefficients(K, alpha, beta, gamma, lam)


def model_to_gamma(c: ModelCoefficients, tol: float = DEFAULT_TOL) -> GammaTensor:
    """Inverse of :func:`gamma_to_model`; rejects constraint-violating input."""
    report = check_model_constraints(c, tol=tol)
    if not report:
        raise CoefficientError(
            "model_to_gamma requires valid coefficients; " + report.summary()
        )
    K = c.K
    g = GammaTensor.zeros(K)
    for k in range(K):
        g.gamma[k][k][k] = c.alpha[k]
        for l in range(1, K):
            half_beta = _as_exact(c.beta[(k, l)]) / 2
            if not c.is_exact():
                half_beta = float(half_beta)
            g.gamma[k][k][(k + l) % K] = half_beta
            g.gamma[k][(k + l) % K][k] = half_beta
            g.gamma[k][(k - l) % K][(k - l) % K] = c.gamma[(k, l)]
    for (k, a, ap), v in c.lam.items():
        g.gamma[k][a][ap] = v
    return g


# ---------------------------------------------------------------------------
# JSON serialization.
#
# One document per object: {"K": ..., "gamma_tensor": nested arrays} for a
# tensor, or {"K": ..., "alpha": [...], "beta": {...}, "gamma": {...},
# "lambda": {...}} with string keys "k,l" / "k,a,a'" for the sparse families.
# Exact rationals are written as "p/q" strings (plain ints stay ints), floats
# as JSON numbers; decoding inverts this exactly, so round-trips are lossless.
# ---------------------------------------------------------------------------


def _encode_scalar(x: Scalar):
    if isinstance(x, Fraction):
        return int(x) if x.denominator == 1 else f"{x.numerator}/{x.denominator}"
    return x


def _decode_scalar(x) -> Scalar:
    if isinstance(x, str):
        return Fraction(x)
    if isinstance(x, bool) or x is None:
        raise CoefficientError(f"bad numeric entry {x!r}")
    if isinstance(x, int):
        return x
    return float(x)


def tensor_to_json(g: GammaTensor) -> dict:
    return {
        "K": g.K,
        "gamma_tensor": [
            [[_encode_scalar(x) for x in row] for row in s] for s in g.gamma
        ],
    }


def tensor_from_json(doc: dict) -> GammaTensor:
    try:
        K = int(doc["K"])
        raw = doc["gamma_tensor"]
    except (KeyError, TypeError) as e:
        raise CoefficientError(f"malformed tensor document: {e}") from e
    gamma = [[[_decode_scalar(x) for x in row] for row in s] for s in raw]
    return GammaTensor(K, gamma)


def model_to_json(c: ModelCoefficients) -> dict:
    return {
        "K": c.K,
        "alpha": [_encode_scalar(x) for x in c.alpha],
        "beta": {f"{k},{l}": _encode_scalar(v) for (k, l), v in c.beta.items()},
        "gamma": {f"{k},{l}": _encode_scalar(v) for (k, l), v in c.gamma.items()},
        "lambda": {
            f"{k},{a},{ap}": _encode_scalar(v) for (k, a, ap), v in c.lam.items()
        },
    }


def _parse_key(s: str, arity: int) -> tuple[int, ...]:
    parts = s.split(",")
    if len(parts) != arity:
        raise CoefficientError(f"bad sparse key {s!r}, expected {arity} indices")
    return tuple(int(p) for p in parts)


def model_from_json(doc: dict) -> ModelCoefficients:
    try:
        K = int(doc["K"])
        alpha = [_decode_scalar(x) for x in doc["alpha"]]
    except (KeyError, TypeError) as e:
        raise CoefficientError(f"malformed coefficients document: {e}") from e
    beta = {_parse_key(k, 2): _decode_scalar(v) for k, v in doc.get("beta", {}).items()}
    gamma = {_parse_key(k, 2): _decode_scalar(v) for k, v in doc.get("gamma", {}).items()}
    lam = {_parse_key(k, 3): _decode_scalar(v) for k, v in doc.get("lambda", {}).items()}
    return ModelCoefficients(K, alpha, beta, gamma, lam)


def load_model_document(doc: dict) -> GammaTensor | ModelCoefficients:
    """Dispatch on document shape: tensor form or coefficient form."""
    if "gamma_tensor" in doc:
        return tensor_from_json(doc)
    if "alpha" in doc:
        return model_from_json(doc)
    raise CoefficientError(
        "model document must contain 'gamma_tensor' or 'alpha'"
    )


def coefficients_for(model: GammaTensor | ModelCoefficients) -> ModelCoefficients:
    """Accept either parametrization, return drift coefficients."""
    if isinstance(model, GammaTensor):
        return gamma_to_model(model)
    return model


# ---------------------------------------------------------------------------
# Randomized inputs for the verification suites.
# ---------------------------------------------------------------------------


def _rand_fraction(rng, max_num: int = 6, max_den: int = 4) -> Fraction:
    return Fraction(rng.randint(-max_num, max_num), rng.randint(1, max_den))


def random_trilinear_tensor(K: int, rng) -> GammaTensor:
    """Random rational tensor projected onto the trilinear manifold.

    ``rng`` is a ``random.Random``.  Construction by symmetry-orbit averaging,
    so validity is structural, not numerical.
    """
    raw = GammaTensor(
        K,
        [
            [[_rand_fraction(rng) for _ in range(K)] for _ in range(K)]
            for _ in range(K)
        ],
    )
    return symmetrize_tensor(raw)


def random_valid_coefficients(K: int, rng) -> ModelCoefficients:
    """Random rational coefficients satisfying the constraints exactly."""
    return gamma_to_model(random_trilinear_tensor(K, rng), tol=0)


def perturb_constraints(c: ModelCoefficients, rng) -> ModelCoefficients:
    """Break one beta/gamma pairing by a nonzero rational bump (needs K >= 2)."""
    if c.K < 2:
        raise CoefficientError("K=1 has no constraints to violate")
    out = c.exact_copy()
    k = rng.randrange(c.K)
    a = rng.randint(1, c.K - 1)
    bump = Fraction(rng.randint(1, 5), rng.randint(1, 3))
    out.beta[(k, a)] = out.beta[(k, a)] + bump
    return out


def dump_json(obj: GammaTensor | ModelCoefficients, path) -> None:
    doc = tensor_to_json(obj) if isinstance(obj, GammaTensor) else model_to_json(obj)
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")


def load_json(path) -> GammaTensor | ModelCoefficients:
    with open(path) as fh:
        return load_model_document(json.load(fh))
