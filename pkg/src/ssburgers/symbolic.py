"""Exact polynomial algebra on the periodic lattice.

This module is where the algebraic identities behind the simulator are
*proved* rather than sampled: the discrete drift is built as an exact
polynomial in the site variables ``u[k,j]`` with arbitrary-precision rational
coefficients, the diffusion generator and its adjoint act on such
polynomials, and expectations under the i.i.d. standard-Gaussian product
measure are evaluated in closed form.  Equality of canonical term maps is
decidable, so "this expression is zero" is a theorem check, not a tolerance
check.

Monomials are keyed by sorted ``(k, j, exponent)`` tuples and every
arithmetic operation re-canonicalizes (zero coefficients dropped).
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from itertools import combinations_with_replacement
from math import prod

from .coefficients import (
    ModelCoefficients,
    Scalar,
    ValidityReport,
    check_model_constraints_exact,
)

Monomial = tuple[tuple[int, int, int], ...]

#: Expectation evaluation rejects monomials above this total degree by
#: default; moment products are cheap but the cap keeps accidental
#: high-degree blowups loud instead of slow.
DEFAULT_DEGREE_CAP = 12


class DegreeCapExceeded(ValueError):
    """A monomial's total degree is above the configured expectation cap."""


def _coerce(c: Scalar) -> Fraction:
    return c if isinstance(c, Fraction) else Fraction(c)


class LatticePolynomial:
    """Polynomial in the variables u[k,j], (k,j) in Z_K x Z_M, over Q."""

    __slots__ = ("K", "M", "terms")

    def __init__(self, K: int, M: int, terms: dict[Monomial, Fraction] | None = None):
        if K < 1 or M < 1:
            raise ValueError(f"need K, M >= 1, got ({K}, {M})")
        self.K = K
        self.M = M
        self.terms: dict[Monomial, Fraction] = {}
        if terms:
            for mono, c in terms.items():
                c = _coerce(c)
                if c != 0:
                    self.terms[mono] = c

    # -- constructors ------------------------------------------------------

    @classmethod
    def zero(cls, K: int, M: int) -> "LatticePolynomial":
        return cls(K, M)

    @classmethod
    def const(cls, K: int, M: int, c: Scalar) -> "LatticePolynomial":
        return cls(K, M, {(): _coerce(c)})

    @classmethod
    def var(cls, K: int, M: int, k: int, j: int) -> "LatticePolynomial":
        return cls(K, M, {((k % K, j % M, 1),): Fraction(1)})

    # -- ring operations ---------------------------------------------------

    def _like(self, other) -> "LatticePolynomial":
        if isinstance(other, LatticePolynomial):
            if (other.K, other.M) != (self.K, self.M):
                raise ValueError(
                    f"lattice mismatch: ({self.K},{self.M}) vs ({other.K},{other.M})"
                )
            return other
        return LatticePolynomial.const(self.K, self.M, other)

    def __add__(self, other) -> "LatticePolynomial":
        other = self._like(other)
        out = dict(self.terms)
        for mono, c in other.terms.items():
            s = out.get(mono, Fraction(0)) + c
            if s == 0:
                out.pop(mono, None)
            else:
                out[mono] = s
        return LatticePolynomial(self.K, self.M, out)

    __radd__ = __add__

    def __neg__(self) -> "LatticePolynomial":
        return LatticePolynomial(
            self.K, self.M, {m: -c for m, c in self.terms.items()}
        )

    def __sub__(self, other) -> "LatticePolynomial":
        return self + (-self._like(other))

    def __rsub__(self, other) -> "LatticePolynomial":
        return (-self) + self._like(other)

    def __mul__(self, other) -> "LatticePolynomial":
        if not isinstance(other, LatticePolynomial):
            c = _coerce(other)
            if c == 0:
                return LatticePolynomial.zero(self.K, self.M)
            return LatticePolynomial(
                self.K, self.M, {m: c * v for m, v in self.terms.items()}
            )
        other = self._like(other)
        out: dict[Monomial, Fraction] = {}
        for m1, c1 in self.terms.items():
            for m2, c2 in other.terms.items():
                mono = _merge_monomials(m1, m2)
                s = out.get(mono, Fraction(0)) + c1 * c2
                if s == 0:
                    out.pop(mono, None)
                else:
                    out[mono] = s
        return LatticePolynomial(self.K, self.M, out)

    __rmul__ = __mul__

    def __pow__(self, n: int) -> "LatticePolynomial":
        if not isinstance(n, int) or n < 0:
            raise ValueError(f"exponent must be a nonnegative int, got {n!r}")
        result = LatticePolynomial.const(self.K, self.M, 1)
        base = self
        while n:
            if n & 1:
                result = result * base
            base = base * base if n > 1 else base
            n >>= 1
        return result

    def __eq__(self, other) -> bool:
        if not isinstance(other, LatticePolynomial):
            if self.terms and set(self.terms) != {()}:
                return False
            return self.terms.get((), Fraction(0)) == _coerce(other)
        return (self.K, self.M) == (other.K, other.M) and self.terms == other.terms

    # -- calculus and evaluation -------------------------------------------

    def diff(self, k: int, j: int) -> "LatticePolynomial":
        """Partial derivative with respect to u[k,j]."""
        k, j = k % self.K, j % self.M
        out: dict[Monomial, Fraction] = {}
        for mono, c in self.terms.items():
            for idx, (mk, mj, e) in enumerate(mono):
                if (mk, mj) == (k, j):
                    rest = mono[:idx] + (() if e == 1 else ((mk, mj, e - 1),)) + mono[idx + 1:]
                    s = out.get(rest, Fraction(0)) + c * e
                    if s == 0:
                        out.pop(rest, None)
                    else:
                        out[rest] = s
                    break
        return LatticePolynomial(self.K, self.M, out)

    def evaluate(self, u):
        """Evaluate at a point; ``u[k][j]`` must index the site values.

        Exact inputs (ints, Fractions) give an exact Fraction; float inputs
        give a float.
        """
        total = None
        for mono, c in self.terms.items():
            v = c
            for k, j, e in mono:
                v = v * u[k][j] ** e
            total = v if total is None else total + v
        return Fraction(0) if total is None else total

    def total_degree(self) -> int:
        return max((sum(e for _, _, e in m) for m in self.terms), default=0)

    def is_zero(self) -> bool:
        return not self.terms

    def support(self) -> set[tuple[int, int]]:
        return {(k, j) for m in self.terms for k, j, _ in m}

    # -- canonical text form -----------------------------------------------

    def canonical_str(self) -> str:
        """Canonical text form ``c * u[k,j]^e * ...``, sorted lexicographically."""
        if not self.terms:
            return "0"
        pieces = []
        for mono in sorted(self.terms):
            factors = [str(self.terms[mono])]
            factors += [f"u[{k},{j}]^{e}" for k, j, e in mono]
            pieces.append(" * ".join(factors))
        return " + ".join(pieces)

    def __repr__(self) -> str:
        return f"LatticePolynomial({self.K},{self.M}): {self.canonical_str()}"


def _merge_monomials(m1: Monomial, m2: Monomial) -> Monomial:
    acc: dict[tuple[int, int], int] = {}
    for k, j, e in m1:
        acc[(k, j)] = e
    for k, j, e in m2:
        acc[(k, j)] = acc.get((k, j), 0) + e
    return tuple(sorted((k, j, e) for (k, j), e in acc.items()))


# ---------------------------------------------------------------------------
# Model drift as exact polynomials.
# ---------------------------------------------------------------------------


@dataclass
class GeneratorParams:
    """Everything the generator needs: drift coefficients, asymmetry, lattice.

    Validity of the coefficients is a checked property (``validate_exact``),
    not a construction invariant: the divergence-identity residual needs
    constraint-violating parameter sets to be representable.
    """

    coefficients: ModelCoefficients
    epsilon: Scalar
    M: int
    K: int = 0

    def __post_init__(self):
        if self.K == 0:
            self.K = self.coefficients.K
        elif self.K != self.coefficients.K:
            raise ValueError(
                f"K={self.K} disagrees with coefficients (K={self.coefficients.K})"
            )
        if self.M < 1:
            raise ValueError(f"M must be >= 1, got {self.M}")

    def validate_exact(self) -> ValidityReport:
        return check_model_constraints_exact(self.coefficients)

    def float_copy(self) -> "GeneratorParams":
        return GeneratorParams(
            self.coefficients.float_copy(), float(self.epsilon), self.M
        )


def w_polynomial(K: int, M: int, k: int, j: int) -> LatticePolynomial:
    """Self-interaction block (u^2 + u u+ + u+^2)/3 at site (k, j)."""
    u0 = LatticePolynomial.var(K, M, k, j)
    u1 = LatticePolynomial.var(K, M, k, j + 1)
    return (u0 * u0 + u0 * u1 + u1 * u1) * Fraction(1, 3)


def b_polynomial(K: int, M: int, k: int, l: int, j: int) -> LatticePolynomial:
    u0, v0 = LatticePolynomial.var(K, M, k, j), LatticePolynomial.var(K, M, k + l, j)
    u1, v1 = LatticePolynomial.var(K, M, k, j + 1), LatticePolynomial.var(K, M, k + l, j + 1)
    return (u0 * v0 + u1 * v1) * Fraction(1, 2)


def r_polynomial(K: int, M: int, k: int, l: int, j: int) -> LatticePolynomial:
    return LatticePolynomial.var(K, M, k - l, j) * LatticePolynomial.var(K, M, k - l, j + 1)


def p_polynomial(K: int, M: int, k: int, l: int, lp: int, j: int) -> LatticePolynomial:
    a = LatticePolynomial.var(K, M, k - l, j)
    b = LatticePolynomial.var(K, M, k - l, j + 1)
    c = LatticePolynomial.var(K, M, k - lp, j)
    d = LatticePolynomial.var(K, M, k - lp, j + 1)
    return (2 * (a * c) + a * d + b * c + 2 * (b * d)) * Fraction(1, 6)


def g_polynomial(k: int, j: int, p: GeneratorParams) -> LatticePolynomial:
    """Current G[k,j]: the drift is its discrete space gradient."""
    K, M, c = p.K, p.M, p.coefficients
    out = w_polynomial(K, M, k, j) * c.alpha[k % K]
    for l in range(1, K):
        out = out + b_polynomial(K, M, k, l, j) * c.beta[(k % K, l)]
        out = out + r_polynomial(K, M, k, l, j) * c.gamma[(k % K, l)]
    for l in range(1, K):
        for lp in range(1, K):
            if lp == l:
                continue
            lam = c.lam[(k % K, (k - l) % K, (k - lp) % K)]
            out = out + p_polynomial(K, M, k, l, lp, j) * lam
    return out


def drift_polynomial(k: int, j: int, p: GeneratorParams) -> LatticePolynomial:
    """Drift B[k,j] = G[k,j] - G[k,j-1], a degree-2 polynomial."""
    return g_polynomial(k, j, p) - g_polynomial(k, j - 1, p)


def divergence_identity(p: GeneratorParams) -> LatticePolynomial:
    """Residual sum over all sites of (u[k,j] B[k,j] - d/du[k,j] B[k,j]).

    This is the zero polynomial exactly when the coefficient constraints
    hold; its nonzero-ness certifies non-invariance of the Gaussian
    product measure.
    """
    out = LatticePolynomial.zero(p.K, p.M)
    for k in range(p.K):
        for j in range(p.M):
            B = drift_polynomial(k, j, p)
            out = out + LatticePolynomial.var(p.K, p.M, k, j) * B - B.diff(k, j)
    return out


def _apply_generator(f: LatticePolynomial, p: GeneratorParams, drift_sign: int) -> LatticePolynomial:
    if (f.K, f.M) != (p.K, p.M):
        raise ValueError(
            f"polynomial lattice ({f.K},{f.M}) does not match params ({p.K},{p.M})"
        )
    K, M = p.K, p.M
    eps = _coerce(p.epsilon) * drift_sign
    half = Fraction(1, 2)
    out = LatticePolynomial.zero(K, M)
    for k in range(K):
        for j in range(M):
            dj = f.diff(k, j)
            dj1 = f.diff(k, j + 1)
            d1 = dj1 - dj
            if not d1.is_zero():
                d2 = d1.diff(k, j + 1) - d1.diff(k, j)
                grad_u = LatticePolynomial.var(K, M, k, j + 1) - LatticePolynomial.var(K, M, k, j)
                out = out + half * d2 - half * (grad_u * d1)
            if eps != 0 and not dj.is_zero():
                out = out + eps * (drift_polynomial(k, j, p) * dj)
    return out


def apply_generator(f: LatticePolynomial, p: GeneratorParams) -> LatticePolynomial:
    """Apply the diffusion generator: gradient-squared part, its Gaussian
    first-order correction, and the asymmetric drift part."""
    return _apply_generator(f, p, +1)


def apply_adjoint(f: LatticePolynomial, p: GeneratorParams) -> LatticePolynomial:
    """Adjoint in L2 of the Gaussian product measure: drift sign flipped.

    This is the adjoint only when the coefficient constraints hold (they make
    the zeroth-order boundary term vanish); callers verifying the adjoint
    relation should pair it with valid parameters.
    """
    return _apply_generator(f, p, -1)


def gaussian_expectation(
    f: LatticePolynomial, degree_cap: int = DEFAULT_DEGREE_CAP
) -> Fraction:
    """Exact expectation under i.i.d. standard Gaussians, one per site.

    Product-measure independence reduces the pairing count to a product of
    single-variable even moments E[u^(2m)] = (2m-1)!!.
    """
    total = Fraction(0)
    for mono, coef in f.terms.items():
        deg = sum(e for _, _, e in mono)
        if deg > degree_cap:
            raise DegreeCapExceeded(
                f"monomial degree {deg} exceeds cap {degree_cap}"
            )
        if any(e % 2 for _, _, e in mono):
            continue
        total += coef * prod(prod(range(1, e, 2)) for _, _, e in mono)
    return total


def stationarity_residual(
    f: LatticePolynomial, p: GeneratorParams, degree_cap: int = DEFAULT_DEGREE_CAP
) -> Fraction:
    """E[Lf] under the Gaussian product measure; zero for every polynomial
    f iff the measure is invariant for the generator."""
    return gaussian_expectation(apply_generator(f, p), degree_cap=degree_cap)


# ---------------------------------------------------------------------------
# Enumeration and randomization helpers for the verification suites.
# ---------------------------------------------------------------------------


def monomials_up_to(K: int, M: int, degree: int):
    """Yield every monomial of total degree 1..degree over the K x M sites."""
    sites = [(k, j) for k in range(K) for j in range(M)]
    for d in range(1, degree + 1):
        for combo in combinations_with_replacement(sites, d):
            counts: dict[tuple[int, int], int] = {}
            for site in combo:
                counts[site] = counts.get(site, 0) + 1
            mono = tuple(sorted((k, j, e) for (k, j), e in counts.items()))
            yield LatticePolynomial(K, M, {mono: Fraction(1)})


def random_polynomial(
    K: int, M: int, degree: int, rng, n_terms: int = 4
) -> LatticePolynomial:
    """Random polynomial with small-rational coefficients, degree <= degree.

    ``rng`` is a ``random.Random``; exactness of downstream identity checks
    requires rational coefficients, hence no floats here.
    """
    out = LatticePolynomial.zero(K, M)
    for _ in range(n_terms):
        d = rng.randint(0, degree)
        mono = LatticePolynomial.const(K, M, 1)
        for _ in range(d):
            mono = mono * LatticePolynomial.var(
                K, M, rng.randrange(K), rng.randrange(M)
            )
        coef = Fraction(rng.randint(-6, 6), rng.randint(1, 4))
        out = out + mono * coef
    return out
