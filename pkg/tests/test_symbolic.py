import random
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ssburgers.coefficients import (
    ModelCoefficients,
    perturb_constraints,
    random_valid_coefficients,
)
from ssburgers.symbolic import (
    DegreeCapExceeded,
    GeneratorParams,
    LatticePolynomial,
    apply_adjoint,
    apply_generator,
    divergence_identity,
    drift_polynomial,
    gaussian_expectation,
    monomials_up_to,
    random_polynomial,
    stationarity_residual,
    w_polynomial,
)

P = LatticePolynomial


def _params(K, M, eps=Fraction(1, 2), seed=1):
    rng = random.Random(seed)
    return GeneratorParams(random_valid_coefficients(K, rng), eps, M)


# ---------------------------------------------------------------------------
# ring structure
# ---------------------------------------------------------------------------


@st.composite
def polys(draw, K=2, M=3):
    local = random.Random(draw(st.integers(0, 2**31)))
    return random_polynomial(K, M, draw(st.integers(0, 3)), local)


@settings(max_examples=40, deadline=None)
@given(f=polys(), g=polys(), h=polys())
def test_ring_laws(f, g, h):
    assert (f + g) + h == f + (g + h)
    assert f + g == g + f
    assert f * g == g * f
    assert (f * g) * h == f * (g * h)
    assert f * (g + h) == f * g + f * h


@settings(max_examples=40, deadline=None)
@given(f=polys(), g=polys())
def test_diff_is_derivation(f, g):
    for k in range(2):
        for j in range(3):
            lhs = (f * g).diff(k, j)
            rhs = f * g.diff(k, j) + g * f.diff(k, j)
            assert lhs == rhs


def test_canonical_form_and_str():
    f = P.var(1, 3, 0, 0) * 2 + P.var(1, 3, 0, 1) - P.var(1, 3, 0, 0) * 2
    assert f == P.var(1, 3, 0, 1)
    assert f.canonical_str() == "1 * u[0,1]^1"
    assert P.zero(1, 3).canonical_str() == "0"
    g = P.var(1, 3, 0, 0) ** 2 * Fraction(-7, 3) + P.const(1, 3, 5)
    assert g.canonical_str() == "5 + -7/3 * u[0,0]^2"


def test_pow_and_eval():
    f = (P.var(1, 4, 0, 0) + 1) ** 3
    assert f.evaluate([[1, 0, 0, 0]]) == 8
    assert f.evaluate([[Fraction(1, 2), 0, 0, 0]]) == Fraction(27, 8)


def test_periodic_variable_indexing():
    assert P.var(2, 4, 2, 5) == P.var(2, 4, 0, 1)


# ---------------------------------------------------------------------------
# drift polynomials
# ---------------------------------------------------------------------------


def test_w_values_hand_computed():
    # u = (1, 2, 0): w_0 = (1+2+4)/3, w_1 = (4+0+0)/3, w_2 = (0+0+1)/3
    u = [[1, 2, 0]]
    expected = [Fraction(7, 3), Fraction(4, 3), Fraction(1, 3)]
    for j in range(3):
        assert w_polynomial(1, 3, 0, j).evaluate(u) == expected[j]


def test_drift_example_k1():
    p = GeneratorParams(ModelCoefficients(1, [1]), Fraction(1, 2), 3)
    u = [[1, 2, 0]]
    values = [drift_polynomial(0, j, p).evaluate(u) for j in range(3)]
    assert values == [2, -1, -1]


def test_drift_vanishes_on_constants(rng):
    for K, M in [(1, 3), (2, 4), (3, 5)]:
        p = GeneratorParams(random_valid_coefficients(K, rng), Fraction(1, 3), M)
        c = Fraction(7, 5)
        u = [[c] * M for _ in range(K)]
        for k in range(K):
            for j in range(M):
                assert drift_polynomial(k, j, p).evaluate(u) == 0


def test_drift_telescopes(rng):
    for K, M in [(1, 3), (2, 4), (3, 5)]:
        p = GeneratorParams(random_valid_coefficients(K, rng), Fraction(1, 3), M)
        for k in range(K):
            total = P.zero(K, M)
            for j in range(M):
                total = total + drift_polynomial(k, j, p)
            assert total.is_zero()


def test_drift_degree_two(rng):
    p = _params(2, 4)
    assert drift_polynomial(0, 0, p).total_degree() == 2


# ---------------------------------------------------------------------------
# divergence identity
# ---------------------------------------------------------------------------


def test_divergence_identity_k1():
    p = GeneratorParams(ModelCoefficients(1, [1]), Fraction(1, 2), 3)
    assert divergence_identity(p).is_zero()


def test_divergence_identity_valid_random(rng):
    for K in (1, 2, 3):
        for M in (3, 4, 6):
            p = GeneratorParams(
                random_valid_coefficients(K, rng), Fraction(1, 5), M
            )
            assert divergence_identity(p).is_zero()


def test_divergence_identity_violated(rng):
    c = ModelCoefficients(
        2, [0, 0],
        beta={(0, 1): 1, (1, 1): 1},
        gamma={(0, 1): Fraction(1, 2), (1, 1): Fraction(2, 5)},  # 1 != 2*(2/5)
    )
    p = GeneratorParams(c, Fraction(1, 2), 4)
    residual = divergence_identity(p)
    assert not residual.is_zero()
    # nonzero at a random rational point certifies nonzero-ness independently
    point = [[Fraction(rng.randint(-9, 9), rng.randint(1, 7)) for _ in range(4)]
             for _ in range(2)]
    assert residual.evaluate(point) != 0


# ---------------------------------------------------------------------------
# generator and adjoint
# ---------------------------------------------------------------------------


def test_generator_on_linear():
    p = GeneratorParams(ModelCoefficients(1, [1]), Fraction(1, 2), 3)
    f = P.var(1, 3, 0, 0)
    lap = (P.var(1, 3, 0, 1) + P.var(1, 3, 0, 2) - 2 * P.var(1, 3, 0, 0))
    expected = Fraction(1, 2) * lap + Fraction(1, 2) * drift_polynomial(0, 0, p)
    assert apply_generator(f, p) == expected


def test_generator_on_constant(rng):
    p = _params(2, 3)
    assert apply_generator(P.const(2, 3, 9), p).is_zero()


def test_generator_on_square_hand_expansion():
    # K=1, M=3, f = u00^2: second-order part contributes the constant 2
    # (one from the (0,1)-(0,0) bond, one from the (0,0)-(0,2) bond), the
    # first-order part gives u00 * (discrete Laplacian at site 0), the drift
    # part 2 eps B00 u00.
    eps = Fraction(1, 2)
    p = GeneratorParams(ModelCoefficients(1, [1]), eps, 3)
    u0 = P.var(1, 3, 0, 0)
    lap = P.var(1, 3, 0, 1) + P.var(1, 3, 0, 2) - 2 * u0
    expected = P.const(1, 3, 2) + u0 * lap + 2 * eps * (drift_polynomial(0, 0, p) * u0)
    assert apply_generator(u0 * u0, p) == expected


def test_generator_degree_growth(rng):
    p = _params(2, 3)
    f = random_polynomial(2, 3, 3, rng)
    assert apply_generator(f, p).total_degree() <= f.total_degree() + 1


def test_adjoint_is_generator_with_negated_eps(rng):
    p = _params(2, 3, eps=Fraction(3, 7))
    p_neg = GeneratorParams(p.coefficients, -Fraction(3, 7), 3)
    for _ in range(5):
        f = random_polynomial(2, 3, 2, rng)
        assert apply_adjoint(f, p) == apply_generator(f, p_neg)


def test_adjoint_symmetric_at_eps_zero(rng):
    p = _params(1, 3, eps=Fraction(0))
    f = P.var(1, 3, 0, 0)
    assert apply_adjoint(f, p) == apply_generator(f, p)


def test_adjoint_relation_exact(rng):
    p = _params(1, 3, eps=Fraction(2, 5), seed=9)
    for _ in range(10):
        f = random_polynomial(1, 3, 2, rng)
        g = random_polynomial(1, 3, 2, rng)
        lhs = gaussian_expectation(apply_generator(f, p) * g)
        rhs = gaussian_expectation(f * apply_adjoint(g, p))
        assert lhs == rhs


# ---------------------------------------------------------------------------
# gaussian expectation
# ---------------------------------------------------------------------------


def test_gaussian_moments_basic():
    u = P.var(1, 3, 0, 0)
    v = P.var(1, 3, 0, 1)
    assert gaussian_expectation(u * u) == 1
    assert gaussian_expectation(u ** 4) == 3
    assert gaussian_expectation(u ** 3 * v) == 0
    assert gaussian_expectation(u ** 2 * v ** 2) == 1
    assert gaussian_expectation(u ** 6) == 15
    assert gaussian_expectation(P.const(1, 3, Fraction(3, 4))) == Fraction(3, 4)


def test_degree_cap():
    u = P.var(1, 3, 0, 0)
    with pytest.raises(DegreeCapExceeded):
        gaussian_expectation(u ** 14)
    assert gaussian_expectation(u ** 14, degree_cap=14) == 135135


def test_gaussian_expectation_monte_carlo_oracle(rng):
    # independent numeric oracle: direct sampling of the product measure
    gen = np.random.default_rng(123)
    samples = gen.standard_normal((400_000, 2, 3))
    for trial in range(5):
        f = random_polynomial(2, 3, 4, rng)
        exact = float(gaussian_expectation(f))
        vals = np.zeros(samples.shape[0])
        for mono, coef in f.terms.items():
            term = np.full(samples.shape[0], float(coef))
            for k, j, e in mono:
                term = term * samples[:, k, j] ** e
            vals += term
        se = vals.std(ddof=1) / np.sqrt(len(vals))
        assert abs(vals.mean() - exact) <= 4 * se + 1e-12


# ---------------------------------------------------------------------------
# stationarity
# ---------------------------------------------------------------------------


def test_stationarity_first_moment(rng):
    p = _params(2, 3)
    assert stationarity_residual(P.var(2, 3, 0, 0), p) == 0


def test_stationarity_cubic_example(rng):
    p = _params(2, 4, eps=Fraction(1, 3), seed=5)
    f = P.var(2, 4, 0, 0) * P.var(2, 4, 0, 1) * P.var(2, 4, 1, 1)
    assert stationarity_residual(f, p) == 0


def test_stationarity_all_low_degree_monomials(rng):
    p = _params(2, 3, eps=Fraction(2, 3), seed=11)
    for mono in monomials_up_to(2, 3, 3):
        assert stationarity_residual(mono, p) == 0


def test_stationarity_detects_violation(rng):
    c = perturb_constraints(random_valid_coefficients(2, rng), rng)
    p = GeneratorParams(c, Fraction(1, 2), 4)
    witnesses = [
        m for m in monomials_up_to(2, 4, 3) if stationarity_residual(m, p) != 0
    ]
    assert witnesses, "no cubic witness found for a constraint violation"
