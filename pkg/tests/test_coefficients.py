import json
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ssburgers.coefficients import (
    CoefficientError,
    GammaTensor,
    ModelCoefficients,
    check_model_constraints,
    check_model_constraints_exact,
    check_trilinear,
    check_trilinear_exact,
    dump_json,
    gamma_to_model,
    load_json,
    load_model_document,
    model_from_json,
    model_to_gamma,
    model_to_json,
    perturb_constraints,
    random_trilinear_tensor,
    random_valid_coefficients,
    symmetrize_tensor,
    tensor_from_json,
    tensor_to_json,
)


def test_k1_tensor_always_trilinear():
    g = GammaTensor(1, [[[2.5]]])
    assert check_trilinear(g).valid


def test_trilinear_violation_reported():
    # g[0][0][1] = 0.5 but g[1][0][0] = 0.3 breaks the superscript swap
    g = GammaTensor.zeros(2)
    g.gamma[0][0][1] = 0.5
    g.gamma[0][1][0] = 0.5
    g.gamma[1][0][0] = 0.3
    rep = check_trilinear(g)
    assert not rep.valid
    conditions = {v.condition for v in rep.violations}
    assert "gamma[k,i,j] == gamma[i,k,j]" in conditions


def test_symmetrized_tensor_valid(rng):
    for K in (2, 3, 4):
        raw = GammaTensor(
            K,
            [
                [[Fraction(rng.randint(-5, 5), rng.randint(1, 3)) for _ in range(K)]
                 for _ in range(K)]
                for _ in range(K)
            ],
        )
        sym = symmetrize_tensor(raw)
        assert check_trilinear_exact(sym).valid


def test_tol_must_be_nonnegative():
    with pytest.raises(CoefficientError):
        check_trilinear(GammaTensor.zeros(2), tol=-1e-9)


def test_model_constraints_k1_vacuous():
    c = ModelCoefficients(1, [3.0])
    assert check_model_constraints(c).valid


def test_model_constraints_simple_pair():
    ok = ModelCoefficients(2, [0, 0], beta={(0, 1): 1.0}, gamma={(1, 1): 0.5})
    assert check_model_constraints(ok).valid

    bad = ModelCoefficients(2, [0, 0], beta={(0, 1): 1.0}, gamma={(1, 1): 0.4})
    rep = check_model_constraints(bad)
    assert not rep.valid
    residuals = [v.residual for v in rep.violations]
    assert any(abs(r - 0.2) < 1e-15 for r in residuals)


def test_lambda_diagonal_rejected():
    with pytest.raises(CoefficientError):
        ModelCoefficients(3, [0, 0, 0], lam={(0, 1, 1): 1})
    with pytest.raises(CoefficientError):
        ModelCoefficients(3, [0, 0, 0], lam={(0, 0, 1): 1})


def test_gamma_to_model_identification():
    # K=1: alpha picks up the single diagonal entry
    g = GammaTensor(1, [[[2]]])
    c = gamma_to_model(g, tol=0)
    assert c.alpha == [2]
    assert not c.beta and not c.lam

    # K=2: beta is twice the off-diagonal entry in the same slice
    g = GammaTensor.zeros(2)
    g.gamma[1][1][0] = Fraction(1, 2)  # slice k=1, entry (k, k+1) with l=1
    g.gamma[1][0][1] = Fraction(1, 2)
    g.gamma[0][1][1] = Fraction(1, 2)  # superscript swap partner
    c = gamma_to_model(g, tol=0)
    assert c.beta[(1, 1)] == 1
    # the same entries read as gamma_k^l = g[k, k-l, k-l]
    assert c.gamma[(0, 1)] == Fraction(1, 2)


def test_model_to_gamma_reads_gamma_entry():
    c = ModelCoefficients(
        2, [0, 0], beta={(0, 1): 1.0, (1, 1): 1.0}, gamma={(0, 1): 0.5, (1, 1): 0.5}
    )
    g = model_to_gamma(c)
    assert g[1, 0, 0] == 0.5  # gamma_1^1 = g[1, 1-1, 1-1]
    assert check_trilinear(g).valid


def test_conversion_rejects_invalid():
    bad_t = GammaTensor.zeros(2)
    bad_t.gamma[0][0][1] = 1.0
    with pytest.raises(CoefficientError):
        gamma_to_model(bad_t)
    bad_c = ModelCoefficients(2, [0, 0], beta={(0, 1): 1.0}, gamma={(1, 1): 0.4})
    with pytest.raises(CoefficientError):
        model_to_gamma(bad_c)


def test_round_trip_exact(rng):
    for K in range(1, 6):
        for _ in range(20):
            g = random_trilinear_tensor(K, rng)
            c = gamma_to_model(g, tol=0)
            assert check_model_constraints_exact(c).valid
            assert model_to_gamma(c, tol=0) == g


def test_round_trip_from_coefficients(rng):
    for K in range(1, 6):
        c = random_valid_coefficients(K, rng)
        g = model_to_gamma(c, tol=0)
        assert check_trilinear_exact(g).valid
        assert gamma_to_model(g, tol=0) == c


def test_perturbed_coefficients_invalid(rng):
    for K in (2, 3):
        c = perturb_constraints(random_valid_coefficients(K, rng), rng)
        assert not check_model_constraints_exact(c).valid


@settings(max_examples=25, deadline=None)
@given(
    K=st.integers(min_value=1, max_value=5),
    seed=st.integers(min_value=0, max_value=2**31),
)
def test_round_trip_property(K, seed):
    import random

    local = random.Random(seed)
    g = random_trilinear_tensor(K, local)
    c = gamma_to_model(g, tol=0)
    assert check_model_constraints_exact(c).valid
    assert model_to_gamma(c, tol=0) == g


def test_json_round_trip_tensor(rng, tmp_path):
    g = random_trilinear_tensor(3, rng)
    doc = tensor_to_json(g)
    text = json.dumps(doc)
    assert tensor_from_json(json.loads(text)) == g

    path = tmp_path / "tensor.json"
    dump_json(g, path)
    assert load_json(path) == g


def test_json_round_trip_model(rng, tmp_path):
    c = random_valid_coefficients(3, rng)
    assert model_from_json(json.loads(json.dumps(model_to_json(c)))) == c

    # float entries survive exactly too (json floats round-trip via repr)
    cf = c.float_copy()
    back = model_from_json(json.loads(json.dumps(model_to_json(cf))))
    assert back == cf

    path = tmp_path / "model.json"
    dump_json(c, path)
    assert load_json(path) == c


def test_load_model_document_dispatch(rng):
    c = random_valid_coefficients(2, rng)
    g = model_to_gamma(c, tol=0)
    assert isinstance(load_model_document(tensor_to_json(g)), GammaTensor)
    assert isinstance(load_model_document(model_to_json(c)), ModelCoefficients)
    with pytest.raises(CoefficientError):
        load_model_document({"K": 2})
