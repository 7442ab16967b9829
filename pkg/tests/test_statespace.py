import numpy as np
import pytest

from cdmbd.exceptions import InstabilityError, ValidationError
from cdmbd.statespace import (RHO_BOUNDS, EmissionModel, LatentDims, ModelParams,
                              enforce_mb_zeros, forbidden_mask, has_mb_zeros, make_signature,
                              materialize_abb, spectral_radius, stationary_blanket_mean,
                              unit_radius_basis, violation_directional_derivative)

from oracles import central_difference, spectral_radius_poly, stationary_mean_neumann

DIMS = LatentDims(2, 3, 2)


def test_latent_dims_blocks():
    assert DIMS.d == 7
    assert DIMS.block("S") == slice(0, 2)
    assert DIMS.block("B") == slice(2, 5)
    assert DIMS.block("Z") == slice(5, 7)
    with pytest.raises(ValidationError):
        LatentDims(0, 1, 1)
    with pytest.raises(ValidationError):
        DIMS.block("X")


def test_enforce_zeros_only_touches_forbidden_blocks():
    rng = np.random.default_rng(0)
    A = rng.normal(size=(7, 7))
    out = enforce_mb_zeros(A, DIMS)
    mask = forbidden_mask(DIMS)
    assert np.all(out[mask] == 0.0)
    np.testing.assert_array_equal(out[~mask], A[~mask])
    # blanket-to-interior coupling is allowed and preserved
    b, z = DIMS.block("B"), DIMS.block("Z")
    np.testing.assert_array_equal(out[b, z], A[b, z])
    assert has_mb_zeros(out, DIMS) and not has_mb_zeros(A, DIMS)
    assert A[0, 6] != 0.0  # input not mutated


def test_enforce_zeros_rejects_bad_shape():
    with pytest.raises(ValidationError):
        enforce_mb_zeros(np.zeros((6, 6)), DIMS)
    with pytest.raises(ValidationError):
        enforce_mb_zeros(np.zeros((7, 6)), DIMS)


def test_spectral_radius_rotation_block():
    # DERIVED: characteristic polynomial l^2 + 0.25, roots +-0.5i
    M = [[0.0, 1.0], [-0.25, 0.0]]
    assert spectral_radius(M) == pytest.approx(0.5, abs=1e-12)
    assert spectral_radius_poly(M) == pytest.approx(0.5, abs=1e-12)


def test_spectral_radius_matches_polynomial_oracle():
    rng = np.random.default_rng(1)
    for n in range(1, 7):
        M = rng.normal(size=(n, n))
        assert spectral_radius(M) == pytest.approx(spectral_radius_poly(M), rel=1e-8)


def test_spectral_radius_errors():
    with pytest.raises(ValidationError):
        spectral_radius(np.zeros((2, 3)))
    with pytest.raises(ValidationError):
        spectral_radius([[np.nan]])
    assert spectral_radius(np.zeros((3, 3))) == 0.0


def test_stationary_mean_scalar():
    # DERIVED by long-run simulation of x(t) = 0.9 x(t-1) + 0.5: 2 * 5 + 1
    assert stationary_blanket_mean([[0.9]], [[2.0]], [1.0], [0.5])[0] == pytest.approx(11.0, abs=1e-10)


def test_stationary_mean_matches_series_oracle():
    rng = np.random.default_rng(2)
    for k in range(1, 6):
        Q = unit_radius_basis(k, seed=k)
        A = 0.8 * Q
        C = rng.normal(size=(7, k))
        d = rng.normal(size=7)
        b = rng.normal(size=k)
        np.testing.assert_allclose(stationary_blanket_mean(A, C, d, b),
                                   stationary_mean_neumann(A, C, d, b), rtol=1e-9, atol=1e-9)


def test_stationary_mean_unstable_raises():
    with pytest.raises(InstabilityError):
        stationary_blanket_mean([[1.0]], [[1.0]], [0.0], [1.0])
    with pytest.raises(InstabilityError):
        stationary_blanket_mean(1.0 * unit_radius_basis(3), np.eye(3), np.zeros(3), np.ones(3))


def test_directional_derivative_scalar():
    # DERIVED: 1 * (1/0.5) * 1 * (1/0.5) * 1, cross-checked by central difference
    val = violation_directional_derivative([[0.5]], [[1.0]], [1.0], [1.0], [[1.0]])
    assert val == pytest.approx(4.0, abs=1e-12)
    fd = central_difference(np.array([[0.5]]), np.array([[1.0]]), np.zeros(1), np.ones(1),
                            np.ones(1), np.array([[1.0]]))
    assert fd == pytest.approx(4.0, rel=1e-6)


def test_directional_derivative_zero_direction():
    assert violation_directional_derivative(0.3 * np.eye(2), np.eye(2), [1, 2], [1, 1],
                                            np.zeros((2, 2))) == 0.0


def test_unit_radius_basis_is_orthogonal():
    for k in (1, 2, 4, 6):
        Q = unit_radius_basis(k, seed=3)
        np.testing.assert_allclose(Q @ Q.T, np.eye(k), atol=1e-12)
        assert spectral_radius(materialize_abb(0.7, Q)) == pytest.approx(0.7, abs=1e-12)


def test_model_params_validation():
    A = enforce_mb_zeros(0.1 * np.ones((7, 7)), DIMS)
    p = ModelParams(DIMS, A, None, 0.5)
    assert p.A_bb.shape == (3, 3)
    with pytest.raises(ValidationError):
        ModelParams(DIMS, A, None, 0.2)
    with pytest.raises(ValidationError):
        ModelParams(DIMS, 0.1 * np.ones((7, 7)), None, 0.5)
    q = p.with_rho(0.9, unit_radius_basis(3))
    assert q.rho == 0.9 and has_mb_zeros(q.A, DIMS)
    assert spectral_radius(q.A_bb) == pytest.approx(0.9)
    assert RHO_BOUNDS == (0.30, 0.96)


def test_emission_model_requires_positive_definite():
    good = {r: np.eye(2) for r in "SBZ"}
    C = {r: np.ones((2, 1)) for r in "SBZ"}
    off = {r: np.zeros(2) for r in "SBZ"}
    EmissionModel(C, off, good)
    with pytest.raises(ValidationError):
        EmissionModel(C, off, {**good, "B": np.array([[1.0, 2.0], [2.0, 1.0]])})
    with pytest.raises(ValidationError):
        EmissionModel(C, off, {"S": np.eye(2)})


def test_signature_digest_depends_on_partition_only():
    a = make_signature([0, 1, 1, 2], DIMS)
    b = make_signature([0, 1, 1, 2], DIMS)
    c = make_signature([0, 1, 2, 2], DIMS)
    assert a.digest() == b.digest() != c.digest()
    assert not a.support_A[forbidden_mask(DIMS)].any()
