import numpy as np
import pytest

from cdmbd.exceptions import EmptyBlanketError, NonConvergenceError, ValidationError
from cdmbd.requirements import (Multipliers, Requirement, RequirementProfile, certificate,
                                dual_ascent_step, load_profiles, marginal_violation_delta,
                                profile_violations, read_out, violation)

from conftest import ESPRESSO, TRAVEL_MUG
from oracles import brute_membership_cost


def _reqs(profile):
    return [(r.channel, r.tau, r.eps, r.weight) for r in profile.requirements]


def _mu(T_in=80.0, T_out=31.0, r=50.0, w=8.0):
    return np.array([T_in, T_out, 1000.0, 500.0, r, 1.0 / r, w])


def test_requirement_validation():
    with pytest.raises(ValidationError):
        Requirement("x", 7, 1.0, 0.0, 1.0)
    with pytest.raises(ValidationError):
        Requirement("x", 1, 1.0, -1.0, 1.0)
    with pytest.raises(ValidationError):
        Requirement("x", 1, 1.0, 0.0, 0.0)
    with pytest.raises(ValidationError):
        Requirement("x", 1, np.inf, 0.0, 1.0)
    with pytest.raises(ValidationError):
        RequirementProfile("p", ())
    with pytest.raises(ValidationError):
        RequirementProfile("p", (Requirement("a", 1, 1, 0, 1), Requirement("a", 2, 1, 0, 1)))


def test_violation_dead_zone():
    r = Requirement("R1", 1, 47.5, 7.5, 1.5)
    assert violation(r, 31.0) == pytest.approx(13.5)  # 9 below the lower edge, times 1.5
    assert violation(r, 40.0) == 0.0
    assert violation(r, 55.0) == 0.0
    assert violation(r, 56.0) == pytest.approx(1.5)


def test_profile_violations_double_wall():
    v_tm = profile_violations(TRAVEL_MUG, _mu(T_out=31.0))
    assert v_tm[0] == 0.0
    v_es = profile_violations(ESPRESSO, _mu(T_out=31.0))
    assert v_es[0] == pytest.approx(13.5)


def test_read_out_needs_seven_channels():
    with pytest.raises(ValidationError):
        read_out(ESPRESSO, np.zeros(6))
    np.testing.assert_array_equal(read_out(ESPRESSO, _mu()), [31.0, 80.0, 8.0, 50.0])


def test_profile_roundtrip_and_yaml(tmp_path):
    assert RequirementProfile.from_dict(ESPRESSO.to_dict()) == ESPRESSO
    p = tmp_path / "p.yaml"
    import yaml
    p.write_text(yaml.safe_dump({"profiles": [ESPRESSO.to_dict(), TRAVEL_MUG.to_dict()]}))
    assert load_profiles(p) == [ESPRESSO, TRAVEL_MUG]
    assert ESPRESSO.with_tau(0, 60.0).requirements[0].tau == 60.0


def test_multipliers_validation():
    with pytest.raises(ValidationError):
        Multipliers(np.array([-1.0]))
    with pytest.raises(ValidationError):
        Multipliers(np.array([16.0]), lambda_max=15.0)
    m = Multipliers.zeros(3)
    assert m.l1 == 0.0 and m.lam.shape == (3,)


def test_dual_ascent_step():
    m = Multipliers(np.array([0.0, 14.9, 3.0]), 15.0, 0.12)
    out = dual_ascent_step(m, [1.0, 10.0, 0.0])
    np.testing.assert_allclose(out.lam, [0.12, 15.0, 3.0])
    same = dual_ascent_step(m, np.zeros(3))
    np.testing.assert_array_equal(same.lam, m.lam)
    with pytest.raises(ValidationError):
        dual_ascent_step(m, [1.0])


def test_certificate_fixed_point_check():
    m = Multipliers(np.array([15.0, 0.0, 2.0]), 15.0, 0.12)
    cert = certificate(m, [3.0, 0.0, 0.0])
    assert cert.fixed_point
    np.testing.assert_array_equal(cert.saturated, [True, False, False])
    with pytest.raises(NonConvergenceError):
        certificate(m, [3.0, 0.0, 0.5])
    assert not certificate(m, [3.0, 0.0, 0.5], strict=False).fixed_point


def _node_means(rng, n=8):
    Y = np.tile(_mu(T_out=83.0), (n, 1))
    Y[:, [0, 1, 4, 6]] += rng.normal(size=(n, 4))
    return Y


def test_marginal_delta_zero_multipliers(rng):
    Y = _node_means(rng)
    m = Multipliers.zeros(4)
    for i in range(8):
        assert marginal_violation_delta(ESPRESSO, m, [0, 1, 2], i, Y) == 0.0


def test_marginal_delta_centroid_node_is_free(rng):
    Y = _node_means(rng)
    Y[5] = Y[[0, 1, 2]].mean(axis=0)
    m = Multipliers(np.full(4, 3.0))
    assert marginal_violation_delta(ESPRESSO, m, [0, 1, 2], 5, Y) == pytest.approx(0.0, abs=1e-12)


def test_marginal_delta_matches_brute_force(rng):
    Y = _node_means(rng)
    Y[:, 1] = rng.uniform(30.0, 60.0, size=8)
    lam = np.array([2.0, 0.5, 1.0, 3.0])
    m = Multipliers(lam)
    B = [1, 3, 4]
    for i in range(8):
        got = marginal_violation_delta(ESPRESSO, m, B, i, Y)
        assert got == pytest.approx(brute_membership_cost(_reqs(ESPRESSO), lam, Y, B, i), abs=1e-10)


def test_marginal_delta_positive_when_target_far_below(rng):
    # every node sits near 83 C while the target is 25 C
    prof = RequirementProfile("low", (Requirement("R1", 1, 25.0, 3.5, 3.0),))
    Y = _node_means(rng, 12)
    Y[:, 1] = 83.0 + 0.3 * rng.normal(size=12)
    m = Multipliers(np.array([5.0]))
    B = [int(np.argmin(Y[:, 1]))]
    outside = [i for i in range(12) if i not in B]
    assert all(marginal_violation_delta(prof, m, B, i, Y) > 0 for i in outside)


def test_marginal_delta_empty_blanket_errors(rng):
    Y = _node_means(rng)
    m = Multipliers(np.ones(4))
    with pytest.raises(EmptyBlanketError):
        marginal_violation_delta(ESPRESSO, m, [], 0, Y)
    with pytest.raises(EmptyBlanketError):
        marginal_violation_delta(ESPRESSO, m, [2], 2, Y)
