import numpy as np
import pytest

from hamflow.dichotomy import (
    EDThresholds,
    atkinson_check,
    bounded_solution_witness,
    classify_family,
    detect_ed,
    nonoscillation_check,
    principal_angle,
    uwd_test,
)
from hamflow.hamiltonian import constant_field, perturb_h2
from hamflow.riccati_weyl import weyl_minus, weyl_plus

from conftest import random_spn_field


def test_hyperbolic_constant_field_is_ed():
    f = constant_field([[-1.0]], [[0.0]], [[0.0]])
    rep = detect_ed(f, T_max=64.0)
    assert rep.verdict == "ED"
    assert abs(rep.beta_hat - 1.0) <= 0.05
    assert rep.eta_hat >= 1.0


def test_elliptic_constant_field_is_not_ed():
    # eigenvalues +-i: bounded rotation, no dichotomy
    f = constant_field([[0.0]], [[-1.0]], [[1.0]])
    rep = detect_ed(f, T_max=128.0)
    assert rep.verdict == "noED"


def test_parabolic_constant_field_is_not_ed():
    # nilpotent generator: polynomial growth only
    f = constant_field([[0.0]], [[0.0]], [[1.0]])
    rep = detect_ed(f, T_max=128.0)
    assert rep.verdict == "noED"


def test_ed_iff_spectrum_off_the_imaginary_axis():
    rng = np.random.default_rng(1234)
    tested_ed = tested_no = 0
    while tested_ed < 8 or tested_no < 8:
        want_ed = tested_ed < 8
        f = random_spn_field(rng, h2_pos=want_ed, h3_pos=True)
        re = np.abs(np.real(np.linalg.eigvals(f.constant_matrix())))
        margin = float(np.min(re))
        # condition the draw away from the boundary where any finite-T
        # detector is legitimately inconclusive
        if want_ed:
            if margin < 0.2:
                continue
            assert detect_ed(f, T_max=256.0).verdict == "ED"
            tested_ed += 1
        else:
            if margin > 1e-9:
                continue
            assert detect_ed(f, T_max=256.0).verdict == "noED"
            tested_no += 1


def test_detect_ed_flips_across_the_critical_parameter(ex2):
    below = detect_ed(perturb_h2(ex2, 0.99), T_max=512.0)
    above = detect_ed(perturb_h2(ex2, 1.01), T_max=512.0)
    assert below.verdict == "ED"
    assert above.verdict == "noED"


def test_detect_ed_inconclusive_at_tiny_horizon(ex2):
    rep = detect_ed(perturb_h2(ex2, 1.0 - 1e-7), T_max=8.0)
    assert rep.verdict == "inconclusive"


def test_thresholds_can_be_overridden():
    f = constant_field([[-1.0]], [[0.0]], [[0.0]])
    rep = detect_ed(f, T_max=64.0, thresholds={"beta_min": 0.5})
    assert rep.verdict == "ED"
    assert rep.thresholds.beta_min == 0.5
    strict = detect_ed(f, T_max=64.0, thresholds={"beta_min": 10.0})
    assert strict.verdict != "ED"


def test_report_serialization_roundtrip():
    f = constant_field([[-1.0]], [[0.0]], [[0.0]])
    rep = detect_ed(f, T_max=32.0)
    d = rep.to_dict()
    assert d["verdict"] == "ED"
    assert isinstance(rep.to_json(), str)


def test_nonoscillation_follows_ed_on_ex2(ex2):
    rep = detect_ed(ex2, T_max=64.0)
    nc = nonoscillation_check(ex2, rep)
    assert nc.holds
    assert nc.smallest_top_singular_value > 1e-8


def test_nonoscillation_fails_when_plane_turns_vertical(ex1):
    # swapped variables make the forward plane vertical for this field
    from hamflow.hamiltonian import swap_variables

    g = swap_variables(ex1)
    rep = detect_ed(g, T_max=64.0)
    assert rep.verdict == "ED"
    nc = nonoscillation_check(g, rep)
    assert not nc.holds


def test_uwd_holds_on_ex3(ex3):
    rep = uwd_test(ex3)
    assert rep.verdict is True
    assert rep.t0_hat <= 1.0


def test_uwd_fails_for_oscillatory_field():
    f = constant_field([[0.0]], [[-4.0]], [[1.0]])  # eigenvalues +-2i
    rep = uwd_test(f, t_max=30.0)
    assert rep.verdict is False


def test_principal_angle_extremes():
    F = np.array([[1.0], [0.0]])
    G = np.array([[0.0], [1.0]])
    assert principal_angle(F, F) <= 1e-12
    assert abs(principal_angle(F, G) - np.pi / 2) <= 1e-12


def test_atkinson_holds_with_definite_weight(ex3):
    rep = atkinson_check(ex3)
    assert rep.satisfied
    assert rep.lambda_min > 0


def test_atkinson_fails_with_h2_zero(abnormal):
    rep = atkinson_check(abnormal)
    assert not rep.satisfied
    z0 = np.asarray(rep.witness["z0"])
    # the constant solution (1, 0) never meets the weight
    assert abs(abs(z0[0]) - 1.0) <= 1e-6
    assert abs(z0[1]) <= 1e-6


def test_bounded_witness_on_abnormal_field(abnormal):
    rep = bounded_solution_witness(abnormal, abnormal.flow.origin(), T=16.0)
    assert rep.found
    z0 = rep.z0 / np.linalg.norm(rep.z0)
    assert abs(z0[1]) <= 1e-6
    assert rep.growth_ratio <= 1.5


def test_classify_ex1_is_definite_case(ex1):
    rep = classify_family(ex1, which="H3")
    assert rep.alternative == "O1"
    assert rep.which == "H3"
