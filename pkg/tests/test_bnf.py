from dataclasses import replace

import numpy as np
import pytest

from bnf.normal_form import (
    SMALLEST_BF_CUTOFF,
    approx_constant,
    expected_action_coefficient,
    full_bnf_degree4,
    lie_transform,
    linear_corrections,
    restricted_quartic_formula,
    solve_homological,
    weak_bnf,
)
from hamiltonian.polynomial import Monomial, poisson_bracket, project
from hamiltonian.zakharov import build_zakharov
from spectrum.sites import TangentialSet
from util import GenericityError


def action_pair(a, b):
    return Monomial(((a, 1), (a, -1), (b, 1), (b, -1)))


def test_expected_action_coefficients():
    assert expected_action_coefficient(action_pair(2, 2)) == pytest.approx(8 / (4 * np.pi))
    assert expected_action_coefficient(action_pair(2, -2)) == pytest.approx(-8 / np.pi)
    assert expected_action_coefficient(action_pair(1, 3)) == pytest.approx(3 / np.pi)
    assert expected_action_coefficient(action_pair(-1, 3)) == pytest.approx(-3 / np.pi)
    assert expected_action_coefficient(Monomial(((1, 1), (2, 1), (3, -1)))) is None


def test_homological_equation():
    H = build_zakharov(5)
    H2, H3 = H.homogeneous(2), H.homogeneous(3)
    F3 = solve_homological(H3)
    # {H2, F3} + H3 = 0 since no cubic monomial is resonant
    assert (poisson_bracket(F3, H2) + H3).max_abs() < 1e-12 * H3.max_abs()
    assert F3.conjugate_mismatch() < 1e-12


def test_lie_transform_removes_cubic_terms():
    H = build_zakharov(6)
    F3 = solve_homological(H.homogeneous(3))
    transformed = lie_transform(H, F3)
    assert transformed.homogeneous(3).max_abs() < 1e-12
    assert max(transformed.degrees()) == 4


def test_full_bnf_at_smallest_benjamin_feir_cutoff():
    report = full_bnf_degree4(SMALLEST_BF_CUTOFF)
    assert not report.degenerate
    assert report.checks["cubic_after_transform_ok"]
    assert report.checks["action_terms_ok"], report.offending[:5]
    assert report.checks["null_condition_ok"], report.class_max
    assert report.checks["quartic_lie_series_ok"], report.checks["quartic_lie_series_gap"]
    assert report.passed
    H_FB = report.normalized[4]
    bf_terms = [m for m in H_FB if sorted(j for j, _ in m) == [-1, 4, 4, 9]]
    for m in bf_terms:
        assert abs(H_FB.coeff(m)) <= report.tolerance * report.class_max["action"]


def test_lie_series_gap_gates_the_report():
    report = full_bnf_degree4(5)
    assert report.checks["quartic_lie_series_gap"] <= 1e-12 * report.extra["hat4"].max_abs()
    checks = dict(report.checks, quartic_lie_series_ok=False)
    assert not replace(report, checks=checks).passed


def test_full_bnf_below_benjamin_feir_cutoff_is_flagged():
    report = full_bnf_degree4(4)
    assert report.degenerate
    assert report.class_max["benjamin_feir_terms"] == 0


@pytest.mark.slow
def test_null_condition_at_cutoff_twelve():
    report = full_bnf_degree4(12)
    assert report.passed, report.offending[:5]
    assert report.class_max["benjamin_feir_relative"] <= 1e-9
    assert report.checks["action_terms_max_relative_error"] <= 1e-9


def test_full_bnf_extended_precision():
    report = full_bnf_degree4(5, "extended")
    assert report.tolerance == pytest.approx(1e-15)
    assert report.checks["action_terms_max_relative_error"] <= 1e-12


def test_report_json_round_trip_fields():
    report = full_bnf_degree4(4)
    payload = report.to_json()
    assert payload["mode"] == "full"
    assert payload["input_hash"] == build_zakharov(4).content_hash()
    assert set(payload["normalized"]) == {"3", "4"}


def test_restricted_quartic_formula():
    S = TangentialSet((3, 2, -1))
    table = restricted_quartic_formula(S)
    assert table[action_pair(3, 3)] == pytest.approx(27 / (4 * np.pi))
    assert table[action_pair(3, 2)] == pytest.approx(3 * 4 / np.pi)
    assert table[action_pair(2, -1)] == pytest.approx(-2 / np.pi)
    same_sign_only = restricted_quartic_formula(S, opposite_sign_coupling=False)
    assert same_sign_only[action_pair(2, -1)] == 0.0


@pytest.mark.parametrize("sites", [(3, 2), (3, -2), (5, 2, -3)])
def test_weak_bnf_matches_tangential_formula(sites):
    report = weak_bnf(TangentialSet(sites))
    assert report.checks["quartic_tangential_ok"], report.offending
    assert report.class_max["nontrivial_low_outside"] <= 1e-9
    transformed = report.extra["transformed"]
    S = TangentialSet(sites)
    low_cubic = project(transformed.homogeneous(3), "dz_le", S, 1)
    assert len(low_cubic) == 0


def test_weak_bnf_reports_same_sign_only_deviation():
    report = weak_bnf(TangentialSet((3, -2)), opposite_sign_coupling=False)
    assert not report.checks["quartic_tangential_ok"]
    assert report.checks["same_sign_only_table_deviation"] > 0.1
    assert all(row["kind"] == "quartic_tangential" for row in report.offending)


def test_weak_bnf_single_step_keeps_range_terms():
    report = weak_bnf(TangentialSet((3, 2)), steps=1)
    assert len(report.F4) == 0
    assert report.class_max["nontrivial_low_outside"] is None
    with pytest.raises(NotImplementedError):
        weak_bnf(TangentialSet((3, 2)), steps=3)


def test_weak_bnf_rejects_non_generic_sites():
    with pytest.raises(GenericityError) as info:
        weak_bnf(TangentialSet((9, 4)))
    assert info.value.certificate["order"] == 4


def test_approximate_constant_of_motion():
    K, out = approx_constant(6)
    assert out["ok"], out["residual"]
    assert set(K.degrees()) == {2, 3, 4}


@pytest.mark.slow
def test_approximate_constant_of_motion_at_cutoff_ten():
    _, out = approx_constant(10)
    assert out["ok"], out["residual"]


def test_linear_corrections_agree_with_closed_form():
    out = linear_corrections(TangentialSet((3, 2)), [1.0, 1.5], cutoff=9)
    assert out["ok"], out["max_relative_error"]
    assert out["m1_normalization"] == "signed_square_over_pi"
    assert out["valid_range"] == 6
    assert set(out["table"]) == {j for j in range(-6, 7) if j not in (0, 2, 3)}
