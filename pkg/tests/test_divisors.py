import numpy as np
import pytest

from divisors.measure import measure_estimate
from divisors.melnikov import (
    SPECS,
    divisor_terms,
    evaluate,
    excluded_mask,
    melnikov_member,
    shifted_sup_norm,
)
from divisors.small_divisors import (
    TWO_NINTHS,
    FrequencyBox,
    bracket_l,
    delta,
    divisor_min,
    highprec_gap,
    l1_ball,
)
from spectrum.sites import TangentialSet
from spectrum.twist import freq_amp


def test_frequency_box_parameters():
    box = FrequencyBox(TangentialSet((3, 2)), 0.1)
    assert box.tau == 13
    assert box.b == pytest.approx(1.1)
    assert box.gamma == pytest.approx(0.1**2.2)
    assert box.gamma_star == pytest.approx(box.gamma**3)
    assert box.gamma_n == pytest.approx(2 * box.gamma)
    assert box.with_eps(0.05).eps == 0.05
    assert box.corners().shape == (4, 2)


@pytest.mark.parametrize(
    "kwargs",
    [{"eps": 0.0}, {"eps": 1.0}, {"eps": 0.1, "a": 1.5}, {"eps": 0.1, "tau": 2.0}],
)
def test_frequency_box_rejects_bad_parameters(kwargs):
    with pytest.raises(ValueError):
        FrequencyBox(TangentialSet((3, 2)), **kwargs)


def test_bracket_l_and_ball():
    assert bracket_l((0, 0)) == 1
    assert bracket_l((2, -3)) == 5
    assert len(l1_ball(2, 1)) == 5
    assert len(l1_ball(2, 2, include_zero=False)) == 12
    assert all(sum(abs(x) for x in ell) <= 3 for ell in l1_ball(3, 3))


def test_delta_exact_and_float_agree():
    S = TangentialSet((3, 2))
    record = delta(S, 1, (1, 0), 1, 4, 1, 7)
    assert record.constraint_ok
    assert record.value == pytest.approx(np.sqrt(3) + 2 - np.sqrt(7))
    assert highprec_gap(record) < 1e-14
    assert not delta(S, 1, (1, 0), 1, 4, 1, 6).constraint_ok
    assert delta(S, 1, (0, 0), 1, 5, 1, 5).trivial
    assert delta(S, 1, (0, 0), 1, 5, 1, 5).exact.is_zero()
    with pytest.raises(ValueError):
        delta(S, 1, (1, 1), 1, 4, 1, 9)


def test_divisor_minimum_is_positive_and_stable():
    scan = divisor_min(TangentialSet((3, 2)), 1, 300, stability_check=True)
    assert scan.min_value > 0
    assert not scan.argmin.exact.is_zero()
    assert scan.argmin.constraint_ok
    assert scan.min_doubled <= scan.min_value
    assert scan.branch_min >= TWO_NINTHS - 1e-12


def test_divisor_scan_is_thread_independent():
    S = TangentialSet((5, 2))
    serial = divisor_min(S, 2, 100, stability_check=False)
    threaded = divisor_min(S, 2, 100, stability_check=False, threads=3)
    assert serial.min_value == threaded.min_value
    assert serial.argmin.ell == threaded.argmin.ell


@pytest.mark.slow
@pytest.mark.parametrize("sites", [(3, 2), (5, 2), (7, 3, -2)])
def test_divisor_lower_bound_acceptance(sites):
    scan = divisor_min(TangentialSet(sites), 1, 10_000, stability_check=True)
    assert scan.min_value > 0
    assert scan.stable
    assert scan.branch_min >= TWO_NINTHS - 1e-12


def test_first_order_divisor_order_checked():
    with pytest.raises(ValueError):
        divisor_min((3, 2), 7, 10)


def test_g0_detects_rational_dependence():
    S = TangentialSet((9, 1))
    box = FrequencyBox(S, 0.1)
    result = melnikov_member(S.omega_bar, "g0", box, 5, 10)
    assert not result.passed
    assert result.worst.ell == (1, -3)
    assert result.worst.margin < 0


def test_generic_frequency_passes_small_families():
    S = TangentialSet((3, 2))
    box = FrequencyBox(S, 0.1)
    omega = S.omega_bar + 0.01 * np.array([0.3, 0.7])
    result = melnikov_member(omega, ["g0", "g1"], box, 3, 10)
    assert result.passed
    assert set(result.coverage) == {"g0", "g1"}


@pytest.mark.parametrize("spec", SPECS)
def test_divisor_tables_and_mask(spec, rng):
    S = TangentialSet((3, 2))
    box = FrequencyBox(S, 0.1, gamma_scale=50.0)
    table = divisor_terms(spec, box, 3, 12)
    assert len(table) > 0
    assert "complete_within" in table.coverage
    zetas = box.sample_zeta(rng, 50)
    omegas = freq_amp(S, zetas, box.eps)
    values = evaluate(table, omegas, zetas, box.eps)
    _, _, _, threshold = table.arrays(S.nu)
    expected = np.any(np.abs(values) < threshold, axis=1)
    np.testing.assert_array_equal(excluded_mask(table, omegas, zetas, box.eps), expected)


def test_unknown_family():
    with pytest.raises(KeyError):
        divisor_terms("g9", FrequencyBox(TangentialSet((3, 2)), 0.1), 2, 5)


def test_shifted_sup_norm_bounds_linear_frequencies():
    box = FrequencyBox(TangentialSet((3, 2)), 0.05)
    assert shifted_sup_norm(box) >= np.sqrt(3) - 0.05


def test_measure_is_reproducible_and_shard_thread_independent():
    box = FrequencyBox(TangentialSet((16, 9)), 0.01, tau=3.5, gamma_scale=5e4)
    kwargs = dict(samples=10_000, seed=7, L_max=6)
    first = measure_estimate(box, "g1", [0.01, 0.005], shards=2, **kwargs)
    second = measure_estimate(box, "g1", [0.01, 0.005], shards=2, threads=2, **kwargs)
    assert first.to_json() == second.to_json()
    for row in first.rows:
        assert row.ci_lo <= row.fraction <= row.ci_hi
        assert row.samples == 10_000


def test_measure_needs_enough_samples():
    box = FrequencyBox(TangentialSet((3, 2)), 0.1)
    with pytest.raises(ValueError):
        measure_estimate(box, "g0", [0.1], samples=100, seed=1, L_max=5)


@pytest.mark.slow
def test_excluded_measure_scales_like_eps_to_the_a():
    box = FrequencyBox(TangentialSet((16, 9)), 0.01, a=0.2, tau=3.5, gamma_scale=5e4)
    table = measure_estimate(
        box, "g1", [0.01, 0.007, 0.005, 0.0035], samples=100_000, seed=7, L_max=10, threads=4
    )
    assert table.monotone
    assert table.slope_ok, (table.slope, table.predicted_slope)
