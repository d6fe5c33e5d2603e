"""Distribution protocol: Table-I states, probabilities, closed forms."""

import math

import numpy as np
import pytest

from starsense import (
    BeamSplitter,
    DecompositionFailure,
    DensityOperator,
    FockSpace,
    FockState,
    LinkParams,
    SourceParams,
    build_source_state,
    central_interferometer,
    component_weights_closed_form,
    decompose_conditional,
    direct_transmission_success,
    ghz_state,
    normalization_report,
    run_distribution,
    success_prob_closed_form,
    verify_table1,
)
from starsense.distribution import (
    PATTERN_PAIRS,
    SUCCESS_PATTERNS,
    TABLE1_STATES,
    component_probs_closed_form,
)

from conftest import PATTERN_12

A2 = 0.8
B2 = 0.2


# --- source states ---------------------------------------------------------

def test_source_all_vacuum():
    state = build_source_state(SourceParams(1.0, 0.0))
    assert state.amplitude((0, 0)) == 1.0


def test_source_balanced():
    state = build_source_state(SourceParams.from_intensity(0.5))
    assert state.amplitude((0, 0)) == pytest.approx(1 / math.sqrt(2))
    assert state.amplitude((1, 1)) == pytest.approx(1 / math.sqrt(2))


def test_source_default_amplitudes():
    state = build_source_state(SourceParams.from_intensity(A2))
    assert state.amplitude((0, 0)) == pytest.approx(0.8944271909999159)
    assert state.amplitude((1, 1)) == pytest.approx(0.4472135954999579)


def test_source_rejects_unnormalized():
    with pytest.raises(ValueError):
        SourceParams(1.0, 0.5)


# --- Table I ----------------------------------------------------------------

def test_table1_all_patterns_pass(source):
    report = verify_table1(src=source)
    assert report.all_passed
    for check in report.checks:
        assert check.fidelity >= 1.0 - 1e-9
        assert check.sign_matches


def test_table1_negative_control(source):
    network = list(central_interferometer())
    network[0] = BeamSplitter(0, 1, 0.6)
    report = verify_table1(network, src=source)
    assert not report.all_passed
    assert report.failing_patterns()


def test_lossless_conditional_matches_ghz(source):
    result = run_distribution(source, LinkParams(1.0))
    for pattern in SUCCESS_PATTERNS:
        cond = result.conditionals[pattern]
        assert cond.rho.expectation_pure(ghz_state(pattern)) >= 1.0 - 1e-10


def test_lossless_success_probability(source):
    result = run_distribution(source, LinkParams(1.0))
    # a^4 b^4 / 2 with a^2=0.8, b^2=0.2
    assert result.conditionals[PATTERN_12].probability == pytest.approx(0.0128, abs=1e-15)


def test_lossless_ghz_weight_is_one(source):
    result = run_distribution(source, LinkParams(1.0))
    cond = result.conditionals[PATTERN_12]
    assert cond.ghz_weight == pytest.approx(1.0, abs=1e-10)
    assert cond.residue_weight() == pytest.approx(0.0, abs=1e-10)


# --- probability bookkeeping ---------------------------------------------------

@pytest.mark.parametrize("eta", [1.0, 0.8, 0.5, 0.2, 0.05])
def test_all_outcomes_sum_to_one(source, eta):
    result = run_distribution(source, LinkParams(eta))
    assert sum(result.outcome_probabilities.values()) == pytest.approx(1.0, abs=1e-10)


def test_success_outcomes_match_conditionals(source):
    result = run_distribution(source, LinkParams(0.6))
    for pattern in SUCCESS_PATTERNS:
        occ = tuple(1 if d in pattern else 0 for d in (1, 2, 3, 4))
        assert result.outcome_probabilities[occ] == pytest.approx(
            result.conditionals[pattern].probability, abs=1e-14
        )


def test_pattern_pair_symmetry(source):
    for eta in np.linspace(0.1, 1.0, 10):
        result = run_distribution(source, LinkParams(float(eta)))
        for first, second in PATTERN_PAIRS:
            a = result.conditionals[first]
            b = result.conditionals[second]
            assert a.probability == pytest.approx(b.probability, rel=1e-12)
            # same mixed state up to a global (unobservable) phase
            assert np.max(np.abs(a.rho.matrix - b.rho.matrix)) < 1e-12


def test_ghz_weight_monotone_in_eta(source):
    etas = np.linspace(0.02, 1.0, 20)
    weights = [
        run_distribution(source, LinkParams(float(e))).conditionals[PATTERN_12].ghz_weight
        for e in etas
    ]
    assert all(b >= a - 1e-12 for a, b in zip(weights, weights[1:]))


def test_residues_are_photon_number_states(source):
    result = run_distribution(source, LinkParams(0.4))
    cond = result.conditionals[PATTERN_12]
    assert cond.ghz_weight + cond.residue_weight() == pytest.approx(1.0, abs=1e-10)
    for weight, state in cond.residues:
        assert weight > 0.0
        assert len(state.amplitudes) == 1  # basis kets only


def test_exact_ghz_weight_value(source):
    # p = a^4 / (a^2 + (1-eta) b^2)^2, from the exact amplitude bookkeeping
    for eta in (1.0, 0.7, 0.3):
        result = run_distribution(source, LinkParams(eta))
        expected = A2**2 / (A2 + (1 - eta) * B2) ** 2
        assert result.conditionals[PATTERN_12].ghz_weight == pytest.approx(
            expected, abs=1e-12
        )


def test_eta_zero_has_no_successes(source):
    result = run_distribution(source, LinkParams(0.0))
    for pattern in SUCCESS_PATTERNS:
        cond = result.conditionals[pattern]
        assert cond.probability == 0.0
        assert cond.rho is None


# --- decomposition ------------------------------------------------------------

def test_decompose_pure_ghz():
    p, residues = decompose_conditional(DensityOperator.from_pure(ghz_state()))
    assert p == pytest.approx(1.0, abs=1e-12)
    assert residues == []


def test_decompose_rejects_extra_coherence():
    space = FockSpace(2, 2)
    plus = FockState(space, {(1, 0): 0.8, (0, 1): 0.6})
    other = FockState(space, {(0, 0): 0.6, (1, 1): 0.8})
    mat = 0.5 * DensityOperator.from_pure(plus).matrix
    mat += 0.5 * DensityOperator.from_pure(other).matrix
    with pytest.raises(DecompositionFailure):
        decompose_conditional(DensityOperator(space, mat))


# --- closed forms ---------------------------------------------------------------

def test_closed_form_lossless_value(source):
    assert success_prob_closed_form(source, 1.0) == pytest.approx(0.0128, abs=1e-15)


def test_closed_form_vanishes_without_transmission(source):
    assert success_prob_closed_form(source, 0.0) == 0.0


def test_closed_form_equals_exact_single_pattern(source):
    for eta in (1.0, 0.5, 0.25, 0.1):
        exact = run_distribution(source, LinkParams(eta)).conditionals[PATTERN_12]
        assert exact.probability == pytest.approx(
            success_prob_closed_form(source, eta), rel=1e-10
        )


def test_normalization_report_flags(source):
    report = normalization_report(source, np.linspace(0.05, 1.0, 8))
    assert report.ratio_is_constant(rel_tol=0.01)
    # the pattern pair carries twice the closed-form rate
    for rs, rp in zip(report.ratio_single, report.ratio_pair):
        assert rs == pytest.approx(1.0, rel=1e-9)
        assert rp == pytest.approx(2.0, rel=1e-9)
    # printed component weights disagree with the exact ones at eta=1
    p_exact = report.weights_exact[-1][0]
    p_closed = report.weights_closed_form[-1][0]
    assert p_exact == pytest.approx(1.0, abs=1e-10)
    assert p_closed == pytest.approx(0.5, abs=1e-12)


def test_component_weight_ratio(source):
    # from the ratio of the printed component formulas
    for eta in (0.9, 0.5, 0.2):
        _, r1, r2 = component_weights_closed_form(source, eta)
        assert r2 / r1 == pytest.approx((1 - eta) * B2 / A2, rel=1e-12)


def test_component_weights_eta_to_zero_limit(source):
    p, _, _ = component_weights_closed_form(source, 1e-12)
    assert p == pytest.approx(A2**2 / 2.0, rel=1e-9)  # a^4 / (2 (a^2+b^2)^2)


def test_component_probs_shape(source):
    p0, p1, p2 = component_probs_closed_form(source, 0.5)
    assert p0 > p1 > p2 > 0


def test_direct_transmission_values():
    assert direct_transmission_success(1.0) == 1.0
    assert direct_transmission_success(0.5) == pytest.approx(0.0625)
    assert direct_transmission_success(10 ** (-20 / 10)) == pytest.approx(1e-8)


def test_scaling_exponents(source):
    # log-log slope vs eta in the small-eta regime: eta^2 for the
    # central-station closed form, eta^4 for direct transmission
    etas = np.logspace(-4, -2, 10)
    ours = [success_prob_closed_form(source, e) for e in etas]
    direct = [direct_transmission_success(e) for e in etas]
    slope_ours = np.polyfit(np.log10(etas), np.log10(ours), 1)[0]
    slope_direct = np.polyfit(np.log10(etas), np.log10(direct), 1)[0]
    assert slope_ours == pytest.approx(2.0, abs=1e-3)
    assert slope_direct == pytest.approx(4.0, abs=1e-12)


# --- link parameters --------------------------------------------------------------

def test_link_from_db():
    assert LinkParams.from_db(20.0).eta == pytest.approx(0.01)
    assert LinkParams.from_db(0.0).eta == 1.0


def test_link_from_km():
    assert LinkParams.from_km(100.0).eta == pytest.approx(0.01)  # 0.2 dB/km


def test_link_rejects_bad_eta():
    with pytest.raises(ValueError):
        LinkParams(1.5)


def test_table1_catalog_is_consistent():
    for pattern, (ket_a, ket_b) in TABLE1_STATES.items():
        assert sum(ket_a) == 2 and sum(ket_b) == 2
        assert tuple(a + b for a, b in zip(ket_a, ket_b)) == (1, 1, 1, 1)
        assert pattern in SUCCESS_PATTERNS
