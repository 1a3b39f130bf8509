"""End-to-end checks, one test per pinned contract.

Each test delegates to the matching self-test check and prints its
single PASS/FAIL line with the measured numbers.
"""

from ctsr import acceptance


def _assert_passed(result):
    line = (f"{'PASS' if result.passed else 'FAIL'} {result.name} "
            f"({result.elapsed:.2f}s): {result.details}")
    print(line)
    assert result.passed, line


def test_scalar_library_counts_exact():
    _assert_passed(acceptance.check_scalar_library_counts())


def test_convective_template_collapses_to_three_forms():
    _assert_passed(acceptance.check_template_canonicalization())


def test_truth_terms_present_and_counts_recorded():
    _assert_passed(acceptance.check_truth_terms_in_libraries())


def test_simulated_2d_recovery_within_five_percent():
    _assert_passed(acceptance.check_burgers_end_to_end())


def test_manufactured_recoveries_with_knee_selected_tolerance():
    _assert_passed(acceptance.check_manufactured_recoveries())


def test_rotation_reflection_and_lattice_suite():
    _assert_passed(acceptance.check_rotation_reflection_suite())


def test_weak_axis_regression_is_worst_and_stacking_helps():
    _assert_passed(acceptance.check_anisotropic_axis_diagnostic())


def test_solver_unit_contracts_hold_exactly():
    _assert_passed(acceptance.check_solver_unit_contracts())


def test_stacked_regression_is_faster_than_per_component():
    _assert_passed(acceptance.check_mode_timing_direction())


def test_sweep_front_is_clean_and_knee_suggestion_in_range():
    _assert_passed(acceptance.check_sweep_knee_suggestion())
