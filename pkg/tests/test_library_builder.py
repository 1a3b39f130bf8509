import pytest

from ctsr.cases import CASES, case_tensor_entries, case_tensor_library
from ctsr.library import (
    InputTensorSpec,
    LibrarySpec,
    build_scalar_library,
    build_tensor_library,
    enumerate_templates,
    independent_components,
    library_report,
)
from ctsr.terms import assign_suffixes, canonicalize, check_validity, template_text

U_IN = InputTensorSpec("u", 1, max_deriv=2, component_names=("u", "v", "w"))
P_IN = InputTensorSpec("p", 0, max_deriv=2)


def test_template_enumeration_velocity_only_p1():
    spec = LibrarySpec((U_IN,), P=1, target_order=1)
    texts = {template_text(t) for t in enumerate_templates(spec)}
    assert texts == {"1", "u[.]", "du[.]/dx[.]", "d2u[.]/dx[.]dx[.]",
                     "u[.]*du[.]/dx[.]", "u[.]*d2u[.]/dx[.]dx[.]"}


def test_template_enumeration_velocity_pressure_p1():
    # {1,u,p} x {1, du, d2u, dp, d2p}: 14 non-constant templates
    spec = LibrarySpec((U_IN, P_IN), P=1, target_order=1)
    templates = enumerate_templates(spec)
    assert len(templates) == 15
    texts = {template_text(t) for t in templates}
    assert "1" in texts
    expected = {
        "u[.]", "p", "du[.]/dx[.]", "dp/dx[.]", "d2u[.]/dx[.]dx[.]",
        "d2p/dx[.]dx[.]", "u[.]*du[.]/dx[.]", "u[.]*d2u[.]/dx[.]dx[.]",
        "u[.]*dp/dx[.]", "u[.]*d2p/dx[.]dx[.]", "p*du[.]/dx[.]",
        "p*d2u[.]/dx[.]dx[.]", "p*dp/dx[.]", "p*d2p/dx[.]dx[.]",
    }
    assert texts - {"1"} == expected


def test_template_enumeration_degenerate():
    spec = LibrarySpec((InputTensorSpec("u", 1, max_deriv=0),), P=0,
                       target_order=1)
    assert [template_text(t) for t in enumerate_templates(spec)] == ["1"]


def test_tensor_library_velocity_2nd_order_exact_set():
    lib = case_tensor_library("burgers2d")
    assert [t.text for t in lib] == sorted([
        "u[i]",
        "u[i] du[j]/dx[j]",
        "u[j] du[i]/dx[j]",
        "u[j] du[j]/dx[i]",
        "d2u[i]/dx[j]dx[j]",
        "d2u[j]/dx[i]dx[j]",
        "u[j] u[j] d2u[k]/dx[i]dx[k]",
        "u[j] u[j] d2u[i]/dx[k]dx[k]",
        "u[j] u[k] d2u[j]/dx[i]dx[k]",
        "u[j] u[k] d2u[i]/dx[j]dx[k]",
        "u[i] u[j] d2u[j]/dx[k]dx[k]",
        "u[i] u[j] d2u[k]/dx[j]dx[k]",
    ])


def test_tensor_library_matches_brute_force_enumeration():
    # independent route: public suffix assignment + validity + canonical
    # form over every template, no pruning shortcuts
    spec = CASES["burgers2d"].library_spec("tensor")
    expected = set()
    for template in enumerate_templates(spec):
        for term in assign_suffixes(template):
            if check_validity(term, spec.target_order).valid:
                expected.add(canonicalize(term).text)
    assert {t.text for t in case_tensor_library("burgers2d")} == expected


def test_even_slot_templates_contribute_nothing_to_vector_equation():
    template = enumerate_templates(
        LibrarySpec((U_IN,), P=2, target_order=1))[-1]
    # pick a template with an even slot count
    uu_du = tuple(t for t in enumerate_templates(
        LibrarySpec((U_IN,), P=2, target_order=1))
        if template_text(t) == "u[.]*u[.]*du[.]/dx[.]")
    assert len(uu_du) == 1
    terms = [t for t in assign_suffixes(uu_du[0])
             if check_validity(t, 1).valid]
    assert terms == []


def test_library_counts_and_uniqueness():
    # current implementation counts under the documented dedup convention
    # (gravity capped at multiplicity one); prior work reported
    # 17/74/34/115 for the same setups
    expected = {"burgers2d": 12, "convection2d": 97, "ns3d": 29,
                "giesekus3d": 72}
    for name, count in expected.items():
        case = CASES[name]
        lib = case_tensor_library(name)
        assert len(lib) == count
        texts = [t.text for t in lib]
        assert len(set(texts)) == len(texts)
        assert texts == sorted(texts)
        for t in lib:
            assert check_validity(t, case.target_order).valid


def test_ground_truth_terms_present_in_all_case_libraries():
    for name, case in CASES.items():
        texts = {t.text for t in case_tensor_library(name)}
        for term, _ in case.truth:
            assert term.text in texts, (name, term.text)


def test_gravity_has_no_derivative_candidates():
    texts = {t.text for t in case_tensor_library("convection2d")}
    assert "g[i] theta" in texts
    assert not any("dg" in t for t in texts)


def test_standalone_velocity_gradient_excluded_from_stress_library():
    texts = {t.text for t in case_tensor_library("giesekus3d")}
    assert "du[i]/dx[j]" not in texts
    assert "du[j]/dx[i]" not in texts
    # but velocity-gradient products survive
    assert "tau[i,k] du[j]/dx[k]" in texts
    assert "tau[j,k] du[i]/dx[k]" in texts


def test_scalar_library_counts():
    expected = {"burgers2d": 77, "convection2d": 374, "ns3d": 734,
                "giesekus3d": 1530}
    for name, count in expected.items():
        lib = build_scalar_library(CASES[name].library_spec("scalar"))
        assert len(lib) == count, name
        texts = [c.text for c in lib]
        assert len(set(texts)) == len(texts)


def test_scalar_library_contents_velocity_case():
    lib = build_scalar_library(CASES["burgers2d"].library_spec("scalar"))
    texts = {c.text for c in lib}
    assert {"u", "v", "u u", "u v", "v v", "u_x", "v v v_yx"} <= texts
    assert "1" not in texts
    # ordered mixed partials are distinct entries
    assert "u_xy" in texts and "u_yx" in texts


def test_scalar_library_standalone_exclusion_keeps_products():
    lib = build_scalar_library(CASES["giesekus3d"].library_spec("scalar"))
    texts = {c.text for c in lib}
    assert "u_x" not in texts and "w_z" not in texts
    assert "tau_xx u_x" in texts  # exclusion hits bare entries only
    assert "tau_xy_z" in texts    # bare stress gradients stay


def test_component_names():
    tau = InputTensorSpec("tau", 2, max_deriv=1, symmetric_base=True)
    comps = independent_components(tau, 3)
    assert comps == ["tau_xx", "tau_xy", "tau_xz", "tau_yy", "tau_yz",
                     "tau_zz"]
    assert independent_components(U_IN, 2) == ["u", "v"]
    g = InputTensorSpec("g", 1)
    assert independent_components(g, 2) == ["gx", "gy"]
    with pytest.raises(ValueError):
        independent_components(InputTensorSpec("q", 1, component_names=("a",)), 2)


def test_library_report_rows():
    entries = case_tensor_entries("burgers2d")
    text, rows = library_report(entries)
    assert len(rows) == 12
    assert rows[0]["index"] == 0
    assert rows[0]["term"] == "d2u[i]/dx[j]dx[j]"
    assert rows[0]["template"] == "d2u[.]/dx[.]dx[.]"
    assert "total: 12" in text
    empty_text, empty_rows = library_report([])
    assert empty_rows == [] and "total: 0" in empty_text
