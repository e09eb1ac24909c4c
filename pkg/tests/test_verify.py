"""Tests for the verification pipeline: reference solves, error norms,
Richardson gating, rate fits, report round-trips, and the independent oracles
that cross-check the analytic limit machinery."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from thincascade import fem, verify
from thincascade.fem import FemField
from thincascade.geometry import CascadeGeometry, geometry_preset
from thincascade.inner import InnerConfig, build_expansion
from thincascade.limit import solve_omega2
from thincascade.problems import CapabilityError, preset
from thincascade.verify import (
    ErrorPoint,
    ProfileApproximant,
    RateFit,
    StudyCase,
    StudyResult,
    acceptance_cases,
    composite_improves,
    convergence_study,
    error_norms,
    expansion_for,
    extrapolate_section_max,
    fd_limit_profile,
    fit_rate,
    limit_profile_discrepancy,
    manufactured_convergence,
    parse_report_csv,
    reference_ladder,
    reference_solve,
    region_mask,
    report_rows,
    richardson_h1,
    section_positions,
    study_point,
    taper_geometry,
)

TAPER = taper_geometry()


def small_case(**overrides) -> StudyCase:
    base = dict(
        case_id="t_small", preset_label="tp1", geometry_label="widening-taper",
        data=preset("tp1"), geometry=TAPER, eps_list=(0.3, 0.2, 0.15),
        approximant="omega2", region="full", norm="h1x", expected_rate=None,
        kappa=5.0, inner_h_factor=8.0,
    )
    base.update(overrides)
    return StudyCase(**base)


# ---------------------------------------------------------------------------
# Independent 1-D oracle vs the transmission solve
# ---------------------------------------------------------------------------

@pytest.mark.parametrize("name", ["tp0", "tp1", "tp2", "tp3"])
def test_fd_oracle_matches_transmission_solve(name):
    geom = geometry_preset("widening")
    assert limit_profile_discrepancy(geom, preset(name), n=6000) <= 1e-6


def test_fd_oracle_asymmetric_heights():
    geom = CascadeGeometry(h1=1.0, h2=0.6, l=0.8,
                           profile=geometry_preset("widening", h1=1.0, h2=0.6,
                                                   l=0.8).profile)
    assert limit_profile_discrepancy(geom, preset("tp2"), n=6000) <= 1e-6


def test_fd_oracle_sees_wall_flux():
    # Nonzero wall data must change the limit profile; both routes must agree.
    from thincascade.problems import Poly1D, ProblemData

    plus = (Poly1D((0.5,)), Poly1D((0.5,)))
    minus = (Poly1D((0.0,)), Poly1D((0.0,)))
    data = ProblemData((Poly1D((0.0,)),), plus, minus, name="wall-only")
    geom = geometry_preset("widening")
    assert limit_profile_discrepancy(geom, data, n=6000) <= 1e-6
    term = solve_omega2(geom, data)
    assert abs(term.at0(1)) > 1e-3  # the data actually did something


# ---------------------------------------------------------------------------
# Manufactured smooth solution: discretization order
# ---------------------------------------------------------------------------

def test_manufactured_convergence_order():
    errors, slope = manufactured_convergence(n_levels=3, target_h=0.1)
    assert all(b < a for a, b in zip(errors, errors[1:]))
    assert 1.8 <= slope <= 2.2


# ---------------------------------------------------------------------------
# Reference solves
# ---------------------------------------------------------------------------

def test_reference_solve_zero_data_is_zero():
    field = reference_solve(TAPER, preset("tp0"), eps=0.2, target_h=0.05)
    assert float(np.max(np.abs(field.values))) <= 1e-12


def test_reference_solve_magnitude_tracks_limit():
    # The full solve's max should sit near the limit profile's peak value 1/2.
    field = reference_solve(TAPER, preset("tp1"), eps=0.15,
                            target_h=0.15 / 6.0)
    assert abs(float(np.max(field.values)) - 0.5) < 0.08


def test_reference_ladder_is_nested_and_cached():
    ladder = reference_ladder(TAPER, preset("tp1"), eps=0.3, target_h=0.1)
    n = [len(f.mesh.triangles) for f in ladder.levels]
    assert n[1] == 4 * n[0] and n[2] == 4 * n[1]
    again = reference_ladder(TAPER, preset("tp1"), eps=0.3, target_h=0.1)
    assert again is ladder  # cache hit, not a re-solve


# ---------------------------------------------------------------------------
# Error norms and regions
# ---------------------------------------------------------------------------

class _SelfApprox:
    """Approximant that replays a FEM field exactly (P1 interpolation)."""

    x_only = False

    def __init__(self, field):
        self.field = field

    def value(self, x, y):
        return self.field.evaluate(x, y)

    def value_and_gradient(self, x, y):
        return self.field.evaluate_with_gradient(x, y)

    def gradient(self, x, y):
        _, gx, gy = self.field.evaluate_with_gradient(x, y)
        return gx, gy


def test_error_norms_of_field_against_itself_vanish():
    field = reference_solve(TAPER, preset("tp1"), eps=0.3, target_h=0.06)
    mask = np.ones(len(field.mesh.triangles), dtype=bool)
    l2, h1 = error_norms(field, _SelfApprox(field), mask, x_only=False)
    scale = float(np.max(np.abs(field.values)))
    assert l2 <= 1e-12 * scale
    assert h1 <= 1e-10 * scale


def test_error_norms_x_only_ignores_y_gradient():
    # Pure-y field: u = y has zero x-derivative, so the x-only H1 error of the
    # zero approximant equals its L2 norm, while the full H1 error is larger.
    mesh = reference_solve(TAPER, preset("tp0"), eps=0.3, target_h=0.1).mesh
    field = FemField(mesh, mesh.vertices[:, 1].copy())
    zero = ProfileApproximant([])
    mask = np.ones(len(mesh.triangles), dtype=bool)
    l2_x, h1_x = error_norms(field, zero, mask, x_only=True)
    l2_f, h1_f = error_norms(field, zero, mask, x_only=False)
    assert l2_x == pytest.approx(l2_f, rel=1e-12)
    assert h1_x == pytest.approx(l2_x, rel=1e-12)   # no x-gradient content
    assert h1_f > math.sqrt(2.0) * l2_f             # y-gradient dominates


def test_region_masks_partition_and_validate():
    eps, alpha = 0.2, 0.75
    mesh = reference_solve(TAPER, preset("tp1"), eps=eps, target_h=0.05).mesh
    full = region_mask(mesh, "full", TAPER, eps, alpha)
    branches = region_mask(mesh, "branches", TAPER, eps, alpha)
    joint = region_mask(mesh, "joint", TAPER, eps, alpha)
    assert full.all()
    assert 0 < branches.sum() < len(full)
    assert 0 < joint.sum() < len(full)
    assert not np.any(branches & joint)  # 2*l*eps^alpha > eps*l for eps < 1
    with pytest.raises(ValueError, match="no mesh elements"):
        region_mask(mesh, "joint", TAPER, 1e-9, alpha)
    with pytest.raises(ValueError, match="unknown region"):
        region_mask(mesh, "everywhere", TAPER, eps, alpha)


def test_triangle_inequality_between_approximants():
    # || u - A ||  <=  || u - B || + || B - A ||  on the same region and
    # quadrature; B - A is measured with the zero-field trick.
    case = small_case(approximant="omega2+eps*omega3", region="branches")
    eps = 0.2
    ladder = reference_ladder(TAPER, case.data, eps, case.target_h(eps))
    field = ladder.fine
    mask = region_mask(field.mesh, "branches", TAPER, eps, case.alpha)
    expn = expansion_for(TAPER, case.data, 1, case.inner_h_factor)
    a = ProfileApproximant([(1.0, expn.omega[2])])
    b = ProfileApproximant([(1.0, expn.omega[2]), (eps, expn.omega[3])])
    gap = ProfileApproximant([(eps, expn.omega[3])])
    zero = FemField(field.mesh, np.zeros(len(field.mesh.vertices)))
    _, err_a = error_norms(field, a, mask, x_only=True)
    _, err_b = error_norms(field, b, mask, x_only=True)
    _, norm_gap = error_norms(zero, gap, mask, x_only=True)
    assert err_a <= err_b + norm_gap + 1e-12
    assert err_b <= err_a + norm_gap + 1e-12


# ---------------------------------------------------------------------------
# Richardson extrapolation and gating
# ---------------------------------------------------------------------------

def test_richardson_recovers_signal_exactly_under_model():
    signal, mesh_err = 0.01, 0.05  # mesh error 5x the signal
    errors = [math.hypot(signal, mesh_err / 2**j) for j in range(3)]
    reported, self_err = richardson_h1(errors)
    assert reported == pytest.approx(signal, rel=1e-12)
    assert self_err <= 1e-12


def test_richardson_rejects_pure_noise():
    mesh_err = 0.05
    errors = [mesh_err / 2**j for j in range(3)]
    reported, self_err = richardson_h1(errors)
    assert reported == 0.0
    assert self_err == pytest.approx(errors[-1])


@settings(max_examples=60, deadline=None)
@given(st.floats(1e-8, 1e3), st.floats(0.0, 1e3))
def test_richardson_reported_never_exceeds_finest(signal, mesh_err):
    errors = [math.hypot(signal, mesh_err / 2**j) for j in range(3)]
    reported, _ = richardson_h1(errors)
    assert reported <= errors[-1] * (1.0 + 1e-9)


def test_extrapolate_section_max_exact_for_quadratic_model():
    true_max, c = 2e-3, 5e-4
    values = [true_max + c / 4**j for j in range(3)]
    reported, self_err = extrapolate_section_max(values)
    assert reported == pytest.approx(true_max, rel=1e-12)
    assert self_err <= 1e-12


def test_extrapolation_needs_two_meshes():
    with pytest.raises(ValueError):
        richardson_h1([1.0])
    with pytest.raises(ValueError):
        extrapolate_section_max([1.0])


# ---------------------------------------------------------------------------
# Rate fits
# ---------------------------------------------------------------------------

def test_fit_rate_recovers_synthetic_slope():
    eps = np.array([0.3, 0.2, 0.1, 0.05])
    fit = fit_rate(eps, 0.7 * eps**1.7)
    assert fit.slope == pytest.approx(1.7, abs=1e-9)
    assert fit.stderr <= 1e-9
    assert fit.n_points == 4


def test_fit_rate_requires_three_points():
    with pytest.raises(ValueError):
        fit_rate(np.array([0.2, 0.1]), np.array([1.0, 0.5]))


# ---------------------------------------------------------------------------
# Study case validation
# ---------------------------------------------------------------------------

def test_case_rejects_short_eps_list():
    with pytest.raises(ValueError, match="at least 3"):
        small_case(eps_list=(0.2, 0.1))


def test_case_rejects_non_decreasing_eps():
    with pytest.raises(ValueError, match="strictly decreasing"):
        small_case(eps_list=(0.1, 0.2, 0.3))


def test_case_rejects_alpha_outside_open_interval():
    for alpha in (0.5, 2.0 / 3.0, 1.0):
        with pytest.raises(ValueError, match=r"\(2/3, 1\)"):
            small_case(alpha=alpha)


def test_case_rejects_coarse_mesh_rule():
    with pytest.raises(ValueError, match="kappa"):
        small_case(kappa=2.0)


def test_case_rejects_unknown_enums():
    with pytest.raises(ValueError, match="approximant"):
        small_case(approximant="omega9")
    with pytest.raises(ValueError, match="region"):
        small_case(region="edge")
    with pytest.raises(ValueError, match="norm"):
        small_case(norm="linf")
    with pytest.raises(ValueError, match="section_max"):
        small_case(norm="section_max", region="full")


# ---------------------------------------------------------------------------
# Studies end to end (small meshes)
# ---------------------------------------------------------------------------

def test_zero_problem_study_passes_without_fit():
    case = small_case(case_id="t_zero", preset_label="tp0", data=preset("tp0"))
    result = convergence_study(case)
    assert result.verdict == "pass"
    assert result.fit is None
    assert np.all(result.errors <= verify.ZERO_TOLERANCE)
    assert "skipped" in result.note


def test_study_point_reports_gated_measurement():
    case = small_case()
    point = study_point(case, 0.2)
    assert point.error > 0.0
    assert point.gated
    assert point.n_tri_fine > 0
    assert point.solver_residual <= case.cg_tol * 10.0


def test_small_leading_order_study_passes():
    case = small_case(expected_rate=1.0)
    result = convergence_study(case)
    assert result.verdict == "pass"
    assert result.fit is not None and result.fit.slope >= 0.75


def test_rate_gate_fails_when_expectation_too_high():
    case = small_case(case_id="t_toohigh", expected_rate=3.0)
    result = convergence_study(case)
    assert result.verdict == "fail"
    assert "below" in result.note


# ---------------------------------------------------------------------------
# Report emission and round-trip
# ---------------------------------------------------------------------------

def _fake_result(case_id="t_fake", verdict="pass"):
    case = small_case(case_id=case_id, expected_rate=1.0)
    points = tuple(
        ErrorPoint(eps=e, target_h=e / 5.0, error=0.1 * e, self_error=1e-4 * e,
                   gated=True, n_tri_fine=100, solver_residual=1e-12)
        for e in case.eps_list
    )
    fit = RateFit(slope=1.0, stderr=0.01, intercept=-1.0, n_points=3)
    return StudyResult(case, points, fit, verdict, "synthetic")


def test_report_rows_round_trip(tmp_path):
    res = _fake_result()
    path = tmp_path / "report.csv"
    verify.write_report_csv(path, [res])
    rows = parse_report_csv(path.read_text())
    assert len(rows) == len(res.points)
    for row, point in zip(rows, res.points):
        assert row["case_id"] == res.case.case_id
        assert row["eps"] == pytest.approx(point.eps)
        assert row["error"] == pytest.approx(point.error)
        assert row["slope"] == pytest.approx(res.fit.slope)
        assert row["pass"] == "pass"


def test_report_rows_are_deterministic():
    res = _fake_result()
    assert report_rows(res) == report_rows(res)


def test_parse_report_rejects_wrong_header():
    with pytest.raises(ValueError, match="header"):
        parse_report_csv("eps,error\n0.1,0.2\n")


def test_parse_report_rejects_malformed_row():
    text = verify.CSV_HEADER + "\nonly,three,fields\n"
    with pytest.raises(ValueError, match="malformed"):
        parse_report_csv(text)


def test_composite_improvement_comparison():
    lead = _fake_result(case_id="c1_profile_h1_full")
    comp_case = small_case(case_id="c6_composite_h1_full", expected_rate=1.625)
    better = tuple(
        ErrorPoint(eps=p.eps, target_h=p.target_h, error=p.error / 10.0,
                   self_error=p.self_error, gated=True, n_tri_fine=100,
                   solver_residual=1e-12)
        for p in lead.points
    )
    comp = StudyResult(comp_case, better, lead.fit, "pass", "synthetic")
    ok, detail = composite_improves([lead, comp])
    assert ok and "eps=" in detail

    worse = StudyResult(comp_case, lead.points, lead.fit, "pass", "synthetic")
    ok, detail = composite_improves([lead, worse])
    assert not ok and "not strictly better" in detail


# ---------------------------------------------------------------------------
# Acceptance-table plumbing
# ---------------------------------------------------------------------------

def test_acceptance_cases_cover_the_table():
    cases = acceptance_cases()
    ids = [c.case_id for c in cases]
    assert len(ids) == len(set(ids)) == 6
    assert {c.norm for c in cases} == {"h1", "h1x", "section_max"}
    assert {c.region for c in cases} == {"full", "branches", "joint"}
    for c in cases:
        assert c.eps_list == verify.DEFAULT_EPS_LIST
        assert c.expected_rate is not None


def test_taper_geometry_breaks_mirror_symmetry():
    geom = taper_geometry()
    prof = geom.profile
    assert prof.upper_at(-0.3) != pytest.approx(prof.upper_at(0.3))
    # One-sided ramp from h1/2 to min(h1,h2): bulge area = 2 * (0.5+1)/2 * l.
    xi = np.linspace(-0.5, 0.5, 501)
    area = np.trapezoid(prof.upper_at(xi) + prof.lower_at(xi), xi)
    assert area == pytest.approx(1.5, abs=1e-12)


def test_section_positions_fixed_for_whole_sweep():
    xs = section_positions(TAPER, 0.2, 0.75)
    assert np.all(np.abs(xs) < 1.0)
    for eps in verify.DEFAULT_EPS_LIST:
        cut = 2.0 * TAPER.l * eps**0.75
        assert np.all(np.abs(xs) > cut)


def test_section_positions_reject_vanishing_interval():
    with pytest.raises(ValueError, match="no branch interval"):
        section_positions(TAPER, 0.9, 0.99)


# ---------------------------------------------------------------------------
# Capability boundary
# ---------------------------------------------------------------------------

def test_second_order_build_without_derivative_oracles_names_op():
    data = preset("tp2", oracle_order=1)
    with pytest.raises(CapabilityError, match="compute_d_star"):
        build_expansion(TAPER, data, m=2, config=InnerConfig(h_factor=6.0))


def test_second_order_build_succeeds_with_oracles():
    expn = build_expansion(TAPER, preset("tp2", oracle_order=4), m=2,
                           config=InnerConfig(h_factor=6.0))
    assert set(expn.orders) == {1, 2, 3, 4}
    assert 6 in expn.omega
