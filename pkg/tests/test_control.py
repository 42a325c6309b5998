import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from valvebench.control import (
    HR_NYQUIST_ZERO,
    HS_INTEGRATOR,
    ONE,
    ControllerRuntime,
    DelayPolynomial,
    PoleSpec,
    ReferenceModel,
    RstController,
    bezout_design,
    check_pole_placement,
    closed_loop_polynomial,
    controller_from_text,
    controller_to_text,
    desired_poles,
    dominant_poles,
    model_polynomials,
    pi_design,
    sensitivity,
    unit_circle,
)
from valvebench.errors import ConfigError, DesignError
from valvebench.plant import DiscretePlantModel

Ts = 0.05
PLANT = DiscretePlantModel((-0.9152,), (-0.0609,), 0, Ts)

coeff_lists = st.lists(st.floats(-5, 5), min_size=1, max_size=5)


@settings(max_examples=80, deadline=None)
@given(p=coeff_lists, q=coeff_lists, omega=st.floats(0.1, 62.0))
def test_delay_polynomial_algebra(p, q, omega):
    P = DelayPolynomial(tuple(p))
    Q = DelayPolynomial(tuple(q))
    z = complex(np.exp(1j * omega * Ts))
    np.testing.assert_allclose((P * Q)(z), P(z) * Q(z), rtol=1e-9, atol=1e-9)
    np.testing.assert_allclose((P + Q)(z), P(z) + Q(z), rtol=1e-9, atol=1e-9)
    np.testing.assert_allclose(P.shifted(2)(z), z**-2 * P(z), rtol=1e-9, atol=1e-9)
    np.testing.assert_allclose((3.0 * P)(z), 3.0 * P(z), rtol=1e-12, atol=1e-12)


def test_delay_polynomial_degree_and_trim():
    p = DelayPolynomial((1.0, 2.0, 0.0, 0.0))
    assert p.degree == 1
    assert p.trimmed().coeffs == (1.0, 2.0)
    assert DelayPolynomial((0.0,)).is_zero()
    assert DelayPolynomial(()).coeffs == (0.0,)
    roots = DelayPolynomial((1.0, -0.5)).roots()
    np.testing.assert_allclose(roots, [0.5])


def test_unit_circle_snaps_nyquist():
    z = unit_circle(np.array([math.pi / Ts]), Ts)
    assert z[0] == -1.0 + 0.0j


def test_dominant_poles_damping_cases():
    crit = dominant_poles(PoleSpec(5.0, 1.0, Ts))
    z1 = math.exp(-5.0 * Ts)
    np.testing.assert_allclose(crit.coeffs, (1.0, -2 * z1, z1 * z1), rtol=1e-12)
    under = dominant_poles(PoleSpec(5.0, 0.7, Ts))
    r = np.roots(under.coeffs)
    assert abs(r[0].imag) > 0  # complex pair
    np.testing.assert_allclose(abs(r[0]), math.exp(-0.7 * 5.0 * Ts), rtol=1e-12)


def test_pole_spec_validation():
    with pytest.raises(ValueError):
        PoleSpec(0.0, 1.0, Ts)
    with pytest.raises(ValueError):
        PoleSpec(5.0, -0.1, Ts)
    with pytest.raises(ValueError):
        PoleSpec(70.0, 1.0, Ts)  # omega0 Ts above pi


def test_desired_poles_include_auxiliary():
    spec = PoleSpec(5.0, 1.0, Ts, auxiliary=DelayPolynomial((1.0, -0.3)))
    full = desired_poles(spec)
    assert full.degree == 3
    # the auxiliary factor 1 - 0.3 q^-1 vanishes at z = 0.3
    assert abs(full(0.3)) < 1e-12
    assert any(abs(r - 0.3) < 1e-9 for r in full.roots())


def test_pi_places_the_poles():
    """The defining property: A S + B R equals the requested polynomial."""
    target = dominant_poles(PoleSpec(5.0, 1.0, Ts))
    ctrl = pi_design(-0.9152, -0.0609, target, Ts)
    achieved = closed_loop_polynomial(PLANT, ctrl).trimmed(1e-12)
    np.testing.assert_allclose(achieved.coeffs, target.coeffs, rtol=0, atol=1e-12)
    # T = R(1) makes the closed-loop DC gain exactly one
    t_gain = ctrl.t(1.0)
    b1 = PLANT.b_coeffs[0]
    p_at_1 = achieved(1.0)
    np.testing.assert_allclose(t_gain * b1 / p_at_1, 1.0, rtol=1e-12)


def test_pi_design_rejects_degenerate_inputs():
    target = dominant_poles(PoleSpec(5.0, 1.0, Ts))
    with pytest.raises(DesignError):
        pi_design(-0.9, 0.0, target, Ts)
    with pytest.raises(DesignError):
        pi_design(-0.9, 0.5, DelayPolynomial((1.0, -0.5)), Ts)


def test_bezout_with_unit_hr_reduces_to_pi():
    target = dominant_poles(PoleSpec(5.0, 1.0, Ts))
    pi = pi_design(-0.9152, -0.0609, target, Ts)
    bz = bezout_design(PLANT, target, hs=HS_INTEGRATOR, hr=ONE)
    np.testing.assert_allclose(bz.r.coeffs, pi.r.coeffs, rtol=1e-12)
    np.testing.assert_allclose(bz.s.coeffs, pi.s.coeffs, rtol=1e-12)


def test_bezout_fixed_parts_give_exact_nulls():
    target = dominant_poles(PoleSpec(5.0, 1.0, Ts))
    ctrl = bezout_design(PLANT, target, hs=HS_INTEGRATOR, hr=HR_NYQUIST_ZERO)
    assert ctrl.r_on_circle(np.array([math.pi / Ts]))[0] == 0.0
    assert ctrl.s_on_circle(np.array([0.0]))[0] == 0.0
    assert ctrl.has_integral_action
    assert check_pole_placement(PLANT, ctrl, target) < 1e-12


def test_bezout_failure_modes():
    target = dominant_poles(PoleSpec(5.0, 1.0, Ts))
    with pytest.raises(DesignError):
        bezout_design(DiscretePlantModel((-0.9,), (0.0,), 0, Ts), target)
    with pytest.raises(DesignError):
        # plant pole at z = -1 shares a root with H_R: singular Sylvester system
        bezout_design(DiscretePlantModel((1.0,), (0.5,), 0, Ts), target)
    with pytest.raises(DesignError):
        too_high = target * target  # degree 4 beats the solvable degree
        bezout_design(PLANT, too_high)


def test_check_pole_placement_flags_mismatch():
    target = dominant_poles(PoleSpec(5.0, 1.0, Ts))
    ctrl = bezout_design(PLANT, target)
    other = dominant_poles(PoleSpec(8.0, 1.0, Ts))
    with pytest.raises(DesignError):
        check_pole_placement(PLANT, ctrl, other)


def test_controller_normalization_enforced():
    with pytest.raises(ValueError):
        RstController(
            r_core=DelayPolynomial((1.0,)),
            s_core=DelayPolynomial((2.0,)),
            t=DelayPolynomial((1.0,)),
            Ts=Ts,
        )


def test_sensitivity_functions_sum_to_one():
    target = dominant_poles(PoleSpec(5.0, 1.0, Ts))
    ctrl = bezout_design(PLANT, target)
    analysis = sensitivity(PLANT, ctrl)
    a_poly, b_poly = model_polynomials(PLANT)
    z = unit_circle(analysis.omegas, Ts)
    p_v = a_poly(z) * ctrl.s_on_circle(analysis.omegas) + b_poly(z) * ctrl.r_on_circle(
        analysis.omegas
    )
    syb = b_poly(z) * ctrl.r_on_circle(analysis.omegas) / p_v
    np.testing.assert_allclose(analysis.syp + syb, 1.0, rtol=0, atol=1e-10)
    # margin bookkeeping is consistent with the raw arrays
    np.testing.assert_allclose(analysis.modulus_margin, 1.0 / np.max(np.abs(analysis.syp)))
    np.testing.assert_allclose(analysis.margin_db, 20 * np.log10(analysis.modulus_margin))
    assert analysis.omegas[-1] == pytest.approx(math.pi / Ts)


def test_sensitivity_rejects_tiny_grids():
    target = dominant_poles(PoleSpec(5.0, 1.0, Ts))
    ctrl = bezout_design(PLANT, target)
    with pytest.raises(ValueError):
        sensitivity(PLANT, ctrl, n_freq=16)


def test_controller_text_round_trip():
    target = dominant_poles(PoleSpec(5.0, 1.0, Ts))
    ctrl = bezout_design(PLANT, target, hs=HS_INTEGRATOR, hr=HR_NYQUIST_ZERO)
    text = controller_to_text(ctrl)
    back = controller_from_text(text)
    # the factorized parts are the serialized payload: 9 significant digits
    np.testing.assert_allclose(back.r_core.coeffs, ctrl.r_core.coeffs, rtol=1e-8)
    np.testing.assert_allclose(back.s_core.coeffs, ctrl.s_core.coeffs, rtol=1e-8)
    np.testing.assert_allclose(back.t.coeffs, ctrl.t.coeffs, rtol=1e-8)
    # R and S are rebuilt from the rounded cores, so a small composite
    # coefficient carries the cores' absolute rounding, not its own relative one
    np.testing.assert_allclose(back.r.coeffs, ctrl.r.coeffs, rtol=1e-8, atol=5e-8)
    np.testing.assert_allclose(back.s.coeffs, ctrl.s.coeffs, rtol=1e-8, atol=5e-8)
    assert back.Ts == ctrl.Ts


def test_controller_text_errors():
    with pytest.raises(ConfigError):
        controller_from_text("Ts = 0.05\n")
    target = dominant_poles(PoleSpec(5.0, 1.0, Ts))
    good = controller_to_text(bezout_design(PLANT, target))
    with pytest.raises(ConfigError):
        controller_from_text(good.replace("Ts = 0.05", "Ts = fast"))


def test_runtime_holds_steady_state():
    target = dominant_poles(PoleSpec(5.0, 1.0, Ts))
    ctrl = bezout_design(PLANT, target)
    rt = ControllerRuntime(ctrl, limits=None)
    rt.prime(u=-55.7, y=40.0, r=40.0)
    u, sat = rt.step(40.0, 40.0)
    assert not sat
    assert u == pytest.approx(-55.7, abs=1e-9)


def test_runtime_saturation_flag():
    target = dominant_poles(PoleSpec(5.0, 1.0, Ts))
    ctrl = bezout_design(PLANT, target)
    rt = ControllerRuntime(ctrl, limits=(0.0, 100.0))
    u, sat = rt.step(-500.0, 0.0)
    assert sat and u in (0.0, 100.0)


def test_reference_model_reaches_unit_dc():
    spec = PoleSpec(5.0, 1.0, Ts)
    target = desired_poles(spec)
    _, b_poly = model_polynomials(PLANT)
    ref = ReferenceModel(target, b_poly, t_gain=float(np.real(target(1.0) / b_poly(1.0))))
    y = 0.0
    for _ in range(200):
        y = ref.step(5.0)
    assert y == pytest.approx(5.0, abs=1e-6)
