import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from masslayer.errors import (FoldNotFound, MultipleMaxwellPoints, NoMaxwellPoint,
                              NotBistable)
from masslayer.model import (BistableInterval, Cubic, Custom, Hill, Tolerances, find_vstar,
                             fold_points, make_model, maxwell_integral_at_fold, maxwell_integral_J,
                             maxwell_slope_Jprime, roots_at, verify_assumptions)


@pytest.mark.parametrize("beta", [0.5, 0.3, 0.1, 0.7])
def test_cubic_j_at_zero_closed_form(beta):
    m = Cubic(0.2, beta)
    assert maxwell_integral_J(m, 0.0) == pytest.approx(1.0 / 12.0 - beta / 6.0, abs=1e-12)


@pytest.mark.parametrize("beta", [0.5, 0.3, 0.1])
def test_cubic_j_at_folds(beta):
    m = Cubic(0.2, beta)
    assert maxwell_integral_at_fold(m, "lower") == pytest.approx(-m.rho**2 / 12.0, abs=1e-12)
    assert maxwell_integral_at_fold(m, "upper") == pytest.approx(m.rho**2 / 12.0, abs=1e-12)


def test_cubic_symmetric_case():
    m = Cubic(0.2, 0.5)
    iv = fold_points(m)
    assert iv.v_lower == pytest.approx(-iv.v_upper, abs=1e-15)
    mp = find_vstar(m)
    assert abs(mp.v_star) < 1e-12
    r = roots_at(m, 0.0)
    assert (r.h_minus, r.h_zero, r.h_plus) == pytest.approx((0.0, 0.5, 1.0), abs=1e-14)
    # f_v = alpha, so J' = alpha (h+ - h-)
    assert mp.j_prime == pytest.approx(0.2, abs=1e-12)


def test_cubic_beta03_maxwell_point():
    mp = find_vstar(Cubic(0.2, 0.3))
    assert mp.v_star == pytest.approx(-0.164, abs=5e-4)
    assert abs(maxwell_integral_J(Cubic(0.2, 0.3), mp.v_star)) < 1e-12


@given(alpha=st.floats(0.05, 1.0), beta=st.floats(0.05, 0.95), t=st.floats(0.02, 0.98))
@settings(max_examples=60, deadline=None)
def test_cubic_roots_properties(alpha, beta, t):
    m = Cubic(alpha, beta)
    iv = fold_points(m)
    v = iv.v_lower + t * iv.width
    r = roots_at(m, v)
    assert r.h_minus < r.h_zero < r.h_plus
    for h in (r.h_minus, r.h_zero, r.h_plus):
        assert abs(m.f(h, v)) <= 1e-12
    assert m.fu(r.h_minus, v) < 0 < m.fu(r.h_zero, v)
    assert m.fu(r.h_plus, v) < 0


def test_roots_outside_interval_rejected():
    m = Cubic(0.2, 0.5)
    iv = fold_points(m)
    with pytest.raises(NotBistable):
        roots_at(m, iv.v_upper + 0.01)
    with pytest.raises(NotBistable):
        roots_at(m, iv.v_lower)


def test_hill_fold_formulas_are_double_roots():
    m = Hill(0.067)
    ff = m.fold_formula()
    for key_v, key_h in (("v_lower", "h_plus_at_lower"), ("v_upper", "h_minus_at_upper")):
        v, h = ff[key_v], ff[key_h]
        assert abs(m.f(h, v)) < 1e-12
        assert abs(m.fu(h, v)) < 1e-12


def test_hill_reference_values():
    m = Hill(0.067)
    iv = fold_points(m)
    assert (iv.v_lower, iv.v_upper) == pytest.approx((1.74736, 2.00602), abs=1e-5)
    mp = find_vstar(m)
    assert mp.v_star == pytest.approx(1.802, abs=5e-4)
    assert mp.j_prime > 0


@pytest.mark.parametrize("kappa", [0.0, 0.125, 0.2, -0.1])
def test_hill_rejects_kappa(kappa):
    with pytest.raises(ValueError):
        Hill(kappa)


@given(kappa=st.floats(0.01, 0.12), t=st.floats(0.05, 0.95))
@settings(max_examples=40, deadline=None)
def test_hill_jprime_lower_bound(kappa, t):
    # f_v >= kappa everywhere, so J' >= kappa (h+ - h-)
    m = Hill(kappa)
    iv = fold_points(m)
    v = iv.v_lower + t * iv.width
    r = roots_at(m, v)
    assert maxwell_slope_Jprime(m, v) > kappa * (r.h_plus - r.h_minus)


@pytest.mark.parametrize("kappa", [0.02, 0.04, 0.06, 0.08, 0.1, 0.12])
def test_hill_fold_signs(kappa):
    m = Hill(kappa)
    assert maxwell_integral_at_fold(m, "lower") < 0 < maxwell_integral_at_fold(m, "upper")


@pytest.mark.parametrize("model", [Cubic(0.2, 0.5), Cubic(0.2, 0.3), Hill(0.067)])
def test_verify_assumptions_shipped(model):
    rep = verify_assumptions(model, n_samples=32)
    assert rep.all_hold
    assert rep.min_a3_margin > 0
    d = rep.to_dict()
    assert d["a1_holds"] and d["a2_holds"] and d["a3_holds"]


def test_custom_matches_cubic():
    c = Cubic(0.2, 0.3)
    m = Custom(c.f, c.fu, c.fv, u_range=(-2.0, 3.0), v_range=(-1.0, 1.0), name="cubic-copy")
    iv, ivc = fold_points(m), fold_points(c)
    assert (iv.v_lower, iv.v_upper) == pytest.approx((ivc.v_lower, ivc.v_upper), abs=1e-10)
    assert find_vstar(m).v_star == pytest.approx(find_vstar(c).v_star, abs=1e-10)


def test_custom_without_fold():
    m = Custom(lambda u, v: v - u, lambda u, v: -np.ones_like(np.asarray(u, float)),
               lambda u, v: np.ones_like(np.asarray(u, float)), u_range=(-5, 5), v_range=(-1, 1))
    with pytest.raises(FoldNotFound):
        fold_points(m)


def test_no_maxwell_point():
    base = Cubic(0.2, 0.5)
    # J > 0 on this sub-interval of the true bistable range
    m = Custom(base.f, base.fu, base.fv, u_range=(-2.0, 3.0),
               interval=BistableInterval(0.05, 0.2))
    with pytest.raises(NoMaxwellPoint):
        find_vstar(m)


def _wavy_model():
    base = Cubic(0.2, 0.5)
    phi = lambda v: 0.1 * np.sin(20.0 * v)
    f = lambda u, v: base.f(u, phi(v))
    fv = lambda u, v: 0.2 * 2.0 * np.cos(20.0 * v) + 0.0 * np.asarray(u, float)
    return Custom(f, base.fu, fv, u_range=(-2.0, 3.0), interval=BistableInterval(-0.5, 0.5))


def test_multiple_maxwell_points():
    m = _wavy_model()
    with pytest.raises(MultipleMaxwellPoints) as info:
        find_vstar(m)
    assert len(info.value.candidates) == 7


def test_maxwell_point_selection():
    mp = find_vstar(_wavy_model(), select=2)
    assert mp.v_star == pytest.approx(-math.pi / 20.0, abs=1e-10)


def test_make_model():
    assert make_model("cubic", {"alpha": 0.2, "beta": 0.5}) == Cubic(0.2, 0.5)
    with pytest.raises(ValueError):
        make_model("quartic", {})


def test_tolerances_default():
    t = Tolerances()
    assert t.root_residual == 1e-12 and t.quad_abs == 1e-12 and t.bisection == 1e-14
