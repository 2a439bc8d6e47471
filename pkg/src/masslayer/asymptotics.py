"""Epsilon-independent quantities of the single-layer construction.

Everything here is computed from the nonlinearity at the Maxwell point:
the plateau roots h-(v*), h0(v*), h+(v*), the leading-order layer position,
the first-order shift of the layer, the heteroclinic profile Q(zeta)
connecting the plateaus, the normalisation constant
kappa* = (int Q_zeta^2 dzeta)^(-1/2), and the predicted slope s of the
critical eigenvalue, lambda(eps) ~ s * eps.

The potential F(u) = int_{h-}^{u} f(s, v*) ds is the workhorse: Q solves
Q_zeta = sqrt(-2 F(Q)), so integrals over zeta become integrals over u.
"""

from __future__ import annotations

import dataclasses
import enum
import math
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy import integrate
from scipy.interpolate import CubicHermiteSpline

from .errors import DegeneratePotential, XiOutOfRange
from .model import (DEFAULT_TOL, BistableModel, Roots, Tolerances, find_vstar,
                    maxwell_integral_J, maxwell_slope_Jprime, roots_at)


class Direction(str, enum.Enum):
    UP = "up"
    DOWN = "down"

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        return cls(str(value).lower())


_GL_X, _GL_W = leggauss(40)


def _gauss_legendre(func, a, b, panels=4):
    """Vectorised composite Gauss-Legendre over arrays of intervals [a, b]."""
    a = np.atleast_1d(np.asarray(a, dtype=float))
    b = np.atleast_1d(np.asarray(b, dtype=float))
    a, b = np.broadcast_arrays(a, b)
    edges = a[..., None] + (b - a)[..., None] * np.linspace(0.0, 1.0, panels + 1)
    lo, hi = edges[..., :-1], edges[..., 1:]
    half = 0.5 * (hi - lo)
    mid = 0.5 * (hi + lo)
    s = mid[..., None] + half[..., None] * _GL_X
    vals = func(s)
    return np.sum(np.sum(vals * _GL_W, axis=-1) * half, axis=-1)


class Potential:
    """F(u) = int_{h-}^{u} f(s, v) ds, evaluated without cancellation near h+.

    Below h0 the integral runs from h-; above h0 it is taken as
    J(v) - int_u^{h+} f, so both tails keep full relative accuracy.
    """

    def __init__(self, model: BistableModel, v: float, roots: Roots | None = None,
                 j_value: float | None = None):
        self.model = model
        self.v = float(v)
        self.roots = roots if roots is not None else roots_at(model, v)
        self.j_value = 0.0 if j_value is None else float(j_value)

    def _f(self, s):
        return self.model.f(s, self.v)

    def __call__(self, u):
        u = np.asarray(u, dtype=float)
        r = self.roots
        flat = np.atleast_1d(u).ravel()
        out = np.empty_like(flat)
        low = flat <= r.h_zero
        if np.any(low):
            out[low] = _gauss_legendre(self._f, r.h_minus, flat[low])
        if np.any(~low):
            out[~low] = self.j_value - _gauss_legendre(self._f, flat[~low], r.h_plus)
        out = out.reshape(np.shape(u))
        return float(out) if out.ndim == 0 else out

    def speed(self, u):
        """sqrt(-2 F(u)), clipped at zero."""
        return np.sqrt(np.maximum(-2.0 * np.asarray(self(u)), 0.0))


def potential_F(model: BistableModel, v_star: float, u) -> float | np.ndarray:
    """F(u) = int_{h-(v*)}^{u} f(s, v*) ds (non-positive on [h-, h+])."""
    return Potential(model, v_star)(u)


def _check_potential(pot: Potential, n=401, rel_tol=1e-10):
    r = pot.roots
    u = np.linspace(r.h_minus, r.h_plus, n)[1:-1]
    neg_f = -np.asarray(pot(u))
    scale = max(1e-300, float(np.max(np.abs(neg_f))))
    if np.any(neg_f <= rel_tol * scale):
        bad = u[np.argmin(neg_f)]
        raise DegeneratePotential(
            f"-F is not positive inside (h-, h+) (min {neg_f.min():.3e} at u={bad:.6g}); "
            "the heteroclinic connection does not exist"
        )


@dataclass(frozen=True)
class ProfileTable:
    """Tabulated heteroclinic Q on a uniform grid zeta in [-Z, Z].

    Evaluation outside the table continues the linearised exponential tails
    toward h- and h+.
    """

    zeta: np.ndarray
    q: np.ndarray
    q_prime: np.ndarray
    h_minus: float
    h_plus: float
    decay_minus: float
    decay_plus: float
    _spline: CubicHermiteSpline = field(repr=False, compare=False, default=None)

    def __post_init__(self):
        if self._spline is None:
            object.__setattr__(self, "_spline", CubicHermiteSpline(self.zeta, self.q, self.q_prime))

    @property
    def half_width(self):
        return float(self.zeta[-1])

    def __call__(self, z):
        z = np.asarray(z, dtype=float)
        zl, zr = self.zeta[0], self.zeta[-1]
        inside = np.clip(z, zl, zr)
        out = self._spline(inside)
        left = z < zl
        right = z > zr
        if np.any(left):
            out = np.where(left, self.h_minus + (self.q[0] - self.h_minus)
                           * np.exp(self.decay_minus * (z - zl)), out)
        if np.any(right):
            out = np.where(right, self.h_plus - (self.h_plus - self.q[-1])
                           * np.exp(-self.decay_plus * (z - zr)), out)
        return out

    def derivative(self, z):
        z = np.asarray(z, dtype=float)
        zl, zr = self.zeta[0], self.zeta[-1]
        out = self._spline(np.clip(z, zl, zr), 1)
        out = np.where(z < zl, self.decay_minus * (self.q[0] - self.h_minus)
                       * np.exp(self.decay_minus * (z - zl)), out)
        out = np.where(z > zr, self.decay_plus * (self.h_plus - self.q[-1])
                       * np.exp(-self.decay_plus * (z - zr)), out)
        return out


def default_half_width(model, v_star, roots=None):
    r = roots or roots_at(model, v_star)
    mu = min(-model.fu(r.h_minus, v_star), -model.fu(r.h_plus, v_star))
    return 12.0 / math.sqrt(mu)


def heteroclinic_profile(model: BistableModel, v_star: float, half_width: float | None = None,
                         n_points: int = 4001, roots: Roots | None = None) -> ProfileTable:
    """Tabulate Q with Q'' + f(Q, v*) = 0, Q(0) = h0(v*), Q(+-inf) = h+-(v*).

    The first integral Q' = sqrt(-2 F(Q)) is integrated outward from
    zeta = 0 in both directions with an 8th-order Runge-Kutta method; this is
    the same map as inverting zeta(u) = int_{h0}^{u} ds / sqrt(-2 F(s)).
    """
    r = roots or roots_at(model, v_star)
    pot = Potential(model, v_star, r)
    _check_potential(pot)
    Z = half_width if half_width is not None else default_half_width(model, v_star, r)
    zeta = np.linspace(-Z, Z, n_points)
    mid = n_points // 2
    if n_points % 2 == 0 or abs(zeta[mid]) > 1e-14:
        raise ValueError("n_points must be odd so that zeta = 0 is a grid node")
    zeta[mid] = 0.0

    rhs = lambda t, y: [float(pot.speed(min(max(y[0], r.h_minus), r.h_plus)))]
    rhs_back = lambda t, y: [-float(pot.speed(min(max(y[0], r.h_minus), r.h_plus)))]
    fwd = integrate.solve_ivp(rhs, (0.0, Z), [r.h_zero], method="DOP853",
                              t_eval=zeta[mid:], rtol=1e-13, atol=1e-15)
    bwd = integrate.solve_ivp(rhs_back, (0.0, Z), [r.h_zero], method="DOP853",
                              t_eval=-zeta[:mid + 1][::-1], rtol=1e-13, atol=1e-15)
    if not (fwd.success and bwd.success):
        raise DegeneratePotential("profile integration failed: " + (fwd.message or bwd.message))
    q = np.concatenate([bwd.y[0][::-1][:-1], fwd.y[0]])
    q = np.clip(q, r.h_minus, r.h_plus)
    q_prime = pot.speed(q)
    return ProfileTable(
        zeta=zeta,
        q=q,
        q_prime=np.asarray(q_prime, dtype=float),
        h_minus=r.h_minus,
        h_plus=r.h_plus,
        decay_minus=math.sqrt(-model.fu(r.h_minus, v_star)),
        decay_plus=math.sqrt(-model.fu(r.h_plus, v_star)),
    )


def kappa_star(model: BistableModel, v_star: float, roots: Roots | None = None) -> float:
    """kappa* = (int Q_zeta^2 dzeta)^(-1/2), computed as (int sqrt(-2F) du)^(-1/2)."""
    r = roots or roots_at(model, v_star)
    pot = Potential(model, v_star, r)
    _check_potential(pot)
    total, _ = integrate.quad(lambda u: float(pot.speed(u)), r.h_minus, r.h_plus,
                              epsabs=1e-14, epsrel=1e-13, limit=200)
    return total ** -0.5


def _ratio_integrand(pot: Potential, anchor: float, slope_limit: float):
    # (u - anchor)/sqrt(-2F(u)); removable 0/0 at the anchor root
    span = pot.roots.h_plus - pot.roots.h_minus

    def g(u):
        d = u - anchor
        if abs(d) < 1e-9 * span:
            return math.copysign(slope_limit, d)
        return d / float(pot.speed(u))

    return g


def first_order_shift_x1(model: BistableModel, v_star: float, x0: float,
                         roots: Roots | None = None) -> float:
    """First-order correction x1 of the layer position, x*(eps) = x0 + eps*x1.

    Evaluates I1(x0) = x0 int_{-inf}^0 phi0^-(z) dz + (1 - x0) int_0^inf phi0^+(z) dz
    with phi0^-(z) = Q(x0 z) - h-, phi0^+(z) = Q((1 - x0) z) - h+, changing
    variables to u = Q so that no profile table is needed, and returns
    I1 / (h+ - h-). The result is the jump-up shift.
    """
    if not 0 < x0 < 1:
        raise ValueError(f"x0 must lie in (0, 1), got {x0}")
    r = roots or roots_at(model, v_star)
    pot = Potential(model, v_star, r)
    _check_potential(pot)
    lim_minus = 1.0 / math.sqrt(-model.fu(r.h_minus, v_star))
    lim_plus = 1.0 / math.sqrt(-model.fu(r.h_plus, v_star))
    g_minus = _ratio_integrand(pot, r.h_minus, lim_minus)
    g_plus = _ratio_integrand(pot, r.h_plus, lim_plus)
    # dz = dzeta / x0 on the left, dzeta / (1 - x0) on the right
    left, _ = integrate.quad(lambda u: g_minus(u) / x0, r.h_minus, r.h_zero,
                             epsabs=1e-14, epsrel=1e-13, limit=200)
    right, _ = integrate.quad(lambda u: g_plus(u) / (1.0 - x0), r.h_zero, r.h_plus,
                              epsabs=1e-14, epsrel=1e-13, limit=200)
    i1 = x0 * left + (1.0 - x0) * right
    return i1 / (r.h_plus - r.h_minus)


def admissible_xi_range(model: BistableModel, v_star: float, roots: Roots | None = None):
    """Open interval of total masses xi admitting a single-layer solution."""
    r = roots or roots_at(model, v_star)
    return (r.h_minus + v_star, r.h_plus + v_star)


def layer_position(model: BistableModel, v_star: float, xi: float, direction="up",
                   roots: Roots | None = None) -> float:
    """Leading-order layer position x* fixed by the mass constraint."""
    r = roots or roots_at(model, v_star)
    lo, hi = admissible_xi_range(model, v_star, r)
    if not lo < xi < hi:
        raise XiOutOfRange(f"xi={xi!r} is outside the admissible range ({lo!r}, {hi!r})")
    d = Direction.parse(direction)
    dh = r.h_plus - r.h_minus
    if d is Direction.UP:
        return (r.h_plus + v_star - xi) / dh
    return (xi - v_star - r.h_minus) / dh


@dataclass(frozen=True)
class LayerAsymptotics:
    model: BistableModel
    d: float
    xi: float
    direction: Direction
    v_star: float
    h_minus: float
    h_zero: float
    h_plus: float
    x_star: float
    x1: float
    c0: float
    c1: float
    kappa_star: float
    jprime_vstar: float
    lambda_slope: float
    q_profile: ProfileTable

    @property
    def jump(self):
        return self.h_plus - self.h_minus

    def layer_position_eps(self, eps):
        return self.x_star + eps * self.x1

    def stability_verdict(self):
        if self.jprime_vstar > 0:
            return "predicted stable (J'(v*) > 0)"
        return "J'(v*) < 0: instability suggested but not established (conjecture flag)"

    def summary(self):
        return {
            "model": self.model.describe(),
            "d": self.d,
            "xi": self.xi,
            "direction": self.direction.value,
            "v_star": self.v_star,
            "h_minus": self.h_minus,
            "h_zero": self.h_zero,
            "h_plus": self.h_plus,
            "x_star": self.x_star,
            "x1": self.x1,
            "c0": self.c0,
            "c1": self.c1,
            "kappa_star": self.kappa_star,
            "jprime_vstar": self.jprime_vstar,
            "lambda_slope": self.lambda_slope,
            "verdict": self.stability_verdict(),
        }


def predict_critical_eigenvalue_slope(model: BistableModel, asym: LayerAsymptotics) -> float:
    """Slope s of the critical eigenvalue, lambda(eps) = s*eps + o(eps).

    s = kappa*^2 (h+ - h-) J'(v*) / W with W the integral over [0, 1] of
    (f_v - f_u)/f_u on the outer solution, which is piecewise constant.
    """
    v = asym.v_star

    def ratio(h):
        fu = model.fu(h, v)
        return (model.fv(h, v) - fu) / fu

    xs = asym.x_star
    if asym.direction is Direction.UP:
        w = xs * ratio(asym.h_minus) + (1.0 - xs) * ratio(asym.h_plus)
    else:
        w = xs * ratio(asym.h_plus) + (1.0 - xs) * ratio(asym.h_minus)
    return float(asym.kappa_star**2 * asym.jump * asym.jprime_vstar / w)


def analyze(model: BistableModel, d: float, xi: float, direction="up",
            half_width: float | None = None, n_points: int = 4001,
            tol: Tolerances = DEFAULT_TOL, select: int | None = None) -> LayerAsymptotics:
    """Run the whole asymptotic pipeline for one parameter set."""
    if not d > 0:
        raise ValueError("diffusion coefficient d must be positive")
    direction = Direction.parse(direction)
    mp = find_vstar(model, tol, select=select)
    r = roots_at(model, mp.v_star, tol)
    x0 = layer_position(model, mp.v_star, xi, direction, r)
    x1 = first_order_shift_x1(model, mp.v_star, x0, r)
    if direction is Direction.DOWN:
        x1 = -x1
    prof = heteroclinic_profile(model, mp.v_star, half_width, n_points, r)
    asym = LayerAsymptotics(
        model=model, d=float(d), xi=float(xi), direction=direction,
        v_star=mp.v_star, h_minus=r.h_minus, h_zero=r.h_zero, h_plus=r.h_plus,
        x_star=x0, x1=x1, c0=float(d) * mp.v_star, c1=0.0,
        kappa_star=kappa_star(model, mp.v_star, r), jprime_vstar=mp.j_prime,
        lambda_slope=math.nan, q_profile=prof,
    )
    s = predict_critical_eigenvalue_slope(model, asym)
    return dataclasses.replace(asym, lambda_slope=s)


def leading_order_fields(asym: LayerAsymptotics, eps: float, x):
    """Composite leading-order fields on the nodes ``x``.

    u0(x) = Q((x - x*(eps))/eps) (mirrored for jump-down) with
    x*(eps) = x0 + eps*x1, and v0 = (C0 + eps*C1 - eps^2 u0)/D.
    """
    x = np.asarray(x, dtype=float)
    xs = asym.layer_position_eps(eps)
    if asym.direction is Direction.UP:
        z = (x - xs) / eps
    else:
        z = (xs - x) / eps
    u0 = asym.q_profile(z)
    v0 = (asym.c0 + eps * asym.c1 - eps**2 * u0) / asym.d
    return u0, v0


def matching_residuals(model: BistableModel, asym: LayerAsymptotics,
                       alpha_match: float | None = None, v: float | None = None,
                       x0: float | None = None):
    """Signed C^1-matching residuals (Phi0, K(x0)) of the inner problems.

    ``v`` defaults to v*; away from v* Phi0 equals
    -2 x0 (1 - x0) J(v) / (sqrt(-2F(alpha)) + sqrt(2 int_alpha^{h+} f)).
    """
    v = asym.v_star if v is None else float(v)
    x0 = asym.x_star if x0 is None else float(x0)
    r = roots_at(model, v)
    jv = maxwell_integral_J(model, v)
    pot = Potential(model, v, r, j_value=jv)
    alpha = r.h_zero if alpha_match is None else float(alpha_match)
    if not r.h_minus < alpha < r.h_plus:
        raise ValueError("alpha_match must lie strictly between h- and h+")
    left_int = float(pot(alpha))                 # int_{h-}^{alpha} f
    right_int = jv - left_int                    # int_{alpha}^{h+} f
    dphi_minus = x0 * math.sqrt(-2.0 * left_int)
    dphi_plus = (1.0 - x0) * math.sqrt(2.0 * right_int)
    phi0 = (1.0 - x0) * dphi_minus - x0 * dphi_plus
    k = (x0 * (1.0 - x0) / dphi_minus * (-2.0 * left_int) - dphi_minus
         + x0 * (1.0 - x0) / dphi_plus * (2.0 * right_int) - dphi_plus)
    return phi0, k


def phi0_closed_form(model: BistableModel, v: float, x0: float, alpha_match=None):
    """Phi0 from the J-based closed form (independent route for checks)."""
    r = roots_at(model, v)
    jv = maxwell_integral_J(model, v)
    alpha = r.h_zero if alpha_match is None else alpha_match
    left, _ = integrate.quad(lambda u: model.f(u, v), r.h_minus, alpha, epsabs=1e-14, epsrel=1e-13)
    right, _ = integrate.quad(lambda u: model.f(u, v), alpha, r.h_plus, epsabs=1e-14, epsrel=1e-13)
    return -2.0 * x0 * (1.0 - x0) * jv / (math.sqrt(-2.0 * left) + math.sqrt(2.0 * right))
