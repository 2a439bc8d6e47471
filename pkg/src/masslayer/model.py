"""Bistable nonlinearities f(u, v) and the numerical checks they must pass.

Two concrete models ship with the package:

* :class:`Cubic`  f(u, v) = alpha*v - u(u - beta)(u - 1)
* :class:`Hill`   f(u, v) = (kappa + u^2/(1 + u^2)) v - u

:class:`Custom` wraps user callbacks. All of them expose vectorised
``f``, ``fu`` and ``fv``. The module-level functions compute the three
roots h-(v) < h0(v) < h+(v), the fold points bounding bistability, the
Maxwell integral J(v), its slope J'(v) and the Maxwell point v*.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np
from scipy import integrate, optimize

from .errors import FoldNotFound, MultipleMaxwellPoints, NoMaxwellPoint, NotBistable


@dataclass(frozen=True)
class Tolerances:
    root_residual: float = 1e-12
    quad_abs: float = 1e-12
    bisection: float = 1e-14
    fold_margin: float = 1e-6
    scan_points: int = 4001
    vstar_scan_points: int = 201


DEFAULT_TOL = Tolerances()


@dataclass(frozen=True)
class Roots:
    h_minus: float
    h_zero: float
    h_plus: float
    v: float

    def as_tuple(self):
        return (self.h_minus, self.h_zero, self.h_plus)


@dataclass(frozen=True)
class BistableInterval:
    v_lower: float
    v_upper: float

    @property
    def width(self):
        return self.v_upper - self.v_lower

    def contains(self, v, rel_margin=0.0):
        m = rel_margin * self.width * (1.0 - 1e-9)
        return self.v_lower + m <= v <= self.v_upper - m


class MaxwellPoint(NamedTuple):
    v_star: float
    j_prime: float


@dataclass
class AssumptionReport:
    a1_holds: bool
    a2_holds: bool
    a3_holds: bool
    v_star: float | None = None
    j_prime_at_vstar: float | None = None
    j_at_vstar: float | None = None
    samples: list = field(default_factory=list)
    min_a3_margin: float = math.nan
    a1_failures: list = field(default_factory=list)
    a3_failures: list = field(default_factory=list)
    messages: list = field(default_factory=list)

    @property
    def all_hold(self):
        return self.a1_holds and self.a2_holds and self.a3_holds

    def to_dict(self):
        return {
            "a1_holds": self.a1_holds,
            "a2_holds": self.a2_holds,
            "a3_holds": self.a3_holds,
            "v_star": self.v_star,
            "j_prime_at_vstar": self.j_prime_at_vstar,
            "j_at_vstar": self.j_at_vstar,
            "min_a3_margin": self.min_a3_margin,
            "samples": [[float(v), float(m)] for v, m in self.samples],
            "a1_failures": [float(v) for v in self.a1_failures],
            "a3_failures": [float(v) for v in self.a3_failures],
            "messages": list(self.messages),
        }


class BistableModel:
    """Base class: subclasses provide ``f``, ``fu``, ``fv`` and ``params``."""

    name = "base"

    def f(self, u, v):
        raise NotImplementedError

    def fu(self, u, v):
        raise NotImplementedError

    def fv(self, u, v):
        raise NotImplementedError

    def params(self):
        return {}

    def u_search_range(self, v):
        return (-10.0, max(10.0, 5.0 * (1.0 + abs(v))))

    def describe(self):
        return {"name": self.name, "params": self.params()}

    def scaled(self, c):
        """Return the model with f replaced by c*f (c > 0)."""
        base = self
        return Custom(
            f=lambda u, v: c * base.f(u, v),
            fu=lambda u, v: c * base.fu(u, v),
            fv=lambda u, v: c * base.fv(u, v),
            u_range=base.u_search_range(0.0),
            v_range=None,
            interval=fold_points(base),
            name=f"{base.name}*{c:g}",
        )


@dataclass(frozen=True, eq=True)
class Cubic(BistableModel):
    alpha: float = 0.2
    beta: float = 0.5
    name = "cubic"

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError(f"cubic model needs alpha > 0, got {self.alpha}")
        if not 0 < self.beta < 1:
            raise ValueError(f"cubic model needs 0 < beta < 1, got {self.beta}")

    def f(self, u, v):
        return self.alpha * v - u * (u - self.beta) * (u - 1.0)

    def fu(self, u, v):
        return -3.0 * u * u + 2.0 * (self.beta + 1.0) * u - self.beta

    def fv(self, u, v):
        return self.alpha + 0.0 * np.asarray(u, dtype=float)

    def params(self):
        return {"alpha": self.alpha, "beta": self.beta}

    @property
    def rho(self):
        return 1.0 - self.beta + self.beta**2

    def g(self, u):
        """v on the nullcline f(u, v) = 0."""
        return u * (u - 1.0) * (u - self.beta) / self.alpha

    def closed_form_roots(self, v):
        # u^3 + a u^2 + b u + c = 0
        a = -(1.0 + self.beta)
        b = self.beta
        c = -self.alpha * v
        p = b - a * a / 3.0
        q = 2.0 * a**3 / 27.0 - a * b / 3.0 + c
        disc = 4.0 * p**3 + 27.0 * q * q
        if not (p < 0 and disc < 0):
            raise NotBistable(f"cubic has a single real root at v={v!r}")
        r = 2.0 * math.sqrt(-p / 3.0)
        arg = 3.0 * q / (2.0 * p) * math.sqrt(-3.0 / p)
        theta = math.acos(max(-1.0, min(1.0, arg))) / 3.0
        t = [r * math.cos(theta - 2.0 * math.pi * k / 3.0) for k in range(3)]
        return sorted(x - a / 3.0 for x in t)


@dataclass(frozen=True, eq=True)
class Hill(BistableModel):
    kappa: float = 0.067
    name = "hill"

    def __post_init__(self):
        if not 0 < self.kappa < 0.125:
            raise ValueError(f"Hill model needs 0 < kappa < 1/8, got {self.kappa}")

    def f(self, u, v):
        u2 = u * u
        return (self.kappa + u2 / (1.0 + u2)) * v - u

    def fu(self, u, v):
        return 2.0 * u * v / (1.0 + u * u) ** 2 - 1.0

    def fv(self, u, v):
        u2 = u * u
        return self.kappa + u2 / (1.0 + u2)

    def params(self):
        return {"kappa": self.kappa}

    def u_search_range(self, v):
        # roots satisfy kappa*v < u < (1 + kappa)*v
        return (-10.0, max(10.0, 5.0 * (1.0 + abs(v))))

    def _phi_psi(self):
        k = self.kappa
        s = math.sqrt(1.0 - 8.0 * k)
        return (1.0 - 2.0 * k + s) / 2.0, (1.0 - 2.0 * k - s) / 2.0

    def fold_formula(self):
        """Closed-form fold values and the coalescing roots there."""
        k = self.kappa
        phi, psi = self._phi_psi()

        def fold(w):
            return (1.0 + k - w) / (2.0 * k * (1.0 + k)) * math.sqrt(w / (1.0 + k))

        return {
            "v_lower": fold(phi),
            "v_upper": fold(psi),
            "h_plus_at_lower": math.sqrt(phi / (1.0 + k)),
            "h_minus_at_lower": (1.0 + k - phi) / (2.0 * math.sqrt((1.0 + k) * phi)),
            "h_plus_at_upper": (1.0 + k - psi) / (2.0 * math.sqrt((1.0 + k) * psi)),
            "h_minus_at_upper": math.sqrt(psi / (1.0 + k)),
        }


class Custom(BistableModel):
    """A user-supplied nonlinearity.

    Parameters
    ----------
    f, fu, fv : callable
        Vectorised callables ``(u, v) -> array``.
    u_range : (float, float), optional
        Search range for roots in u. Defaults to the package-wide range.
    v_range : (float, float), optional
        Range swept when locating fold points.
    interval : BistableInterval, optional
        Known bistable interval; skips the fold search.
    """

    def __init__(self, f, fu, fv, u_range=None, v_range=None, interval=None,
                 name="custom", params=None):
        self._f, self._fu, self._fv = f, fu, fv
        self.u_range = u_range
        self.v_range = v_range
        self.interval = interval
        self.name = name
        self._params = dict(params or {})

    def f(self, u, v):
        return self._f(u, v)

    def fu(self, u, v):
        return self._fu(u, v)

    def fv(self, u, v):
        return self._fv(u, v)

    def params(self):
        return dict(self._params)

    def u_search_range(self, v):
        if self.u_range is not None:
            return tuple(self.u_range)
        return super().u_search_range(v)


# ---------------------------------------------------------------------------
# roots and folds


def _newton_polish(model, u, v, steps=1):
    for _ in range(steps):
        d = model.fu(u, v)
        if d == 0:
            break
        u = u - model.f(u, v) / d
    return float(u)


def _sign_change_roots(func, grid, xtol):
    vals = func(grid)
    out = []
    for i in range(len(grid) - 1):
        a, b = vals[i], vals[i + 1]
        if a == 0.0:
            out.append(float(grid[i]))
        elif a * b < 0:
            out.append(optimize.brentq(func, grid[i], grid[i + 1], xtol=xtol, rtol=1e-15))
    if vals[-1] == 0.0:
        out.append(float(grid[-1]))
    return out


def bracket_roots(model, v, u_range=None, tol=DEFAULT_TOL):
    """All roots of f(., v) on ``u_range``, isolated between critical points of f."""
    lo, hi = u_range if u_range is not None else model.u_search_range(v)
    grid = np.linspace(lo, hi, tol.scan_points)
    crit = _sign_change_roots(lambda u: model.fu(u, v), grid, tol.bisection)
    pts = [lo] + sorted(crit) + [hi]
    fval = lambda u: model.f(u, v)
    roots = []
    for a, b in zip(pts[:-1], pts[1:]):
        if b <= a:
            continue
        fa, fb = fval(a), fval(b)
        if fa == 0.0 and (not roots or roots[-1] != a):
            roots.append(float(a))
        elif fa * fb < 0:
            roots.append(optimize.brentq(fval, a, b, xtol=tol.bisection, rtol=1e-15))
    if fval(hi) == 0.0:
        roots.append(float(hi))
    return roots


def _shipped_interval(model):
    if isinstance(model, Cubic):
        return _cubic_folds(model)
    if isinstance(model, Hill):
        ff = model.fold_formula()
        return BistableInterval(ff["v_lower"], ff["v_upper"])
    if isinstance(model, Custom) and model.interval is not None:
        return model.interval
    return None


def roots_at(model: BistableModel, v: float, tol: Tolerances = DEFAULT_TOL,
             u_range=None) -> Roots:
    """Return the three roots h-(v) < h0(v) < h+(v) of f(., v) = 0.

    Raises
    ------
    NotBistable
        If ``v`` is not strictly inside the bistable interval (by the
        configured relative fold margin) or fewer than three roots exist in
        the search range.
    """
    v = float(v)
    interval = _shipped_interval(model)
    if interval is not None and not interval.contains(v, tol.fold_margin):
        raise NotBistable(
            f"v={v!r} is not strictly inside the bistable interval "
            f"({interval.v_lower!r}, {interval.v_upper!r})"
        )
    if isinstance(model, Cubic):
        rs = [_newton_polish(model, r, v) for r in model.closed_form_roots(v)]
    else:
        rs = bracket_roots(model, v, u_range, tol)
        if len(rs) != 3:
            raise NotBistable(
                f"found {len(rs)} root(s) of f(., {v!r}) on "
                f"{u_range or model.u_search_range(v)}; need exactly three"
            )
        rs = [_newton_polish(model, r, v) for r in rs]
    h_minus, h_zero, h_plus = rs
    if not h_minus < h_zero < h_plus:
        raise NotBistable(f"roots at v={v!r} are not distinct: {rs}")
    for r in rs:
        if abs(model.f(r, v)) > tol.root_residual * max(1.0, abs(r)):
            raise NotBistable(f"root residual too large at v={v!r}: f({r!r})={model.f(r, v)!r}")
    signs = (model.fu(h_minus, v) < 0, model.fu(h_zero, v) > 0, model.fu(h_plus, v) < 0)
    if not all(signs):
        raise NotBistable(f"sign pattern of f_u at the roots for v={v!r} is not (-,+,-)")
    return Roots(h_minus, h_zero, h_plus, v)


def _cubic_folds(model: Cubic):
    s = math.sqrt(model.rho)
    u_hi = (1.0 + model.beta + s) / 3.0
    u_lo = (1.0 + model.beta - s) / 3.0
    return BistableInterval(model.g(u_hi), model.g(u_lo))


def _fold_newton(model, u, v, max_iter=60):
    """Damped Newton on (f, f_u) = 0 in the unknowns (u, v)."""
    for _ in range(max_iter):
        g = np.array([model.f(u, v), model.fu(u, v)], dtype=float)
        if np.max(np.abs(g)) < 1e-13:
            return u, v
        hu = 1e-6 * max(1.0, abs(u))
        hv = 1e-6 * max(1.0, abs(v))
        fuu = (model.fu(u + hu, v) - model.fu(u - hu, v)) / (2 * hu)
        fuv = (model.fu(u, v + hv) - model.fu(u, v - hv)) / (2 * hv)
        jac = np.array([[model.fu(u, v), model.fv(u, v)], [fuu, fuv]], dtype=float)
        try:
            step = np.linalg.solve(jac, -g)
        except np.linalg.LinAlgError:
            raise FoldNotFound("singular Jacobian in fold Newton iteration")
        lam = 1.0
        norm0 = np.linalg.norm(g)
        while lam > 1e-6:
            un, vn = u + lam * step[0], v + lam * step[1]
            gn = np.array([model.f(un, vn), model.fu(un, vn)], dtype=float)
            if np.linalg.norm(gn) < norm0:
                break
            lam *= 0.5
        u, v = un, vn
    g = np.array([model.f(u, v), model.fu(u, v)], dtype=float)
    if np.max(np.abs(g)) < 1e-10:
        return u, v
    raise FoldNotFound(f"fold Newton did not converge (residual {np.max(np.abs(g)):.3e})")


def _custom_folds(model: Custom, n_sweep=401, tol=DEFAULT_TOL):
    if model.v_range is None:
        raise FoldNotFound("custom model needs v_range (or interval) to locate folds")
    vs = np.linspace(model.v_range[0], model.v_range[1], n_sweep)
    counts = []
    roots = []
    for v in vs:
        rs = bracket_roots(model, v, model.u_search_range(v), tol)
        counts.append(len(rs))
        roots.append(rs)
    idx = [i for i, c in enumerate(counts) if c == 3]
    if not idx:
        raise FoldNotFound("seed sweep found no v with three roots")
    i0, i1 = idx[0], idx[-1]
    if i0 == 0 or i1 == len(vs) - 1:
        raise FoldNotFound("bistable region touches the end of v_range; widen it")
    folds = []
    for i in (i0, i1):
        rs = roots[i]
        gaps = [rs[1] - rs[0], rs[2] - rs[1]]
        k = int(np.argmin(gaps))
        u_seed = 0.5 * (rs[k] + rs[k + 1])
        _, vf = _fold_newton(model, u_seed, float(vs[i]))
        folds.append(vf)
    lo, hi = sorted(folds)
    if not lo < hi:
        raise FoldNotFound("fold search returned a degenerate interval")
    return BistableInterval(lo, hi)


def fold_points(model: BistableModel, tol: Tolerances = DEFAULT_TOL) -> BistableInterval:
    """Fold values v_lower < v_upper bounding the bistable range of v."""
    if isinstance(model, Cubic):
        return _cubic_folds(model)
    if isinstance(model, Hill):
        ff = model.fold_formula()
        return BistableInterval(ff["v_lower"], ff["v_upper"])
    if isinstance(model, Custom):
        if model.interval is not None:
            return model.interval
        return _custom_folds(model, tol=tol)
    raise FoldNotFound(f"no fold strategy for {type(model).__name__}")


# ---------------------------------------------------------------------------
# Maxwell integral


def _quad(func, a, b, tol):
    val, _ = integrate.quad(func, a, b, epsabs=tol.quad_abs * 0.1, epsrel=1e-13, limit=200)
    return val


def maxwell_integral_J(model: BistableModel, v: float, tol: Tolerances = DEFAULT_TOL) -> float:
    """J(v): integral of f(., v) between the outer roots h-(v) and h+(v)."""
    r = roots_at(model, v, tol)
    return _quad(lambda u: model.f(u, v), r.h_minus, r.h_plus, tol)


def fold_roots(model: BistableModel, v: float, tol: Tolerances = DEFAULT_TOL, merge_tol=1e-6):
    """Distinct roots of f(., v) at a fold value, where two of the three merge.

    The double root is taken from the critical points of f(., v) with a
    vanishing value; simple roots come from sign changes.
    """
    v = float(v)
    lo, hi = model.u_search_range(v)
    grid = np.linspace(lo, hi, tol.scan_points)
    crit = _sign_change_roots(lambda u: model.fu(u, v), grid, tol.bisection)
    scale = max(1.0, float(np.max(np.abs(model.f(grid, v)))))
    double = [c for c in crit if abs(model.f(c, v)) <= 1e-9 * scale]
    simple = bracket_roots(model, v, (lo, hi), tol)
    out = sorted(double)
    for r in simple:
        if all(abs(r - d) > merge_tol * max(1.0, abs(d)) for d in double):
            out.append(r)
    out = sorted(out)
    if len(out) < 2:
        raise NotBistable(f"fewer than two distinct roots at the fold v={v!r}")
    return out


def maxwell_integral_at_fold(model: BistableModel, which: str = "lower",
                             tol: Tolerances = DEFAULT_TOL) -> float:
    """J at a fold: the integral of f between the outermost roots there.

    J extends continuously to the closed bistable interval, where one outer
    root has merged with h0.
    """
    iv = fold_points(model, tol)
    v = {"lower": iv.v_lower, "upper": iv.v_upper}[which]
    rs = fold_roots(model, v, tol)
    return _quad(lambda u: model.f(u, v), rs[0], rs[-1], tol)


def maxwell_slope_Jprime(model: BistableModel, v: float, tol: Tolerances = DEFAULT_TOL) -> float:
    """J'(v): integral of f_v(., v) over [h-(v), h+(v)].

    The boundary terms of d/dv vanish because f(h+-, v) = 0.
    """
    r = roots_at(model, v, tol)
    return _quad(lambda u: float(model.fv(u, v)), r.h_minus, r.h_plus, tol)


def find_vstar(model: BistableModel, tol: Tolerances = DEFAULT_TOL, scan_margin=None,
               select: int | None = None) -> MaxwellPoint:
    """Locate the Maxwell point v* with J(v*) = 0.

    A sign scan over the open bistable interval brackets the zeros of J;
    the selected bracket is refined by Brent's method and polished with a
    Newton step using J'.

    Parameters
    ----------
    scan_margin : float, optional
        Distance kept from each fold; default ``fold_margin * width``.
    select : int, optional
        Index of the zero to pin when J changes sign more than once.
    """
    interval = fold_points(model, tol)
    delta = scan_margin if scan_margin is not None else tol.fold_margin * interval.width
    vs = np.linspace(interval.v_lower + delta, interval.v_upper - delta, tol.vstar_scan_points)
    js = np.array([maxwell_integral_J(model, v, tol) for v in vs])
    brackets = [(vs[i], vs[i + 1]) for i in range(len(vs) - 1) if js[i] == 0 or js[i] * js[i + 1] < 0]
    if not brackets:
        raise NoMaxwellPoint(
            f"J does not change sign on ({vs[0]!r}, {vs[-1]!r}); "
            f"J ranges over [{js.min():.4g}, {js.max():.4g}]"
        )
    if len(brackets) > 1 and select is None:
        raise MultipleMaxwellPoints(
            f"J changes sign {len(brackets)} times; choose one with select=<index>", brackets
        )
    a, b = brackets[select or 0]
    jfun = lambda v: maxwell_integral_J(model, v, tol)
    v = optimize.brentq(jfun, a, b, xtol=tol.bisection, rtol=1e-15)
    jv = jfun(v)
    for _ in range(3):
        jp = maxwell_slope_Jprime(model, v, tol)
        cand = v - jv / jp
        if not a <= cand <= b:
            break
        jc = jfun(cand)
        if abs(jc) >= abs(jv):
            break
        v, jv = cand, jc
    return MaxwellPoint(float(v), float(maxwell_slope_Jprime(model, v, tol)))


def verify_assumptions(model: BistableModel, n_samples: int = 64,
                       tol: Tolerances = DEFAULT_TOL) -> AssumptionReport:
    """Check bistability, the Maxwell condition and f_u < f_v on both branches.

    Failures are recorded in the report; nothing is raised.
    """
    if n_samples < 3:
        raise ValueError("n_samples must be >= 3")
    report = AssumptionReport(a1_holds=True, a2_holds=False, a3_holds=True)
    try:
        interval = fold_points(model, tol)
    except FoldNotFound as exc:
        report.a1_holds = False
        report.a3_holds = False
        report.messages.append(f"fold search failed: {exc}")
        return report
    # open interval: interior points of a uniform partition
    vs = np.linspace(interval.v_lower, interval.v_upper, n_samples + 2)[1:-1]
    margins = []
    for v in vs:
        v = float(v)
        try:
            r = roots_at(model, v, tol)
        except NotBistable as exc:
            report.a1_holds = False
            report.a1_failures.append(v)
            report.messages.append(str(exc))
            continue
        m = min(
            float(model.fv(h, v) - model.fu(h, v)) for h in (r.h_minus, r.h_plus)
        )
        margins.append(m)
        report.samples.append((v, m))
        if not m > 0:
            report.a3_holds = False
            report.a3_failures.append(v)
    if margins:
        report.min_a3_margin = float(min(margins))
    else:
        report.a3_holds = False
    try:
        mp = find_vstar(model, tol)
        report.v_star = mp.v_star
        report.j_prime_at_vstar = mp.j_prime
        report.j_at_vstar = maxwell_integral_J(model, mp.v_star, tol)
        report.a2_holds = abs(report.j_at_vstar) <= 1e-10 and mp.j_prime != 0
    except (NoMaxwellPoint, MultipleMaxwellPoints, NotBistable) as exc:
        report.messages.append(f"(A2): {exc}")
    return report


MODEL_REGISTRY: dict[str, Callable[..., BistableModel]] = {
    "cubic": Cubic,
    "hill": Hill,
}


def make_model(name: str, params: dict | None = None) -> BistableModel:
    try:
        cls = MODEL_REGISTRY[name]
    except KeyError:
        raise ValueError(f"unknown model {name!r}; choose from {sorted(MODEL_REGISTRY)}")
    return cls(**(params or {}))
