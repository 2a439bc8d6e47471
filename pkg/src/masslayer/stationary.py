"""Finite-difference Newton solver for the reduced stationary problem.

Stationary solutions satisfy eps^2 u + D v = C, so v is slaved to u and the
scalar C. The unknowns are (u_0..u_{n-1}, C) and the equations are

    eps^2 (Lap u)_i + f(u_i, (C - eps^2 u_i)/D) = 0,      i = 0..n-1
    C/D + (1 - eps^2/D) sum_i w_i u_i - xi = 0

on a vertex-centred uniform grid with mirror-ghost Neumann closure and
trapezoid weights w. With that pairing sum_i w_i (Lap u)_i = 0 exactly, which
is what makes the mass row and the time stepper conservative.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sps
from scipy.sparse.linalg import splu

from .asymptotics import Direction, LayerAsymptotics, analyze, leading_order_fields
from .errors import ConfigError, JacobianSingular, NewtonDiverged, NotBistable
from .model import BistableModel, roots_at

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Grid:
    n: int
    x: np.ndarray = field(repr=False)
    h: float
    w: np.ndarray = field(repr=False)

    @classmethod
    def uniform(cls, n: int) -> "Grid":
        if n < 3:
            raise ValueError("grid needs at least 3 nodes")
        x = np.linspace(0.0, 1.0, n)
        h = 1.0 / (n - 1)
        w = np.full(n, h)
        w[0] = w[-1] = 0.5 * h
        return cls(n=n, x=x, h=h, w=w)

    @classmethod
    def for_eps(cls, eps: float, cells_per_eps: float = 8.0) -> "Grid":
        """Smallest grid with h <= eps / cells_per_eps."""
        n = int(math.ceil(cells_per_eps / eps)) + 1
        return cls.uniform(n)

    def laplacian(self) -> sps.csr_matrix:
        n, h2 = self.n, self.h * self.h
        main = np.full(n, -2.0 / h2)
        upper = np.full(n - 1, 1.0 / h2)
        lower = np.full(n - 1, 1.0 / h2)
        upper[0] = 2.0 / h2
        lower[-1] = 2.0 / h2
        return sps.diags([lower, main, upper], [-1, 0, 1], format="csr")

    def apply_laplacian(self, u):
        h2 = self.h * self.h
        out = np.empty_like(u)
        out[1:-1] = (u[:-2] - 2.0 * u[1:-1] + u[2:]) / h2
        out[0] = 2.0 * (u[1] - u[0]) / h2
        out[-1] = 2.0 * (u[-2] - u[-1]) / h2
        return out

    def integrate(self, g):
        return float(np.dot(self.w, g))


def check_resolution(grid: Grid, eps: float):
    if grid.h > eps / 2.0:
        raise ConfigError(f"grid spacing h={grid.h:.3g} exceeds eps/2={eps / 2:.3g}; layer unresolved")
    if grid.h > eps / 4.0:
        warnings.warn(f"grid spacing h={grid.h:.3g} exceeds eps/4; layer is marginally resolved",
                      RuntimeWarning, stacklevel=3)


@dataclass
class StationaryState:
    u: np.ndarray = field(repr=False)
    v: np.ndarray = field(repr=False)
    c: float
    eps: float
    d: float
    xi: float
    residual_norm: float
    newton_iters: int
    layer_x: float
    grid: Grid = field(repr=False)
    model: BistableModel = field(repr=False)
    direction: Direction = Direction.UP
    mass_error: float = 0.0

    @property
    def v_plateau(self):
        return self.c / self.d

    def summary(self):
        return {
            "eps": self.eps,
            "d": self.d,
            "xi": self.xi,
            "c": self.c,
            "v_plateau": self.v_plateau,
            "layer_x": self.layer_x,
            "residual_norm": self.residual_norm,
            "mass_error": self.mass_error,
            "newton_iters": self.newton_iters,
            "n": self.grid.n,
            "direction": self.direction.value,
            "model": self.model.describe(),
        }


def assemble_residual(u, c, model, eps, d, xi, grid: Grid):
    """Residual of the (n+1)-dimensional reduced system at (u, c)."""
    v = (c - eps**2 * u) / d
    res = np.empty(grid.n + 1)
    res[:-1] = eps**2 * grid.apply_laplacian(u) + model.f(u, v)
    res[-1] = c / d + (1.0 - eps**2 / d) * grid.integrate(u) - xi
    return res


def assemble_jacobian(u, c, model, eps, d, grid: Grid, lap=None):
    lap = grid.laplacian() if lap is None else lap
    v = (c - eps**2 * u) / d
    fu = model.fu(u, v)
    fv = np.broadcast_to(model.fv(u, v), u.shape)
    diag = fu - eps**2 / d * fv
    block = eps**2 * lap + sps.diags(diag)
    col = sps.csr_matrix((fv / d).reshape(-1, 1))
    row = sps.csr_matrix(np.append((1.0 - eps**2 / d) * grid.w, 1.0 / d).reshape(1, -1))
    top = sps.hstack([block, col])
    return sps.vstack([top, row]).tocsc()


def locate_layer(x, u, level, direction=Direction.UP):
    """First crossing of ``u`` through ``level``, linearly interpolated."""
    s = u - level
    if Direction.parse(direction) is Direction.DOWN:
        s = -s
    idx = np.nonzero((s[:-1] < 0) & (s[1:] >= 0))[0]
    if idx.size == 0:
        return math.nan
    i = idx[0]
    t = -s[i] / (s[i + 1] - s[i])
    return float(x[i] + t * (x[i + 1] - x[i]))


def layer_level(model, v_plateau, fallback=None):
    try:
        return roots_at(model, v_plateau).h_zero
    except NotBistable:
        if fallback is None:
            raise
        return fallback


def newton_solve(u0, c0, model: BistableModel, eps: float, d: float, xi: float, grid: Grid,
                 direction="up", tol: float = 1e-11, max_iter: int = 50,
                 min_step: float = 2.0**-20, level_fallback=None) -> StationaryState:
    """Damped Newton iteration for the reduced stationary system.

    Parameters
    ----------
    u0, c0 : array, float
        Initial guess, usually from :func:`leading_order_fields` and C0 = D v*.
    tol : float
        Target for the residual sup-norm.

    Raises
    ------
    NewtonDiverged
        Iteration cap reached or no decrease at the smallest damping factor.
    JacobianSingular
        The bordered Jacobian could not be factorised.
    """
    check_resolution(grid, eps)
    direction = Direction.parse(direction)
    lap = grid.laplacian()
    u = np.array(u0, dtype=float, copy=True)
    c = float(c0)
    res = assemble_residual(u, c, model, eps, d, xi, grid)
    rnorm = np.max(np.abs(res))
    it = 0
    while rnorm > tol:
        if it >= max_iter:
            raise NewtonDiverged(f"no convergence after {max_iter} iterations "
                                 f"(residual {rnorm:.3e})", eps=eps)
        jac = assemble_jacobian(u, c, model, eps, d, grid, lap)
        try:
            lu = splu(jac)
        except RuntimeError as exc:
            raise JacobianSingular(f"Jacobian factorisation failed: {exc}", condition=math.inf)
        step = lu.solve(-res)
        if not np.all(np.isfinite(step)):
            raise JacobianSingular("Jacobian solve produced non-finite values", condition=math.inf)
        lam = 1.0
        while True:
            u_try = u + lam * step[:-1]
            c_try = c + lam * step[-1]
            res_try = assemble_residual(u_try, c_try, model, eps, d, xi, grid)
            rn_try = np.max(np.abs(res_try))
            # Armijo on the sup-norm
            if np.isfinite(rn_try) and rn_try <= (1.0 - 1e-4 * lam) * rnorm:
                break
            lam *= 0.5
            if lam < min_step:
                if rn_try < rnorm or rnorm < 100 * tol:
                    break
                raise NewtonDiverged(f"residual does not decrease at step size {lam:.2e} "
                                     f"(residual {rnorm:.3e})", eps=eps)
        u, c, res, rnorm = u_try, c_try, res_try, rn_try
        it += 1
        log.debug("newton eps=%g iter=%d lam=%g residual=%.3e", eps, it, lam, rnorm)
    v = (c - eps**2 * u) / d
    mass_error = grid.integrate(u + v) - xi
    level = layer_level(model, c / d, level_fallback)
    return StationaryState(
        u=u, v=v, c=c, eps=eps, d=d, xi=xi, residual_norm=float(rnorm), newton_iters=it,
        layer_x=locate_layer(grid.x, u, level, direction), grid=grid, model=model,
        direction=direction, mass_error=float(mass_error),
    )


def initial_guess(asym: LayerAsymptotics, eps: float, grid: Grid):
    u0, _ = leading_order_fields(asym, eps, grid.x)
    return u0, asym.c0 + eps * asym.c1


def solve_stationary(model: BistableModel, eps: float, d: float, xi: float, n: int | None = None,
                     direction="up", asym: LayerAsymptotics | None = None, **opts) -> StationaryState:
    """Asymptotic initial guess followed by :func:`newton_solve`."""
    asym = asym or analyze(model, d, xi, direction)
    grid = Grid.uniform(n) if n else Grid.for_eps(eps)
    u0, c0 = initial_guess(asym, eps, grid)
    return newton_solve(u0, c0, model, eps, d, xi, grid, asym.direction,
                        level_fallback=asym.h_zero, **opts)


@dataclass
class ContinuationStep:
    state: StationaryState
    layer_offset: float
    c_offset: float
    sup_all: float
    sup_outer: float

    def row(self):
        s = self.state
        return {
            "eps": s.eps, "layer_x": s.layer_x, "c": s.c, "mass_error": s.mass_error,
            "residual_norm": s.residual_norm, "newton_iters": s.newton_iters,
            "layer_offset": self.layer_offset, "c_offset": self.c_offset,
            "sup_all": self.sup_all, "sup_outer": self.sup_outer,
        }


def continuation_in_eps(eps_list, model: BistableModel, d: float, xi: float, grid: Grid | None = None,
                        direction="up", asym: LayerAsymptotics | None = None,
                        sigma: float = 0.1, **opts) -> list[ContinuationStep]:
    """Solve along a descending list of eps, warm-starting each from the last.

    A single grid resolving the smallest eps is used for the whole list unless
    ``grid`` is given.
    """
    eps_list = [float(e) for e in eps_list]
    if any(b >= a for a, b in zip(eps_list, eps_list[1:])):
        raise ValueError("eps_list must be strictly descending")
    asym = asym or analyze(model, d, xi, direction)
    grid = grid or Grid.for_eps(min(eps_list))
    out = []
    prev = None
    for eps in eps_list:
        if prev is None:
            u0, c0 = initial_guess(asym, eps, grid)
        else:
            u0, c0 = prev.u, prev.c
        try:
            state = newton_solve(u0, c0, model, eps, d, xi, grid, asym.direction,
                                 level_fallback=asym.h_zero, **opts)
        except NewtonDiverged:
            if prev is None:
                raise
            log.info("warm start failed at eps=%g; retrying from the asymptotic guess", eps)
            u0, c0 = initial_guess(asym, eps, grid)
            state = newton_solve(u0, c0, model, eps, d, xi, grid, asym.direction,
                                 level_fallback=asym.h_zero, **opts)
        sup_all, sup_outer, offset = distance_to_asymptotics(state, asym, sigma)
        out.append(ContinuationStep(state, offset, state.c - asym.c0, sup_all, sup_outer))
        prev = state
    return out


def distance_to_asymptotics(state: StationaryState, asym: LayerAsymptotics, sigma: float = 0.1):
    """(sup |u - u0| overall, sup on |x - x*| >= sigma, |layer_x - x*(eps)|)."""
    x = state.grid.x
    u0, _ = leading_order_fields(asym, state.eps, x)
    diff = np.abs(state.u - u0)
    outer = np.abs(x - asym.x_star) >= sigma
    sup_outer = float(np.max(diff[outer])) if np.any(outer) else 0.0
    offset = abs(state.layer_x - asym.layer_position_eps(state.eps))
    return float(np.max(diff)), sup_outer, float(offset)
