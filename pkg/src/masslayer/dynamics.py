"""Conservative IMEX time stepping and layer-relaxation diagnostics.

One step of the scheme is

    (I - dt eps^2 Lap) u' = u + dt f(u, v)
    (I - dt D Lap)     v' = v - dt f(u, v)

with the same explicit reaction term in both rows. Since w^T (I - c Lap) = w^T
for the trapezoid weights, sum w (u' + v') = sum w (u + v) to roundoff.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sps
from scipy.sparse.linalg import splu

from .asymptotics import Direction, LayerAsymptotics
from .errors import FitFailed, StepRejected
from .stationary import Grid, locate_layer

log = logging.getLogger(__name__)


class IMEXStepper:
    """Caches the two implicit diffusion factorisations for a fixed dt."""

    def __init__(self, model, eps, d, grid: Grid, dt, blowup=1e6, frozen_v=False):
        self.model, self.eps, self.d, self.grid = model, eps, d, grid
        self.blowup = blowup
        self.frozen_v = frozen_v
        self._lap = grid.laplacian()
        self.dt = None
        self.set_dt(dt)

    def set_dt(self, dt):
        if not dt > 0:
            raise ValueError("dt must be positive")
        if dt == self.dt:
            return
        self.dt = dt
        eye = sps.identity(self.grid.n, format="csc")
        self._lu_u = splu((eye - dt * self.eps**2 * self._lap).tocsc())
        self._lu_v = splu((eye - dt * self.d * self._lap).tocsc())

    def __call__(self, u, v):
        # solve for increments: the solve error then scales with the update,
        # not with the plateau values (matters for mass drift when |v| ~ 1)
        dt = self.dt
        r = self.model.f(u, v)
        u_new = u + self._lu_u.solve(dt * (self.eps**2 * (self._lap @ u) + r))
        if self.frozen_v:
            v_new = v
        else:
            v_new = v + self._lu_v.solve(dt * (self.d * (self._lap @ v) - r))
        if not np.all(np.isfinite(u_new)) or np.max(np.abs(u_new)) > self.blowup:
            raise StepRejected("solution exceeded the blow-up bound")
        return u_new, v_new


def step(u, v, model, eps, d, dt, grid: Grid, blowup=1e6):
    """Single IMEX step; see :class:`IMEXStepper` for repeated use."""
    return IMEXStepper(model, eps, d, grid, dt, blowup)(u, v)


def default_dt(model, u, v, dt_cap=0.1):
    fu_max = float(np.max(np.abs(model.fu(u, v))))
    return min(dt_cap, 0.5 / fu_max) if fu_max > 0 else dt_cap


@dataclass
class DecayFit:
    rate: float
    r2: float
    n_points: int
    window: tuple

    def to_dict(self):
        return {"rate": self.rate, "r2": self.r2, "n_points": self.n_points,
                "window": list(self.window)}


@dataclass
class SimulationTrace:
    times: np.ndarray
    mass: np.ndarray
    layer_x: np.ndarray
    snapshots: list = field(default_factory=list, repr=False)
    eps: float = math.nan
    decay_fit: DecayFit | None = None

    @property
    def fast_times(self):
        """Times on the fast scale tau = t/eps."""
        return self.times / self.eps

    @property
    def final(self):
        return self.snapshots[-1] if self.snapshots else None


def simulate(u0, v0, model, eps, d, grid: Grid, t_end, dt=None, snapshot_every=None,
             level=None, direction="up", frozen_v=False, record_every=1, blowup=1e6,
             dt_cap=0.1, refresh_every=100) -> SimulationTrace:
    """Integrate from (u0, v0) to ``t_end``.

    Parameters
    ----------
    dt : float, optional
        Fixed step. When omitted, dt = min(dt_cap, 0.5/max|f_u|) and is
        re-evaluated every ``refresh_every`` steps.
    snapshot_every : float, optional
        Interval between stored field snapshots; the initial and final
        states are always stored.
    level : float, optional
        Level whose crossing defines the layer position.
    frozen_v : bool
        Keep v fixed and evolve u alone (scalar bistable equation).
    """
    direction = Direction.parse(direction)
    u = np.array(u0, dtype=float, copy=True)
    v = np.array(v0, dtype=float, copy=True)
    adaptive = dt is None
    stepper = IMEXStepper(model, eps, d, grid, dt if dt else default_dt(model, u, v, dt_cap),
                          blowup, frozen_v)
    if level is None:
        level = 0.5 * (float(np.min(u)) + float(np.max(u)))
    times, mass, layer = [0.0], [grid.integrate(u + v)], [locate_layer(grid.x, u, level, direction)]
    snaps = [(0.0, u.copy(), v.copy())]
    next_snap = snapshot_every if snapshot_every else math.inf
    t = 0.0
    k = 0
    while t < t_end - 1e-12:
        if adaptive and k and k % refresh_every == 0:
            stepper.set_dt(default_dt(model, u, v, dt_cap))
        h = stepper.dt
        if t + h > t_end:
            stepper.set_dt(t_end - t)
        try:
            u, v = stepper(u, v)
        except StepRejected as exc:
            exc.time = t
            raise
        t += stepper.dt
        if stepper.dt != h:
            stepper.set_dt(h)
        k += 1
        if k % record_every == 0 or t >= t_end - 1e-12:
            times.append(t)
            mass.append(grid.integrate(u + v))
            layer.append(locate_layer(grid.x, u, level, direction))
        if t >= next_snap - 1e-12:
            snaps.append((t, u.copy(), v.copy()))
            next_snap += snapshot_every
    if snaps[-1][0] != t:
        snaps.append((t, u.copy(), v.copy()))
    return SimulationTrace(times=np.array(times), mass=np.array(mass), layer_x=np.array(layer),
                           snapshots=snaps, eps=eps)


def decay_rate_fit(trace: SimulationTrace, x_inf: float, window=None, min_disp=1e-5,
                   min_points=10) -> DecayFit:
    """Least-squares slope of log|layer_x(t) - x_inf| over a time window.

    ``x_inf`` should come from the Newton solution on the same grid. Points
    with displacement below ``min_disp`` are dropped because interpolation
    noise dominates there.
    """
    t = trace.times
    disp = np.abs(trace.layer_x - x_inf)
    lo, hi = window if window is not None else (t[0], t[-1])
    sel = (t >= lo) & (t <= hi) & np.isfinite(disp) & (disp >= min_disp)
    if np.count_nonzero(sel) < min_points:
        raise FitFailed(f"only {np.count_nonzero(sel)} usable points in window {lo}..{hi}")
    ts, ds = t[sel], disp[sel]
    # tail monotonicity: allow roundoff-level wiggle only
    if np.any(np.diff(ds) > 1e-3 * ds[:-1] + 1e-12):
        raise FitFailed("displacement is not monotone in the fit window")
    y = np.log(ds)
    a = np.vstack([np.ones_like(ts), ts]).T
    coef, *_ = np.linalg.lstsq(a, y, rcond=None)
    pred = a @ coef
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum((y - pred) ** 2)) / ss_tot if ss_tot > 0 else 1.0
    return DecayFit(rate=float(coef[1]), r2=r2, n_points=int(ts.size), window=(float(lo), float(hi)))


def drift_rate(trace: SimulationTrace, displacement: float, window=None) -> float:
    """Mean |d layer_x/dt| over a window, per unit displacement.

    Comparable with |lambda| for a mode that relaxes a displacement of the
    given size; used for the frozen-v run where nothing decays.
    """
    t = trace.times
    lo, hi = window if window is not None else (t[0], t[-1])
    i0 = int(np.searchsorted(t, lo))
    i1 = int(np.searchsorted(t, hi, side="right")) - 1
    if i1 <= i0:
        raise FitFailed("empty drift window")
    speed = abs(trace.layer_x[i1] - trace.layer_x[i0]) / (t[i1] - t[i0])
    return float(speed / abs(displacement))


def displaced_initial(asym: LayerAsymptotics, eps: float, grid: Grid, shift: float):
    """Composite profile with its layer moved by ``shift``; v uniform, total mass xi."""
    xs = asym.layer_position_eps(eps) + shift
    if asym.direction is Direction.UP:
        z = (grid.x - xs) / eps
    else:
        z = (xs - grid.x) / eps
    u = asym.q_profile(z)
    v = np.full(grid.n, asym.xi - grid.integrate(u))
    return u, v


def ignition_initial(asym: LayerAsymptotics, eps: float, grid: Grid, width: float):
    """u at h+ on a seed of ``width`` near x = 1, h- elsewhere; v uniform with mass xi."""
    edge = 1.0 - width
    z = (grid.x - edge) / eps
    u = asym.h_minus + (asym.h_plus - asym.h_minus) * 0.5 * (1.0 + np.tanh(z / (2.0 * math.sqrt(2.0))))
    v = np.full(grid.n, asym.xi - grid.integrate(u))
    return u, v
