"""Spectrum of the linearisation about a stationary layer.

The operator acting on perturbations (phi, psi) is

    [ eps^2 Lap + f_u      f_v          ]
    [ -f_u                 D Lap - f_v  ]

with f_u, f_v evaluated on the stationary state. Because the reaction
terms cancel and the discrete Laplacian satisfies w^T Lap = 0, the row
functional (w, w) annihilates the matrix, so the range lies in the
mass-free space sum w (phi + psi) = 0. Every eigenvector with a nonzero
eigenvalue therefore already belongs to that space; only one zero mode
carries mass and is discarded.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sps
from scipy.sparse.linalg import ArpackNoConvergence, eigs

from .asymptotics import LayerAsymptotics, analyze
from .errors import AmbiguousMassMode, EigensolverFailed, MassLayerError
from .stationary import Grid, StationaryState, continuation_in_eps, newton_solve, initial_guess

log = logging.getLogger(__name__)

DENSE_LIMIT = 4096


@dataclass
class LinearizedOperator:
    matrix: sps.csr_matrix = field(repr=False)
    grid: Grid = field(repr=False)
    state: StationaryState = field(repr=False)
    fu: np.ndarray = field(repr=False)
    fv: np.ndarray = field(repr=False)

    @property
    def size(self):
        return self.matrix.shape[0]

    @property
    def eps(self):
        return self.state.eps

    def dense(self):
        return self.matrix.toarray()

    def mass_row(self):
        return np.concatenate([self.grid.w, self.grid.w])

    def left_annihilation(self):
        """||(w, w)^T A||_inf relative to ||A||_inf."""
        r = self.matrix.T @ self.mass_row()
        norm = sps.linalg.norm(self.matrix, np.inf)
        return float(np.max(np.abs(r)) / norm)

    def scalar_block(self):
        eps = self.state.eps
        return eps**2 * self.grid.laplacian() + sps.diags(self.fu)


def assemble_linearization(state: StationaryState, grid: Grid | None = None) -> LinearizedOperator:
    grid = grid or state.grid
    m = state.model
    fu = np.asarray(m.fu(state.u, state.v), dtype=float)
    fv = np.broadcast_to(np.asarray(m.fv(state.u, state.v), dtype=float), fu.shape).copy()
    lap = grid.laplacian()
    top = sps.hstack([state.eps**2 * lap + sps.diags(fu), sps.diags(fv)])
    bottom = sps.hstack([sps.diags(-fu), state.d * lap - sps.diags(fv)])
    mat = sps.vstack([top, bottom]).tocsr()
    return LinearizedOperator(matrix=mat, grid=grid, state=state, fu=fu, fv=fv)


@dataclass
class SpectrumResult:
    eigenvalues: np.ndarray            # in-X spectrum, descending real part
    mass_functionals: np.ndarray       # per returned eigenvector
    critical: complex
    mu0_scalar: float
    second_gap: float
    mass_mode_eigenvalue: complex
    mass_mode_functional: float
    all_eigenvalues: np.ndarray = field(repr=False)
    all_mass_functionals: np.ndarray = field(repr=False)
    eigenvectors: np.ndarray | None = field(default=None, repr=False)

    def to_dict(self):
        return {
            "eigenvalues": [[float(z.real), float(z.imag)] for z in self.eigenvalues],
            "mass_functionals": [float(m) for m in self.mass_functionals],
            "critical": [float(self.critical.real), float(self.critical.imag)],
            "mu0_scalar": float(self.mu0_scalar),
            "second_gap": float(self.second_gap),
            "mass_mode_eigenvalue": [float(self.mass_mode_eigenvalue.real),
                                     float(self.mass_mode_eigenvalue.imag)],
            "mass_mode_functional": float(self.mass_mode_functional),
        }


def _mass_functionals(vecs, w):
    n = len(w)
    phi, psi = vecs[:n], vecs[n:]
    mass = np.abs(w @ (phi + psi))
    norm = np.sqrt(w @ (np.abs(phi) ** 2 + np.abs(psi) ** 2))
    return mass / norm


def _dense_eig(op):
    try:
        vals, vecs = sla.eig(op.dense())
    except (sla.LinAlgError, ValueError) as exc:
        raise EigensolverFailed(f"dense eigensolver failed: {exc}")
    return vals, vecs


def _sparse_eig(op, shifts, count):
    vals, vecs = [], []
    for sigma in shifts:
        try:
            lv, lx = eigs(op.matrix.tocsc(), k=min(count, op.size - 2), sigma=sigma, which="LM",
                          tol=1e-12, maxiter=20 * op.size)
        except ArpackNoConvergence as exc:
            raise EigensolverFailed(f"shift-invert Arnoldi did not converge at sigma={sigma}: {exc}")
        vals.append(lv)
        vecs.append(lx)
    vals = np.concatenate(vals)
    vecs = np.concatenate(vecs, axis=1)
    # merge duplicates found from both shifts
    keep = []
    for i, z in enumerate(vals):
        if all(abs(z - vals[j]) > 1e-9 * max(1.0, abs(z)) for j in keep):
            keep.append(i)
    return vals[keep], vecs[:, keep]


def constrained_spectrum(op: LinearizedOperator, re_min: float | None = None, count: int = 40,
                         method: str = "auto", mass_threshold: float = 1e-6,
                         zero_tol: float = 1e-8, keep_vectors: bool = False) -> SpectrumResult:
    """Eigenvalues of the linearisation on the mass-free space.

    Parameters
    ----------
    re_min : float, optional
        Lower edge of the reporting window (also the second shift of the
        sparse path). Eigenvalues with smaller real part are dropped from
        ``eigenvalues`` but kept in ``all_eigenvalues``.
    method : {"auto", "dense", "sparse"}
        ``auto`` uses the dense solver up to a 4096x4096 matrix.
    mass_threshold : float
        Normalised mass functional above which an eigenvector counts as
        carrying mass.
    """
    if method == "auto":
        method = "dense" if op.size <= DENSE_LIMIT else "sparse"
    if method == "dense":
        vals, vecs = _dense_eig(op)
    elif method == "sparse":
        shifts = [1e-6] + ([re_min] if re_min is not None else [])
        vals, vecs = _sparse_eig(op, shifts, count)
    else:
        raise ValueError(f"unknown method {method!r}")
    masses = _mass_functionals(vecs, op.grid.w)
    order = np.argsort(-vals.real, kind="stable")
    vals, vecs, masses = vals[order], vecs[:, order], masses[order]

    carriers = np.nonzero(masses > mass_threshold)[0]
    near_zero = [i for i in carriers if abs(vals[i]) <= zero_tol]
    if len(near_zero) > 1:
        raise AmbiguousMassMode(
            f"{len(near_zero)} eigenvectors with |lambda| <= {zero_tol:g} carry mass; "
            "the grid is probably too coarse"
        )
    if near_zero:
        k = near_zero[0]
    else:
        # fall back to the eigenvalue closest to zero among mass carriers
        if carriers.size == 0:
            raise EigensolverFailed("no eigenvector carries mass; the zero mode was not found")
        k = int(carriers[np.argmin(np.abs(vals[carriers]))])
        log.warning("mass mode eigenvalue %.3e exceeds zero tolerance", abs(vals[k]))
    mask = np.ones(len(vals), dtype=bool)
    mask[k] = False
    in_x = vals[mask]
    in_x_mass = masses[mask]
    if in_x.size == 0:
        raise EigensolverFailed("no eigenvalues left after removing the mass mode")
    mu0, _ = scalar_principal_eigenvalue(op)
    window = np.ones(in_x.size, dtype=bool) if re_min is None else in_x.real >= re_min
    return SpectrumResult(
        eigenvalues=in_x[window],
        mass_functionals=in_x_mass[window],
        critical=complex(in_x[0]),
        mu0_scalar=mu0,
        second_gap=float(in_x[1].real) if in_x.size > 1 else math.nan,
        mass_mode_eigenvalue=complex(vals[k]),
        mass_mode_functional=float(masses[k]),
        all_eigenvalues=vals,
        all_mass_functionals=masses,
        eigenvectors=vecs if keep_vectors else None,
    )


def scalar_principal_eigenvalue(op: LinearizedOperator):
    """Principal eigenpair of eps^2 Lap + f_u alone.

    The Neumann Laplacian is symmetric in the w-weighted inner product, so
    W^(1/2) L W^(-1/2) is a symmetric tridiagonal matrix. The returned
    eigenfunction has sum w phi^2 = 1 and positive integral.
    """
    g = op.grid
    eps = op.state.eps
    h2 = g.h * g.h
    diag = -2.0 * eps**2 / h2 + op.fu
    off = np.full(g.n - 1, eps**2 / h2)
    off[0] *= math.sqrt(2.0)
    off[-1] *= math.sqrt(2.0)
    try:
        vals, vecs = sla.eigh_tridiagonal(diag, off, select="i", select_range=(g.n - 1, g.n - 1))
    except sla.LinAlgError as exc:
        raise EigensolverFailed(f"tridiagonal eigensolver failed: {exc}")
    y = vecs[:, 0]
    phi = y / np.sqrt(g.w)
    if g.integrate(phi) < 0:
        phi = -phi
    return float(vals[0]), phi


def window_thresholds(asym: LayerAsymptotics):
    """delta1 = min(nu, inf (f_v - f_u)/2) from plateau values; reporting only."""
    m, v = asym.model, asym.v_star
    hs = (asym.h_minus, asym.h_plus)
    nu = min(-m.fu(h, v) for h in hs)
    gap = min((m.fv(h, v) - m.fu(h, v)) / 2.0 for h in hs)
    return {"nu": float(nu), "delta1": float(min(nu, gap))}


@dataclass
class ScalingFit:
    slope: float
    intercept_slope: float     # coefficient of eps in lambda/eps = s + b*eps
    r2: float
    predicted: float
    table: list
    failures: list

    @property
    def relative_error(self):
        return abs(self.slope - self.predicted) / abs(self.predicted)

    def to_dict(self):
        return {"slope": self.slope, "eps_coefficient": self.intercept_slope, "r2": self.r2,
                "predicted": self.predicted, "relative_error": self.relative_error,
                "table": self.table, "failures": self.failures}


def linear_fit(x, y):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    a = np.vstack([np.ones_like(x), x]).T
    coef, *_ = np.linalg.lstsq(a, y, rcond=None)
    pred = a @ coef
    ss_res = float(np.sum((y - pred) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return float(coef[0]), float(coef[1]), r2


def spectrum_at(model, d, xi, eps, direction="up", asym=None, cells_per_eps=8.0, n=None,
                state=None, **spec_opts):
    """Solve for the stationary state at one eps and return (state, operator, spectrum)."""
    asym = asym or analyze(model, d, xi, direction)
    if state is None:
        grid = Grid.uniform(n) if n else Grid.for_eps(eps, cells_per_eps)
        u0, c0 = initial_guess(asym, eps, grid)
        state = newton_solve(u0, c0, model, eps, d, xi, grid, asym.direction,
                             level_fallback=asym.h_zero)
    op = assemble_linearization(state)
    return state, op, constrained_spectrum(op, **spec_opts)


def scaling_study(model, d, xi, eps_list, direction="up", cells_per_eps=8.0,
                  asym: LayerAsymptotics | None = None, **spec_opts) -> ScalingFit:
    """Critical eigenvalue over a list of eps, extrapolated to eps -> 0.

    Fits lambda_crit/eps = s + b*eps by least squares and compares s with
    :func:`predict_critical_eigenvalue_slope`. Failing entries are reported
    and skipped.
    """
    asym = asym or analyze(model, d, xi, direction)
    table, failures = [], []
    for eps in eps_list:
        try:
            state, op, res = spectrum_at(model, d, xi, eps, direction, asym, cells_per_eps, **spec_opts)
        except MassLayerError as exc:
            failures.append({"eps": float(eps), "error": type(exc).__name__, "message": str(exc)})
            continue
        lam = res.critical
        _, phi0 = scalar_principal_eigenvalue(op)
        table.append({
            "eps": float(eps),
            "n": op.grid.n,
            "lambda_re": float(lam.real),
            "lambda_im": float(lam.imag),
            "lambda_over_eps": float(lam.real / eps),
            "second_re": float(res.second_gap),
            "mu0": float(res.mu0_scalar),
            "phi0_integral_scaled": float(op.grid.integrate(phi0) / math.sqrt(eps)),
            "layer_x": float(state.layer_x),
        })
    if len(table) < 3:
        raise EigensolverFailed(f"scaling study needs >= 3 resolved entries, got {len(table)}")
    e = [row["eps"] for row in table]
    y = [row["lambda_over_eps"] for row in table]
    s, b, r2 = linear_fit(e, y)
    return ScalingFit(slope=s, intercept_slope=b, r2=r2, predicted=asym.lambda_slope,
                      table=table, failures=failures)
