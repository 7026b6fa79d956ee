"""Stationary solvers in flattened coordinates: transformed Poisson, Robin heat,
Stokes with stress data on the top surface, and the coupled stationary solve.

Discretization: Fourier collocation horizontally, continuous P1 (nodal) in x3
for velocity/temperature/Poisson unknowns, cellwise constants in x3 for the
Stokes pressure.  Dirichlet data at the bottom are strong, surface data weak.
"""
from dataclasses import dataclass

import numpy as np

from .errors import IncompatibleData, SolverDiverged
from .forms import SystemForms, assemble_forms
from .geometry import GeometryPack
from .linsolve import ModalPreconditioner, krylov_solve


@dataclass
class EllipticProblem:
    kind: str
    pack: GeometryPack
    F1: np.ndarray = None
    F2: np.ndarray = None
    F3: np.ndarray = None
    F4: np.ndarray = None
    F5: np.ndarray = None
    f1: np.ndarray = None
    f2: np.ndarray = None
    f3: np.ndarray = None
    tol: float = 1e-12
    maxiter: int = 400
    forms: SystemForms = None

    def __post_init__(self):
        if self.kind not in ("poisson", "heat_robin", "stokes", "coupled"):
            raise ValueError(f"unknown problem kind {self.kind!r}")
        if not self.tol > 0:
            raise ValueError("tolerance must be positive")
        for name in ("F1", "F2", "F3", "F4", "F5", "f1", "f2", "f3"):
            v = getattr(self, name)
            if v is not None and not np.all(np.isfinite(v)):
                raise ValueError(f"{name} has non-finite entries")


def forms_for(pack: GeometryPack, forms=None):
    if forms is not None:
        return forms
    cached = pack.extra.get("forms")
    if cached is None:
        cached = assemble_forms(pack, pack.grid)
        pack.extra["forms"] = cached
    return cached


def _zeros_scalar(grid):
    return np.zeros((grid.nx, grid.ny, grid.nz + 1))


# ---------------------------------------------------------------- operators


class HeatOperator:
    """mass_coef * M + stiffness + Robin boundary term, bottom node eliminated."""

    def __init__(self, forms: SystemForms, mass_coef=0.0, robin=True):
        self.forms = forms
        self.c = mass_coef
        self.robin = robin
        g = forms.grid
        self.shape = (g.nx, g.ny, g.nz)
        self._pre = None

    def full_apply(self, f, forms=None):
        fm = self.forms if forms is None else forms
        out = fm.stiff_scalar_apply(f)
        if self.c:
            out = out + self.c * fm.mass_apply(f)
        if self.robin:
            out = out + fm.boundary_apply(f)
        return out

    def _apply_with(self, x, forms):
        f = np.zeros(x.shape[:-1] + (x.shape[-1] + 1,))
        f[..., 1:] = x
        return self.full_apply(f, forms)[..., 1:]

    def apply(self, x):
        return self._apply_with(x, self.forms)

    def preconditioner(self):
        if self._pre is None:
            avg = self.forms.averaged()
            g = self.forms.grid
            self._pre = ModalPreconditioner(lambda x: self._apply_with(x, avg), g.nx, g.ny, g.nz)
        return self._pre


class PoissonOperator:
    """Stiffness with the top node eliminated (Dirichlet there)."""

    def __init__(self, forms: SystemForms):
        self.forms = forms
        g = forms.grid
        self.shape = (g.nx, g.ny, g.nz)
        self._pre = None

    def _apply_with(self, x, forms):
        f = np.zeros(x.shape[:-1] + (x.shape[-1] + 1,))
        f[..., :-1] = x
        return forms.stiff_scalar_apply(f)[..., :-1]

    def apply(self, x):
        return self._apply_with(x, self.forms)

    def preconditioner(self):
        if self._pre is None:
            avg = self.forms.averaged()
            g = self.forms.grid
            self._pre = ModalPreconditioner(lambda x: self._apply_with(x, avg), g.nx, g.ny, g.nz)
        return self._pre


class StokesOperator:
    """Saddle operator [[c M + D/2, -B^T], [-B, 0]] on (u nodes 1..nz, p cells)."""

    def __init__(self, forms: SystemForms, mass_coef=0.0):
        self.forms = forms
        self.c = mass_coef
        g = forms.grid
        self.nz = g.nz
        self.shape = (g.nx, g.ny, 4 * g.nz)
        self._pre = None

    def split(self, x):
        nz = self.nz
        u = np.zeros(x.shape[:-1] + (nz + 1,))
        u = np.stack([u] * 3, axis=-4)
        for i in range(3):
            u[..., i, :, :, 1:] = x[..., i * nz:(i + 1) * nz]
        return u, x[..., 3 * nz:]

    def join(self, ru, rp):
        return np.concatenate([ru[..., i, :, :, 1:] for i in range(3)] + [rp], axis=-1)

    def residual_parts(self, u, p, forms=None):
        fm = self.forms if forms is None else forms
        au = 0.5 * fm.stiff_vector_apply(u) - fm.div_cells_T(p)
        if self.c:
            au = au + self.c * np.stack([fm.mass_apply(u[..., i, :, :, :]) for i in range(3)], axis=-4)
        return au, -fm.div_cells(u)

    def _apply_with(self, x, forms):
        u, p = self.split(x)
        au, bu = self.residual_parts(u, p, forms)
        return self.join(au, bu)

    def apply(self, x):
        return self._apply_with(x, self.forms)

    def preconditioner(self):
        if self._pre is None:
            avg = self.forms.averaged()
            g = self.forms.grid
            self._pre = ModalPreconditioner(lambda x: self._apply_with(x, avg), g.nx, g.ny, 4 * g.nz)
        return self._pre


# ---------------------------------------------------------------- pressure reconstruction


def _cell_to_node_matrix(nz):
    """Nodal values from cell averages, exact for quadratics in x3."""
    h = 1.0 / nz
    R = np.zeros((nz + 1, nz))
    for k in range(nz + 1):
        starts = [s for s in (k - 2, k - 1) if 0 <= s <= nz - 3]
        if not starts:
            starts = [min(max(k - 1, 0), nz - 3)]
        for s in starts:
            # quadratic q(x) = a + b x + c x^2 in local coordinate x = (x3 - node_k)/h
            rows = []
            for c in range(s, s + 3):
                lo, hi = c - k, c + 1 - k
                rows.append([1.0, (hi**2 - lo**2) / 2.0, (hi**3 - lo**3) / 3.0])
            coef = np.linalg.inv(np.array(rows))
            R[k, s:s + 3] += coef[0] / len(starts)
    del h
    return R


_RECON = {}


def cells_to_nodes(p_cells):
    nz = p_cells.shape[-1]
    if nz not in _RECON:
        _RECON[nz] = _cell_to_node_matrix(nz)
    return p_cells @ _RECON[nz].T


# ---------------------------------------------------------------- solvers


def solve_a_poisson(problem: EllipticProblem, return_info=False):
    """Transformed Poisson problem: Dirichlet on the top surface, Neumann datum at the bottom (outward normal -e3)."""
    pack = problem.pack
    g = pack.grid
    fm = forms_for(pack, problem.forms)
    f1 = _zeros_scalar(g) if problem.f1 is None else problem.f1
    f2 = np.zeros((g.nx, g.ny)) if problem.f2 is None else problem.f2
    f3 = np.zeros((g.nx, g.ny)) if problem.f3 is None else problem.f3
    lift = _zeros_scalar(g)
    lift[..., -1] = f2
    rhs = -fm.mass_apply(f1) - fm.stiff_scalar_apply(lift)
    rhs[..., 0] += g.cell_area * f3
    op = PoissonOperator(fm)
    x, info = krylov_solve(op.apply, op.preconditioner(), rhs[..., :-1], op.shape, problem.tol,
                           problem.maxiter, what="poisson")
    p = lift.copy()
    p[..., :-1] = x
    return (p, info) if return_info else p


def solve_heat_robin(problem: EllipticProblem, return_info=False, mass_coef=0.0, extra_rhs=None,
                     operator=None):
    """Robin heat problem; with mass_coef>0 this is one implicit time step (see evolution)."""
    pack = problem.pack
    g = pack.grid
    fm = forms_for(pack, problem.forms)
    F3 = _zeros_scalar(g) if problem.F3 is None else problem.F3
    F5 = np.zeros((g.nx, g.ny)) if problem.F5 is None else problem.F5
    rhs = fm.mass_apply(F3) + fm.surface_load(F5)
    if extra_rhs is not None:
        rhs = rhs + extra_rhs
    op = operator if operator is not None else HeatOperator(fm, mass_coef)
    x, info = krylov_solve(op.apply, op.preconditioner(), rhs[..., 1:], op.shape, problem.tol,
                           problem.maxiter, what="heat")
    theta = _zeros_scalar(g)
    theta[..., 1:] = x
    return (theta, info) if return_info else theta


def stokes_rhs(fm: SystemForms, F1=None, F2=None, F4=None):
    g = fm.grid
    ru = np.zeros((3, g.nx, g.ny, g.nz + 1))
    if F1 is not None:
        ru = ru + np.stack([fm.mass_apply(F1[i]) for i in range(3)])
    if F4 is not None:
        ru = ru - np.stack([fm.surface_load(F4[i]) for i in range(3)])
    rp = np.zeros((g.nx, g.ny, g.nz))
    if F2 is not None:
        rp = -fm.cell_load(F2)
    return ru, rp


def solve_a_stokes(problem: EllipticProblem, return_info=False, mass_coef=0.0, extra_rhs=None,
                   operator=None):
    """Stokes with traction data; buoyancy must already be inside F1."""
    pack = problem.pack
    fm = forms_for(pack, problem.forms)
    ru, rp = stokes_rhs(fm, problem.F1, problem.F2, problem.F4)
    if extra_rhs is not None:
        ru = ru + extra_rhs
    op = operator if operator is not None else StokesOperator(fm, mass_coef)
    b = op.join(ru, rp)
    try:
        x, info = krylov_solve(op.apply, op.preconditioner(), b, op.shape, problem.tol,
                               problem.maxiter, what="stokes")
    except SolverDiverged as err:
        hist = err.residuals
        if len(hist) > 20 and min(hist[-10:]) > 0.5 * min(hist[:-10]):
            raise IncompatibleData(f"stokes residual stagnated: {err}") from err
        raise
    u, pc = op.split(x)
    p = cells_to_nodes(pc)
    if return_info:
        info = dict(info)
        info["p_cells"] = pc
        info["div_residual"] = float(np.abs(fm.div_cells(u) + rp).max() / fm.cell_volumes().min())
        return u, p, info
    return u, p


def solve_stationary_benard(problem: EllipticProblem, return_info=False):
    """Temperature first, then Stokes with the buoyancy theta e3 added to F1."""
    g = problem.pack.grid
    heat = EllipticProblem("heat_robin", problem.pack, F3=problem.F3, F5=problem.F5,
                           tol=problem.tol, maxiter=problem.maxiter, forms=problem.forms)
    theta, hinfo = solve_heat_robin(heat, return_info=True)
    F1 = np.zeros((3, g.nx, g.ny, g.nz + 1)) if problem.F1 is None else problem.F1.copy()
    F1[2] = F1[2] + theta
    st = EllipticProblem("stokes", problem.pack, F1=F1, F2=problem.F2, F4=problem.F4,
                         tol=problem.tol, maxiter=problem.maxiter, forms=problem.forms)
    u, p, sinfo = solve_a_stokes(st, return_info=True)
    if return_info:
        return u, p, theta, {"heat": hinfo, "stokes": sinfo}
    return u, p, theta


# ---------------------------------------------------------------- weak residuals


def heat_weak_residual(theta, phi, pack, F3, F5, forms=None):
    """a(theta, phi) + boundary - loads, for a test field phi vanishing at the bottom."""
    fm = forms_for(pack, forms)
    lhs = fm.ip_h1_scalar(theta, phi) + fm.boundary_form(theta, phi)
    rhs = fm.ip_h0(F3, phi) + fm.surface_pair(F5, phi)
    return lhs - rhs


def stokes_weak_residual(u, p_cells, psi, pack, F1=None, F4=None, forms=None):
    fm = forms_for(pack, forms)
    lhs = 0.5 * fm.ip_h1_vector(u, psi) - float(np.sum(p_cells * fm.div_cells(psi)))
    rhs = 0.0
    if F1 is not None:
        rhs += fm.ip_h0_vector(F1, psi)
    if F4 is not None:
        rhs -= sum(fm.surface_pair(F4[i], psi[i]) for i in range(3))
    return lhs - rhs
