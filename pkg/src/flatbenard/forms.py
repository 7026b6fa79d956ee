"""Jacobian-weighted bilinear forms on the slab.

Fields are nodal in x3 and read as piecewise linear between nodes.  Integrals
use two Gauss points per vertical cell (geometry evaluated exactly there) and
the grid mean horizontally.  Every form is available both as a bilinear
evaluation and as a matrix-free "apply" (the Galerkin matrix times a nodal
field), so solvers, ledgers and tests share one discretization.
"""
import numpy as np

from .geometry import GeometryPack, Grid, geometry_pack
from .spectral import deriv

_XI = np.array([0.5 - 0.5 / np.sqrt(3.0), 0.5 + 0.5 / np.sqrt(3.0)])


def gauss_points(grid: Grid):
    h = grid.h
    cells = -1.0 + h * np.arange(grid.nz)
    return (cells[:, None] + h * _XI[None, :]).ravel()


def _stack(parts):
    return np.stack(parts, axis=-4)


def _comp(v, i):
    return v[..., i, :, :, :]


class SystemForms:
    """Galerkin forms for one geometry state.

    pack_g must be evaluated at gauss_points(grid); pack (nodal) is only used
    for surface quantities, which are identical on both.
    """

    def __init__(self, pack_g: GeometryPack, grid: Grid):
        self.grid = grid
        self.pack = pack_g
        self.h = grid.h
        self.dA = grid.cell_area
        w = 0.5 * self.h * self.dA
        self.J = pack_g.J
        self.Amat = pack_g.Amat
        self.wJ = w * pack_g.J
        self.Nmag = pack_g.Nmag
        self.N = pack_g.N

    @classmethod
    def from_pack_args(cls, eta, grid, epsilon=1.0, jac_floor=0.1, eta_t=None):
        pg = geometry_pack(eta, grid, epsilon=epsilon, jac_floor=jac_floor, eta_t=eta_t,
                           x3=gauss_points(grid))
        return cls(pg, grid)

    def averaged(self):
        """Copy with every coefficient replaced by its horizontal mean."""
        out = object.__new__(SystemForms)
        out.__dict__.update(self.__dict__)
        out.wJ = self.wJ.mean(axis=(-3, -2), keepdims=True) * np.ones_like(self.wJ)
        out.J = self.J.mean(axis=(-3, -2), keepdims=True) * np.ones_like(self.J)
        # average the weighted products actually used, so a flat pack stays exact
        out.Amat = self.Amat.mean(axis=(-3, -2), keepdims=True) * np.ones_like(self.Amat)
        out.Nmag = np.full_like(self.Nmag, self.Nmag.mean())
        out.N = self.N.mean(axis=(-2, -1), keepdims=True) * np.ones_like(self.N)
        return out

    # -- vertical P1 maps between nodes and gauss points
    def interp(self, f):
        a, b = f[..., :-1], f[..., 1:]
        g0 = a + _XI[0] * (b - a)
        g1 = a + _XI[1] * (b - a)
        return np.stack([g0, g1], axis=-1).reshape(f.shape[:-1] + (2 * (f.shape[-1] - 1),))

    def interp_T(self, G):
        nz = G.shape[-1] // 2
        G = G.reshape(G.shape[:-1] + (nz, 2))
        lo = G[..., 0] * (1.0 - _XI[0]) + G[..., 1] * (1.0 - _XI[1])
        hi = G[..., 0] * _XI[0] + G[..., 1] * _XI[1]
        out = np.zeros(G.shape[:-2] + (nz + 1,))
        out[..., :-1] += lo
        out[..., 1:] += hi
        return out

    def dz(self, f):
        d = (f[..., 1:] - f[..., :-1]) / self.h
        return np.repeat(d, 2, axis=-1)

    def dz_T(self, G):
        nz = G.shape[-1] // 2
        s = G.reshape(G.shape[:-1] + (nz, 2)).sum(axis=-1) / self.h
        out = np.zeros(G.shape[:-1] + (nz + 1,))
        out[..., :-1] -= s
        out[..., 1:] += s
        return out

    def _d1(self, g):
        return deriv(g, self.grid.L1, axis=-3)

    def _d2(self, g):
        return deriv(g, self.grid.L2, axis=-2)

    def grad_slab(self, f):
        gi = self.interp(f)
        return _stack([self._d1(gi), self._d2(gi), self.dz(f)])

    def grad_slab_T(self, V):
        return self.interp_T(-self._d1(_comp(V, 0)) - self._d2(_comp(V, 1))) + self.dz_T(_comp(V, 2))

    def _contract(self, V, transpose=False):
        A = self.Amat
        if transpose:
            return _stack([sum(A[j, i] * _comp(V, j) for j in range(3)) for i in range(3)])
        return _stack([sum(A[i, j] * _comp(V, j) for j in range(3)) for i in range(3)])

    def grad_a(self, f):
        """Transformed gradient of the P1 field at the gauss points."""
        return self._contract(self.grad_slab(f))

    def grad_a_T(self, V):
        return self.grad_slab_T(self._contract(V, transpose=True))

    def div_a(self, u):
        out = 0.0
        for i in range(3):
            g = self.grad_slab(_comp(u, i))
            out = out + sum(self.Amat[i, j] * _comp(g, j) for j in range(3))
        return out

    # -- applies (Galerkin matrix times nodal field)
    def mass_apply(self, f):
        return self.interp_T(self.wJ * self.interp(f))

    def stiff_scalar_apply(self, f):
        return self.grad_a_T(self.wJ * self.grad_a(f))

    def _vec_grad(self, u):
        # T[..., j][i] = (grad_A u_j)_i, returned as list over j of [...,3,X,Y,G]
        return [self.grad_a(_comp(u, j)) for j in range(3)]

    def stiff_vector_apply(self, u):
        """Apply of (u, psi) -> int D_A u : D_A psi J (no factor one half)."""
        T = self._vec_grad(u)
        out = []
        for j in range(3):
            # W[:, j] = wJ (T + T^T)[:, j]; (T^T)[i, j] = T[j][i] read as component i of grad u_i
            Wj = _stack([self.wJ * (_comp(T[j], i) + _comp(T[i], j)) for i in range(3)])
            out.append(2.0 * self.grad_a_T(Wj))
        return _stack(out)

    def boundary_apply(self, f):
        out = np.zeros_like(f)
        out[..., -1] = self.dA * self.Nmag * f[..., -1]
        return out

    def surface_load(self, g, nz=None):
        """Nodal vector of the surface pairing with data g ([..., nx, ny])."""
        nz = self.grid.nz if nz is None else nz
        out = np.zeros(np.shape(g) + (nz + 1,))
        out[..., -1] = self.dA * np.asarray(g)
        return out

    def div_cells(self, u):
        """Cell integrals of J div_A u, shape [..., X, Y, nz]."""
        G = self.wJ * self.div_a(u)
        return G.reshape(G.shape[:-1] + (G.shape[-1] // 2, 2)).sum(axis=-1)

    def div_cells_T(self, p):
        P = np.repeat(p, 2, axis=-1) * self.wJ
        out = []
        for i in range(3):
            V = _stack([P * self.Amat[i, j] for j in range(3)])
            out.append(self.grad_slab_T(V))
        return _stack(out)

    def cell_load(self, f):
        """Cell integrals of J f for nodal f."""
        G = self.wJ * self.interp(f)
        return G.reshape(G.shape[:-1] + (G.shape[-1] // 2, 2)).sum(axis=-1)

    def cell_volumes(self):
        return self.wJ.reshape(self.wJ.shape[:-1] + (self.grid.nz, 2)).sum(axis=-1)

    # -- bilinear evaluations
    def ip_h0(self, f, g):
        return float(np.sum(g * self.mass_apply(f)))

    def ip_h0_vector(self, u, v):
        return sum(self.ip_h0(_comp(u, i), _comp(v, i)) for i in range(3))

    def ip_h1_scalar(self, f, g):
        return float(np.sum(g * self.stiff_scalar_apply(f)))

    def ip_h1_vector(self, u, v):
        return float(np.sum(v * self.stiff_vector_apply(u)))

    def jac_rate_pair(self, f, g):
        """int f g dJ/dt, zero when the pack has no time layer."""
        Jt = self.pack.J_t
        if Jt is None:
            return 0.0
        w = 0.5 * self.h * self.dA
        return float(np.sum(w * Jt * self.interp(f) * self.interp(g)))

    def boundary_form(self, f, g):
        return float(np.sum(g * self.boundary_apply(f)))

    def surface_pair(self, g, phi):
        """int over the top surface of g * phi (g surface data, phi nodal or surface)."""
        phi = np.asarray(phi)
        if phi.ndim == np.ndim(g) + 1:
            phi = phi[..., -1]
        return float(np.sum(np.asarray(g) * phi) * self.dA)


def assemble_forms(pack_or_eta, grid: Grid, epsilon=None, jac_floor=None):
    """Build SystemForms from a nodal pack (its surface state is re-evaluated at gauss points)."""
    if isinstance(pack_or_eta, GeometryPack):
        p = pack_or_eta
        pg = geometry_pack(p.eta, grid, epsilon=p.epsilon if epsilon is None else epsilon,
                           jac_floor=p.jac_floor if jac_floor is None else jac_floor,
                           eta_t=p.eta_t, x3=gauss_points(grid))
    else:
        pg = geometry_pack(pack_or_eta, grid, epsilon=1.0 if epsilon is None else epsilon,
                           jac_floor=0.1 if jac_floor is None else jac_floor,
                           x3=gauss_points(grid))
    return SystemForms(pg, grid)


def kt_apply(theta, pack: GeometryPack):
    """Multiplication by K, the map between fixed and time-dependent test spaces."""
    return pack.K * theta


def kt_inverse(Theta, pack: GeometryPack):
    return pack.J * Theta


def plain_l2_sq(f, grid: Grid):
    """Unweighted L2 norm squared with the same quadrature as the forms."""
    w = 0.5 * grid.h * grid.cell_area
    fi = _interp_plain(f)
    return float(np.sum(w * fi * fi))


def _interp_plain(f):
    a, b = f[..., :-1], f[..., 1:]
    return np.stack([a + _XI[0] * (b - a), a + _XI[1] * (b - a)], axis=-1).reshape(
        f.shape[:-1] + (2 * (f.shape[-1] - 1),))


def norm_equivalence_report(theta, forms: SystemForms):
    """Ratios of the weighted to unweighted L2 and H1-seminorm squares."""
    if not np.any(theta):
        raise ValueError("norm equivalence needs a nonzero field")
    grid = forms.grid
    l2 = plain_l2_sq(theta, grid)
    w = 0.5 * grid.h * grid.cell_area
    gs = forms.grad_slab(theta)
    h1 = float(np.sum(w * gs * gs))
    ratio_h1 = forms.ip_h1_scalar(theta, theta) / h1 if h1 > 0 else float("nan")
    return {"ratio_h0": forms.ip_h0(theta, theta) / l2, "ratio_h1": ratio_h1}
