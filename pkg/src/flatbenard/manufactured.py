"""Symbolic reference geometry and operators (sympy) for manufactured solutions.

Everything here is computed by exact symbolic differentiation, independently of
the discrete operators, and then evaluated on grid points.
"""
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import sympy as sp

from .geometry import Grid, SurfaceField

x1, x2, x3, t = sp.symbols("x1 x2 x3 t", real=True)


@dataclass(frozen=True)
class Mode:
    """amp(t) * cos or sin of 2 pi (n x1/L1 + m x2/L2); amp is a sympy expression in t."""
    amp: object
    n: int = 1
    m: int = 0
    kind: str = "cos"


class SymbolicGeometry:
    def __init__(self, modes=(), L1=1.0, L2=1.0, epsilon=1.0, mean=0):
        self.modes = tuple(modes)
        self.L1, self.L2, self.eps = sp.nsimplify(L1), sp.nsimplify(L2), sp.nsimplify(epsilon)
        self.mean = sp.sympify(mean)

    def _phase(self, md):
        arg = 2 * sp.pi * (md.n * x1 / self.L1 + md.m * x2 / self.L2)
        return sp.cos(arg) if md.kind == "cos" else sp.sin(arg)

    def _kmag(self, md):
        return 2 * sp.pi * sp.sqrt((md.n / self.L1) ** 2 + (md.m / self.L2) ** 2)

    @cached_property
    def eta(self):
        return self.mean + sum((sp.sympify(md.amp) * self._phase(md) for md in self.modes), sp.Integer(0))

    @cached_property
    def eta_bar(self):
        out = self.mean * (1 + x3)
        for md in self.modes:
            s = self.eps * self._kmag(md)
            out += sp.sympify(md.amp) * self._phase(md) * sp.sinh(s * (1 + x3)) / sp.sinh(s)
        return out

    @cached_property
    def A(self):
        return (1 + x3) * sp.diff(self.eta_bar, x1)

    @cached_property
    def B(self):
        return (1 + x3) * sp.diff(self.eta_bar, x2)

    @cached_property
    def J(self):
        return 1 + self.eta_bar + (1 + x3) * sp.diff(self.eta_bar, x3)

    @cached_property
    def K(self):
        return 1 / self.J

    @cached_property
    def Amat(self):
        K = self.K
        return sp.Matrix([[1, 0, -self.A * K], [0, 1, -self.B * K], [0, 0, K]])

    @cached_property
    def M(self):
        gphi = sp.Matrix([[1, 0, 0], [0, 1, 0], [self.A, self.B, self.J]])
        return self.K * gphi

    @cached_property
    def N(self):
        return sp.Matrix([-sp.diff(self.eta, x1), -sp.diff(self.eta, x2), 1])

    @cached_property
    def Nmag(self):
        return sp.sqrt(self.N.dot(self.N))

    def y3(self):
        return x3 + (1 + x3) * self.eta_bar

    # transformed operators
    def grad(self, f):
        d = sp.Matrix([sp.diff(f, x1), sp.diff(f, x2), sp.diff(f, x3)])
        return self.Amat * d

    def div(self, u):
        X = (x1, x2, x3)
        return sum(self.Amat[i, j] * sp.diff(u[i], X[j]) for i in range(3) for j in range(3))

    def lap(self, f):
        return self.div(self.grad(f))

    def symgrad(self, u):
        T = sp.Matrix(3, 3, lambda i, j: self.grad(u[j])[i])
        return T + T.T

    def stress(self, p, u):
        return p * sp.eye(3) - self.symgrad(u)

    def div_matrix(self, T):
        """(div T)_j = sum_i A_ik d_k T_ij."""
        return sp.Matrix([self.div(T[:, j]) for j in range(3)])

    def surface_field(self, grid: Grid, time=0.0, expr=None):
        e = self.eta if expr is None else expr
        X1, X2 = grid.surface_mesh()
        f = lambdify_grid(e.subs(t, time), (x1, x2))
        return SurfaceField(np.broadcast_to(f(X1, X2), X1.shape).copy(), grid)

    def eta_t(self):
        return sp.diff(self.eta, t)


def lambdify_grid(expr, args=(x1, x2, x3, t)):
    f = sp.lambdify(args, expr, modules="numpy", cse=True)

    def call(*vals):
        shape = np.broadcast_shapes(*[np.shape(v) for v in vals])
        return np.broadcast_to(np.asarray(f(*vals), dtype=float), shape).copy()
    return call


def evaluate(expr, grid: Grid, time=0.0, x3_points=None, surface=None):
    """Evaluate a sympy scalar/vector/matrix on the grid.

    surface='top' or 'bottom' restricts to that boundary ([nx,ny] arrays).
    """
    if isinstance(expr, sp.MatrixBase):
        arr = np.array([[evaluate(expr[i, j], grid, time, x3_points, surface)
                         for j in range(expr.shape[1])] for i in range(expr.shape[0])])
        return arr[:, 0] if expr.shape[1] == 1 else arr
    expr = sp.sympify(expr)
    if surface is not None:
        z0 = 0 if surface == "top" else -1
        X1, X2 = grid.surface_mesh()
        return lambdify_grid(expr.subs(x3, z0), (x1, x2, t))(X1, X2, time)
    X1, X2, X3 = grid.mesh(x3_points)
    return lambdify_grid(expr)(X1, X2, X3, time)


def solenoidal_pushforward(geo: SymbolicGeometry, stream):
    """u = M w with w = (d3 psi, 0, -d1 psi); then J div_A u = div w = 0."""
    w = sp.Matrix([sp.diff(stream, x3), 0, -sp.diff(stream, x1)])
    return geo.M * w


# manufactured data ---------------------------------------------------------


def poisson_data(geo, p_exact):
    f1 = geo.lap(p_exact)
    f2 = p_exact.subs(x3, 0)
    f3 = (-geo.grad(p_exact)[2]).subs(x3, -1)
    return f1, f2, f3


def heat_data(geo, theta_exact):
    F3 = -geo.lap(theta_exact)
    F5 = (geo.grad(theta_exact).dot(geo.N) + theta_exact * geo.Nmag).subs(x3, 0)
    return F3, F5


def stokes_data(geo, u_exact, p_exact):
    S = geo.stress(p_exact, u_exact)
    F1 = geo.div_matrix(S)
    F2 = geo.div(u_exact)
    F4 = (S * geo.N).subs(x3, 0)
    return F1, F2, F4
