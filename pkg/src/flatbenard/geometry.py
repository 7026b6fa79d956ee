"""Flattening geometry: harmonic extension of the surface height, the map to the
physical domain, its Jacobian data and surface normal quantities."""
from dataclasses import dataclass, field

import numpy as np

from .errors import GeometryDegenerate, MissingTimeLayer
from .spectral import deriv, full_wavenumbers


@dataclass(frozen=True)
class Grid:
    nx: int
    ny: int
    nz: int
    L1: float = 1.0
    L2: float = 1.0

    def __post_init__(self):
        for name in ("nx", "ny"):
            v = getattr(self, name)
            if v < 4 or v % 2:
                raise ValueError(f"{name} must be even and >= 4, got {v}")
        if self.nz < 4:
            raise ValueError(f"nz must be >= 4, got {self.nz}")
        if not (self.L1 > 0 and self.L2 > 0):
            raise ValueError("periods must be positive")

    @property
    def h(self):
        return 1.0 / self.nz

    @property
    def x1(self):
        return np.arange(self.nx) * (self.L1 / self.nx)

    @property
    def x2(self):
        return np.arange(self.ny) * (self.L2 / self.ny)

    @property
    def x3(self):
        return np.linspace(-1.0, 0.0, self.nz + 1)

    @property
    def cell_area(self):
        return self.L1 * self.L2 / (self.nx * self.ny)

    def mesh(self, x3=None):
        """Broadcastable coordinate arrays of shape [nx,ny,nz'] (x3 defaults to nodes)."""
        z = self.x3 if x3 is None else np.asarray(x3, dtype=float)
        X1, X2, X3 = np.meshgrid(self.x1, self.x2, z, indexing="ij")
        return X1, X2, X3

    def surface_mesh(self):
        return np.meshgrid(self.x1, self.x2, indexing="ij")

    def to_dict(self):
        return dict(nx=self.nx, ny=self.ny, nz=self.nz, L1=self.L1, L2=self.L2)


class SurfaceField:
    """Periodic scalar on the top surface, grid values plus normalized Fourier coefficients."""

    def __init__(self, values, grid: Grid):
        values = np.asarray(values, dtype=float)
        if values.shape != (grid.nx, grid.ny):
            raise ValueError(f"surface field shape {values.shape} != {(grid.nx, grid.ny)}")
        if not np.all(np.isfinite(values)):
            raise ValueError("surface field has non-finite entries")
        self.values = values
        self.grid = grid

    @classmethod
    def from_coeffs(cls, coeffs, grid):
        vals = np.fft.ifft2(np.asarray(coeffs) * (grid.nx * grid.ny)).real
        return cls(vals, grid)

    @classmethod
    def zeros(cls, grid):
        return cls(np.zeros((grid.nx, grid.ny)), grid)

    @property
    def coeffs(self):
        return np.fft.fft2(self.values) / (self.grid.nx * self.grid.ny)

    def d1(self):
        return deriv(self.values, self.grid.L1, axis=-2)

    def d2(self):
        return deriv(self.values, self.grid.L2, axis=-1)

    def __add__(self, other):
        o = other.values if isinstance(other, SurfaceField) else other
        return SurfaceField(self.values + o, self.grid)

    def __sub__(self, other):
        o = other.values if isinstance(other, SurfaceField) else other
        return SurfaceField(self.values - o, self.grid)

    def __mul__(self, c):
        return SurfaceField(self.values * c, self.grid)

    __rmul__ = __mul__


def _mode_magnitudes(grid):
    kx = full_wavenumbers(grid.nx, grid.L1)
    ky = full_wavenumbers(grid.ny, grid.L2)
    return np.sqrt(kx[:, None] ** 2 + ky[None, :] ** 2)


def extension_profiles(kmag, x3, epsilon, order=0):
    """Vertical profile (or its x3-derivative) for each horizontal wavenumber.

    kmag: [...] magnitudes; x3: [nz'] points.  Returns [..., nz'].
    """
    s = epsilon * np.asarray(kmag)[..., None]
    z = np.asarray(x3, dtype=float)
    zero = s == 0.0
    s_safe = np.where(zero, 1.0, s)
    # sinh(s(1+z))/sinh(s) written with decaying exponentials to avoid overflow
    denom = -np.expm1(-2.0 * s_safe)
    a = np.exp(s_safe * z)
    b = np.exp(-s_safe * (2.0 + z))
    if order % 2 == 0:
        prof = (a - b) / denom * s_safe**order
        lin = (1.0 + z) if order == 0 else np.zeros_like(z)
    else:
        prof = (a + b) / denom * s_safe**order
        lin = np.ones_like(z) if order == 1 else np.zeros_like(z)
    return np.where(zero, lin + 0.0 * s, prof)


def harmonic_extend(eta: SurfaceField, grid: Grid, epsilon=1.0, x3=None, order=0):
    """Extend eta into the slab mode by mode; order>0 returns x3-derivatives."""
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    vals = np.asarray(eta.values if isinstance(eta, SurfaceField) else eta, dtype=float)
    if not np.all(np.isfinite(vals)):
        raise ValueError("eta has non-finite entries")
    z = grid.x3 if x3 is None else np.asarray(x3, dtype=float)
    coeffs = np.fft.fft2(vals)
    prof = extension_profiles(_mode_magnitudes(grid), z, epsilon, order)
    return np.fft.ifft2(coeffs[..., None] * prof, axes=(0, 1)).real


def _deriv_h(f, grid, axis):
    L = grid.L1 if axis == 0 else grid.L2
    return deriv(f, L, axis=axis - 3)


@dataclass
class GeometryPack:
    grid: Grid
    x3: np.ndarray
    eta: SurfaceField
    eta_bar: np.ndarray
    A: np.ndarray
    B: np.ndarray
    J: np.ndarray
    K: np.ndarray
    Amat: np.ndarray
    N: np.ndarray
    Nmag: np.ndarray
    epsilon: float
    jac_floor: float
    eta_bar_d3: np.ndarray = None
    # first time layer
    eta_t: SurfaceField = None
    eta_bar_t: np.ndarray = None
    A_t: np.ndarray = None
    B_t: np.ndarray = None
    J_t: np.ndarray = None
    K_t: np.ndarray = None
    Amat_t: np.ndarray = None
    N_t: np.ndarray = None
    Nmag_t: np.ndarray = None
    # second time layer (only what M and R need)
    eta_tt: SurfaceField = None
    eta_bar_tt: np.ndarray = None
    A_tt: np.ndarray = None
    B_tt: np.ndarray = None
    J_tt: np.ndarray = None
    K_tt: np.ndarray = None
    extra: dict = field(default_factory=dict)

    @property
    def has_time_layer(self):
        return self.eta_t is not None

    @property
    def has_second_layer(self):
        return self.eta_tt is not None

    def require_time_layer(self):
        if not self.has_time_layer:
            raise MissingTimeLayer("geometry pack has no time-derivative layer")

    def grad_phi(self):
        """Jacobian matrix of the flattening map, [3,3,...]."""
        one = np.ones_like(self.J)
        zero = np.zeros_like(self.J)
        return np.array([[one, zero, zero], [zero, one, zero], [self.A, self.B, self.J]])

    def y3(self):
        """Physical height of each slab point."""
        return self.x3 + (1.0 + self.x3) * self.eta_bar

    def min_jacobian(self):
        return float(self.J.min())


def _components(ext, ext_d3, grid, x3):
    onepz = 1.0 + x3
    A = onepz * _deriv_h(ext, grid, 0)
    B = onepz * _deriv_h(ext, grid, 1)
    J = 1.0 + ext + onepz * ext_d3
    return A, B, J


def _amat(A, B, K):
    one = np.ones_like(K)
    zero = np.zeros_like(K)
    return np.array([[one, zero, -A * K], [zero, one, -B * K], [zero, zero, K]])


def geometry_pack(eta, grid, epsilon=1.0, jac_floor=0.25, eta_t=None, eta_tt=None, x3=None,
                  check=True):
    """Assemble all geometric coefficients for one surface state.

    x3 selects the vertical evaluation points (grid nodes by default).
    """
    if not isinstance(eta, SurfaceField):
        eta = SurfaceField(eta, grid)
    z = grid.x3 if x3 is None else np.asarray(x3, dtype=float)
    ext = harmonic_extend(eta, grid, epsilon, z)
    ext_d3 = harmonic_extend(eta, grid, epsilon, z, order=1)
    A, B, J = _components(ext, ext_d3, grid, z)
    if check:
        jmin = float(J.min())
        if not jmin >= jac_floor:
            raise GeometryDegenerate(jmin, jac_floor)
    K = 1.0 / J
    Amat = _amat(A, B, K)
    d1, d2 = eta.d1(), eta.d2()
    N = np.array([-d1, -d2, np.ones_like(d1)])
    Nmag = np.sqrt(np.sum(N * N, axis=0))
    pack = GeometryPack(grid=grid, x3=z, eta=eta, eta_bar=ext, A=A, B=B, J=J, K=K, Amat=Amat,
                        N=N, Nmag=Nmag, epsilon=epsilon, jac_floor=jac_floor, eta_bar_d3=ext_d3)
    if eta_t is not None:
        if not isinstance(eta_t, SurfaceField):
            eta_t = SurfaceField(eta_t, grid)
        ext_t = harmonic_extend(eta_t, grid, epsilon, z)
        ext_t3 = harmonic_extend(eta_t, grid, epsilon, z, order=1)
        A_t, B_t, J_t = _components(ext_t, ext_t3, grid, z)
        J_t = J_t - 1.0
        K_t = -J_t * K * K
        zero = np.zeros_like(K)
        Amat_t = np.array([[zero, zero, -(A_t * K + A * K_t)],
                           [zero, zero, -(B_t * K + B * K_t)],
                           [zero, zero, K_t]])
        N_t = np.array([-eta_t.d1(), -eta_t.d2(), np.zeros_like(d1)])
        Nmag_t = np.sum(N * N_t, axis=0) / Nmag
        pack.eta_t, pack.eta_bar_t = eta_t, ext_t
        pack.A_t, pack.B_t, pack.J_t, pack.K_t = A_t, B_t, J_t, K_t
        pack.Amat_t, pack.N_t, pack.Nmag_t = Amat_t, N_t, Nmag_t
        if eta_tt is not None:
            if not isinstance(eta_tt, SurfaceField):
                eta_tt = SurfaceField(eta_tt, grid)
            ext_tt = harmonic_extend(eta_tt, grid, epsilon, z)
            ext_tt3 = harmonic_extend(eta_tt, grid, epsilon, z, order=1)
            A_tt, B_tt, J_tt = _components(ext_tt, ext_tt3, grid, z)
            J_tt = J_tt - 1.0
            K_tt = -J_tt * K * K + 2.0 * J_t * J_t * K**3
            pack.eta_tt, pack.eta_bar_tt = eta_tt, ext_tt
            pack.A_tt, pack.B_tt, pack.J_tt, pack.K_tt = A_tt, B_tt, J_tt, K_tt
    elif eta_tt is not None:
        raise ValueError("eta_tt requires eta_t")
    return pack


def flat_pack(grid, x3=None, with_time=False, jac_floor=0.25):
    z = SurfaceField.zeros(grid)
    return geometry_pack(z, grid, jac_floor=jac_floor, eta_t=z if with_time else None, x3=x3)


def projection_pi0(v, pack: GeometryPack):
    """Tangential projection v - (v.N)N/|N|^2 of a surface vector field [3,nx,ny]."""
    N = pack.N
    vn = np.sum(v * N, axis=0)
    return v - vn * N / (pack.Nmag**2)


def surface_sobolev_norm(f, s, grid=None):
    """Discrete H^s(surface) norm from the Fourier coefficients."""
    if not -2.0 <= s <= 6.0:
        raise ValueError("s must lie in [-2, 6]")
    if isinstance(f, SurfaceField):
        grid = f.grid
        vals = f.values
    else:
        vals = np.asarray(f, dtype=float)
    c = np.fft.fft2(vals) / (grid.nx * grid.ny)
    k2 = _mode_magnitudes(grid) ** 2
    total = np.sum((1.0 + k2) ** s * np.abs(c) ** 2) * grid.L1 * grid.L2
    return float(np.sqrt(total))
