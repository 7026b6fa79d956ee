"""Nonlinear Picard iteration: linear solves on the previous sweep's geometry, then
surface transport with the new velocity.  Also the sweep distances used to watch
contraction, the norm aggregates, run configuration and checkpoints."""
import json
import struct
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.integrate import trapezoid

from .data_compat import build_initial_data
from .errors import ConfigError, GeometryDegenerate, StepRejected
from .evolution import EvolutionState, energy_ledger, make_cache, step_linear
from .geometry import Grid, SurfaceField, geometry_pack, surface_sobolev_norm
from .nonlinear import nonlinear_forcings
from .operators import d3, div_a
from .spectral import deriv
from .transport import SurfaceTrace, cfl_limit, kinematic_rate, solve_transport

__all__ = ["PicardConfig", "IterationRecord", "Sweep", "Checkpoint", "initial_fields", "constant_sweep",
           "picard_sweep", "run_picard", "contraction_metrics", "volume_sobolev_sq", "norm_aggregates",
           "nonlinear_forcings"]

PRESETS = ("equilibrium", "perturbed-equilibrium", "zero")
SCHEMA_VERSION = 1


@dataclass
class PicardConfig:
    nx: int = 16
    ny: int = 16
    nz: int = 24
    L1: float = 1.0
    L2: float = 1.0
    T: float = 0.05
    dt: float = 2.5e-3
    max_sweeps: int = 5
    min_sweeps: int = 1
    tol_fixed_point: float = 1e-12
    jac_floor: float = 0.2
    epsilon: float = 1.0
    preset: str = "perturbed-equilibrium"
    amplitude: float = 0.01
    # explicit modes, each {"k": [k1, k2], "amp": a}; u0 modes also take "potential": "e1" | "e2"
    u0_modes: list = field(default_factory=list)
    theta0_modes: list = field(default_factory=list)
    eta0_modes: list = field(default_factory=list)
    solver_tol: float = 1e-11
    seed: int = 0
    threads: int = 1

    def __post_init__(self):
        self.validate()

    def validate(self):
        if not 0 < self.dt < self.T <= 1.0:
            raise ConfigError(f"need 0 < dt < T <= 1, got dt={self.dt}, T={self.T}")
        n = self.T / self.dt
        if abs(n - round(n)) > 1e-9 * n:
            raise ConfigError("T must be an integer multiple of dt")
        if not (self.tol_fixed_point > 0 and self.solver_tol > 0):
            raise ConfigError("tolerances must be positive")
        if not 0 < self.jac_floor < 1:
            raise ConfigError("jac_floor must lie in (0, 1)")
        if self.epsilon <= 0:
            raise ConfigError("epsilon must be positive")
        if self.max_sweeps < 1 or not 1 <= self.min_sweeps <= self.max_sweeps:
            raise ConfigError("need 1 <= min_sweeps <= max_sweeps")
        if self.preset not in PRESETS + ("custom",):
            raise ConfigError(f"unknown preset {self.preset!r}; choose from {PRESETS + ('custom',)}")
        if self.threads < 1:
            raise ConfigError("threads must be >= 1")
        for name in ("u0_modes", "theta0_modes", "eta0_modes"):
            for m in getattr(self, name):
                if not isinstance(m, dict) or "k" not in m or "amp" not in m or len(m["k"]) != 2:
                    raise ConfigError(f"{name}: each mode needs 'k' = [k1, k2] and 'amp'")
        try:
            self.grid()
        except ValueError as e:
            raise ConfigError(str(e)) from e

    def grid(self):
        return Grid(self.nx, self.ny, self.nz, self.L1, self.L2)

    @property
    def nsteps(self):
        return int(round(self.T / self.dt))

    def to_dict(self):
        return dict(asdict(self), schema_version=SCHEMA_VERSION)

    @classmethod
    def from_dict(cls, d):
        if not isinstance(d, dict):
            raise ConfigError("config must be a JSON object")
        d = dict(d)
        ver = d.pop("schema_version", SCHEMA_VERSION)
        if ver != SCHEMA_VERSION:
            raise ConfigError(f"unsupported schema_version {ver}")
        known = set(cls.__dataclass_fields__)
        bad = sorted(set(d) - known)
        if bad:
            raise ConfigError(f"unknown config keys: {bad}")
        try:
            return cls(**d)
        except TypeError as e:
            raise ConfigError(str(e)) from e

    @classmethod
    def from_json(cls, text):
        try:
            d = json.loads(text)
        except json.JSONDecodeError as e:
            raise ConfigError(f"config is not valid JSON: {e}") from e
        return cls.from_dict(d)


@dataclass
class IterationRecord:
    sweep: int
    N_dist: float
    M_dist: float
    ratio: float  # None for the first sweep or after an exact repeat
    max_div_residual: float
    min_J: float
    ledger_residual_u: float
    ledger_residual_theta: float
    K_N: float
    K_eta: float
    flagged: bool
    mode: str

    def to_json(self):
        return json.dumps(asdict(self), sort_keys=True)


@dataclass
class Sweep:
    """Fields at every step time; arrays carry time as the leading axis."""
    times: np.ndarray
    eta: np.ndarray      # [nt, nx, ny]
    eta_t: np.ndarray    # [nt, nx, ny]
    u: np.ndarray        # [nt, 3, nx, ny, nz+1]
    p: np.ndarray        # [nt, nx, ny, nz+1]
    theta: np.ndarray    # [nt, nx, ny, nz+1]
    grid: Grid
    info: dict = field(default_factory=dict)


# ---------------------------------------------------------------- initial data


def _phase(grid, k):
    X1, X2 = grid.surface_mesh()
    return 2 * np.pi * (k[0] * X1 / grid.L1 + k[1] * X2 / grid.L2)


def _solenoidal_slab_field(modes, grid):
    """curl of psi e2 (or chi e1) with potentials ~ (1+x3)^2, so w vanishes at the bottom."""
    z = 1.0 + grid.x3
    w = np.zeros((3, grid.nx, grid.ny, grid.nz + 1))
    for m in modes:
        ph = _phase(grid, m["k"])[..., None]
        a = float(m["amp"])
        k1 = 2 * np.pi * m["k"][0] / grid.L1
        k2 = 2 * np.pi * m["k"][1] / grid.L2
        if m.get("potential", "e2") == "e2":
            # curl(0, psi, 0) = (-d3 psi, 0, d1 psi)
            w[0] -= a * np.cos(ph) * 2 * z
            w[2] -= a * k1 * np.sin(ph) * z**2
        else:
            # curl(chi, 0, 0) = (0, d3 chi, -d2 chi)
            w[1] += a * np.cos(ph) * 2 * z
            w[2] += a * k2 * np.sin(ph) * z**2
    return w


def initial_fields(cfg: PicardConfig):
    """(u0, theta0, eta0) for the configured preset plus explicit modes."""
    g = cfg.grid()
    shape = (g.nx, g.ny, g.nz + 1)
    z = 1.0 + g.x3
    eta = np.zeros((g.nx, g.ny))
    for m in cfg.eta0_modes:
        eta += float(m["amp"]) * np.cos(_phase(g, m["k"]))
    eta0 = SurfaceField(eta, g)
    theta0 = np.zeros(shape)
    if cfg.preset in ("equilibrium", "perturbed-equilibrium"):
        theta0 += -0.5 * z
    if cfg.preset == "perturbed-equilibrium":
        X1, _ = g.surface_mesh()
        theta0 += cfg.amplitude * np.cos(2 * np.pi * X1 / g.L1)[..., None] * np.sin(np.pi * z)
    for m in cfg.theta0_modes:
        theta0 += float(m["amp"]) * np.cos(_phase(g, m["k"]))[..., None] * np.sin(np.pi * z)
    u0 = np.zeros((3,) + shape)
    if cfg.u0_modes:
        w = _solenoidal_slab_field(cfg.u0_modes, g)
        pk = geometry_pack(eta0, g, epsilon=cfg.epsilon, jac_floor=0.5 * cfg.jac_floor)
        # push forward through K grad(Phi) so that J div_A u0 = div w = 0
        u0 = pk.K * np.stack([w[0], w[1], pk.A * w[0] + pk.B * w[1] + pk.J * w[2]])
    return u0, theta0, eta0


def constant_sweep(u0, p0, theta0, eta0: SurfaceField, times):
    """Sweep 0: the initial data held constant in time."""
    nt = len(times)
    rep = lambda a: np.repeat(a[None], nt, axis=0)
    return Sweep(times=np.asarray(times, dtype=float), eta=rep(eta0.values), eta_t=np.zeros((nt,) + eta0.values.shape),
                 u=rep(u0), p=rep(p0), theta=rep(theta0), grid=eta0.grid)


# ---------------------------------------------------------------- the sweep


def _pack_at(sweep: Sweep, n, cfg):
    g = sweep.grid
    return geometry_pack(SurfaceField(sweep.eta[n], g), g, epsilon=cfg.epsilon, jac_floor=0.5 * cfg.jac_floor,
                         eta_t=SurfaceField(sweep.eta_t[n], g))


def _transport(eta0, traces, dt, T):
    """solve_transport, falling back to uniform substeps when the CFL guard trips."""
    lim = min(cfl_limit(tr, eta0.grid) for tr in traces)
    sub = 1 if dt <= lim else int(np.ceil(dt / lim))
    if sub == 1:
        try:
            return solve_transport(eta0, traces, dt, T).etas
        except StepRejected as e:
            sub = int(np.ceil(dt / e.suggested_dt))
    res = solve_transport(eta0, traces, dt / sub, T, trace_times=dt * np.arange(len(traces)))
    return res.etas[::sub]


def picard_sweep(prev: Sweep, cfg: PicardConfig, init):
    """One sweep of the iteration; init is (u0, p0, theta0, eta0)."""
    u0, p0, theta0, eta0 = init
    g = prev.grid
    dt = cfg.dt
    times = prev.times
    nt = len(times)
    cache = make_cache()
    pack = _pack_at(prev, 0, cfg)
    min_j = pack.min_jacobian()
    state = EvolutionState(t=0.0, u=u0, p=p0, theta=theta0, pack=pack)
    forcings = [nonlinear_forcings(prev.u[0], prev.theta[0], pack)]
    traj = [state]
    max_div = 0.0
    for n in range(nt - 1):
        pk = _pack_at(prev, n + 1, cfg)
        min_j = min(min_j, pk.min_jacobian())
        f = nonlinear_forcings(prev.u[n + 1], prev.theta[n + 1], pk)
        state = step_linear(state, dt, f, pk, tol=cfg.solver_tol, cache=cache)
        max_div = max(max_div, float(state.info["div_residual"]))
        forcings.append(f)
        traj.append(state)
    u = np.stack([s.u for s in traj])
    traces = [SurfaceTrace.from_velocity(s.u) for s in traj]
    etas = _transport(eta0, traces, dt, times[-1])
    eta_t = np.stack([kinematic_rate(e, tr) for e, tr in zip(etas, traces)])
    # the new surface must stay admissible for the next sweep
    for e in etas:
        jn = geometry_pack(e, g, epsilon=cfg.epsilon, check=False).min_jacobian()
        min_j = min(min_j, jn)
        if jn < 0.5 * cfg.jac_floor:
            raise GeometryDegenerate(jn, 0.5 * cfg.jac_floor)
    led = energy_ledger(traj, forcings)
    info = {"min_J": min_j, "max_div_residual": max_div, "ledger_residual_u": led["residual_u"],
            "ledger_residual_theta": led["residual_theta"]}
    return Sweep(times=times.copy(), eta=np.stack([e.values for e in etas]), eta_t=eta_t, u=u,
                 p=np.stack([s.p for s in traj]), theta=np.stack([s.theta for s in traj]), grid=g, info=info)


# ---------------------------------------------------------------- norms


def volume_sobolev_sq(f, k, grid: Grid):
    """Squared H^k norm on the slab: sum of squared L2 norms of all partials of order <= k.

    f has trailing shape [nx, ny, nz+1]; leading axes are summed over too.
    """
    w = np.full(grid.nz + 1, grid.h)
    w[0] = w[-1] = 0.5 * grid.h
    total = 0.0
    fz = f
    for c in range(k + 1):
        if c:
            fz = d3(fz, grid.h)
        for a in range(k + 1 - c):
            fa = fz if a == 0 else deriv(fz, grid.L1, axis=-3, order=a)
            for b in range(k + 1 - c - a):
                fab = fa if b == 0 else deriv(fa, grid.L2, axis=-2, order=b)
                total += float(np.sum(fab * fab * w)) * grid.cell_area
    return total


def _time_deriv(arr, times, order=1):
    out = arr
    for _ in range(order):
        out = np.gradient(out, times, axis=0, edge_order=2 if len(times) > 2 else 1)
    return out


def _linf(vals):
    return float(np.max(vals))


def _l2t(vals, times):
    return float(trapezoid(vals, times))


def _series(arr, k, grid):
    return np.array([volume_sobolev_sq(a, k, grid) for a in arr])


def _surface_series(arr, s, grid):
    return np.array([surface_sobolev_norm(a, s, grid) ** 2 for a in arr])


def _check_match(a: Sweep, b: Sweep):
    if a.grid != b.grid or a.times.shape != b.times.shape or not np.array_equal(a.times, b.times):
        raise ValueError("sweeps do not share grid and times")


def n_norm(v, q, Theta, times, grid):
    """Squared low-regularity space-time norm of a velocity/pressure/temperature triple."""
    vt = _time_deriv(v, times)
    Tt = _time_deriv(Theta, times)
    return (_linf(_series(v, 2, grid)) + _l2t(_series(v, 3, grid), times)
            + _linf(_series(vt, 0, grid)) + _l2t(_series(vt, 1, grid), times)
            + _linf(_series(q, 1, grid)) + _l2t(_series(q, 2, grid), times)
            + _linf(_series(Theta, 2, grid)) + _l2t(_series(Theta, 3, grid), times)
            + _linf(_series(Tt, 0, grid)) + _l2t(_series(Tt, 1, grid), times))


def m_norm(zeta, times, grid):
    """Squared surface norm: Linf H^5/2 + (dt) Linf H^3/2 + (dt^2) L2 H^1/2."""
    zt = _time_deriv(zeta, times)
    ztt = _time_deriv(zeta, times, 2)
    return (_linf(_surface_series(zeta, 2.5, grid)) + _linf(_surface_series(zt, 1.5, grid))
            + _l2t(_surface_series(ztt, 0.5, grid), times))


def contraction_metrics(a: Sweep, b: Sweep):
    _check_match(a, b)
    g = a.grid
    return {"N_dist": n_norm(a.u - b.u, a.p - b.p, a.theta - b.theta, a.times, g),
            "M_dist": m_norm(a.eta - b.eta, a.times, g)}


def norm_aggregates(s: Sweep):
    """Energy-dissipation aggregates with one time derivative (the lowest admissible level).

    K_N = sum_j<=1 |dt^j u|^2_{L2 H^(3-2j)} + |dt^j u|^2_{Linf H^(2-2j)}, same for theta;
    K_eta = |dt^2 eta|^2_{L2 H^1/2} + |eta|^2_{Linf H^5/2} + |dt eta|^2_{Linf H^3/2}.
    """
    g, t = s.grid, s.times
    total = 0.0
    for f in (s.u, s.theta):
        ft = _time_deriv(f, t)
        total += (_l2t(_series(f, 3, g), t) + _linf(_series(f, 2, g))
                  + _l2t(_series(ft, 1, g), t) + _linf(_series(ft, 0, g)))
    return {"K_N": total, "K_eta": m_norm(s.eta, t, g)}


# ---------------------------------------------------------------- iteration


def prepare_initial(cfg: PicardConfig):
    u0, theta0, eta0 = initial_fields(cfg)
    data = build_initial_data(u0, theta0, eta0, N_levels=1, epsilon=cfg.epsilon, jac_floor=0.5 * cfg.jac_floor,
                              tol=min(cfg.solver_tol, 1e-10))
    return u0, data.p[0], theta0, eta0


def _thread_mode(cfg):
    return "single-thread" if cfg.threads == 1 else f"threads={cfg.threads}"


def run_picard(cfg: PicardConfig, on_record=None):
    """Iterate sweeps until the N-distance drops below tol_fixed_point (after
    min_sweeps) or max_sweeps is reached.  Returns (records, last sweep)."""
    from threadpoolctl import threadpool_limits

    with threadpool_limits(limits=cfg.threads):
        init = prepare_initial(cfg)
        times = cfg.dt * np.arange(cfg.nsteps + 1)
        prev = constant_sweep(init[0], init[1], init[2], init[3], times)
        records = []
        for m in range(1, cfg.max_sweeps + 1):
            cur = picard_sweep(prev, cfg, init)
            dist = contraction_metrics(cur, prev)
            agg = norm_aggregates(cur)
            last = records[-1].N_dist if records else None
            ratio = dist["N_dist"] / last if last else None
            rec = IterationRecord(sweep=m, N_dist=dist["N_dist"], M_dist=dist["M_dist"], ratio=ratio,
                                  max_div_residual=cur.info["max_div_residual"], min_J=cur.info["min_J"],
                                  ledger_residual_u=cur.info["ledger_residual_u"],
                                  ledger_residual_theta=cur.info["ledger_residual_theta"],
                                  K_N=agg["K_N"], K_eta=agg["K_eta"],
                                  flagged=cur.info["min_J"] < 0.5 * cfg.jac_floor, mode=_thread_mode(cfg))
            records.append(rec)
            if on_record is not None:
                on_record(rec)
            prev = cur
            if m >= cfg.min_sweeps and dist["N_dist"] < cfg.tol_fixed_point:
                break
    return records, prev


# ---------------------------------------------------------------- checkpoints

FIELDS = ("eta", "u1", "u2", "u3", "p", "theta")
FORMAT_VERSION = 1


@dataclass
class Checkpoint:
    header: dict
    fields: dict  # name -> array [nt, ...] in [t][z][y][x] order

    @classmethod
    def from_sweep(cls, s: Sweep, config: dict = None):
        g = s.grid
        arrays = {"eta": np.ascontiguousarray(np.transpose(s.eta, (0, 2, 1))),
                  "p": np.ascontiguousarray(np.transpose(s.p, (0, 3, 2, 1))),
                  "theta": np.ascontiguousarray(np.transpose(s.theta, (0, 3, 2, 1)))}
        for i in range(3):
            arrays[f"u{i + 1}"] = np.ascontiguousarray(np.transpose(s.u[:, i], (0, 3, 2, 1)))
        header = {"format_version": FORMAT_VERSION, "grid": g.to_dict(),
                  "times": [float(t) for t in s.times],
                  "fields": [{"name": n, "shape": list(arrays[n].shape[1:])} for n in FIELDS],
                  "config": config or {}}
        return cls(header=header, fields=arrays)

    def to_sweep(self):
        g = Grid(**self.header["grid"])
        f = self.fields
        u = np.stack([np.transpose(f[f"u{i + 1}"], (0, 3, 2, 1)) for i in range(3)], axis=1)
        sw = Sweep(times=np.array(self.header["times"]), eta=np.transpose(f["eta"], (0, 2, 1)),
                   eta_t=None, u=u, p=np.transpose(f["p"], (0, 3, 2, 1)),
                   theta=np.transpose(f["theta"], (0, 3, 2, 1)), grid=g)
        sw.eta_t = np.stack([kinematic_rate(SurfaceField(e, g), SurfaceTrace.from_velocity(v))
                             for e, v in zip(sw.eta, sw.u)])
        return sw

    def to_bytes(self):
        head = json.dumps(self.header, sort_keys=True, separators=(",", ":")).encode()
        nt = len(self.header["times"])
        parts = [struct.pack("<Q", len(head)), head]
        for k in range(nt):
            for n in FIELDS:
                parts.append(np.asarray(self.fields[n][k], dtype="<f8").tobytes(order="C"))
        return b"".join(parts)

    @classmethod
    def from_bytes(cls, data: bytes):
        (hlen,) = struct.unpack_from("<Q", data, 0)
        header = json.loads(data[8:8 + hlen].decode())
        if header.get("format_version") != FORMAT_VERSION:
            raise ValueError("unsupported checkpoint format")
        nt = len(header["times"])
        shapes = {f["name"]: tuple(f["shape"]) for f in header["fields"]}
        per = {n: int(np.prod(shapes[n])) for n in FIELDS}
        flat = np.frombuffer(data, dtype="<f8", offset=8 + hlen)
        if flat.size != nt * sum(per.values()):
            raise ValueError("checkpoint payload has the wrong size")
        fields = {n: np.empty((nt,) + shapes[n]) for n in FIELDS}
        pos = 0
        for k in range(nt):
            for n in FIELDS:
                fields[n][k] = flat[pos:pos + per[n]].reshape(shapes[n])
                pos += per[n]
        return cls(header=header, fields=fields)

    def save(self, path):
        with open(path, "wb") as fh:
            fh.write(self.to_bytes())

    @classmethod
    def load(cls, path):
        with open(path, "rb") as fh:
            return cls.from_bytes(fh.read())


def sweep_diagnostics(s: Sweep, cfg: PicardConfig):
    """Re-derive per-sweep diagnostics from stored fields, using the sweep's own surface."""
    g = s.grid
    traj = []
    forcings = []
    min_j, max_div = np.inf, 0.0
    for k, t in enumerate(s.times):
        pk = geometry_pack(SurfaceField(s.eta[k], g), g, epsilon=cfg.epsilon, check=False,
                           eta_t=SurfaceField(s.eta_t[k], g))
        min_j = min(min_j, pk.min_jacobian())
        w = np.full(g.nz + 1, g.h)
        w[0] = w[-1] = 0.5 * g.h
        dv = div_a(s.u[k], pk)
        max_div = max(max_div, float(np.sqrt(np.sum(dv * dv * w) * g.cell_area)))
        traj.append(EvolutionState(t=float(t), u=s.u[k], p=s.p[k], theta=s.theta[k], pack=pk, step=k))
        forcings.append(nonlinear_forcings(s.u[k], s.theta[k], pk))
    led = energy_ledger(traj, forcings)
    agg = norm_aggregates(s)
    return {"min_J": float(min_j), "max_div_nodal": max_div, "ledger_residual_u": led["residual_u"],
            "ledger_residual_theta": led["residual_theta"], **agg, "series": led["series"]}
