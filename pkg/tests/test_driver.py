import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from flatbenard.cli import run_cli
from flatbenard.driver import (Checkpoint, PicardConfig, Sweep, constant_sweep, contraction_metrics, initial_fields,
                               nonlinear_forcings, prepare_initial, picard_sweep, run_picard)
from flatbenard.errors import ConfigError
from flatbenard.geometry import Grid, flat_pack, geometry_pack
from flatbenard.operators import div_a, piola_divergence

SMALL = dict(nx=8, ny=8, nz=8, T=0.01, dt=2.5e-3)


def random_sweep(rng, g=Grid(8, 4, 6), nt=4):
    s = (nt, g.nx, g.ny, g.nz + 1)
    return Sweep(times=0.01 * np.arange(nt), eta=rng.normal(size=(nt, g.nx, g.ny)) * 0.01,
                 eta_t=np.zeros((nt, g.nx, g.ny)), u=rng.normal(size=(nt, 3) + s[1:]), p=rng.normal(size=s),
                 theta=rng.normal(size=s), grid=g)


# ------------------------------------------------------------ config

@settings(max_examples=30, deadline=None)
@given(st.floats(-1, 2), st.floats(-1, 2))
def test_config_time_window(dt, T):
    ok = 0 < dt < T <= 1 and abs(T / dt - round(T / dt)) <= 1e-9 * T / dt
    if ok:
        assert PicardConfig(dt=dt, T=T).nsteps == round(T / dt)
    else:
        with pytest.raises(ConfigError):
            PicardConfig(dt=dt, T=T)


@pytest.mark.parametrize("text", ["{", "[]", '{"bogus": 1}', '{"dt": "x"}', '{"preset": "hot"}',
                                  '{"tol_fixed_point": 0}', '{"schema_version": 9}', '{"eta0_modes": [{"k": [1]}]}'])
def test_malformed_configs(text):
    with pytest.raises(ConfigError):
        PicardConfig.from_json(text)


def test_config_round_trip():
    cfg = PicardConfig(**SMALL, eta0_modes=[{"k": [1, 0], "amp": 0.01}])
    assert PicardConfig.from_json(json.dumps(cfg.to_dict())) == cfg


def test_initial_velocity_is_admissible():
    cfg = PicardConfig(nx=8, ny=8, nz=32, T=0.01, dt=2.5e-3, preset="zero",
                       u0_modes=[{"k": [1, 0], "amp": 0.01}, {"k": [0, 1], "amp": 0.01, "potential": "e1"}],
                       eta0_modes=[{"k": [1, 1], "amp": 0.02}])
    u0, th0, eta0 = initial_fields(cfg)
    pk = geometry_pack(eta0, cfg.grid(), epsilon=cfg.epsilon)
    assert np.abs(u0[..., 0]).max() == 0.0 and np.abs(th0).max() == 0.0
    # exactly solenoidal in the Piola form; the nodal div_A only up to truncation
    assert np.abs(piola_divergence(u0, pk)).max() < 1e-12
    assert np.abs(div_a(u0, pk)).max() < 1e-2 * np.abs(u0).max()


# ------------------------------------------------------------ nonlinear forcings

def test_forcings_of_rest_state(grid):
    z = np.zeros((3, grid.nx, grid.ny, grid.nz + 1))
    f = nonlinear_forcings(z, z[0], flat_pack(grid, with_time=True))
    assert np.abs(f["F1"]).max() == 0 and np.abs(f["F3"]).max() == 0 and np.abs(f["F4"]).max() == 0
    assert np.allclose(f["F5"], -1.0)


def test_forcings_of_uniform_advection(grid):
    X1, _, X3 = grid.mesh()
    c = 0.7
    u = np.zeros((3,) + X1.shape)
    u[0] = c
    th = np.sin(2 * np.pi * X1) * X3
    f = nonlinear_forcings(u, th, flat_pack(grid, with_time=True))
    assert np.abs(f["F1"]).max() < 1e-13
    assert np.abs(f["F3"] + c * 2 * np.pi * np.cos(2 * np.pi * X1) * X3).max() < 1e-12


# ------------------------------------------------------------ metrics

def test_metrics_zero_on_identical(rng):
    a = random_sweep(rng)
    assert contraction_metrics(a, a) == {"N_dist": 0.0, "M_dist": 0.0}


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 10_000), st.floats(0.1, 10))
def test_metrics_symmetric_and_quadratic(seed, lam):
    rng = np.random.default_rng(seed)
    a, b = random_sweep(rng), random_sweep(rng)
    d_ab, d_ba = contraction_metrics(a, b), contraction_metrics(b, a)
    assert d_ab["N_dist"] == pytest.approx(d_ba["N_dist"], rel=1e-12)
    assert d_ab["M_dist"] == pytest.approx(d_ba["M_dist"], rel=1e-12)
    assert d_ab["N_dist"] > 0 and d_ab["M_dist"] > 0
    c = Sweep(times=a.times, eta=b.eta + lam * (a.eta - b.eta), eta_t=a.eta_t, u=b.u + lam * (a.u - b.u),
              p=b.p + lam * (a.p - b.p), theta=b.theta + lam * (a.theta - b.theta), grid=a.grid)
    d_cb = contraction_metrics(c, b)
    assert d_cb["N_dist"] == pytest.approx(lam ** 2 * d_ab["N_dist"], rel=1e-9)
    assert d_cb["M_dist"] == pytest.approx(lam ** 2 * d_ab["M_dist"], rel=1e-9)


def test_surface_metric_single_mode(rng):
    a = random_sweep(rng)
    X1, _ = a.grid.surface_mesh()
    amp = 0.03
    b = Sweep(times=a.times, eta=a.eta + amp * np.cos(2 * np.pi * X1), eta_t=a.eta_t, u=a.u, p=a.p,
              theta=a.theta, grid=a.grid)
    m = contraction_metrics(a, b)["M_dist"]
    assert m == pytest.approx(amp ** 2 * (1 + 4 * np.pi ** 2) ** 2.5 / 2, rel=1e-8)


def test_metrics_reject_mismatch(rng):
    a = random_sweep(rng)
    b = random_sweep(rng, nt=5)
    with pytest.raises(ValueError):
        contraction_metrics(a, b)


# ------------------------------------------------------------ sweeps

def test_equilibrium_is_a_fixed_point():
    recs, _ = run_picard(PicardConfig(**SMALL, preset="equilibrium", max_sweeps=3, min_sweeps=3))
    assert len(recs) == 3
    assert all(r.N_dist <= 1e-8 and r.M_dist <= 1e-8 for r in recs)
    assert all(r.min_J >= 0.1 and not r.flagged for r in recs)


def test_zero_data_is_heated_by_robin_datum():
    cfg = PicardConfig(**SMALL, preset="zero", max_sweeps=1)
    init = prepare_initial(cfg)
    s0 = constant_sweep(*init, cfg.dt * np.arange(cfg.nsteps + 1))
    s1 = picard_sweep(s0, cfg, init)
    d = contraction_metrics(s1, s0)
    assert np.isfinite(d["N_dist"]) and d["N_dist"] > 0
    # heating through the surface warms the top
    assert s1.theta[-1][..., -1].mean() < 0


def test_records_are_deterministic():
    cfg = PicardConfig(**SMALL, amplitude=0.05, max_sweeps=2, min_sweeps=2)
    a, _ = run_picard(cfg)
    b, _ = run_picard(cfg)
    assert [r.to_json() for r in a] == [r.to_json() for r in b]


# ------------------------------------------------------------ checkpoints

@settings(max_examples=10, deadline=None)
@given(st.integers(0, 10_000))
def test_checkpoint_round_trip_is_byte_identical(seed):
    s = random_sweep(np.random.default_rng(seed))
    raw = Checkpoint.from_sweep(s, {"note": "x"}).to_bytes()
    back = Checkpoint.from_bytes(raw)
    assert back.to_bytes() == raw
    t = back.to_sweep()
    for k in ("eta", "u", "p", "theta", "times"):
        assert np.array_equal(getattr(t, k), getattr(s, k))


def test_checkpoint_layout(rng):
    s = random_sweep(rng)
    raw = Checkpoint.from_sweep(s).to_bytes()
    n = int.from_bytes(raw[:8], "little")
    head = json.loads(raw[8:8 + n])
    assert [f["name"] for f in head["fields"]] == ["eta", "u1", "u2", "u3", "p", "theta"]
    payload = np.frombuffer(raw[8 + n:], dtype="<f8")
    g = s.grid
    # first value after the surface block of time 0 is u1 at (x, y, z) = (0, 0, 0); next is x = 1
    off = g.nx * g.ny
    assert payload[0] == s.eta[0, 0, 0] and payload[1] == s.eta[0, 1, 0]
    assert payload[off] == s.u[0, 0, 0, 0, 0] and payload[off + 1] == s.u[0, 0, 1, 0, 0]


def test_truncated_checkpoint_rejected(rng):
    raw = Checkpoint.from_sweep(random_sweep(rng)).to_bytes()
    with pytest.raises(ValueError):
        Checkpoint.from_bytes(raw[:-8])


# ------------------------------------------------------------ CLI

def test_cli_exit_codes(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert run_cli(["picard", "--config", str(bad)]) == 2
    err = capsys.readouterr().err.strip().splitlines()
    assert len(err) == 1 and err[0].startswith("config error")
    assert run_cli(["nonsense"]) == 2
    assert run_cli(["report", "--checkpoint", str(tmp_path / "missing.ckpt")]) == 2


def test_cli_geometry_failure_exit_code(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps(dict(SMALL, preset="zero", eta0_modes=[{"k": [1, 0], "amp": 0.6}])))
    assert run_cli(["picard", "--config", str(cfg)]) == 4


def test_cli_picard_and_report(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps(dict(SMALL, max_sweeps=2, min_sweeps=2)))
    out = tmp_path / "run"
    assert run_cli(["picard", "--config", str(cfg), "--preset", "equilibrium", "--out", str(out)]) == 0
    lines = (out / "records.jsonl").read_text().splitlines()
    assert len(lines) == 2 and all(json.loads(x)["N_dist"] <= 1e-8 for x in lines)
    assert (out / "series.csv").read_text().startswith("t,")
    raw = (out / "state.ckpt").read_bytes()
    Checkpoint.load(out / "state.ckpt").save(tmp_path / "again.ckpt")
    assert (tmp_path / "again.ckpt").read_bytes() == raw
    capsys.readouterr()
    assert run_cli(["report", "--out", str(out)]) == 0
    rep = json.loads(capsys.readouterr().out)
    assert rep["min_J"] == pytest.approx(1.0)


def test_cli_check_passes(capsys):
    assert run_cli(["check", "--samples", "5"]) == 0
    assert json.loads(capsys.readouterr().out)["passed"] is True
