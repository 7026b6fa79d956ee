"""Acceptance criteria: one pass/fail line per criterion.

Run with pytest (lines appear in the terminal summary) or directly:
    python tests/test_acceptance.py
"""
import time

import sympy as sp

from flatbenard import verification as V
from flatbenard.driver import PicardConfig, run_picard

RESULTS = []


def _report(num, title, ok, detail, elapsed, limit):
    ok = bool(ok) and elapsed <= limit
    line = f"[{'PASS' if ok else 'FAIL'}] {num}. {title}: {detail} ({elapsed:.1f} s, limit {limit:.0f} s)"
    RESULTS.append(line)
    print(line)
    assert ok, line


def test_1_geometry_identities():
    t = time.time()
    r = V.geometry_identities(n_samples=100, seed=0, amp=0.2)
    worst = max(r["residuals"].values())
    _report(1, "geometry identities on 100 random surfaces", worst <= 1e-12,
            f"max residual {worst:.2e} (tol 1e-12), min J {r['min_J']:.3f}", time.time() - t, 30)


def test_2_operator_identities():
    t = time.time()
    r = V.operator_identity_orders(nzs=(16, 32, 64))
    lo = min(r["orders"].values())
    detail = ", ".join(f"{k} {v:.2f}" for k, v in r["orders"].items())
    _report(2, "operator identity orders over nz 16/32/64", lo >= 1.9, f"{detail} (need >= 1.9)",
            time.time() - t, 120)


def test_3_elliptic_convergence():
    t = time.time()
    flat = V.elliptic_orders(amp=0)
    curved = V.elliptic_orders(amp=sp.Rational(1, 10))
    lo = min(min(flat["orders"].values()), min(curved["orders"].values()))
    detail = (f"min order flat {min(flat['orders'].values()):.2f}, curved {min(curved['orders'].values()):.2f} "
              f"(curved min J {curved['rows'][0]['min_J']:.2f}; need >= 1.9)")
    _report(3, "manufactured convergence of the four elliptic solvers", lo >= 1.9, detail, time.time() - t, 300)


def test_4_hand_solutions():
    t = time.time()
    r = V.hand_solutions()
    ok = (r["conduction_error"] <= 1e-8 and r["hydrostatic_error"] <= 1e-8 and r["stokes_velocity"] <= 1e-8
          and r["max_time_derivative"] <= 1e-8 and r["compatibility_zero_velocity"] <= 1e-10)
    detail = (f"conduction {r['conduction_error']:.1e}, hydrostatic {r['hydrostatic_error']:.1e}, "
              f"time derivatives {r['max_time_derivative']:.1e}, compatibility {r['compatibility_zero_velocity']:.1e}")
    _report(4, "hand solutions", ok, detail, time.time() - t, 60)


def test_5_energy_ledger():
    t = time.time()
    dts = (2e-3, 1e-3, 5e-4)
    ok = True
    parts = []
    for moving in (False, True):
        runs = [V.ledger_run(dt, T=0.1, moving=moving) for dt in dts]
        rel = [max(r["residual_u"], r["residual_theta"]) for r in runs]
        halving = [rel[i] / rel[i + 1] for i in range(len(rel) - 1)]
        absres = max(runs[-1]["abs_residual_u"], runs[-1]["abs_residual_theta"])
        ok &= min(halving) >= 1.8 and absres <= 1e-4 and runs[-1]["steps"] == 200
        parts.append(f"{'moving' if moving else 'static'}: ratios {halving[0]:.2f}/{halving[1]:.2f}, "
                     f"abs {absres:.1e} at dt=5e-4")
    _report(5, "energy ledger", ok, "; ".join(parts), time.time() - t, 180)


def test_6_commutators():
    t = time.time()
    r = V.commutator_checks()
    s = max(r["static_max"].values())
    m = max(r["moving_oracle_error"].values())
    _report(6, "commutator forcings", s <= 1e-14 and m <= 1e-6,
            f"static max {s:.1e} (tol 1e-14), oracle error {m:.1e} (tol 1e-6)", time.time() - t, 60)


def test_7_picard():
    t = time.time()
    base = dict(nx=16, ny=16, nz=24, T=0.05, dt=2.5e-3, max_sweeps=5, min_sweeps=5, tol_fixed_point=1e-300,
                jac_floor=0.2)
    eq, _ = run_picard(PicardConfig(**base, preset="equilibrium"))
    pe, _ = run_picard(PicardConfig(**base, preset="perturbed-equilibrium", amplitude=0.01))
    eq_max = max(r.N_dist for r in eq)
    ratios = [r.ratio for r in pe[1:]]
    min_j = min(r.min_J for r in eq + pe)
    ok = (len(eq) == 5 and eq_max <= 1e-8 and all(q is not None and q < 1 for q in ratios)
          and min_j >= 0.1 and not any(r.flagged for r in eq + pe))
    detail = (f"equilibrium max N-distance {eq_max:.1e}; perturbed ratios "
              + "/".join(f"{q:.1e}" for q in ratios) + f"; min J {min_j:.4f} (floor 0.1)")
    _report(7, "Picard fixed point and contraction", ok, detail, time.time() - t, 600)


def test_8_transport():
    t = time.time()
    r = V.transport_checks()
    ok = r["time_order"] >= 1.0 and r["spatial_refinement_change"] < 1e-6 and r["mean_drift_per_time"] <= 1e-10
    detail = (f"time order {r['time_order']:.2f} (need >= 1), error change under nx 16->32 "
              f"{r['spatial_refinement_change']:.1e}, mean drift {r['mean_drift_per_time']:.1e}/unit time")
    _report(8, "surface transport", ok, detail, time.time() - t, 30)


def test_9_determinism():
    t = time.time()
    r = V.determinism_checks()
    ok = r["records_identical"] and r["fields_identical"] and r["checkpoint_bytes_identical"] \
        and r["checkpoint_fields_exact"]
    detail = ", ".join(f"{k} {r[k]}" for k in ("records_identical", "fields_identical",
                                                "checkpoint_bytes_identical", "checkpoint_fields_exact"))
    _report(9, "determinism and persistence", ok, detail, time.time() - t, 60)


if __name__ == "__main__":
    failed = 0
    for name, fn in sorted(globals().items()):
        if name.startswith("test_") and callable(fn):
            try:
                fn()
            except AssertionError:
                failed += 1
    raise SystemExit(1 if failed else 0)
