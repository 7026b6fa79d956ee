"""Picard sweeps for a few perturbation amplitudes and horizons; prints the
N-distance history and successive ratios."""
import argparse
from dataclasses import dataclass

from flatbenard.driver import PicardConfig, run_picard


@dataclass
class Config:
    amplitudes: tuple = (0.01, 0.05)
    horizons: tuple = (0.025, 0.05)
    sweeps: int = 5
    nx: int = 16
    nz: int = 24


def main(cfg: Config):
    for amp in cfg.amplitudes:
        for T in cfg.horizons:
            pc = PicardConfig(nx=cfg.nx, ny=cfg.nx, nz=cfg.nz, T=T, dt=2.5e-3, max_sweeps=cfg.sweeps,
                              min_sweeps=cfg.sweeps, tol_fixed_point=1e-300, amplitude=amp,
                              preset="perturbed-equilibrium")
            recs, _ = run_picard(pc)
            dist = " ".join(f"{r.N_dist:.2e}" for r in recs)
            ratios = " ".join("-" if r.ratio is None else f"{r.ratio:.2e}" for r in recs)
            print(f"amp={amp:<5} T={T:<6} N: {dist}\n{'':18}ratio: {ratios}  min J {min(r.min_J for r in recs):.5f}")


if __name__ == "__main__":
    p = argparse.ArgumentParser()
    p.add_argument("--amplitudes", type=float, nargs="+", default=[0.01, 0.05])
    p.add_argument("--horizons", type=float, nargs="+", default=[0.025, 0.05])
    p.add_argument("--sweeps", type=int, default=5)
    a = p.parse_args()
    main(Config(amplitudes=tuple(a.amplitudes), horizons=tuple(a.horizons), sweeps=a.sweeps))
