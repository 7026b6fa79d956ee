"""Energy-ledger residuals of the linear solver against the time step, on static and
prescribed-moving geometry, for several perturbation amplitudes."""
import argparse
from dataclasses import dataclass

from flatbenard.verification import ledger_run


@dataclass
class Config:
    dts: tuple = (2e-3, 1e-3, 5e-4)
    T: float = 0.1
    amplitudes: tuple = (0.1, 1.0)


def main(cfg: Config):
    print(f"{'geometry':>8} {'amp':>5} {'dt':>8} {'steps':>5} {'rel_u':>10} {'rel_theta':>10} {'abs_theta':>10}")
    for moving in (False, True):
        for amp in cfg.amplitudes:
            for dt in cfg.dts:
                r = ledger_run(dt, cfg.T, moving=moving, amplitude=amp)
                print(f"{'moving' if moving else 'static':>8} {amp:>5.2f} {dt:>8.1e} {r['steps']:>5d} "
                      f"{r['residual_u']:>10.2e} {r['residual_theta']:>10.2e} {r['abs_residual_theta']:>10.2e}")


if __name__ == "__main__":
    p = argparse.ArgumentParser()
    p.add_argument("--T", type=float, default=0.1)
    p.add_argument("--amplitudes", type=float, nargs="+", default=[0.1, 1.0])
    a = p.parse_args()
    main(Config(T=a.T, amplitudes=tuple(a.amplitudes)))
