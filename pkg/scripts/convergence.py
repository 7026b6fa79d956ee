"""Vertical-refinement tables for the operator identities and the elliptic solvers."""
import argparse
from dataclasses import dataclass

import sympy as sp

from flatbenard.verification import elliptic_orders, operator_identity_orders


@dataclass
class Config:
    nzs: tuple = (16, 32, 64)
    nx: int = 32
    amplitude: float = 0.1
    epsilon: float = 0.25


def table(res):
    keys = [k for k in res["rows"][0] if k != "min_J"]
    print("  ".join(f"{k:>18}" for k in keys))
    for r in res["rows"]:
        print("  ".join(f"{r[k]:>18.3e}" if k != "nz" else f"{r[k]:>18d}" for k in keys))
    print("  ".join(["order".rjust(18)] + [f"{res['orders'][k]:>18.3f}" for k in keys[1:]]))


def main(cfg: Config):
    amp = sp.Rational(cfg.amplitude).limit_denominator(1000)
    print(f"# operator identities, surface amplitude {cfg.amplitude}, epsilon {cfg.epsilon}")
    table(operator_identity_orders(cfg.nzs, cfg.nx, amp, cfg.epsilon))
    for a in (0, amp):
        print(f"\n# elliptic solvers, surface amplitude {float(a)}")
        table(elliptic_orders(a, cfg.nzs, cfg.nx, cfg.epsilon))


if __name__ == "__main__":
    p = argparse.ArgumentParser()
    p.add_argument("--nzs", type=int, nargs="+", default=[16, 32, 64])
    p.add_argument("--epsilon", type=float, default=0.25)
    p.add_argument("--amplitude", type=float, default=0.1)
    a = p.parse_args()
    main(Config(nzs=tuple(a.nzs), epsilon=a.epsilon, amplitude=a.amplitude))
