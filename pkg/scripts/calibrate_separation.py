"""Calibrate the narrow target-set constant on T1, then compare the two transfer algorithms.

Usage: python3 scripts/calibrate_separation.py --np 1000 --nq 100 --trials 1000
"""

import argparse

import numpy as np

from transfer_moduli.conf_class import (ComplexityParams, calibrate_constant, strong_confidence_set_rootn,
                                        strong_contract)
from transfer_moduli.instances import load_instance, sample
from transfer_moduli.transfer import TransferParams, run_strong_transfer, run_weak_transfer


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--instance", default="T1")
    ap.add_argument("--np", type=int, default=1000)
    ap.add_argument("--nq", type=int, default=100)
    ap.add_argument("--tau", type=float, default=0.05)
    ap.add_argument("--trials", type=int, default=1000)
    ap.add_argument("--calibration-trials", type=int, default=300)
    args = ap.parse_args()

    inst = load_instance(args.instance)
    cp = ComplexityParams()

    def fails(c, seed):
        s = sample(inst, "Q", args.nq, seed)
        return not strong_contract(inst, "Q", strong_confidence_set_rootn(s, inst, cp, args.tau, C=c)).ok

    seeds = range(10**6, 10**6 + args.calibration_trials)
    cal = calibrate_constant(fails, [2.0 ** k for k in range(-4, 6)], seeds, args.tau)
    print(f"c_flat = {cal.value:g} (calibration failure rate {cal.failure_rate:.3f})")

    params = TransferParams(c_flat=cal.value)
    weak = [run_weak_transfer(inst, args.np, args.nq, args.tau, params, seed=s) for s in range(args.trials)]
    strong = [run_strong_transfer(inst, args.np, args.nq, args.tau, params, seed=s) for s in range(args.trials)]
    for name, reps in (("weak", weak), ("strong", strong)):
        ex = np.array([r.excess_q for r in reps])
        cov = np.mean([r.bound_ok for r in reps])
        print(f"{name:6s} mean excess Q-risk {ex.mean():.4f}  bound coverage {cov:.3f}")
    print(f"target-only ERM mean {np.mean([r.target_only_excess for r in weak]):.4f}")
    print(f"mean eps_Q {np.mean([r.eps_q for r in strong]):.4f}")


if __name__ == "__main__":
    main()
