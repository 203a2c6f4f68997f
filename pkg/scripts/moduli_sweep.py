"""Sweep random finite instances: modulus identities and every discrepancy bound.

Writes one CSV row per instance with the number of identity violations and
the smallest slack of each bound.
Usage: python3 scripts/moduli_sweep.py --count 500 --out sweep.csv
"""

import argparse
import csv
import sys

import numpy as np

from transfer_moduli.discrepancies import FINITE_MEASURES, verify_modulus_bounds
from transfer_moduli.instances import random_finite_instance
from transfer_moduli.moduli import pivotal_value, strong_modulus, weak_modulus

TOL = 1e-12


def violations(inst, grid) -> int:
    weak = np.array([weak_modulus(inst, e) for e in grid])
    S = np.array([[strong_modulus(inst, a, b) for b in grid] for a in grid])
    bad = int(np.sum(np.diff(weak) < -TOL))
    bad += int(np.sum(np.diff(S, axis=0) < -TOL) + np.sum(np.diff(S, axis=1) < -TOL))
    bad += int(np.sum(S > np.minimum(grid[:, None], weak[None, :]) + TOL))
    bad += int(np.sum(pivotal_value(inst) > weak + TOL))
    return bad


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--count", type=int, default=500)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", default=None, help="CSV path (stdout if omitted)")
    args = ap.parse_args()

    rng = np.random.default_rng(args.seed)
    fh = open(args.out, "w", newline="") if args.out else sys.stdout
    w = csv.writer(fh)
    w.writerow(["instance", "m", "k", "pivot", "violations", *FINITE_MEASURES])
    total = 0
    for i in range(args.count):
        inst = random_finite_instance(rng, 6, 12, grid=(10 if i % 2 else None))
        top = max(inst.excess_p.max(), inst.excess_q.max())
        grid = np.linspace(0.0, top + 0.05, 20)
        bad = violations(inst, grid)
        total += bad
        rep = verify_modulus_bounds(inst, grid)
        slack = {m: min(r.slack for r in rep.rows if r.measure == m) for m in FINITE_MEASURES}
        w.writerow([i, inst.p_weights.size, inst.hypotheses.shape[0], f"{pivotal_value(inst):.6g}", bad,
                    *(f"{slack[m]:.3e}" for m in FINITE_MEASURES)])
    if args.out:
        fh.close()
    print(f"{args.count} instances, {total} identity violations", file=sys.stderr)


if __name__ == "__main__":
    main()
