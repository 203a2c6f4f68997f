"""Audit random hard families and compare learners by Monte Carlo.

For each family: membership in the admissible class, the KL budget against
(1/8) ln M, and the worst mean excess target risk of each learner next to
the family scale eps.
Usage: python3 scripts/lowerbound_sweep.py --families 10 --trials 10
"""

import argparse

import numpy as np

from transfer_moduli.lowerbound import (FSpec, build_hard_family, check_kl_budget, minimax_simulate,
                                        verify_membership)


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--families", type=int, default=10)
    ap.add_argument("--trials", type=int, default=10)
    ap.add_argument("--sigmas", type=int, default=8, help="codewords simulated per family")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--threads", type=int, default=1)
    args = ap.parse_args()

    rng = np.random.default_rng(args.seed)
    print("d,variant,beta_p,beta_q,eps,member,kl_worst,kl_limit,oracle,majority-x0,erm-q,alg1")
    for _ in range(args.families):
        variant = "code" if rng.random() < 0.3 else "full"
        d = int(rng.choice([16, 24])) if variant == "code" else int(rng.integers(8, 11))
        bp, bq = (float(b) for b in rng.uniform(0, 0.9, 2))
        fam = build_hard_family(d, int(rng.integers(d, 10**4)), int(rng.integers(d, 10**4)), bp, bq,
                                FSpec.identity(), variant=variant)
        sig = range(min(args.sigmas, fam.M + 1))
        worst = [minimax_simulate(fam, name, args.trials, args.seed, sig, threads=args.threads).worst
                 for name in ("oracle", "majority-x0", "erm-q", "alg1")]
        kl = check_kl_budget(fam)
        print(f"{d},{variant},{bp:.3f},{bq:.3f},{fam.eps:.4g},{verify_membership(fam).ok},"
              f"{kl.worst:.4g},{kl.limit:.4g}," + ",".join(f"{x:.4g}" for x in worst))


if __name__ == "__main__":
    main()
