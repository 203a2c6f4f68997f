"""Shared generators for the lower-bound sweeps."""

import numpy as np

from transfer_moduli.lowerbound import FSpec, build_hard_family


def random_family(rng: np.random.Generator):
    """A random admissible hard family (concave envelopes, kappa = 1)."""
    variant = "code" if rng.random() < 0.3 else "full"
    d = int(rng.choice([16, 24, 32])) if variant == "code" else int(rng.integers(8, 13))
    kind = rng.integers(3)
    if kind == 0:
        f = FSpec.identity()
    elif kind == 1:
        f = FSpec.power(float(rng.uniform(0.3, 1.0)), float(rng.uniform(0.2, 1.0)))
    else:
        # piecewise-linear concave: slope 1 then flat
        knee = float(rng.uniform(0.05, 0.8))
        f = FSpec((0.0, knee, 1.0), (0.0, knee, knee))
    beta_p, beta_q = (float(b) for b in rng.uniform(0, 0.9, 2))
    n_p = int(rng.integers(d, 10**5))
    n_q = int(rng.integers(d, 10**5))
    return build_hard_family(d, n_p, n_q, beta_p, beta_q, f, variant=variant)
