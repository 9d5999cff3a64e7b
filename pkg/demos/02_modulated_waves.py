"""
Lambda acting on a modulated wave
=================================

For an envelope a with band r below the carrier, Lambda(a cos(lam xi.x))
splits into lam a cos + (xi.grad a) sin plus two small corrector terms.
The split is an identity of trigonometric polynomials.
"""

# %%
import numpy as np

from sqgci.corrector import lambda_modulated
from sqgci.verification import bound_probes, random_envelope

rng = np.random.default_rng(1)
for lam, xi in ((64, (1.0, 0.0)), (65, (0.6, 0.8))):
    a = random_envelope(256, 12, rng)
    chk = lambda_modulated(a, lam, xi)
    print(f"lam = {lam}, xi = {xi}: relative mismatch {chk.rel_error:.2e}")

# %%
# The correctors are small: T1 ~ r^2 / lam and T2 ~ r^3 / lam^2 relative to a.
# The probes report the empirical constants for r = lam^(1/2).
for lam in (64, 128, 256):
    r = np.sqrt(lam)
    corpus = [(random_envelope(64, r, rng), lam, (1.0, 0.0)) for _ in range(6)]
    rep = bound_probes(corpus, include_out_of_hypothesis=True)
    print(f"lam = {lam:>3}: T1 {rep['t1']:.3f}  T2 {rep['t2']:.3f}  "
          f"degree-0 {rep['degree0']:.3f}")
