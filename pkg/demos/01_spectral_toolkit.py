"""
Fourier multipliers on the 2-torus
==================================

Fields live on an N x N grid over [0, 2 pi)^2.  Operators act on the
normalised Fourier coefficients, so every identity below is exact up to
round-off.
"""

# %%
import numpy as np

from sqgci import spectral as sp

n = 64
f = sp.cos_mode(n, (3, 4))
print("Lambda cos(3x1 + 4x2) / cos(...):",
      sp.apply_multiplier(f, sp.lam(1.0)).samples[0, 0] / f.samples[0, 0])

# %%
# The two odd Riesz-type multipliers pair with the directions (3/5, 4/5)
# and (1, 0).  On cos(x1) they act as -25/12 and -7/12, which gives the
# X norm 1 + 25/12 + 7/12.
g = sp.cos_mode(n, (1, 0))
print("R1o on cos(x1):", sp.apply_multiplier(g, sp.odd_riesz(1)).samples[0, 0])
print("||cos x1||_X =", sp.x_norm(g), " (11/3 =", 11 / 3, ")")

# %%
# Products of band-limited fields are exact as long as the sum of the
# declared bands fits below N/2; otherwise the factors are padded.
rng = np.random.default_rng(0)
a = sp.lowpass(sp.TorusField(rng.standard_normal((n, n))), 10)
b = sp.lowpass(sp.TorusField(rng.standard_normal((n, n))), 12)
p = sp.dealiased_product(a, b)
print("declared band of the product:", p.band_limit)
print("energy beyond |k| = 22:", sp.band_leakage(p, 22))

# %%
# Dyadic-block Holder proxy: a single mode at a dyadic frequency sits in one block.
for lam in (4, 16, 64):
    h = sp.holder_norm(sp.cos_mode(256, (lam, 0)), 0.6)
    print(f"lambda = {lam:>3}: ||cos||_C^0.6 = {h:8.3f},  lambda^0.6 = {lam ** 0.6:8.3f}")
