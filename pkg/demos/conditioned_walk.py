"""Renewal function, Spitzer series and the walk conditioned to stay nonnegative.

Uses the simple symmetric walk, where everything is known in closed form:
``U(x) = floor(x) + 1`` and ``P(L_n >= 0) = C(n, n//2) / 2**n``.
"""
import math

import numpy as np

from cauchy_bpre import conditioned as cd, fluctuation as fl

spec = fl.simple_walk()
series = fl.SpitzerSeries.from_lattice(spec, 64)
print("n   ell_n      closed form")
for n in (2, 4, 8, 16, 32, 64):
    print(f"{n:<3d} {series.ell[n]:.8f} {math.comb(n, n // 2) / 2 ** n:.8f}")
print(f"max convolution residual: {np.abs(series.convolution_residual()).max():.1e}")

U = cd.lattice_U(spec, 20)
print("\nU(x) for x = 0..5:", U(np.arange(6.0)).tolist())

sampler = cd.PlusSampler(spec, U, "kernel")
targets, probs = cd.kernel_row(sampler, 1.0)
print("P+ row from 1:", dict(zip(targets.tolist(), probs.tolist())))

rng = np.random.default_rng(1)
S = cd.sample_plus_kernel(0.0, 400, sampler, rng, size=2000)
print(f"conditioned walk after 400 steps: min {S.min():g}, median S_400 {np.median(S[:, -1]):g}")

weight = cd.PlusSampler(spec, U, "weighting")
for n in (16, 64, 256):
    est, se = cd.plus_expectation(lambda P: np.exp(-P[:, -1]), n, 50_000, weight, rng)
    kest, kse = cd.plus_expectation(lambda P: np.exp(-P[:, -1]), n, 50_000, sampler, rng)
    print(f"E+[exp(-S_{n})]: weighting {est:.4f} +- {se:.4f}, kernel {kest:.4f} +- {kse:.4f}")
