"""Annealed survival of a linear-fractional process driven by a Cauchy-type walk.

Prints ``P(Z_n > 0)``, ``P(L_n >= 0)`` and their ratio on a dyadic grid.
The ratio should level off; its limit is not known in closed form.
"""
import numpy as np

from cauchy_bpre import bpre
from cauchy_bpre.environment import EnvironmentDriver, draw_environment
from cauchy_bpre.heavy_tail import example1_law

law = example1_law(p=0.7, q=0.3, m=2.0)
driver = EnvironmentDriver("linear_fractional", law, eta0=3.0)
rng = np.random.default_rng(2024)

env = draw_environment(driver, 200, rng)
curve = bpre.survival_curve(env)
print("one environment, n = 200:")
print(f"  quenched survival {curve[200]:.3e}, lower bound {bpre.survival_lower_bound(env, 200):.3e}")

exp = bpre.theorem_ratio(driver, [2 ** k for k in range(6, 11)], 40_000, rng)
print("\nn      P(Z_n>0)   P(L_n>=0)  ratio")
for n, num, den, r, se in zip(exp.ns, exp.survival, exp.nonneg, exp.r, exp.r_se):
    print(f"{n:<6d} {num:.4e} {den:.4e} {r:.3f} +- {se:.3f}")
lo, hi = exp.slope_ci
print(f"slope of log r against log n: {exp.slope:+.4f}, CI [{lo:+.4f}, {hi:+.4f}]")
