"""Solve single S-state subsystems and inspect what the solution looks like.

Without the entropy term the stationary distribution reproduces the coupling
target exactly; turning the entropy weight up pulls it toward uniform while
keeping every state strictly positive.
"""
import numpy as np

from mfgmix import CostSpec, solve_subsystem

# Two states, target 30% mass on state 1, no entropy: the closed-form case.
theta = np.array([0.7, 0.3])
sol = solve_subsystem(theta, CostSpec(epsilon=0.0))
print("two states, no entropy")
print("  value        ", np.round(sol.value, 12))
print("  ergodic cost ", round(sol.ergodic_cost, 12))
print("  distribution ", np.round(sol.distribution, 12), "(equals the target)")
print("  transition   ", np.round(sol.transition[0], 12), "per row")
print()

# The same target under increasing entropy weights.
print("entropy pulls the distribution toward uniform:")
for eps in (0.0, 0.02, 0.05, 0.2, 1.0):
    sol = solve_subsystem(theta, CostSpec(epsilon=eps))
    print(f"  eps={eps:<5} pi = {np.round(sol.distribution, 6)}"
          f"  (min transition entry {sol.transition.min():.4f})")
print()

# A larger state space: the no-entropy fixed point holds for any S.
rng = np.random.default_rng(0)
theta5 = rng.random(5)
theta5 /= theta5.sum()
sol5 = solve_subsystem(theta5, CostSpec(epsilon=0.0))
print("five states, no entropy")
print("  target      ", np.round(theta5, 6))
print("  distribution", np.round(sol5.distribution, 6))
print("  value equals 1/S - theta:", np.allclose(sol5.value, 1 / 5 - theta5))
print("  residuals: hjb %.2e, fp %.2e" % (sol5.hjb_residual, sol5.fp_residual))
