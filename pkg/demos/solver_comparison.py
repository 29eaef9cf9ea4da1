"""One Fokker-Planck step solved three ways.

Projected gradient descent and AEPG use only gradients and the null-space
projection of the constraint.  Newton works on the full KKT system.  All three
reach the same minimizer, but the iteration counts differ by orders of
magnitude.  AEPG's auxiliary variable r never increases, whatever the step
size; the last block checks this for step sizes far too large for plain
gradient descent.  Stability is not progress: at the largest step sizes r
collapses towards zero and the iterates barely move.
"""

from __future__ import annotations

import numpy as np

from onsagerflow import FokkerPlanck, NoConvergence, OptimizerConfig, PeriodicGrid, SystemState, build_step, solve

grid = PeriodicGrid(1, 16)
x = grid.cell_centers()[0]
problem = build_step(FokkerPlanck(1.0, np.cos(2 * np.pi * x)), SystemState(grid, 1 + 0.5 * np.sin(2 * np.pi * x)), 0.1)
eta = 1.0 / np.linalg.eigvalsh(problem.hessian(problem.theta0).toarray()).max()
print(f"step size 1/L = {eta:.3e}")

points = {m: solve(problem, OptimizerConfig(method=m, eta=eta)) for m in ("projected_gd", "aepg", "newton_kkt")}
ref = points["newton_kkt"].theta
for m, p in points.items():
    print(f"{m:>13}: {p.iterations:6d} iterations, KKT residual {p.kkt_residual:.2e}, "
          f"|theta - newton| = {np.max(np.abs(p.theta - ref)):.1e}")

print("\nAEPG with large steps (200 iterations):")
for big in (1.0, 100.0, 1e4):
    try:
        trace = solve(problem, OptimizerConfig(method="aepg", eta=big, max_iterations=200)).r_trace
    except NoConvergence as exc:
        trace = exc.point.r_trace
    steps = np.diff(trace)
    print(f"  eta={big:<8g} r: {trace[0]:.6f} -> {trace[-1]:.6f}, largest increment {steps.max():.1e}")
