"""Phi decides whether correlations are long range.

Phi = Lap [K J]_sym + div Psi_sym is evaluated on the stationary profile.
For SSEP it is the constant -2 b^2; for a constant mobility with quadratic
entropy it vanishes and the covariance is exactly local, sloped boundaries
notwithstanding. The two-component model has a non-trivial Psi.
"""

import numpy as np

from ness_lab import analyze, build_grid, linearize, make_model, solve_steady

cases = {
    "ssep a=0.2 b=0.6": make_model("ssep", 0.2, 0.8),
    "gaussian, sloped": make_model("gaussian", -0.5, 1.5, kappa=2.0),
    "power law K=q": make_model("power_law", 0.2, 0.8, alpha=1.0),
    "two component": make_model("two_component", [0.3, 0.6], [0.7, 0.2]),
}
grid = build_grid(64)
print(f"{'model':20s} {'Phi(0.25)':>12s} {'Phi(0.5)':>12s} {'Phi(0.75)':>12s} {'max|R|':>10s}")
for name, spec in cases.items():
    report = analyze(linearize(spec, solve_steady(spec, grid)))
    picks = [np.argmin(np.abs(grid.cell_points - x)) for x in (0.25, 0.5, 0.75)]
    phi = report.phi.phi
    vals = "".join(f"{np.trace(phi[i]) / spec.n:12.5f}" for i in picks)
    print(f"{name:20s} {vals} {np.abs(report.R).max():10.2e}")
print("\n(for two components the column shows the mean of the diagonal of Phi)")
