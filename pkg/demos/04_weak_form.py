"""The local ansatz leaves a source Phi delta behind, in the weak sense.

E = L W_loc + W_loc L^T + B is not zero off equilibrium. Paired with smooth
test functions it approaches the integral of Phi phi psi; for SSEP with
phi = psi = sin(pi x) the limit is -b^2, reached at second order in h.
"""

from ness_lab import build_grid, linearize, make_model, proposition_residual, solve_steady
from ness_lab.covariance import observed_order

b = 0.6
spec = make_model("ssep", 0.2, 0.2 + b)
errors, hs = [], []
for M in (16, 32, 64, 128):
    prof = solve_steady(spec, build_grid(M))
    system = linearize(spec, prof)
    pr = proposition_residual(spec, prof, system.L, system.B, modes=(1,))
    value = pr.symmetric_pairing[0, 0, 0, 0]
    errors.append(abs(value + b**2))
    hs.append(prof.grid.h)
    print(f"M={M:4d}  pairing {value:.8f}   target {-b**2:.2f}   error {errors[-1]:.2e}")
print("observed orders:", ", ".join(f"{o:.3f}" for o in observed_order(errors, hs)))
