"""
The dynamical rate functional
=============================

I_T(pi) = sup_G J_{T,G}(pi). It vanishes on solutions of the hydrodynamic
equation and is positive elsewhere. The supremum is attained at the
solution H of a pointwise-in-time elliptic problem, which we solve by Newton.
"""

import numpy as np

from rdstatic.ldp import J_functional, TestField, rate_I, solve_H
from rdstatic.model import build_rate_table
from rdstatic.pde import DensityField, DensityPath, hydro_solve
from rdstatic.reaction import bd_polynomials, chafee_infante_params

poly = bd_polynomials(build_rate_table(chafee_infante_params(1, 2).rates))

gamma = DensityField.from_function(lambda x: 0.5 + 0.3 * np.sin(2 * np.pi * x), 64)
hyd = hydro_solve(gamma, 0.5, 1e-4, poly, save_every=10)
print(f"hydrodynamic path: I_T = {rate_I(hyd, poly):.2e}")

# Play the same path backwards: relaxation reversed is expensive.
rev = DensityPath(hyd.dt, hyd.slices[::-1])
I = rate_I(rev, poly)
print(f"reversed path:     I_T = {I:.4f}")

# Any test function gives a lower bound; H gives the value.
H = solve_H(rev, poly)
rng = np.random.default_rng(0)
best_random = max(J_functional(rev, TestField(rev.dt, H.values + 1e-3 * rng.standard_normal(H.values.shape),
                                              "intervals"), poly) for _ in range(20))
print(f"J at H = {J_functional(rev, H, poly):.4f}, best of 20 perturbed G = {best_random:.4f}")

# Climbing out of a well with a spatially constant path: cost of 0.85 -> 0.5 in time T.
for T in (0.5, 1, 2, 4, 8):
    K = int(200 * T)
    s = np.linspace(0.85355, 0.5, K + 1)
    print(f"T = {T:>3}: cost of the straight climb {rate_I(DensityPath(T / K, np.repeat(s[:, None], 8, 1)), poly):.4f}")
