"""
Stationary families of the Chafee-Infante example
=================================================

The rates (a0, a1, a2) are chosen so that the reaction term is the cubic
F(rho) = (b - a)(2 rho - 1) - b (2 rho - 1)^3. For a = (b - a)/2 small
only the three constants are stationary; past the first bifurcation a
circle of nonconstant profiles appears.
"""

import numpy as np

from rdstatic.elliptic import build_census, linearization_spectrum, zero_mode
from rdstatic.model import build_rate_table
from rdstatic.reaction import bd_polynomials, chafee_infante_params

for fb in (2, 12):
    ci = chafee_infante_params(1, fb)
    poly = bd_polynomials(build_rate_table(ci.rates))
    census = build_census(poly)
    print(f"frak_b = {fb}: a = {ci.a}, rates {tuple(map(float, ci.rates))}")
    for p in census:
        top = linearization_spectrum(p, poly, 1)[0]
        print(f"  {p.family_id}: {p.kind:18s} range [{p.values.min():.4f}, {p.values.max():.4f}]"
              f"  top eigenvalue {top:+.4f}")
    print("  time map minimum:", census.thresholds["centers"][0]["T_min"])

# Around 1/2 the linearisation is 1/2 Laplacian + F'(1/2), so the spectrum is 4a - 2 pi^2 k^2.
half = census[census.index_of(value=0.5)]
k = np.arange(4)
print("spectrum at 1/2:", np.round(linearization_spectrum(half, poly, 7), 6))
print("expected       :", np.round(np.repeat(4 * 5.5 - 2 * np.pi**2 * k**2, [1, 2, 2, 2]), 6))

# The nonconstant profile comes with a zero mode: its own derivative.
phi = census[census.index_of(kind="nonconstant")]
lam, cos = zero_mode(phi, poly)
print(f"zero mode of phi_1: eigenvalue {lam:.2e}, cosine with phi_1' {cos:.9f}")
