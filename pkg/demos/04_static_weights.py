"""
Quasi-potential, tree weights and the static rate function
==========================================================

For the Chafee-Infante example with a = 1/2 there are three families:
rho_-, 1/2 and rho_+. Going down from 1/2 is free (heteroclinic orbits),
climbing out of a well costs v > 0. The minimal in-tree weights then
decide which families carry the stationary measure: the two wells, with
equal weight by the flip symmetry.
"""

import numpy as np

from rdstatic.elliptic import build_census, heteroclinic_edges
from rdstatic.fwgraph import W_eval, tree_report, tree_weights
from rdstatic.model import build_rate_table
from rdstatic.quasipotential import mam_minimize, v_matrix
from rdstatic.reaction import bd_polynomials, chafee_infante_params

poly = bd_polynomials(build_rate_table(chafee_infante_params(1, 2).rates))
census = build_census(poly)
print("families:", census.labels())
print("heteroclinic edges:", sorted(heteroclinic_edges(census, poly)))

T_grid = (1.0, 2.0, 4.0, 8.0)
cm = v_matrix(census, poly, T_grid=T_grid, m=16)
np.set_printoptions(precision=5, suppress=True)
print("cost matrix v_ij:\n", cm.values)
for row in cm.provenance:
    print("  ", row)

tw = tree_weights(cm)
for r in tree_report(cm):
    print(f"root {r['root']}: w = {r['weight']:.5f}, edges {[(c, p) for c, p, _ in r['edges']]}")
print("normalized weights:", tw.normalized, " argmin:", tw.argmin)

# W along constant densities: W(rho) = min_i (w_i - w + V_i(rho)).
for rho in (0.2, 0.5, 0.7, 0.85355):
    V = [mam_minimize(p, np.full(16, rho), poly, T_grid, m=16).value for p in census]
    print(f"rho = {rho}: V = {np.round(V, 5)}, W = {W_eval(V, tw):.5f}")
