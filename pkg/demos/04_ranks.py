"""
Cut ranks and tensor trains
===========================

Bipartite ranks of the ground projection saturate as the chain grows,
while the projection onto an evolved product state picks up rank over time.
"""

# %%
import numpy as np

from gsplab.harness import product_state, run_evolution_ranks
from gsplab.ranks import rank_saturation_scan, tt_contract, tt_decompose

spec = {"model": "tfim", "coupling": 1.0, "field": 2.0}
for d, r in rank_saturation_scan(spec, 1e-3, [4, 6, 8, 10]):
    print(f"d = {d:>2}: middle-cut 1e-3 rank of P0 = {r}")

# %%
# A tensor train of the ground state, truncated to 1e-6 overall.
from gsplab.hamiltonian import assemble, build_tfim
from gsplab.spectral import diagonalize

psi = diagonalize(assemble(build_tfim(10, 1.0, 2.0))).ground_state
tt = tt_decompose(psi, 1e-6)
print("bond dimensions:", tt.bond_dims)
print("reconstruction error:", np.linalg.norm(tt_contract(tt) - psi))

# %%
# Quench from |00000000> and watch the middle cut.
rows = run_evolution_ranks(spec, 8, product_state("0", 8), [0, 0.5, 1, 2], 1e-3).rows
for t, _, rank in rows:
    print(f"t = {t}: rank {rank}")
