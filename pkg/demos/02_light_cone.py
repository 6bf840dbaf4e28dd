"""
Measuring a Lieb-Robinson light cone
====================================

Commutators of a Heisenberg-evolved Pauli with distant probes stay
exponentially small until a signal can travel the distance.  Fitting
``C exp(-a (dist - v t))`` gives effective constants.
"""

# %%
from gsplab.chain_algebra import SIGMA_Z, LocalOperator, SupportInterval
from gsplab.hamiltonian import assemble, build_tfim
from gsplab.localization import fit_lr_constants, lr_cone_profile
from gsplab.spectral import diagonalize

h = build_tfim(8, coupling=1.0, field=1.0)
es = diagonalize(assemble(h))
a = LocalOperator(SupportInterval(1, 1), SIGMA_Z)
probes = [LocalOperator(SupportInterval(1 + k, 1 + k), SIGMA_Z) for k in range(1, 6)]
times = [0.0, 0.25, 0.5, 0.75, 1.0, 1.25]
profile = lr_cone_profile(h, es, a, probes, times)

# %%
# Rows are distances, columns are times.
print("dist  " + "  ".join(f"t={t:<5}" for t in times))
for dist, row in zip(profile.distances, profile.norms):
    print(f"{dist:>4}  " + "  ".join(f"{x:.1e}" for x in row))

# %%
fit = fit_lr_constants(profile)
print(f"C = {fit.C:.3g}, a = {fit.a:.3f}, v = {fit.v:.3f} (log residual {fit.residual:.2f})")
