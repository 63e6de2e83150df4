"""
Selecting beams toward the primary user and the secondary receiver
==================================================================

The transmitter steers its most energetic sensing beam toward the primary
user and its strongest training beam toward its own receiver.  Both choices
can be wrong; this demo shows how often.
"""

# %%
import numpy as np

from espar_cr.antenna import BeamPatternModel
from espar_cr.beamsel_pu import average_error_matrix, delta_profile
from espar_cr.sensing import PriorModel

model = BeamPatternModel.from_degrees(1.0, 0.01, 20.0, M=8)
prior = PriorModel()

# %%
# Probability that beam 1 wins as the PU moves around the circle.  Inside the
# first sector it approaches one as N grows; elsewhere it decays.
phis = np.radians([0, 10, 20, 22.5, 30, 45, 90, 180])
for N in (20, 200):
    vals = delta_profile(model, prior, N, 1, phis)
    print(f"N={N:3d}: " + " ".join(f"{v:.3f}" for v in vals))

# %%
# Averaging over a PU uniformly placed in each arc gives the selection
# matrix.  It is circulant and symmetric; its diagonal grows with N.
for N in (20, 60, 100):
    D = average_error_matrix(model, prior, N)
    print(f"N={N:3d} first column: {np.round(D.Delta_bar[:, 0], 4)}")

# %%
# At the receiver side, beam gains are exponential with means gamma_ss*p_m.
# Psi is the chance that each beam is strongest; F is the law of the best gain.
from espar_cr.beamsel_sr import beam_probabilities, sector_means_from_geometry

for deg in (0.0, 11.25, 22.5):
    dist = sector_means_from_geometry(model, 3.0, np.radians(deg))
    psi = beam_probabilities(dist).Psi
    print(f"phi_SR={deg:5.2f} deg  Psi={np.round(psi, 3)}  median nu*={dist.quantile(0.5):.3f}")
