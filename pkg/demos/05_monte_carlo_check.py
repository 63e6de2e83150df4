"""
Checking the closed forms by simulation
=======================================

Every frame of the protocol is simulated: PU activity, sensing, beam choices,
quantized feedback and transmission.  The aggregates are compared with the
closed forms used by the optimizer.
"""

# %%
from espar_cr import mc_oracle as mc
from espar_cr.antenna import BeamPatternModel
from espar_cr.optimizer import Constraints, solve_fixed_sensing
from espar_cr.scenario import Scenario

scenario = Scenario(BeamPatternModel.from_degrees(1.0, 0.01, 20.0, M=8))
con = Constraints(10 ** 1.2, 10 ** -0.6)
N = 111
policy, report = solve_fixed_sensing(scenario.problem(N), con, 4)

# %%
# "bernoulli" sensing draws the sensing outcome with the designed P_fa/P_d,
# which isolates the link model from the detector approximation.
setup = mc.setup_for(scenario, policy, N, sensing="bernoulli")
sim = mc.run_trials(setup, 1_000_000, seed=2024, threads=4)
for check in mc.oracle_checks(sim, setup, mc.closed_forms(setup, scenario, con)):
    print(check.line())
print(f"capacity: simulated {sim.estimates['capacity']:.4f} "
      f"+- {sim.std_errors['capacity']:.4f}, bound {report.C_LB:.4f}")

# %%
# With "block" sensing the fading gain is constant over the sensing window.
# The detector was designed for independent per-sample fading, so missed
# detections, and hence interference, are higher than planned.
block = mc.run_trials(mc.setup_for(scenario, policy, N, sensing="block"), 300_000, seed=7)
print(f"P_d designed {scenario.detector(N).P_d:.3f}, block fading {block.estimates['P_d']:.3f}")
print(f"interference: block fading {block.estimates['interference']:.4f} vs cap {con.I_bar:.4f}")
