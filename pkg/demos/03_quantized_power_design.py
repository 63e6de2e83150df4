"""
Thresholds and powers with a few feedback bits
==============================================

The receiver reports which of 2**n_b intervals the best beam gain falls in;
each interval gets one power level.  The design maximises the sensing-aware
capacity bound under an average power cap and an average interference cap.
"""

# %%
from espar_cr.antenna import BeamPatternModel
from espar_cr.optimizer import Constraints
from espar_cr.scenario import Scenario

scenario = Scenario(BeamPatternModel.from_degrees(1.0, 0.01, 20.0, M=8), gamma_ss=3.0)
con = Constraints(P_bar=10 ** 1.2, I_bar=10 ** -0.6)      # 12 dB and -6 dB

# %%
# A full design: sensing length, thresholds and powers.  P_0 = 0 means no
# transmission below the first threshold (outage).
policy, report = scenario.solve(con, n_b=2)
print(f"best N = {report.N} samples/sector (T_sen = {1e3 * report.T_sen:.3f} ms)")
print("thresholds:", policy.mu.round(4))
print("powers    :", policy.P.round(4))
print(f"C_LB = {report.C_LB:.4f} bits/s/Hz; multipliers lam={report.lam:.3g} "
      f"vartheta={report.vartheta:.3g}")

# %%
# More bits close most of the gap to perfect channel knowledge.  The sensing
# length is held at the optimum found above to keep the demo quick.
from espar_cr.optimizer import solve_fixed_sensing

problem = scenario.problem(report.N)
for n_b in (1, 2, 3, 4, 6, None):
    _, r = solve_fixed_sensing(problem, con, n_b)
    label = "perfect" if n_b is None else f"n_b={n_b}"
    print(f"{label:>8}: C_LB = {r.C_LB:.4f}")

# %%
# Outage and symbol error rate of the 2-bit design.
from espar_cr.metrics import evaluate_metrics

m = evaluate_metrics(policy, problem.dist, problem.alpha0, problem.beta0, 4.0,
                     problem.sigma_w2, problem.sigma_p2)
print(f"P_out = {m.P_out:.4f}, P_e = {m.P_e:.5f}")
