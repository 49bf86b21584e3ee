"""
Saturated mechanism under multiplicative bias
=============================================

Weights w(pi) rescale the toll.  The saturated mechanism keeps its
integrator non-positive, so the toll never exceeds t_bar + kappa, and the
gain condition kappa * w_low > 2 v_high (t_bar + kappa) gives a joint
Lyapunov function built from a Bregman divergence.
"""

import numpy as np

from conformity_dynamics import (
    LogitParams,
    MultiplicativeBias,
    SaturatedPIMechanism,
    Scenario,
    certify_all,
    check_gain_condition,
    detect_convergence,
    run,
)

v = 0.05
bias = MultiplicativeBias.affine(3, 1.0 + v, v)          # w_low = 1, v_high = v
mech = SaturatedPIMechanism(rho=1.0, kappa=1.0, alpha=1.0, t_bar=1.0)
print(check_gain_condition(2, bias, mech).describe())

# a strong weight slope makes the condition infeasible at any gain
print(check_gain_condition(2, MultiplicativeBias.affine(3, 1.6, 0.6), mech).describe())

sc = Scenario(LogitParams(1.0, 1.0, 3), bias=bias, mechanism=mech,
              pi_star=[0.2, 0.3, 0.5], horizon=150.0, step=0.01, seed=1)
traj = run(sc)
print("final state:", np.round(traj.pi[-1], 6))
print("converged, time:", detect_convergence(traj, 1e-3, 10.0))
print("max integrator:", traj.mu.max(), " max toll:", traj.T.max(),
      " ceiling:", mech.cost_ceiling)
print("switch samples:", sum("switch" in f for f in traj.event_flags))

for name, rep in certify_all(traj).items():
    print(f"{name:16s} {rep.verdict:16s} worst={rep.worst_violation:.2e}")
