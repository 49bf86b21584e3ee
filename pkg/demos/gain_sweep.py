"""
Sweeping the proportional gain
==============================

For the additive model the certified region starts at kappa above the
impact coefficient.  Below it the Lyapunov certificate is reported as
"condition unmet" rather than failed, and convergence may or may not
happen.
"""

from conformity_dynamics import (
    AdditiveBias,
    LogitParams,
    PIMechanism,
    Scenario,
    gain_sweep,
)

base = Scenario(LogitParams(1.0, 1.0, 3), bias=AdditiveBias.affine(3, 1.0, 1.0),
                mechanism=PIMechanism(1.0, 2.0), pi_star=[0.2, 0.3, 0.5],
                horizon=150.0, step=0.01, record_interval=0.1, seed=3)

print(f"{'kappa':>7s} {'cond':>6s} {'conv':>6s} {'time':>8s} {'worst':>10s}")
for row in gain_sweep(base, [0.25, 0.5, 1.0, 1.5, 2.0, 4.0, 8.0], threads=4):
    print(f"{row.kappa:7.2f} {str(row.condition_met):>6s} {str(row.converged):>6s} "
          f"{row.time:8.2f} {row.worst_residual:10.2e}")
