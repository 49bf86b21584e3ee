"""
Storage of the logit dynamics
=============================

The storage function has a closed form built from the cross term, the
entropy of the population state and a log-sum-exp of the costs.  Here it
is compared against a direct numerical minimisation over the simplex, and
then probed along costs of growing spread to show the linear growth.
"""

import numpy as np

from conformity_dynamics import (
    LogitParams,
    radial_lower_bound,
    radial_probe,
    storage_brute_force,
    storage_closed_form,
)

params = LogitParams(eta=1.0, beta=2.0, n=3)
rng = np.random.default_rng(0)

# closed form vs grid + projected gradient search
for _ in range(5):
    tau = rng.normal(scale=2.0, size=3)
    pi = rng.dirichlet(np.ones(3))
    a = storage_closed_form(tau, pi, params)
    b = storage_brute_force(tau, pi, params)
    print(f"S closed={a:.10f}  brute={b:.10f}  diff={abs(a - b):.1e}")

# storage is zero exactly when pi is the logit response to tau
tau = np.array([0.4, -0.1, 0.3])
e = np.exp(-params.beta * (tau - tau.min()))
print("S at the logit response:", storage_closed_form(tau, e / e.sum(), params))

# growth in the cost spread, with the entropy-shifted lower bound
pi = np.array([0.2, 0.3, 0.5])
spreads = [1.0, 10.0, 100.0, 1000.0]
for g, s in zip(spreads, radial_probe(pi, params, spreads)):
    print(f"spread {g:7.1f}  S={s:10.4f}  bound={radial_lower_bound(pi, params, g):10.4f}")
