"""Logit choice dynamics on the probability simplex.

The population state ``pi`` is a point in the interior of the simplex and
relaxes toward the softmax of the (negated, scaled) cost vector ``tau``::

    pi_dot = eta * (Q(tau) - pi),   Q_k(tau) = exp(-beta tau_k) / sum_l exp(-beta tau_l)

The storage function ``S(tau, pi)`` certifies delta-passivity of this block
from ``-tau_dot`` to ``pi_dot``.  It is available both in closed form
(log-sum-exp) and through a brute-force evaluation of the inner minimisation
over the simplex, which serves as an independent oracle.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import logsumexp

__all__ = [
    "LogitParams",
    "check_population_state",
    "softmax_q",
    "logit_vector_field",
    "storage_closed_form",
    "storage_values",
    "storage_brute_force",
    "radial_probe",
    "radial_lower_bound",
    "is_storage_zero",
    "random_interior_state",
]

#: Floor applied to population shares before taking logarithms.
LOG_FLOOR = 1e-12
#: Minimum share required of an initial or target state.
INTERIOR_MARGIN = 1e-6


@dataclass(frozen=True)
class LogitParams:
    """Rate ``eta``, inverse noise ``beta`` and number of strategies ``n``."""

    eta: float = 1.0
    beta: float = 1.0
    n: int = 2

    def __post_init__(self):
        if not (np.isfinite(self.eta) and self.eta > 0):
            raise ValueError(f"eta must be positive, got {self.eta}")
        if not (np.isfinite(self.beta) and self.beta > 0):
            raise ValueError(f"beta must be positive, got {self.beta}")
        if int(self.n) != self.n or self.n < 2:
            raise ValueError(f"need at least two strategies, got n={self.n}")


def check_population_state(pi, n=None, margin=0.0, name="pi"):
    """Validate an interior simplex point and return it as a float array.

    Raises ``ValueError`` when an entry is outside ``(margin, 1)`` or the
    entries do not sum to one within ``1e-9``.
    """
    pi = np.asarray(pi, dtype=float)
    if pi.ndim != 1:
        raise ValueError(f"{name} must be a vector, got shape {pi.shape}")
    if n is not None and pi.size != n:
        raise ValueError(f"{name} has {pi.size} entries, expected {n}")
    if not np.all(np.isfinite(pi)):
        raise ValueError(f"{name} has non-finite entries")
    if np.any(pi <= margin) or np.any(pi >= 1.0):
        raise ValueError(f"{name} is not in the simplex interior: {pi}")
    if abs(pi.sum() - 1.0) > 1e-9:
        raise ValueError(f"{name} does not sum to one (sum={pi.sum():.12g})")
    return pi


def _as_cost(tau, name="tau"):
    tau = np.asarray(tau, dtype=float)
    if not np.all(np.isfinite(tau)):
        raise ValueError(f"{name} has non-finite entries: {tau}")
    return tau


def _softmax(tau, beta):
    # shift by the row minimum so the largest exponent is exp(0)
    z = -beta * (tau - tau.min(axis=-1, keepdims=True))
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_q(tau, params: LogitParams):
    """Logit choice map ``Q(tau)``.

    Works on a single cost vector or on a stack of them (last axis is the
    strategy axis).  The result lies in the simplex interior and is strictly
    decreasing in each cost.

    Examples
    --------
    >>> softmax_q([0.0, np.log(2.0)], LogitParams(beta=1.0))
    array([0.66666667, 0.33333333])
    """
    tau = _as_cost(tau)
    return _softmax(tau, params.beta)


def logit_vector_field(pi, tau, params: LogitParams):
    """Right-hand side ``eta * (Q(tau) - pi)`` of the logit dynamics."""
    pi = np.asarray(pi, dtype=float)
    return params.eta * (softmax_q(tau, params) - pi)


def _xlogx(x):
    x = np.maximum(x, LOG_FLOOR)
    return x * np.log(x)


def storage_values(tau, pi, eta, beta):
    """Vectorised closed-form storage over leading axes of ``tau``/``pi``.

    ``S = eta*pi.tau + (eta/beta)*sum pi log pi + (eta/beta)*log sum exp(-beta tau)``
    """
    tau = np.asarray(tau, dtype=float)
    pi = np.asarray(pi, dtype=float)
    lse = logsumexp(-beta * tau, axis=-1)
    return eta * (np.sum(pi * tau, axis=-1) + (_xlogx(pi).sum(axis=-1) + lse) / beta)


def storage_closed_form(tau, pi, params: LogitParams) -> float:
    """Storage ``S(tau, pi)`` of the logit block, evaluated in closed form.

    Nonnegative, linear in ``eta`` and zero exactly when ``pi = Q(tau)``.
    """
    tau = _as_cost(tau)
    return float(storage_values(tau, pi, params.eta, params.beta))


def is_storage_zero(tau, pi, params: LogitParams, value_tol=1e-8, state_tol=1e-6):
    """Whether ``S(tau, pi)`` vanishes, judged on value and on ``|pi - Q(tau)|``."""
    s = storage_closed_form(tau, pi, params)
    gap = np.linalg.norm(np.asarray(pi, float) - softmax_q(tau, params))
    return abs(s) <= value_tol and gap <= state_tol


# ---------------------------------------------------------------------------
# brute-force oracle


def simplex_grid(n, resolution):
    """All points of the simplex whose coordinates are multiples of ``1/resolution``."""
    m = int(resolution)
    bars = np.array(list(itertools.combinations(range(m + n - 1), n - 1)), dtype=int)
    edges = np.hstack([np.full((len(bars), 1), -1), bars, np.full((len(bars), 1), m + n - 1)])
    counts = np.diff(edges, axis=1) - 1
    return counts / m


def project_to_simplex(v):
    """Euclidean projection of ``v`` onto the probability simplex."""
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    idx = np.arange(1, v.size + 1)
    r = np.nonzero(u - css / idx > 0)[0][-1]
    theta = css[r] / (r + 1.0)
    return np.maximum(v - theta, 0.0)


def _entropic_objective(omega, tau, beta):
    return omega @ tau + _xlogx(omega).sum(axis=-1) / beta


def _newton_polish(omega, best, tau, beta, iterations=50):
    # equality-constrained Newton; the Hessian diag(1/(beta*omega)) is diagonal
    omega = np.maximum(omega, 1e-15)
    omega = omega / omega.sum()
    best = min(best, float(_entropic_objective(omega, tau, beta)))
    for _ in range(iterations):
        grad = tau + (1.0 + np.log(omega)) / beta
        h_inv = beta * omega
        lam = (h_inv @ grad) / h_inv.sum()
        d = -h_inv * (grad - lam)
        decrement = -(grad @ d)
        if decrement < 1e-18:
            break
        t = 1.0
        neg = d < 0
        if np.any(neg):
            t = min(1.0, 0.99 * np.min(-omega[neg] / d[neg]))
        while t > 1e-12:
            trial = omega + t * d
            f = float(_entropic_objective(trial, tau, beta))
            if f <= best - 0.25 * t * decrement:
                break
            t *= 0.5
        else:
            break
        omega, best = trial, f
    return best, omega


def min_entropic_cost(tau, beta, resolution=60, iterations=200):
    """Minimise ``omega.tau + (1/beta) sum omega log omega`` over the simplex.

    Dense grid search, then projected gradient descent (initial step
    ``0.1/beta``, halved whenever a step fails to decrease the objective),
    then a Newton polish that respects ``sum(omega) = 1``.  Uses no
    knowledge of the analytic minimiser.
    """
    tau = np.asarray(tau, dtype=float)
    grid = simplex_grid(tau.size, resolution)
    values = _entropic_objective(grid, tau, beta)
    omega = grid[np.argmin(values)]
    best = float(values.min())
    step = 0.1 / beta
    for _ in range(iterations):
        grad = tau + (1.0 + np.log(np.maximum(omega, LOG_FLOOR))) / beta
        grad = grad - grad.mean()
        while step > 1e-16:
            trial = project_to_simplex(omega - step * grad)
            f = float(_entropic_objective(trial, tau, beta))
            if f <= best:
                break
            step *= 0.5
        else:
            break
        omega, best = trial, f
    return _newton_polish(omega, best, tau, beta)


def storage_brute_force(tau, pi, params: LogitParams, resolution=60, iterations=200) -> float:
    """Storage ``S(tau, pi)`` with the inner minimum found numerically.

    ``resolution`` is the number of grid divisions per simplex edge and must
    be at least 50.
    """
    if resolution < 50:
        raise ValueError("grid resolution must be at least 50")
    tau = _as_cost(tau)
    pi = np.asarray(pi, dtype=float)
    inner, _ = min_entropic_cost(tau, params.beta, resolution, iterations)
    outer = pi @ tau + _xlogx(pi).sum() / params.beta
    return float(params.eta * (outer - inner))


# ---------------------------------------------------------------------------
# radial unboundedness


def _spread_costs(gap, n):
    return np.linspace(gap / 2.0, -gap / 2.0, n)


def radial_probe(pi, params: LogitParams, spreads: Sequence[float]):
    """Storage at fixed ``pi`` for cost vectors of growing spread.

    Each spread ``g`` gives the costs ``linspace(g/2, -g/2, n)`` so that
    ``max(tau) - min(tau) = g``.
    """
    pi = np.asarray(pi, dtype=float)
    return [storage_closed_form(_spread_costs(g, pi.size), pi, params) for g in spreads]


def radial_lower_bound(pi, params: LogitParams, spread):
    """Lower bound ``eta*(min(pi)*spread + (1/beta) sum pi log pi)`` on the storage."""
    pi = np.asarray(pi, dtype=float)
    return params.eta * (pi.min() * spread + _xlogx(pi).sum() / params.beta)


def random_interior_state(n, rng, margin=0.01):
    """Draw a Dirichlet(1) state with every share at least ``margin``."""
    rng = np.random.default_rng(rng)
    while True:
        pi = rng.dirichlet(np.ones(n))
        if pi.min() >= margin:
            return pi
