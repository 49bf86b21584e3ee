"""Inducement mechanisms that steer the population to a target state.

``PIMechanism`` (for the additive bias) is a proportional-integral law::

    mu_dot = rho (pi - pi*),        T = mu + kappa (pi - pi*)

``SaturatedPIMechanism`` (for the multiplicative bias) clips the integrator
so that ``mu`` stays nonpositive and the announced cost stays below
``t_bar + kappa``::

    mu_dot = min(rho (pi - pi*), -alpha mu),   T = t_bar + mu + kappa (pi - pi*)
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .bias import AdditiveBias, MultiplicativeBias
from .conjugate import ConjugatePair

__all__ = [
    "PIMechanism",
    "SaturatedPIMechanism",
    "InvariantViolation",
    "GainVerdict",
    "mech1_step",
    "mech2_step",
    "storage_h",
    "storage_u",
    "storage_u_terms",
    "check_gain_condition",
]

MU_SIGN_TOL = 1e-12


class InvariantViolation(ValueError):
    """A state left the set on which a mechanism is defined."""


@dataclass(frozen=True)
class PIMechanism:
    rho: float
    kappa: float

    def __post_init__(self):
        if not (self.rho > 0 and self.kappa > 0):
            raise ValueError("rho and kappa must be positive")


@dataclass(frozen=True)
class SaturatedPIMechanism:
    rho: float
    kappa: float
    alpha: float
    t_bar: float

    def __post_init__(self):
        if not (self.rho > 0 and self.kappa > 0 and self.t_bar > 0):
            raise ValueError("rho, kappa and t_bar must be positive")
        if not 2.0 * self.alpha * self.kappa > 1.0:
            raise ValueError(
                f"alpha must exceed 1/(2 kappa) = {0.5 / self.kappa:.6g}, got {self.alpha}"
            )

    @property
    def cost_ceiling(self):
        """Structural upper bound ``t_bar + kappa`` on every announced cost."""
        return self.t_bar + self.kappa


def mech1_step(mech: PIMechanism, mu, pi, pi_star):
    """Integrator rate and announced cost of the PI mechanism.

    Returns ``(mu_dot, T)``.
    """
    err = np.asarray(pi, dtype=float) - np.asarray(pi_star, dtype=float)
    mu = np.asarray(mu, dtype=float)
    return mech.rho * err, mu + mech.kappa * err


def mech2_step(mech: SaturatedPIMechanism, mu, pi, pi_star):
    """Integrator rate and announced cost of the saturated PI mechanism.

    Raises ``InvariantViolation`` if ``mu`` has a positive entry.
    """
    mu = np.asarray(mu, dtype=float)
    if np.any(mu > MU_SIGN_TOL):
        raise InvariantViolation(f"saturated mechanism requires mu <= 0, got {mu}")
    err = np.asarray(pi, dtype=float) - np.asarray(pi_star, dtype=float)
    mu_dot = np.minimum(mech.rho * err, -mech.alpha * mu)
    return mu_dot, mech.t_bar + mu + mech.kappa * err


def storage_h(pi, pi_star, rho):
    """``H(pi) = (rho/2) |pi - pi*|^2`` (vectorised over leading axes)."""
    d = np.asarray(pi, dtype=float) - np.asarray(pi_star, dtype=float)
    return 0.5 * rho * np.sum(d * d, axis=-1)


def storage_u_terms(mech: SaturatedPIMechanism, mu, pi, pi_star, pairs: Sequence[ConjugatePair]):
    """Per-strategy storage terms ``U_k`` and a mask of clamped evaluations.

    ``zeta_k = F_k'(min(pi_k, pi*_k - (alpha/rho) mu_k))``; the argument of
    ``F_k'`` is clamped to ``[0, 1]`` where it would leave the domain.
    """
    mu = np.asarray(mu, dtype=float)
    pi = np.asarray(pi, dtype=float)
    pi_star = np.asarray(pi_star, dtype=float)
    arg = np.minimum(pi, pi_star - (mech.alpha / mech.rho) * mu)
    clamped = (arg < 0.0) | (arg > 1.0)
    arg = np.clip(arg, 0.0, 1.0)
    terms = np.empty(np.broadcast(arg, pi_star).shape)
    for k, pair in enumerate(pairs):
        zeta = pair.grad(arg[..., k])
        zeta_star = pair.grad(pi_star[k])
        terms[..., k] = mech.rho * (
            pair.conj_value(zeta)
            - pair.conj_value(zeta_star)
            - (zeta - zeta_star) * pair.conj_grad(zeta_star)
        )
    return terms, clamped


def storage_u(mech: SaturatedPIMechanism, mu, pi, pi_star, pairs: Sequence[ConjugatePair]):
    """Bregman-type storage ``U(mu, pi)`` of the saturated mechanism."""
    terms, _ = storage_u_terms(mech, mu, pi, pi_star, pairs)
    return terms.sum(axis=-1)


@dataclass(frozen=True)
class GainVerdict:
    """Outcome of a gain-condition check.

    ``margin`` is ``kappa - threshold``.  For the saturated mechanism the
    threshold itself grows with kappa; ``feasible`` says whether any kappa
    satisfies the condition and ``min_kappa`` is the smallest such value.
    """

    theorem: int
    holds: bool
    threshold: float
    margin: float
    feasible: bool = True
    min_kappa: float | None = None

    def describe(self):
        if not self.feasible:
            return "INFEASIBLE for all κ"
        status = "PASS" if self.holds else "FAIL"
        margin = np.format_float_positional(self.margin, precision=6, unique=True, trim="0")
        return f"{status} margin={margin}"


def check_gain_condition(theorem: int, bias, mech) -> GainVerdict:
    """Check the sufficient gain condition for convergence to the target.

    ``theorem=1`` selects the additive bias with the PI mechanism, which
    needs ``kappa > c_high``.  ``theorem=2`` selects the multiplicative bias
    with the saturated mechanism, which and needs ``kappa > 2 v_high T_max / w_low`` where
    ``T_max = t_bar + kappa``.
    """
    if theorem == 1:
        if not (isinstance(bias, AdditiveBias) and isinstance(mech, PIMechanism)):
            raise ValueError("theorem=1 needs an additive bias and the PI mechanism")
        threshold = bias.c_high
        return GainVerdict(1, mech.kappa > threshold, threshold, mech.kappa - threshold,
                           True, threshold)
    if theorem == 2:
        if not (isinstance(bias, MultiplicativeBias) and isinstance(mech, SaturatedPIMechanism)):
            raise ValueError("theorem=2 needs a multiplicative bias and the saturated mechanism")
        w_low, v_high = bias.w_low, bias.v_high
        threshold = 2.0 * v_high * mech.cost_ceiling / w_low
        feasible = w_low > 2.0 * v_high
        min_kappa = 2.0 * v_high * mech.t_bar / (w_low - 2.0 * v_high) if feasible else None
        holds = feasible and mech.kappa * w_low > 2.0 * v_high * mech.cost_ceiling
        return GainVerdict(2, holds, threshold, mech.kappa - threshold, feasible, min_kappa)
    raise ValueError(f"unknown theorem {theorem!r}; expected 1 or 2")
