"""Numerical certificates for the passivity and Lyapunov inequalities.

Each certificate turns an inequality ``lhs <= rhs`` into a signed residual
``rhs - lhs`` per sample (nonnegative when it holds) and reports the worst
violation against a tolerance that scales with the magnitude of the
signals involved.  Time derivatives come from second-order central
differences of the recorded samples.

The residual assembly functions (``*_residual``) take derivatives as
arguments, so they can be checked on signals whose derivatives are known
exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .bias import AdditiveBias, MultiplicativeBias, shortage_coefficient_model2
from .mechanisms import PIMechanism, SaturatedPIMechanism, check_gain_condition

__all__ = [
    "CertificateReport",
    "time_derivative",
    "lemma1_residual",
    "shortage_residual",
    "lemma4_residual",
    "lemma6_residual",
    "v1_residual",
    "interconnection_residual",
    "certify_delta_passive",
    "lyapunov_v1",
    "lyapunov_v2",
    "lyapunov_certificate",
    "interconnection_balance",
    "certify_all",
]

TOL_FACTOR = 1e-3
MIN_SAMPLES = 5


@dataclass
class CertificateReport:
    """Outcome of one certificate along one trajectory.

    ``passed`` is the observed verdict (worst violation within tolerance).
    ``condition_met`` is ``None`` for unconditional inequalities and
    otherwise records whether the gain condition behind the inequality
    holds; when it is ``False`` the observation carries no claim either way.
    """

    name: str
    residuals: np.ndarray
    tolerance: float
    worst_violation: float
    passed: bool
    condition_met: bool | None = None
    coefficient: float | None = None
    coefficient_name: str | None = None
    excluded: int = 0
    details: dict = field(default_factory=dict)

    @property
    def verdict(self):
        if self.condition_met is False:
            return "condition unmet"
        return "pass" if self.passed else "fail"

    def to_dict(self):
        out = {
            "name": self.name,
            "verdict": self.verdict,
            "passed": bool(self.passed),
            "condition_met": self.condition_met,
            "worst_violation": float(self.worst_violation),
            "tolerance": float(self.tolerance),
            "min_residual": float(np.min(self.residuals)) if self.residuals.size else None,
            "samples": int(self.residuals.size),
            "excluded": int(self.excluded),
        }
        if self.coefficient is not None:
            out[self.coefficient_name or "coefficient"] = float(self.coefficient)
        out.update({k: _jsonable(v) for k, v in self.details.items()})
        return out


def _jsonable(v):
    if isinstance(v, np.generic):
        return v.item()
    if isinstance(v, np.ndarray):
        return v.tolist()
    return v


def time_derivative(values, dt):
    """Second-order central differences along axis 0 (one-sided at the ends)."""
    return np.gradient(np.asarray(values, dtype=float), dt, axis=0, edge_order=2)


def _dot(a, b):
    return np.sum(a * b, axis=-1)


# ---------------------------------------------------------------------------
# residual assembly


def lemma1_residual(S_dot, tau_dot, pi_dot):
    """``-tau_dot.pi_dot - S_dot`` (delta-passivity of the logit block)."""
    return -_dot(tau_dot, pi_dot) - S_dot


def shortage_residual(S_dot, u_dot, x_dot, gamma):
    """``-u_dot.x_dot + gamma |x_dot|^2 - S_dot`` (output passivity shortage)."""
    return -_dot(u_dot, x_dot) + gamma * _dot(x_dot, x_dot) - S_dot


def lemma4_residual(H_dot, T_dot, pi_dot, kappa):
    """``H_dot - (T_dot.pi_dot - kappa |pi_dot|^2)``, zero along the PI mechanism."""
    return H_dot - (_dot(T_dot, pi_dot) - kappa * _dot(pi_dot, pi_dot))


def lemma6_residual(U_dot, T_dot, y, kappa, w_high):
    """``T_dot.y - kappa/(2 w_high) |y|^2 - U_dot``."""
    return _dot(T_dot, y) - kappa / (2.0 * w_high) * _dot(y, y) - U_dot


def v1_residual(V_dot, pi_dot, kappa, c_high):
    """``-(kappa - c_high) |pi_dot|^2 - V_dot``."""
    return -(kappa - c_high) * _dot(pi_dot, pi_dot) - V_dot


def interconnection_residual(S1_dot, S2_dot, x_dot, rho, gamma):
    """``(gamma - rho) |x_dot|^2 - S1_dot - S2_dot``."""
    return (gamma - rho) * _dot(x_dot, x_dot) - S1_dot - S2_dot


# ---------------------------------------------------------------------------
# helpers


def _scaled_tol(factor, *terms):
    scale = max((float(np.max(np.abs(t))) if np.size(t) else 0.0) for t in terms)
    return factor * (1.0 + scale), scale


def _inequality_report(name, residuals, tol, mask=None, **kw):
    residuals = np.asarray(residuals, dtype=float)
    used = residuals if mask is None else residuals[mask]
    worst = max(0.0, -float(used.min())) if used.size else 0.0
    excluded = 0 if mask is None else int((~mask).sum())
    return CertificateReport(name, residuals, tol, worst, worst <= tol, excluded=excluded, **kw)


def _ratio_extreme(num, den, pick):
    den = np.asarray(den)
    sig = den > max(1e-14, 1e-6 * float(den.max(initial=0.0)))
    if not np.any(sig):
        return None
    return float(pick(num[sig] / den[sig]))


def _require(traj):
    if len(traj) < MIN_SAMPLES:
        raise ValueError(f"trajectory has {len(traj)} samples; need at least {MIN_SAMPLES}")


def _switch_free_intervals(traj):
    """Mask of intervals ``[i, i+1]`` not within one sample of a mode switch."""
    sw = traj.switch.any(axis=1)
    m = len(traj) - 1
    bad = np.zeros(m, dtype=bool)
    for shift in (-1, 0, 1, 2):
        idx = np.arange(m) + shift
        ok = (idx >= 0) & (idx < sw.size)
        bad[ok] |= sw[idx[ok]]
    return ~bad


def _interval_residual(storage, bound, dt):
    """Forward-difference storage rate against the trapezoidal mean of the bound."""
    return 0.5 * (bound[1:] + bound[:-1]) - np.diff(storage) / dt


def _weights(traj):
    bias = traj.scenario.bias
    if isinstance(bias, MultiplicativeBias):
        return bias.values(traj.pi), bias.w_high
    return np.ones_like(traj.pi), 1.0


# ---------------------------------------------------------------------------
# certificates


def certify_delta_passive(traj, which, tol_factor=TOL_FACTOR, gamma=None, T_max=None):
    """Check one delta-passivity inequality along a recorded trajectory.

    ``which`` is one of

    ``"lemma1"``
        logit block, ``S_dot <= -tau_dot.pi_dot``;
    ``"lemma2"``
        additive bias, ``S_dot <= -T_dot.pi_dot + gamma |pi_dot|^2`` with
        ``gamma = c_high`` unless given;
    ``"lemma3"``
        multiplicative bias, ``S_dot <= -T_dot.y + gamma |y|^2`` with
        ``y = W(pi) pi_dot`` and ``gamma = v_high T_max / w_low^2``;
        ``T_max`` defaults to the observed maximum cost;
    ``"lemma4"``
        PI mechanism, ``H_dot = T_dot.pi_dot - kappa |pi_dot|^2`` (equality);
    ``"lemma6"``
        saturated mechanism, ``D+U <= T_dot.y - kappa/(2 w_high) |y|^2``,
        skipping intervals next to a mode switch.
    """
    _require(traj)
    sc = traj.scenario
    dt = traj.dt
    pi_dot = time_derivative(traj.pi, dt)
    S_dot = time_derivative(traj.S, dt)
    T_dot = time_derivative(traj.T, dt)

    if which == "lemma1":
        tau_dot = time_derivative(traj.tau, dt)
        supply = -_dot(tau_dot, pi_dot)
        r = lemma1_residual(S_dot, tau_dot, pi_dot)
        tol, scale = _scaled_tol(tol_factor, supply, S_dot)
        gamma_hat = _ratio_extreme(S_dot - supply, _dot(pi_dot, pi_dot), np.max)
        return _inequality_report("lemma1", r, tol, coefficient=gamma_hat,
                                  coefficient_name="gamma_hat", details={"scale": scale})

    if which == "lemma2":
        if not isinstance(sc.bias, AdditiveBias):
            raise ValueError("lemma2 needs a trajectory of the additive-bias model")
        g = sc.bias.c_high if gamma is None else float(gamma)
        supply = -_dot(T_dot, pi_dot)
        short = g * _dot(pi_dot, pi_dot)
        r = shortage_residual(S_dot, T_dot, pi_dot, g)
        tol, scale = _scaled_tol(tol_factor, supply, short, S_dot)
        gamma_hat = _ratio_extreme(S_dot - supply, _dot(pi_dot, pi_dot), np.max)
        return _inequality_report("lemma2", r, tol, coefficient=gamma_hat,
                                  coefficient_name="gamma_hat",
                                  details={"gamma": g, "scale": scale})

    if which == "lemma3":
        if not isinstance(sc.bias, MultiplicativeBias):
            raise ValueError("lemma3 needs a trajectory of the multiplicative-bias model")
        t_max = float(traj.T.max()) if T_max is None else float(T_max)
        g = shortage_coefficient_model2(sc.bias, t_max) if gamma is None else float(gamma)
        y = sc.bias.values(traj.pi) * pi_dot
        supply = -_dot(T_dot, y)
        short = g * _dot(y, y)
        r = shortage_residual(S_dot, T_dot, y, g)
        tol, scale = _scaled_tol(tol_factor, supply, short, S_dot)
        gamma_hat = _ratio_extreme(S_dot - supply, _dot(y, y), np.max)
        return _inequality_report("lemma3", r, tol, coefficient=gamma_hat,
                                  coefficient_name="gamma_hat",
                                  details={"gamma": g, "T_max": t_max, "scale": scale})

    if which == "lemma4":
        mech = sc.mechanism
        if not isinstance(mech, PIMechanism):
            raise ValueError("lemma4 needs a trajectory under the PI mechanism")
        H_dot = time_derivative(traj.storage, dt)
        r = lemma4_residual(H_dot, T_dot, pi_dot, mech.kappa)
        tol, scale = _scaled_tol(tol_factor, H_dot, _dot(T_dot, pi_dot),
                                 mech.kappa * _dot(pi_dot, pi_dot))
        worst = float(np.abs(r).max())
        rho_hat = _ratio_extreme(_dot(T_dot, pi_dot) - H_dot, _dot(pi_dot, pi_dot), np.median)
        return CertificateReport("lemma4", r, tol, worst, worst <= tol, coefficient=rho_hat,
                                 coefficient_name="rho_hat",
                                 details={"kappa": mech.kappa, "scale": scale,
                                          "kind": "equality"})

    if which == "lemma6":
        mech = sc.mechanism
        if not isinstance(mech, SaturatedPIMechanism):
            raise ValueError("lemma6 needs a trajectory under the saturated mechanism")
        w, w_high = _weights(traj)
        y = w * pi_dot
        bound = _dot(T_dot, y) - mech.kappa / (2.0 * w_high) * _dot(y, y)
        r = _interval_residual(traj.storage, bound, dt)
        mask = _switch_free_intervals(traj)
        U_rate = np.diff(traj.storage) / dt
        tol, scale = _scaled_tol(tol_factor, _dot(T_dot, y), U_rate)
        y2 = _dot(y, y)
        mid_supply = 0.5 * (_dot(T_dot, y)[1:] + _dot(T_dot, y)[:-1])
        mid_y2 = 0.5 * (y2[1:] + y2[:-1])
        rho_hat = _ratio_extreme((mid_supply - U_rate)[mask], mid_y2[mask], np.min) \
            if mask.any() else None
        return _inequality_report("lemma6", r, tol, mask=mask, coefficient=rho_hat,
                                  coefficient_name="rho_hat",
                                  details={"kappa_over_2w_high": mech.kappa / (2.0 * w_high),
                                           "scale": scale})

    raise ValueError(f"unknown certificate {which!r}")


def lyapunov_v1(traj, tol=1e-4):
    """Monotonicity of ``V1 = S + H`` under the PI mechanism.

    Residuals are ``-(V1[i+1] - V1[i])``; the certificate passes when no
    increment exceeds ``tol``.  ``condition_met`` records ``kappa > c_high``.
    """
    _require(traj)
    sc = traj.scenario
    mech = sc.mechanism
    if not isinstance(mech, PIMechanism) or isinstance(sc.bias, MultiplicativeBias):
        raise ValueError("V1 needs the PI mechanism with an additive (or no) bias")
    c_high = sc.bias.c_high if isinstance(sc.bias, AdditiveBias) else 0.0
    inc = np.diff(traj.V)
    pi_dot = time_derivative(traj.pi, traj.dt)
    deriv_r = v1_residual(time_derivative(traj.V, traj.dt), pi_dot, mech.kappa, c_high)
    report = _inequality_report(
        "V1", -inc, tol, condition_met=mech.kappa > c_high,
        details={
            "kappa": mech.kappa,
            "c_high": c_high,
            "V0": float(traj.V[0]),
            "S0_plus_H0": float(traj.S[0] + traj.storage[0]),
            "max_increment": float(inc.max()),
            "min_derivative_residual": float(deriv_r.min()),
            "final_distance": float(traj.distance_to_target()[-1]),
        },
    )
    return report


def lyapunov_v2(traj, tol=1e-3):
    """Monotonicity of ``V2 = S + U`` under the saturated mechanism.

    Also checks that ``Phi(T, pi) - (kappa/2) W(pi)`` has negative diagonal
    on every sample (it is diagonal, so this is negative definiteness) and
    reports the largest forward-difference rate of ``V2`` away from mode
    switches.
    """
    _require(traj)
    sc = traj.scenario
    mech = sc.mechanism
    if not (isinstance(mech, SaturatedPIMechanism) and isinstance(sc.bias, MultiplicativeBias)):
        raise ValueError("V2 needs the saturated mechanism with a multiplicative bias")
    verdict = check_gain_condition(2, sc.bias, mech)
    inc = np.diff(traj.V)
    w = sc.bias.values(traj.pi)
    phi = -sc.bias.derivatives(traj.pi) * traj.T
    diag_max = float((phi - 0.5 * mech.kappa * w).max())
    mask = _switch_free_intervals(traj)
    rates = inc / traj.dt
    dini_max = float(rates[mask].max()) if mask.any() else float("nan")
    report = _inequality_report(
        "V2", -inc, tol, condition_met=verdict.holds,
        details={
            "kappa": mech.kappa,
            "threshold": verdict.threshold,
            "matrix_max_diagonal": diag_max,
            "matrix_negative_definite": diag_max < 0,
            "max_increment": float(inc.max()),
            "dini_max_away_from_switches": dini_max,
            "switch_samples": int(traj.switch.any(axis=1).sum()),
            "final_distance": float(traj.distance_to_target()[-1]),
            "T_max_observed": float(traj.T.max()),
        },
    )
    if verdict.holds and diag_max >= 0:
        report.passed = False
    return report


def lyapunov_certificate(traj):
    """The Lyapunov certificate matching the trajectory's mechanism, if any."""
    sc = traj.scenario
    if isinstance(sc.mechanism, PIMechanism) and not isinstance(sc.bias, MultiplicativeBias):
        return lyapunov_v1(traj)
    if isinstance(sc.mechanism, SaturatedPIMechanism) and isinstance(sc.bias, MultiplicativeBias):
        return lyapunov_v2(traj)
    return None


def interconnection_balance(traj, rho_hat, gamma_hat, tol_factor=TOL_FACTOR):
    """Energy balance of the closed loop, ``S_dot + S_mech_dot <= (gamma - rho)|x_dot|^2``.

    ``x_dot`` is ``pi_dot`` under the PI mechanism and ``y = W(pi) pi_dot``
    under the saturated one.  Passes when ``gamma_hat <= rho_hat``, every
    residual is within tolerance and the combined storage never grows by
    more than the tolerance per unit time.
    """
    _require(traj)
    sc = traj.scenario
    if sc.mechanism is None:
        raise ValueError("interconnection balance needs a mechanism in the loop")
    dt = traj.dt
    pi_dot = time_derivative(traj.pi, dt)
    if isinstance(sc.mechanism, SaturatedPIMechanism):
        w, _ = _weights(traj)
        x_dot = w * pi_dot
        bound = (gamma_hat - rho_hat) * _dot(x_dot, x_dot)
        r = _interval_residual(traj.V, bound, dt)
        mask = _switch_free_intervals(traj)
    else:
        x_dot = pi_dot
        r = interconnection_residual(time_derivative(traj.S, dt),
                                     time_derivative(traj.storage, dt), x_dot,
                                     rho_hat, gamma_hat)
        mask = None
    V_rate = np.diff(traj.V) / dt
    tol, scale = _scaled_tol(tol_factor, (gamma_hat - rho_hat) * _dot(x_dot, x_dot), V_rate)
    report = _inequality_report(
        "interconnection", r, tol, mask=mask,
        condition_met=gamma_hat <= rho_hat,
        details={"rho_hat": rho_hat, "gamma_hat": gamma_hat,
                 "max_storage_rate": float(V_rate.max()), "scale": scale},
    )
    report.passed = bool(report.passed and gamma_hat <= rho_hat and V_rate.max() <= tol)
    return report


def certify_all(traj):
    """Every certificate applicable to the trajectory, keyed by name."""
    sc = traj.scenario
    out = {"lemma1": certify_delta_passive(traj, "lemma1")}
    if isinstance(sc.bias, AdditiveBias):
        out["lemma2"] = certify_delta_passive(traj, "lemma2")
    if isinstance(sc.bias, MultiplicativeBias):
        out["lemma3"] = certify_delta_passive(traj, "lemma3")
    if isinstance(sc.mechanism, PIMechanism):
        out["lemma4"] = certify_delta_passive(traj, "lemma4")
    if isinstance(sc.mechanism, SaturatedPIMechanism):
        out["lemma6"] = certify_delta_passive(traj, "lemma6")
    lyap = lyapunov_certificate(traj)
    if lyap is not None:
        out[lyap.name] = lyap
    mech = sc.mechanism
    if isinstance(mech, PIMechanism) and isinstance(sc.bias, AdditiveBias):
        out["interconnection"] = interconnection_balance(traj, mech.kappa, sc.bias.c_high)
    elif isinstance(mech, SaturatedPIMechanism) and isinstance(sc.bias, MultiplicativeBias):
        gamma = shortage_coefficient_model2(sc.bias, mech.cost_ceiling)
        out["interconnection"] = interconnection_balance(
            traj, mech.kappa / (2.0 * sc.bias.w_high), gamma)
    return out
