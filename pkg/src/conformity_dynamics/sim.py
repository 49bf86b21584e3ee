"""Closed-loop simulation of biased logit dynamics.

A :class:`Scenario` composes the logit block with an optional bias model and
an optional mechanism (or an exogenous cost signal when no mechanism is
used).  :func:`run` integrates it with fixed-step RK4 and returns a
:class:`TrajectoryRecord` sampled on a uniform grid, with storage values
already evaluated on every sample.

No projection onto the simplex is applied; the dynamics preserve it and
the engine aborts instead of silently renormalising when drift exceeds
``SIMPLEX_TOL``.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .bias import AdditiveBias, MultiplicativeBias
from .conjugate import ConjugatePair
from .dynamics import (
    INTERIOR_MARGIN,
    LogitParams,
    check_population_state,
    random_interior_state,
    storage_values,
)
from .mechanisms import (
    MU_SIGN_TOL,
    PIMechanism,
    SaturatedPIMechanism,
    storage_h,
    storage_u_terms,
)

__all__ = [
    "ConstantCost",
    "SinusoidalCost",
    "Scenario",
    "TrajectoryRecord",
    "AbortedRun",
    "SweepRow",
    "run",
    "detect_convergence",
    "gain_sweep",
    "structural_violations",
]

logger = logging.getLogger(__name__)

SIMPLEX_TOL = 1e-7
CONSERVATION_TOL = 1e-7


@dataclass(frozen=True, eq=False)
class ConstantCost:
    """Time-invariant actual cost."""

    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", np.asarray(self.values, dtype=float))

    def __call__(self, t):
        return self.values

    def bound(self):
        return float(self.values.max())


@dataclass(frozen=True, eq=False)
class SinusoidalCost:
    """``T_k(t) = offset_k + sum_j amplitude[j, k] * sin(frequency[j] * t + phase[j, k])``."""

    offset: np.ndarray
    amplitude: np.ndarray
    frequency: np.ndarray
    phase: np.ndarray

    def __post_init__(self):
        offset = np.asarray(self.offset, dtype=float)
        amp = np.atleast_2d(np.asarray(self.amplitude, dtype=float))
        freq = np.atleast_1d(np.asarray(self.frequency, dtype=float))
        phase = np.broadcast_to(np.asarray(self.phase, dtype=float), amp.shape).copy()
        if amp.shape != (freq.size, offset.size):
            raise ValueError(
                f"amplitude shape {amp.shape} does not match {freq.size} modes x {offset.size} strategies"
            )
        for name, val in [("offset", offset), ("amplitude", amp), ("frequency", freq), ("phase", phase)]:
            object.__setattr__(self, name, val)

    @classmethod
    def random(cls, n, rng, modes=3, offset=0.0, amplitude=1.0, max_frequency=1.0):
        """A random smooth signal built from up to ``modes`` sinusoids."""
        rng = np.random.default_rng(rng)
        m = int(rng.integers(1, modes + 1))
        return cls(
            offset=np.broadcast_to(np.asarray(offset, dtype=float), (n,)),
            amplitude=rng.uniform(-amplitude, amplitude, (m, n)),
            frequency=rng.uniform(0.05, max_frequency, m),
            phase=rng.uniform(0, 2 * np.pi, (m, n)),
        )

    def __call__(self, t):
        return self.offset + (self.amplitude * np.sin(self.frequency[:, None] * t + self.phase)).sum(axis=0)

    def bound(self):
        """Structural upper bound on every ``T_k``."""
        return float((self.offset + np.abs(self.amplitude).sum(axis=0)).max())


@dataclass(frozen=True, eq=False)
class Scenario:
    """Everything needed to run one closed-loop simulation.

    ``bias`` selects the model (``None`` for the unbiased logit block,
    :class:`AdditiveBias` for Model 1, :class:`MultiplicativeBias` for
    Model 2).  ``mechanism`` selects the controller; without one the actual
    cost follows ``cost`` (a callable of time, zero by default).  ``step``
    defaults to ``1e-3/eta`` and ``record_interval`` to ``step``.  Without
    ``pi0`` the run starts from the uniform state, or from a random interior
    state drawn with ``seed`` when one is given.
    """

    params: LogitParams
    pi0: np.ndarray | None = None
    bias: AdditiveBias | MultiplicativeBias | None = None
    mechanism: PIMechanism | SaturatedPIMechanism | None = None
    pi_star: np.ndarray | None = None
    mu0: np.ndarray | None = None
    cost: Callable | None = None
    horizon: float = 50.0
    step: float | None = None
    record_interval: float | None = None
    seed: int | None = None

    def __post_init__(self):
        n = self.params.n
        set_ = lambda name, val: object.__setattr__(self, name, val)  # noqa: E731
        pi0 = self.pi0
        if pi0 is None:
            pi0 = np.full(n, 1.0 / n) if self.seed is None else random_interior_state(n, self.seed)
        set_("pi0", check_population_state(pi0, n, INTERIOR_MARGIN, "pi0"))
        if self.bias is not None and self.bias.n != n:
            raise ValueError(f"bias has {self.bias.n} curves, scenario has {n} strategies")
        if self.mechanism is not None:
            if self.pi_star is None:
                raise ValueError("a mechanism needs a target state pi_star")
            if self.cost is not None:
                raise ValueError("the cost is set by the mechanism; drop the exogenous cost")
        if self.pi_star is not None:
            set_("pi_star", check_population_state(self.pi_star, n, INTERIOR_MARGIN, "pi_star"))
        mu0 = np.zeros(n) if self.mu0 is None else np.asarray(self.mu0, dtype=float)
        if mu0.shape != (n,):
            raise ValueError(f"mu0 must have {n} entries")
        if isinstance(self.mechanism, SaturatedPIMechanism) and np.any(mu0 > 0):
            raise ValueError("the saturated mechanism needs mu0 <= 0")
        set_("mu0", mu0)
        if self.cost is not None and not callable(self.cost):
            set_("cost", ConstantCost(self.cost))
        step = 1e-3 / self.params.eta if self.step is None else float(self.step)
        interval = step if self.record_interval is None else float(self.record_interval)
        if not (step > 0 and interval > 0 and self.horizon > 0):
            raise ValueError("step, record_interval and horizon must be positive")
        set_("step", step)
        set_("record_interval", interval)
        self.steps_per_record  # validates divisibility
        self.n_records  # noqa: B018

    @property
    def n(self):
        return self.params.n

    @property
    def model(self):
        if isinstance(self.bias, AdditiveBias):
            return "additive"
        if isinstance(self.bias, MultiplicativeBias):
            return "multiplicative"
        return "unbiased"

    @property
    def steps_per_record(self):
        k = round(self.record_interval / self.step)
        if k < 1 or abs(k * self.step - self.record_interval) > 1e-9 * self.record_interval:
            raise ValueError("record_interval must be an integer multiple of step")
        return k

    @property
    def n_records(self):
        m = round(self.horizon / self.record_interval)
        if abs(m * self.record_interval - self.horizon) > 1e-9 * self.horizon:
            raise ValueError("horizon must be an integer multiple of record_interval")
        return m

    def with_kappa(self, kappa):
        return replace(self, mechanism=replace(self.mechanism, kappa=kappa))


@dataclass(eq=False)
class TrajectoryRecord:
    """Uniformly sampled closed-loop signals.

    ``storage`` holds ``H`` (PI mechanism), ``U`` (saturated mechanism) or
    zeros, and ``V = S + storage``.  ``switch`` and ``clamp`` are per-sample,
    per-strategy masks for mode switches of the saturated integrator and for
    clamped storage evaluations.
    """

    scenario: Scenario
    t: np.ndarray
    pi: np.ndarray
    tau: np.ndarray
    T: np.ndarray
    mu: np.ndarray
    y: np.ndarray
    S: np.ndarray
    storage: np.ndarray
    V: np.ndarray
    switch: np.ndarray
    clamp: np.ndarray
    complete: bool = True
    notes: list = field(default_factory=list)

    def __len__(self):
        return self.t.size

    @property
    def dt(self):
        return self.scenario.record_interval

    @property
    def storage_name(self):
        mech = self.scenario.mechanism
        if isinstance(mech, PIMechanism):
            return "H"
        if isinstance(mech, SaturatedPIMechanism):
            return "U"
        return None

    @property
    def event_flags(self):
        """Per-sample strings such as ``"switch"`` or ``"switch|clamp"``."""
        sw = self.switch.any(axis=1)
        cl = self.clamp.any(axis=1)
        return [
            "|".join(name for name, on in (("switch", s), ("clamp", c)) if on)
            for s, c in zip(sw, cl)
        ]

    def distance_to_target(self, target=None):
        target = self.scenario.pi_star if target is None else np.asarray(target, float)
        return np.linalg.norm(self.pi - target, axis=1)


class AbortedRun(RuntimeError):
    """An invariant broke during integration; carries the partial trajectory."""

    def __init__(self, reason, trajectory):
        super().__init__(reason)
        self.reason = reason
        self.trajectory = trajectory


def conjugate_pairs(bias: MultiplicativeBias):
    return [ConjugatePair(c) for c in bias.curves]


def _closed_loop(sc: Scenario):
    """Build ``rhs(t, pi, mu) -> (pi_dot, mu_dot, T, tau)`` for the scenario."""
    eta, beta = sc.params.eta, sc.params.beta
    bias, mech, pi_star = sc.bias, sc.mechanism, sc.pi_star
    zeros = np.zeros(sc.n)
    cost = sc.cost if sc.cost is not None else (lambda t: zeros)

    if isinstance(mech, PIMechanism):
        rho, kappa = mech.rho, mech.kappa

        def control(t, pi, mu):
            err = pi - pi_star
            return rho * err, mu + kappa * err
    elif isinstance(mech, SaturatedPIMechanism):
        rho, kappa, alpha, t_bar = mech.rho, mech.kappa, mech.alpha, mech.t_bar

        def control(t, pi, mu):
            err = pi - pi_star
            return np.minimum(rho * err, -alpha * mu), t_bar + mu + kappa * err
    else:
        def control(t, pi, mu):
            return zeros, cost(t)

    if isinstance(bias, AdditiveBias):
        def perceived(pi, T):
            return T + bias.values(pi)
    elif isinstance(bias, MultiplicativeBias):
        def perceived(pi, T):
            return bias.values(pi) * T
    else:
        def perceived(pi, T):
            return T

    def rhs(t, pi, mu):
        mu_dot, T = control(t, pi, mu)
        tau = perceived(pi, T)
        e = np.exp(-beta * (tau - tau.min()))
        pi_dot = eta * (e / e.sum() - pi)
        return pi_dot, mu_dot, T, tau

    return rhs


def _breach(sc: Scenario, pi, mu, T, mu_sum0):
    if not (np.all(np.isfinite(pi)) and np.all(np.isfinite(mu))):
        return "non-finite state"
    drift = abs(pi.sum() - 1.0)
    if drift > SIMPLEX_TOL:
        return f"simplex drift {drift:.3g} exceeds {SIMPLEX_TOL:g}"
    if pi.min() <= 0.0:
        return f"population share left the interior (min {pi.min():.3g})"
    mech = sc.mechanism
    if isinstance(mech, PIMechanism):
        err = abs(T.sum() - mu_sum0)
        if err > CONSERVATION_TOL:
            return f"sum of costs drifted by {err:.3g} from its initial value"
    elif isinstance(mech, SaturatedPIMechanism):
        if mu.max() > MU_SIGN_TOL:
            return f"integrator state became positive ({mu.max():.3g})"
        if T.max() >= mech.cost_ceiling:
            return f"cost {T.max():.6g} reached the ceiling {mech.cost_ceiling:g}"
    return None


def structural_violations(traj: TrajectoryRecord):
    """Audit every recorded sample for the invariants the dynamics must keep.

    Checks simplex sum (``SIMPLEX_TOL``), strict interiority, conservation
    of ``1'T`` under the PI mechanism and ``mu <= 0``, ``T < t_bar + kappa``
    under the saturated one.  Returns a list of messages, empty when clean.
    """
    sc = traj.scenario
    found = []
    if len(traj) == 0:
        return found
    drift = np.abs(traj.pi.sum(axis=1) - 1.0).max()
    if drift > SIMPLEX_TOL:
        found.append(f"simplex drift {drift:.3g}")
    if traj.pi.min() <= 0.0:
        found.append(f"non-interior share {traj.pi.min():.3g}")
    mech = sc.mechanism
    if isinstance(mech, PIMechanism):
        err = np.abs(traj.T.sum(axis=1) - sc.mu0.sum()).max()
        if err > CONSERVATION_TOL:
            found.append(f"cost sum drift {err:.3g}")
    elif isinstance(mech, SaturatedPIMechanism):
        if traj.mu.max() > MU_SIGN_TOL:
            found.append(f"positive integrator state {traj.mu.max():.3g}")
        if traj.T.max() >= mech.cost_ceiling:
            found.append(f"cost {traj.T.max():.6g} at or above {mech.cost_ceiling:g}")
    return found


def _assemble(sc: Scenario, t, pi, mu, T, tau, pi_dot, complete, notes):
    eta, beta = sc.params.eta, sc.params.beta
    S = storage_values(tau, pi, eta, beta) if len(t) else np.zeros(0)
    n_samples = len(t)
    switch = np.zeros((n_samples, sc.n), dtype=bool)
    clamp = np.zeros((n_samples, sc.n), dtype=bool)
    mech = sc.mechanism
    if isinstance(mech, PIMechanism):
        storage = storage_h(pi, sc.pi_star, mech.rho)
    elif isinstance(mech, SaturatedPIMechanism):
        if isinstance(sc.bias, MultiplicativeBias):
            terms, clamp = storage_u_terms(mech, mu, pi, sc.pi_star, conjugate_pairs(sc.bias))
        else:
            # unit weights: F(x) = x^2/2 and U_k reduces to (rho/2)(arg - pi*_k)^2
            arg = np.minimum(pi, sc.pi_star - (mech.alpha / mech.rho) * mu)
            terms = 0.5 * mech.rho * (arg - sc.pi_star) ** 2
        storage = terms.sum(axis=-1)
        mode = mech.rho * (pi - sc.pi_star) + mech.alpha * mu
        flips = np.sign(mode[1:]) != np.sign(mode[:-1])
        switch[1:] = flips
    else:
        storage = np.zeros(n_samples)
    if isinstance(sc.bias, MultiplicativeBias):
        y = sc.bias.values(pi) * pi_dot
    else:
        y = pi_dot.copy()
    return TrajectoryRecord(
        scenario=sc, t=t, pi=pi, tau=tau, T=T, mu=mu, y=y, S=S, storage=storage,
        V=S + storage, switch=switch, clamp=clamp, complete=complete, notes=notes,
    )


def run(scenario: Scenario) -> TrajectoryRecord:
    """Integrate the scenario with fixed-step RK4 and record every sample.

    Raises :class:`AbortedRun` (carrying the samples recorded so far) when a
    structural invariant breaks.
    """
    sc = scenario
    rhs = _closed_loop(sc)
    h = sc.step
    k_rec = sc.steps_per_record
    m = sc.n_records
    n = sc.n

    t_out = np.arange(m + 1) * sc.record_interval
    pi_out = np.empty((m + 1, n))
    mu_out = np.empty((m + 1, n))
    T_out = np.empty((m + 1, n))
    tau_out = np.empty((m + 1, n))
    dpi_out = np.empty((m + 1, n))

    pi = sc.pi0.copy()
    mu = sc.mu0.copy()
    mu_sum0 = mu.sum()
    notes = []
    warned_negative = False
    t = 0.0
    step_count = 0
    for i in range(m + 1):
        if i > 0:
            for _ in range(k_rec):
                k1p, k1m, _, _ = rhs(t, pi, mu)
                k2p, k2m, _, _ = rhs(t + h / 2, pi + (h / 2) * k1p, mu + (h / 2) * k1m)
                k3p, k3m, _, _ = rhs(t + h / 2, pi + (h / 2) * k2p, mu + (h / 2) * k2m)
                k4p, k4m, _, _ = rhs(t + h, pi + h * k3p, mu + h * k3m)
                pi = pi + (h / 6) * (k1p + 2 * k2p + 2 * k3p + k4p)
                mu = mu + (h / 6) * (k1m + 2 * k2m + 2 * k3m + k4m)
                step_count += 1
                t = step_count * h
        dpi, _, T, tau = rhs(t_out[i], pi, mu)
        pi_out[i], mu_out[i], T_out[i], tau_out[i], dpi_out[i] = pi, mu, T, tau, dpi
        if isinstance(sc.bias, MultiplicativeBias) and not warned_negative and T.min() < 0:
            msg = f"negative actual cost {T.min():.4g} at t={t_out[i]:.4g}"
            logger.info(msg)
            notes.append(msg)
            warned_negative = True
        reason = _breach(sc, pi, mu, T, mu_sum0)
        if reason is not None:
            reason = f"t={t_out[i]:.6g}: {reason}"
            j = i + 1
            partial = _assemble(
                sc, t_out[:j], pi_out[:j], mu_out[:j], T_out[:j], tau_out[:j], dpi_out[:j],
                False, notes + [reason],
            )
            raise AbortedRun(reason, partial)
    return _assemble(sc, t_out, pi_out, mu_out, T_out, tau_out, dpi_out, True, notes)


def detect_convergence(traj: TrajectoryRecord, epsilon, window, target=None):
    """Whether ``|pi - target| < epsilon`` on the trailing ``window`` of the record.

    Returns ``(converged, time)`` where ``time`` is the first sample after
    which the distance never again reaches ``epsilon`` (``nan`` when the
    final sample is itself outside the ball).
    """
    target = traj.scenario.pi_star if target is None else target
    if target is None:
        raise ValueError("no target state: pass one explicitly")
    dist = traj.distance_to_target(target)
    t = traj.t
    inside = dist < epsilon
    tail = t >= t[-1] - window - 1e-12
    converged = bool(np.all(inside[tail]))
    bad = np.nonzero(~inside)[0]
    if bad.size == 0:
        when = float(t[0])
    elif bad[-1] + 1 < t.size:
        when = float(t[bad[-1] + 1])
    else:
        when = float("nan")
    return converged, when


@dataclass
class SweepRow:
    kappa: float
    converged: bool | None
    time: float
    worst_residual: float
    condition_met: bool | None
    aborted: bool = False
    reason: str = ""


def _sweep_one(base: Scenario, kappa, epsilon, window):
    from .monitor import lyapunov_certificate

    try:
        sc = base.with_kappa(kappa)
    except ValueError as exc:
        return SweepRow(kappa, None, float("nan"), float("nan"), None, True, str(exc))
    try:
        traj = run(sc)
    except AbortedRun as exc:
        return SweepRow(kappa, False, float("nan"), float("nan"), None, True, exc.reason)
    converged, when = detect_convergence(traj, epsilon, window)
    report = lyapunov_certificate(traj)
    worst = report.worst_violation if report is not None else float("nan")
    cond = report.condition_met if report is not None else None
    return SweepRow(kappa, converged, when, worst, cond)


def gain_sweep(base: Scenario, kappa_values: Sequence[float], epsilon=1e-4, window=10.0,
               threads=1):
    """Run ``base`` once per kappa and tabulate convergence and certificate slack."""
    kappas = [float(k) for k in kappa_values]
    if not kappas:
        return []
    if base.mechanism is None:
        raise ValueError("a gain sweep needs a mechanism")
    if threads <= 1:
        return [_sweep_one(base, k, epsilon, window) for k in kappas]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda k: _sweep_one(base, k, epsilon, window), kappas))
