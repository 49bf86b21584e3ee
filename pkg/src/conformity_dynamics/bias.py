"""Conformity-bias models.

Two ways a population share can distort the perceived cost of a strategy:

* additive, ``tau = T + B(pi)`` with ``B(pi)_k = b_k(pi_k)``;
* multiplicative, ``tau = W(pi) T`` with ``W(pi) = diag(w_k(pi_k))``.

Each ``b_k`` / ``w_k`` is a decreasing scalar curve on ``[0, 1]``.  Curves
know their value range and slope range; the bias objects aggregate those
into the uniform bound constants used by the gain conditions.
"""

from __future__ import annotations

import csv
from typing import Sequence

import numpy as np
from scipy.interpolate import PchipInterpolator

__all__ = [
    "AffineCurve",
    "SmoothstepCurve",
    "TabulatedCurve",
    "AdditiveBias",
    "MultiplicativeBias",
    "bias_additive",
    "bias_additive_jacobian",
    "bias_multiplicative",
    "bias_multiplicative_jacobian",
    "phi_matrix",
    "shortage_coefficient_model1",
    "shortage_coefficient_model2",
]

#: Number of points used to verify a curve's declared bounds.
CHECK_POINTS = 10_000
_BOUND_TOL = 1e-9


class Curve:
    """A decreasing scalar curve on ``[0, 1]``.

    Subclasses provide ``value``, ``derivative`` and the attributes
    ``low``/``high`` (value range) and ``slope_low``/``slope_high`` (range of
    ``-derivative``, both positive).
    """

    low: float
    high: float
    slope_low: float
    slope_high: float

    def value(self, x):
        raise NotImplementedError

    def derivative(self, x):
        raise NotImplementedError

    def __call__(self, x):
        return self.value(x)

    def _verify(self):
        x = np.linspace(0.0, 1.0, CHECK_POINTS)
        v = self.value(x)
        d = self.derivative(x[1:-1])
        if not (0 < self.slope_low <= self.slope_high):
            raise ValueError(f"{self!r}: slope bounds must satisfy 0 < low <= high")
        if v.min() < self.low - _BOUND_TOL or v.max() > self.high + _BOUND_TOL:
            raise ValueError(f"{self!r}: values leave [{self.low}, {self.high}]")
        if np.any(np.diff(v) >= 0):
            raise ValueError(f"{self!r} is not strictly decreasing")
        if (-d).min() < self.slope_low - _BOUND_TOL or (-d).max() > self.slope_high + _BOUND_TOL:
            raise ValueError(
                f"{self!r}: derivative leaves [{-self.slope_high}, {-self.slope_low}]"
            )


class AffineCurve(Curve):
    """``f(x) = intercept - slope * x`` with ``slope > 0``."""

    def __init__(self, intercept, slope):
        self.intercept = float(intercept)
        self.slope = float(slope)
        if not self.slope > 0:
            raise ValueError(f"affine curve needs a positive slope, got {slope}")
        self.low = self.intercept - self.slope
        self.high = self.intercept
        self.slope_low = self.slope_high = self.slope
        self._verify()

    def value(self, x):
        return self.intercept - self.slope * np.asarray(x, dtype=float)

    def derivative(self, x):
        return np.full_like(np.asarray(x, dtype=float), -self.slope)

    def primitive2(self, x):
        """Closed form of ``int_0^x int_0^s f``."""
        x = np.asarray(x, dtype=float)
        return self.intercept * x**2 / 2 - self.slope * x**3 / 6

    def primitive1(self, x):
        """Closed form of ``int_0^x f``."""
        x = np.asarray(x, dtype=float)
        return self.intercept * x - self.slope * x**2 / 2

    def __repr__(self):
        return f"AffineCurve(intercept={self.intercept}, slope={self.slope})"


class SmoothstepCurve(Curve):
    """``f(x) = intercept - slope*x - bend*(3x^2 - 2x^3)``.

    The cubic smoothstep term steepens the curve in the middle of the
    interval: ``-f'(x) = slope + 6*bend*x*(1-x)`` ranges over
    ``[slope, slope + 1.5*bend]``.
    """

    def __init__(self, intercept, slope, bend):
        self.intercept = float(intercept)
        self.slope = float(slope)
        self.bend = float(bend)
        if not self.slope > 0 or self.bend < 0:
            raise ValueError("smoothstep curve needs slope > 0 and bend >= 0")
        self.low = self.intercept - self.slope - self.bend
        self.high = self.intercept
        self.slope_low = self.slope
        self.slope_high = self.slope + 1.5 * self.bend
        self._verify()

    def value(self, x):
        x = np.asarray(x, dtype=float)
        return self.intercept - self.slope * x - self.bend * (3 * x**2 - 2 * x**3)

    def derivative(self, x):
        x = np.asarray(x, dtype=float)
        return -self.slope - 6 * self.bend * x * (1 - x)

    def __repr__(self):
        return (
            f"SmoothstepCurve(intercept={self.intercept}, slope={self.slope}, "
            f"bend={self.bend})"
        )


class TabulatedCurve(Curve):
    """Monotone cubic (PCHIP) interpolant through ``(x, value)`` samples.

    The abscissae must be strictly increasing and cover ``[0, 1]``.  Value
    and slope bounds are measured on a dense grid rather than declared.
    """

    def __init__(self, x, values, source=None):
        x = np.asarray(x, dtype=float)
        values = np.asarray(values, dtype=float)
        if x.ndim != 1 or x.shape != values.shape or x.size < 2:
            raise ValueError("tabulated curve needs matching 1-d x and value arrays")
        if np.any(np.diff(x) <= 0):
            raise ValueError("tabulated x must be strictly increasing")
        if abs(x[0]) > 1e-12 or abs(x[-1] - 1.0) > 1e-12:
            raise ValueError(f"tabulated x must cover [0, 1], got [{x[0]}, {x[-1]}]")
        self.x = x
        self.values = values
        self.source = source
        self._interp = PchipInterpolator(x, values)
        self._deriv = self._interp.derivative()
        grid = np.union1d(np.linspace(0.0, 1.0, CHECK_POINTS), x)
        v = self._interp(grid)
        d = -self._deriv(grid)
        self.low, self.high = float(v.min()), float(v.max())
        self.slope_low, self.slope_high = float(d.min()), float(d.max())
        if not self.slope_low > 0:
            raise ValueError(
                f"tabulated curve must be strictly decreasing (min slope {-self.slope_low:.3g})"
            )
        self._verify()

    @classmethod
    def from_csv(cls, path):
        """Load a two-column ``x,value`` CSV; a non-numeric header row is skipped."""
        xs, vs = [], []
        with open(path, newline="") as fh:
            for i, row in enumerate(csv.reader(fh)):
                if not row or row[0].lstrip().startswith("#"):
                    continue
                if len(row) != 2:
                    raise ValueError(f"{path}:{i + 1}: expected two columns, got {len(row)}")
                try:
                    xs.append(float(row[0]))
                    vs.append(float(row[1]))
                except ValueError:
                    if i == 0:
                        continue
                    raise ValueError(f"{path}:{i + 1}: non-numeric entry {row!r}") from None
        return cls(xs, vs, source=str(path))

    def value(self, x):
        return self._interp(np.asarray(x, dtype=float))

    def derivative(self, x):
        return self._deriv(np.asarray(x, dtype=float))

    def __repr__(self):
        src = self.source or f"{self.x.size} points"
        return f"TabulatedCurve({src})"


def _make_curves(n, intercept, slope, bend=None):
    intercept = np.broadcast_to(np.asarray(intercept, dtype=float), (n,))
    slope = np.broadcast_to(np.asarray(slope, dtype=float), (n,))
    if bend is None:
        return [AffineCurve(a, c) for a, c in zip(intercept, slope)]
    bend = np.broadcast_to(np.asarray(bend, dtype=float), (n,))
    return [SmoothstepCurve(a, c, b) for a, c, b in zip(intercept, slope, bend)]


class _DiagonalBias:
    def __init__(self, curves: Sequence[Curve]):
        self.curves = tuple(curves)
        if len(self.curves) < 2:
            raise ValueError("a bias model needs one curve per strategy (n >= 2)")
        self._affine = all(type(c) is AffineCurve for c in self.curves)
        if self._affine:
            self._a = np.array([c.intercept for c in self.curves])
            self._c = np.array([c.slope for c in self.curves])

    @property
    def n(self):
        return len(self.curves)

    def values(self, pi):
        """Curve values ``f_k(pi_k)``; ``pi`` may carry leading sample axes."""
        pi = np.asarray(pi, dtype=float)
        if self._affine:
            return self._a - self._c * pi
        return np.stack([c.value(pi[..., k]) for k, c in enumerate(self.curves)], axis=-1)

    def derivatives(self, pi):
        """Diagonal of the Jacobian, ``f_k'(pi_k)``."""
        pi = np.asarray(pi, dtype=float)
        if self._affine:
            return np.broadcast_to(-self._c, pi.shape).copy()
        return np.stack([c.derivative(pi[..., k]) for k, c in enumerate(self.curves)], axis=-1)

    def _check(self, pi):
        pi = np.asarray(pi, dtype=float)
        if pi.shape[-1] != self.n:
            raise ValueError(f"state has {pi.shape[-1]} shares, bias expects {self.n}")
        return pi

    def __repr__(self):
        return f"{type(self).__name__}({list(self.curves)!r})"


class AdditiveBias(_DiagonalBias):
    """Additive conformity bias ``B(pi)`` (Model 1).

    Attributes ``b_low``/``b_high`` bound every ``b_k`` and
    ``c_low``/``c_high`` bound every ``-b_k'``.
    """

    def __init__(self, curves: Sequence[Curve]):
        super().__init__(curves)
        self.b_low = min(c.low for c in self.curves)
        self.b_high = max(c.high for c in self.curves)
        self.c_low = min(c.slope_low for c in self.curves)
        self.c_high = max(c.slope_high for c in self.curves)

    @classmethod
    def affine(cls, n, intercept=1.0, slope=1.0):
        return cls(_make_curves(n, intercept, slope))

    @classmethod
    def smoothstep(cls, n, intercept=1.0, slope=1.0, bend=1.0):
        return cls(_make_curves(n, intercept, slope, bend))


class MultiplicativeBias(_DiagonalBias):
    """Multiplicative conformity bias ``W(pi)`` (Model 2).

    Weights stay in ``[w_low, w_high]`` with ``w_low > 0``; their slopes
    ``-w_k'`` stay in ``[v_low, v_high]``.
    """

    def __init__(self, curves: Sequence[Curve]):
        super().__init__(curves)
        self.w_low = min(c.low for c in self.curves)
        self.w_high = max(c.high for c in self.curves)
        self.v_low = min(c.slope_low for c in self.curves)
        self.v_high = max(c.slope_high for c in self.curves)
        if not self.w_low > 0:
            raise ValueError(f"bias weights must stay positive, got w_low={self.w_low}")

    @classmethod
    def affine(cls, n, intercept=1.5, slope=1.0):
        return cls(_make_curves(n, intercept, slope))

    @classmethod
    def smoothstep(cls, n, intercept=2.0, slope=0.5, bend=0.5):
        return cls(_make_curves(n, intercept, slope, bend))


def bias_additive(bias: AdditiveBias, pi):
    """Additive bias vector ``B(pi)``; the caller adds the actual cost."""
    return bias.values(bias._check(pi))


def bias_additive_jacobian(bias: AdditiveBias, pi):
    """``B'(pi) = diag(b_k'(pi_k))``, negative definite."""
    return np.diag(bias.derivatives(bias._check(pi)))


def bias_multiplicative(bias: MultiplicativeBias, pi, T):
    """Biased cost ``tau = W(pi) T``."""
    return bias.values(bias._check(pi)) * np.asarray(T, dtype=float)


def bias_multiplicative_jacobian(bias: MultiplicativeBias, pi):
    """``W'(pi) = diag(w_k'(pi_k))``."""
    return np.diag(bias.derivatives(bias._check(pi)))


def phi_matrix(bias: MultiplicativeBias, pi, T):
    """``Phi(T, pi) = -W'(pi) diag(T)``, the positive-feedback gain of Model 2."""
    return -bias_multiplicative_jacobian(bias, pi) @ np.diag(np.asarray(T, dtype=float))


def shortage_coefficient_model1(bias: AdditiveBias) -> float:
    """Impact coefficient of the additive bias: the maximal slope ``c_high``."""
    return bias.c_high


def shortage_coefficient_model2(bias: MultiplicativeBias, T_max) -> float:
    """Impact coefficient ``v_high * T_max / w_low**2`` of the multiplicative bias."""
    if not T_max > 0:
        raise ValueError(f"T_max must be positive, got {T_max}")
    return bias.v_high * T_max / bias.w_low**2
