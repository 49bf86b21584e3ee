"""Primitive ``F`` of a bias weight and its convex conjugate.

For a weight curve ``w`` on ``[0, 1]``::

    F(x) = int_0^x int_0^s w(r) dr ds    on [0, 1],  +inf elsewhere

``F`` is strictly convex because ``F'' = w >= w_low > 0``.  Its conjugate
``F*`` has gradient ``(F')^{-1}`` on ``[F'(0), F'(1)]`` and is affine with
slope 0 or 1 outside that range, which is exactly what clamping the
inversion to ``[0, 1]`` produces.
"""

from __future__ import annotations

import numpy as np
from scipy.integrate import quad
from scipy.interpolate import CubicHermiteSpline

from .bias import AffineCurve, Curve

__all__ = ["ConjugatePair", "conjugate_grad", "conjugate_value"]

GRID_POINTS = 2048


class ConjugatePair:
    """``F``, ``F'`` and the conjugate ``F*`` built from one weight curve.

    Affine curves use exact polynomials.  Other curves integrate ``w`` by
    adaptive quadrature between the nodes of a 2048-point grid and
    interpolate ``F'`` with a cubic Hermite spline whose node slopes are the
    exact weights; ``F`` is the spline's antiderivative.
    """

    def __init__(self, curve: Curve, grid_points: int = GRID_POINTS):
        self.curve = curve
        if isinstance(curve, AffineCurve):
            self._grad = curve.primitive1
            self._prim = curve.primitive2
        else:
            nodes = np.linspace(0.0, 1.0, grid_points)
            pieces = [
                quad(lambda s: float(curve.value(s)), a, b, epsabs=1e-14, epsrel=1e-13)[0]
                for a, b in zip(nodes[:-1], nodes[1:])
            ]
            grad_nodes = np.concatenate([[0.0], np.cumsum(pieces)])
            spline = CubicHermiteSpline(nodes, grad_nodes, curve.value(nodes))
            self._grad = spline
            self._prim = spline.antiderivative()
        self.grad_low = float(self._grad(0.0))
        self.grad_high = float(self._grad(1.0))

    def primitive(self, x):
        """``F(x)`` for ``x`` in ``[0, 1]``."""
        return np.asarray(self._prim(np.asarray(x, dtype=float)), dtype=float)

    def grad(self, x):
        """``F'(x) = int_0^x w``."""
        return np.asarray(self._grad(np.asarray(x, dtype=float)), dtype=float)

    def hess(self, x):
        return self.curve.value(x)

    def conj_grad(self, zeta, tol=1e-12, max_iter=100):
        """``(F*)'(zeta)``: the point of ``[0, 1]`` where ``F'`` equals ``zeta``.

        Safeguarded Newton iteration with a bisection fallback.  Targets
        outside ``[F'(0), F'(1)]`` map to the nearest endpoint.
        """
        zeta = np.asarray(zeta, dtype=float)
        if not np.all(np.isfinite(zeta)):
            raise ValueError("zeta must be finite")
        target = np.clip(zeta, self.grad_low, self.grad_high)
        lo = np.zeros_like(target)
        hi = np.ones_like(target)
        span = self.grad_high - self.grad_low
        x = (target - self.grad_low) / span
        for _ in range(max_iter):
            g = self.grad(x) - target
            lo = np.where(g < 0, x, lo)
            hi = np.where(g > 0, x, hi)
            step = g / self.hess(x)
            x_new = x - step
            outside = (x_new <= lo) | (x_new >= hi)
            x_new = np.where(outside, 0.5 * (lo + hi), x_new)
            done = np.abs(x_new - x) <= tol
            x = x_new
            if np.all(done):
                break
        x = np.where(zeta <= self.grad_low, 0.0, x)
        x = np.where(zeta >= self.grad_high, 1.0, x)
        return x

    def conj_value(self, zeta):
        """``F*(zeta) = zeta * x - F(x)`` at ``x = (F*)'(zeta)``."""
        zeta = np.asarray(zeta, dtype=float)
        x = self.conj_grad(zeta)
        return zeta * x - self.primitive(x)

    def __repr__(self):
        return f"ConjugatePair({self.curve!r})"


def conjugate_grad(pair: ConjugatePair, zeta):
    """Gradient of the convex conjugate, i.e. the inverse of ``F'``."""
    return pair.conj_grad(zeta)


def conjugate_value(pair: ConjugatePair, zeta):
    """Value of the convex conjugate ``F*(zeta)``."""
    return pair.conj_value(zeta)
