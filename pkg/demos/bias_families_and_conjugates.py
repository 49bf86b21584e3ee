"""
Bias curves and their convex conjugates
=======================================

Three curve families (affine, smoothstep, tabulated) serve as additive
biases B(pi) and multiplicative weights w(pi).  For a decreasing weight
curve the conjugate pair F, F* underlies the saturated mechanism's
storage; the round trip grad F* (grad F (x)) = x and the Fenchel-Young
equality are checked numerically below.
"""

import numpy as np

from conformity_dynamics import (
    AdditiveBias,
    AffineCurve,
    ConjugatePair,
    MultiplicativeBias,
    SmoothstepCurve,
    TabulatedCurve,
    conjugate_grad,
    conjugate_value,
    shortage_coefficient_model1,
    shortage_coefficient_model2,
)

x = np.linspace(0.0, 1.0, 6)
curves = {
    "affine": AffineCurve(2.0, 1.0),
    "smoothstep": SmoothstepCurve(2.0, 0.5, 0.5),
    "tabulated": TabulatedCurve(np.linspace(0, 1, 11), 1.8 - 0.6 * np.linspace(0, 1, 11)),
}
for name, c in curves.items():
    print(f"{name:10s}", np.round(c(x), 4))

# impact coefficients
add = AdditiveBias.affine(3, 1.0, 2.0)
mul = MultiplicativeBias.affine(3, 1.5, 0.5)
print("additive gamma       :", shortage_coefficient_model1(add))
print("multiplicative gamma :", shortage_coefficient_model2(mul, T_max=2.0))

for name, c in curves.items():
    pair = ConjugatePair(c)
    z = pair.grad(x)
    back = conjugate_grad(pair, z)
    fy = pair.primitive(x) + conjugate_value(pair, z) - x * z
    print(f"{name:10s} round trip {np.abs(back - x).max():.1e}  Fenchel-Young {np.abs(fy).max():.1e}")
