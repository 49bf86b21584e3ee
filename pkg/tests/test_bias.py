import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conformity_dynamics.bias import (
    AdditiveBias,
    AffineCurve,
    MultiplicativeBias,
    SmoothstepCurve,
    TabulatedCurve,
    bias_additive,
    bias_additive_jacobian,
    bias_multiplicative,
    bias_multiplicative_jacobian,
    phi_matrix,
    shortage_coefficient_model1,
    shortage_coefficient_model2,
)


def write_table(path, x, v, header=True):
    with open(path, "w") as fh:
        if header:
            fh.write("x,value\n")
        for a, b in zip(x, v):
            fh.write(f"{float(a)!r},{float(b)!r}\n")
    return path


def additive_families(tmp_path):
    x = np.linspace(0, 1, 11)
    tab = TabulatedCurve.from_csv(write_table(tmp_path / "b.csv", x, 1.0 - 0.8 * x - 0.3 * x**2))
    return {
        "affine": AdditiveBias.affine(3, 1.0, 1.0),
        "smoothstep": AdditiveBias.smoothstep(3, 1.0, 0.5, 1.0),
        "tabulated": AdditiveBias([tab] * 3),
    }


def multiplicative_families(tmp_path):
    x = np.linspace(0, 1, 11)
    tab = TabulatedCurve.from_csv(write_table(tmp_path / "w.csv", x, 2.0 - 0.5 * x - 0.4 * x**3))
    return {
        "affine": MultiplicativeBias.affine(3, 1.5, 1.0),
        "smoothstep": MultiplicativeBias.smoothstep(3, 2.0, 0.5, 0.5),
        "tabulated": MultiplicativeBias([tab] * 3),
    }


# --- curves ----------------------------------------------------------------


def test_affine_curve_bounds():
    c = AffineCurve(1.0, 2.5)
    assert (c.low, c.high, c.slope_low, c.slope_high) == (-1.5, 1.0, 2.5, 2.5)
    with pytest.raises(ValueError):
        AffineCurve(1.0, 0.0)


def test_smoothstep_declared_bounds_hold_densely():
    c = SmoothstepCurve(1.0, 0.5, 1.0)
    x = np.linspace(0, 1, 10_001)
    v, d = c.value(x), c.derivative(x)
    assert v.min() >= c.low - 1e-12 and v.max() <= c.high + 1e-12
    assert (-d).min() >= c.slope_low - 1e-12 and (-d).max() <= c.slope_high + 1e-12
    assert (-d).max() == pytest.approx(c.slope_high)


def test_tabulated_curve_rejects_increasing(tmp_path):
    x = np.linspace(0, 1, 5)
    with pytest.raises(ValueError):
        TabulatedCurve(x, x)
    with pytest.raises(ValueError):
        TabulatedCurve(np.linspace(0, 0.9, 5), 1 - x)


def test_tabulated_from_csv(tmp_path):
    x = np.linspace(0, 1, 6)
    path = write_table(tmp_path / "c.csv", x, 2 - x)
    c = TabulatedCurve.from_csv(path)
    np.testing.assert_allclose(c.value(x), 2 - x, atol=1e-14)
    assert c.slope_low == pytest.approx(1.0)
    assert c.slope_high == pytest.approx(1.0)
    nohead = TabulatedCurve.from_csv(write_table(tmp_path / "d.csv", x, 2 - x, header=False))
    np.testing.assert_allclose(nohead.value(0.37), c.value(0.37))


def test_tabulated_csv_errors(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("x,value\n0,1\n0.5,oops\n1,0\n")
    with pytest.raises(ValueError, match="non-numeric"):
        TabulatedCurve.from_csv(p)
    p.write_text("0,1,2\n1,0,0\n")
    with pytest.raises(ValueError, match="two columns"):
        TabulatedCurve.from_csv(p)


def test_multiplicative_requires_positive_weights():
    with pytest.raises(ValueError):
        MultiplicativeBias.affine(2, 1.0, 1.0)


# --- bias evaluation -------------------------------------------------------


def test_additive_examples():
    b = AdditiveBias.affine(2, 1.0, 1.0)
    np.testing.assert_allclose(bias_additive(b, [0.5, 0.5]), [0.5, 0.5])
    np.testing.assert_allclose(bias_additive_jacobian(b, [0.3, 0.7]), -np.eye(2))
    grid = np.linspace(0.01, 0.99, 50)
    vals = [bias_additive(b, [x, 1 - x])[0] for x in grid]
    assert np.all(np.diff(vals) < 0)


def test_additive_symmetry():
    b = AdditiveBias.smoothstep(3, 1.0, 0.5, 1.0)
    v = bias_additive(b, [0.3, 0.3, 0.4])
    assert v[0] == v[1]


def test_multiplicative_examples():
    w = MultiplicativeBias([AffineCurve(1.5, 1.0)] * 2)
    np.testing.assert_allclose(bias_multiplicative(w, [0.5, 0.5], [1, 1]), [1.0, 1.0])
    # identity weight at the point where the curve equals 1
    np.testing.assert_allclose(bias_multiplicative(w, [0.5, 0.5], [2, 3]), [2.0, 3.0])
    np.testing.assert_allclose(bias_multiplicative(w, [0.2, 0.8], [0, 0]), 0.0)


def test_phi_examples():
    w = MultiplicativeBias([AffineCurve(1.5, 1.0)] * 2)
    np.testing.assert_allclose(phi_matrix(w, [0.3, 0.7], [0, 0]), 0.0)
    np.testing.assert_allclose(phi_matrix(w, [0.3, 0.7], [2, 2]), np.diag([2.0, 2.0]))


@given(st.floats(0.02, 0.98), st.floats(0, 5), st.floats(0, 5))
def test_phi_entries_bounded(x, t1, t2):
    w = MultiplicativeBias.smoothstep(2, 2.0, 0.5, 0.5)
    phi = phi_matrix(w, [x, 1 - x], [t1, t2])
    assert phi.max() <= w.v_high * max(t1, t2) + 1e-12


def test_phi_is_exactly_minus_jacobian_times_costs(rng):
    w = MultiplicativeBias.smoothstep(3, 2.0, 0.5, 0.5)
    for _ in range(20):
        pi = rng.dirichlet(np.ones(3))
        T = rng.normal(size=3)
        np.testing.assert_array_equal(
            phi_matrix(w, pi, T), -bias_multiplicative_jacobian(w, pi) @ np.diag(T))


@pytest.mark.parametrize("family", ["affine", "smoothstep", "tabulated"])
def test_jacobians_match_central_differences(family, tmp_path, rng):
    h = 1e-5
    for bias, value, jac in (
        (additive_families(tmp_path)[family], lambda b, p: bias_additive(b, p),
         bias_additive_jacobian),
        (multiplicative_families(tmp_path)[family],
         lambda b, p: bias_multiplicative(b, p, np.ones(3)), bias_multiplicative_jacobian),
    ):
        for _ in range(100):
            pi = rng.uniform(0.01, 0.99, size=3)   # the diagonal maps act per coordinate
            J = jac(bias, pi)
            assert np.count_nonzero(J - np.diag(np.diag(J))) == 0
            fd = np.array([(value(bias, pi + h * e) - value(bias, pi - h * e)) / (2 * h)
                           for e in np.eye(3)]).T
            np.testing.assert_allclose(J, fd, rtol=1e-6, atol=1e-9)


@pytest.mark.parametrize("family", ["affine", "smoothstep", "tabulated"])
def test_families_satisfy_declared_bounds(family, tmp_path):
    x = np.linspace(0, 1, 10_000)
    b = additive_families(tmp_path)[family]
    w = multiplicative_families(tmp_path)[family]
    for c in b.curves:
        assert b.b_low - 1e-12 <= c.value(x).min() and c.value(x).max() <= b.b_high + 1e-12
        d = -c.derivative(x[1:-1])
        assert b.c_low - 1e-9 <= d.min() and d.max() <= b.c_high + 1e-9
    for c in w.curves:
        assert w.w_low - 1e-12 <= c.value(x).min() and c.value(x).max() <= w.w_high + 1e-12
        d = -c.derivative(x[1:-1])
        assert w.v_low - 1e-9 <= d.min() and d.max() <= w.v_high + 1e-9
    assert w.w_low > 0


# --- impact coefficients ---------------------------------------------------


def test_shortage_coefficient_model1():
    assert shortage_coefficient_model1(AdditiveBias.affine(3, 1.0, 1.0)) == 1.0
    assert shortage_coefficient_model1(AdditiveBias.affine(3, 3.0, 2.5)) == 2.5
    mixed = AdditiveBias([AffineCurve(1.0, 1.0), AffineCurve(2.0, 2.0)])
    assert shortage_coefficient_model1(mixed) == 2.0


def test_shortage_coefficient_model2():
    # w_k(x) = 1.5 - x gives w_low = 0.5 and v_high = 1
    w = MultiplicativeBias([AffineCurve(1.5, 1.0)] * 2)
    assert shortage_coefficient_model2(w, 2.0) == pytest.approx(8.0)
    assert shortage_coefficient_model2(w, 4.0) == pytest.approx(2 * shortage_coefficient_model2(w, 2.0))
    with pytest.raises(ValueError):
        shortage_coefficient_model2(w, 0.0)
