import json

import numpy as np
import pytest

from coframe.errors import OutOfDomain
from coframe.fields import (Grid, Polynomial, PolynomialField, SampledField,
                            cumulative_integral, eval_field, load_polynomial, partial)


def var(i, n=3):
    return Polynomial.variable(i, n)


def grid2(n=33, lo=(0.0, 0.0), hi=(1.0, 1.0)):
    return Grid(lo, hi, (n, n))


def test_grid_invariants():
    g = Grid((0, 0, 0), (1, 2, 3), (5, 5, 7))
    assert g.steps == (0.25, 0.5, 0.5)
    assert g.h == 0.5
    assert g.refined().counts == (9, 9, 13)
    assert Grid.from_json(g.to_json()) == g
    with pytest.raises(ValueError):
        Grid((0, 0), (1, 1), (2, 5))
    with pytest.raises(ValueError):
        Grid((0, 1), (1, 1), (3, 3))


def test_eval_examples():
    g = Grid((0, 0), (4, 4), (5, 5))
    assert eval_field(PolynomialField(var(0, 2) * var(1, 2), grid=g), (2, 3)) == 6.0
    rho = var(0, 2) ** 2 + var(1, 2) ** 2
    assert eval_field(PolynomialField(rho), (0, 0)) == 0.0
    assert eval_field(PolynomialField.constant(5.0, 2, g), (1.3, 2.7)) == 5.0
    with pytest.raises(OutOfDomain):
        eval_field(PolynomialField(rho, grid=g), (5.0, 0.0))


def test_sampled_eval_is_multilinear():
    g = grid2(5)
    f = PolynomialField(var(0, 2) + 2 * var(1, 2) + 1.0, grid=g).sample()
    # bilinear interpolation is exact for affine functions
    assert eval_field(f, (0.37, 0.81)) == pytest.approx(1 + 0.37 + 1.62, abs=1e-14)
    with pytest.raises(OutOfDomain):
        eval_field(f, (1.5, 0.0))


def test_partial_polynomial_exact():
    p = PolynomialField(var(0, 2) ** 2)
    d = partial(p, 0)
    assert d.numerator == var(0, 2) * 2.0
    assert partial(PolynomialField.constant(3.0, 2), 1).is_zero()


def _fd_defect(n, axis=0):
    g = grid2(n)
    x, y = var(0, 2), var(1, 2)
    p = x ** 5 - x ** 3 * 2.0 + x * y ** 4 + y ** 3
    exact = PolynomialField(p, grid=g).partial(axis).on_grid(g)
    approx = PolynomialField(p, grid=g).sample().partial(axis).values
    return np.max(np.abs(exact - approx))


def test_sampled_partial_second_order():
    for axis in (0, 1):
        e1, e2, e3 = _fd_defect(17, axis), _fd_defect(33, axis), _fd_defect(65, axis)
        assert 3.0 <= e1 / e2 <= 5.0 and 3.0 <= e2 / e3 <= 5.0
        assert e2 <= 20 * (1 / 32) ** 2


def test_cumulative_integral_examples():
    g = Grid((-1, -1), (1, 1), (21, 21))
    y = var(1, 2)
    f = cumulative_integral(PolynomialField(y * 2.0, grid=g), 1, 0.0)
    assert f.numerator == y ** 2
    f = cumulative_integral(PolynomialField.constant(1.0, 2, g), 1, 0.0)
    assert f.numerator == y
    p = var(0, 2) * y ** 2
    exact = PolynomialField(var(0, 2) * y ** 3 * (1 / 3), grid=g).on_grid(g)
    errs = []
    for n in (21, 41, 81):
        gg = Grid((-1, -1), (1, 1), (n, n))
        s = cumulative_integral(PolynomialField(p, grid=gg).sample(), 1, 0.0)
        errs.append(np.max(np.abs(s.values - PolynomialField(var(0, 2) * y ** 3 * (1 / 3),
                                                              grid=gg).on_grid(gg))))
    assert errs[0] <= 5 * 0.1 ** 2
    assert 3.0 <= errs[0] / errs[1] <= 5.0
    assert exact.shape == (21, 21)
    with pytest.raises(OutOfDomain):
        cumulative_integral(PolynomialField(p, grid=g).sample(), 1, 2.0)


def test_integral_then_partial_roundtrip():
    g = grid2(41)
    f = PolynomialField(var(0, 2) * var(1, 2) ** 3 + 1.0, grid=g)
    back = cumulative_integral(f, 1, 0.5).partial(1)
    assert (back - f).is_zero(1e-14)
    s = f.sample()
    back = cumulative_integral(s, 1, 0.5).partial(1)
    assert np.max(np.abs(back.values - s.values)) <= 5 * g.h ** 2


def test_mixed_partials_commute():
    g = grid2(41)
    p = PolynomialField(var(0, 2) ** 3 * var(1, 2) ** 2 - var(1, 2) ** 4 * var(0, 2), grid=g)
    assert (p.partial(0).partial(1) - p.partial(1).partial(0)).is_zero()
    s = p.sample()
    d = s.partial(0).partial(1).values - s.partial(1).partial(0).values
    assert np.max(np.abs(d)) <= 10 * g.h ** 2


def test_rational_field_quotient_rule():
    g = grid2(9)
    x = var(0, 2)
    base = Polynomial.constant(1.0, 2) + x * x
    f = PolynomialField(x, base, 1, g)  # x / (1 + x^2)
    d = f.partial(0).on_grid(g)
    xs = g.mesh()[..., 0]
    np.testing.assert_allclose(d, (1 - xs ** 2) / (1 + xs ** 2) ** 2, atol=1e-14)


def test_polynomial_json_roundtrip(tmp_path):
    p = var(0, 2) * 2.5 - var(1, 2) ** 3 + 1.0
    data = p.to_json()
    assert data["vars"] == ["u1", "u2"]
    path = tmp_path / "p.json"
    path.write_text(json.dumps(data))
    assert load_polynomial(path) == p
    assert load_polynomial(data, nvars=3) == p.embed(3)
    with pytest.raises(ValueError):
        Polynomial.from_json({"vars": ["u1"], "terms": [{"c": 1.0, "e": [17]}]})


def test_sampled_csv_roundtrip(tmp_path):
    g = Grid((0, -1), (1, 1), (4, 5))
    s = PolynomialField(var(0, 2) - var(1, 2) ** 2, grid=g).sample()
    path = tmp_path / "f.csv"
    s.to_csv(path)
    assert path.read_text().splitlines()[0] == "u1,u2,value"
    back = SampledField.from_csv(path)
    assert back.grid == g
    np.testing.assert_array_equal(back.values, s.values)


def test_polynomial_algebra():
    x, y = var(0, 2), var(1, 2)
    p = (x + y) ** 2
    assert p == x * x + x * y * 2.0 + y * y
    assert p.degree == 2 and p.degree_in(0) == 2
    assert p.substitute(1, 0.0) == x * x
    assert (p - p).is_zero()
    pts = np.array([[0.5, -2.0], [1.0, 1.0]])
    np.testing.assert_allclose(p(pts), [2.25, 4.0])
