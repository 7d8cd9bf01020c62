import numpy as np
import pytest

from coframe.diagnostics import (FAMILY_GRID, INCONCLUSIVE, NO_FACTOR, closedness_residual,
                                 example46_forcing, example46_z, family_verifier,
                                 no_factor_certificate, projective_differential,
                                 upsilon_coefficients, upsilon_form)
from coframe.errors import FactorVanishes, NotAZero, ZeroVector
from coframe.fields import Grid, Polynomial
from coframe.forms import VForm1, VForm2, exterior_derivative

GRID = Grid((-0.5, -0.5, -0.5), (0.5, 0.5, 0.5), (9, 9, 9))
U = [Polynomial.variable(i, 3) for i in range(3)]
ZERO = Polynomial.constant(0.0, 3)


def p1(*coeffs):
    """Polynomial in u1 from its coefficients, constant first."""
    return Polynomial({(k,): c for k, c in enumerate(coeffs)}, 1)


def test_closedness_examples():
    assert closedness_residual(upsilon_form(GRID)) == 0.0
    single = VForm2.from_polynomials([[U[0], ZERO, ZERO], [ZERO] * 3, [ZERO] * 3], GRID)
    assert closedness_residual(single) == 1.0
    assert closedness_residual(VForm2.zero(GRID)) == 0.0


def test_closedness_of_exact_forms():
    rng = np.random.default_rng(0)
    terms = lambda: Polynomial({e: rng.uniform(-1, 1) for e in np.ndindex(3, 3, 3)}, 3)
    w = VForm1.from_polynomials([[terms() for _ in range(3)] for _ in range(3)], GRID)
    assert closedness_residual(exterior_derivative(w)) <= 1e-12
    fine = Grid(GRID.lower, GRID.upper, (17, 17, 17))
    sampled = VForm1.from_polynomials([[terms() for _ in range(3)] for _ in range(3)],
                                      fine).sample()
    assert closedness_residual(exterior_derivative(sampled)) <= 10 * fine.h ** 2


def test_certificate_examples():
    cert = no_factor_certificate(upsilon_coefficients(), (0, 0, 0))
    assert cert.conclusion == NO_FACTOR
    np.testing.assert_array_equal(cert.jacobian, np.diag([1.0, 1.0, -2.0]))
    assert cert.jacobian_det == -2.0
    cert = no_factor_certificate([U[0], U[1], U[2] * U[2]], (0, 0, 0))
    assert cert.conclusion == INCONCLUSIVE
    with pytest.raises(NotAZero):
        no_factor_certificate([Polynomial.constant(1.0, 3), ZERO, ZERO], (0, 0, 0))


def test_certificate_conjugation_stable():
    rng = np.random.default_rng(1)
    c = upsilon_coefficients()
    for _ in range(20):
        a = rng.uniform(-1, 1, (3, 3))
        if abs(np.linalg.det(a)) < 0.05:
            continue
        # c(A u): substitute u -> A u
        lin = [sum((U[j] * float(a[i, j]) for j in range(3)), ZERO) for i in range(3)]
        conj = [p.compose(lin) for p in c]
        assert no_factor_certificate(conj, (0, 0, 0)).conclusion == NO_FACTOR


def test_family_examples():
    rep = family_verifier(p1(1.0), p1(0.0))
    assert rep["passed"] and rep["d_omega1_center_nonzero"]
    rep = family_verifier(p1(0.0), p1(0.0))
    assert rep["passed"] and not rep["d_omega1_center_nonzero"]
    assert rep["connection_error"] == 0.0
    rep = family_verifier(p1(0.0, 1.0), p1(3.0))
    assert rep["passed"]


def test_family_factor_vanishes():
    with pytest.raises(FactorVanishes):
        family_verifier(p1(0.0), p1(4.0))
    with pytest.raises(FactorVanishes):
        # zero of 1 + 5 u3 at u3 = -0.2 lies between nodes
        family_verifier(p1(0.0), p1(5.0))
    with pytest.raises(ValueError):
        family_verifier(U[1], ZERO)


def test_family_seeded_sweep():
    grid = Grid((-0.5,) * 3, (0.5,) * 3, (9, 9, 9))
    for seed in range(20):
        rng = np.random.default_rng(seed)
        coeffs = rng.uniform(-0.4, 0.4, (2, 4))
        if seed % 2 == 0:
            coeffs[:, 0] = 0.0
        rep = family_verifier(p1(*coeffs[0]), p1(*coeffs[1]), grid)
        assert rep["passed"]
        assert rep["d_omega1_center_nonzero"] == bool(seed % 2)


def test_projective_differential_examples():
    assert projective_differential(example46_z(), (0.0, 0.0)) <= 1e-10
    u = Polynomial.variable(0, 2)
    one, zero = Polynomial.constant(1.0, 2), Polynomial.constant(0.0, 2)
    for pt in [(0.0, 0.0), (0.3, -0.7), (2.0, 1.0)]:
        value = projective_differential([one, u, zero], pt)
        # oracle: d[[z]] for z = (1, t, 0) has norm 1 / (1 + t^2)
        assert value == pytest.approx(1.0 / (1.0 + pt[0] ** 2))
    const = [Polynomial.constant(c, 2) for c in (1.0, -2.0, 0.5)]
    assert projective_differential(const, (0.4, 0.1)) == 0.0
    with pytest.raises(ZeroVector):
        projective_differential([zero, u, zero], (0.0, 0.0))


def test_example46_forcing():
    rep = example46_forcing(example46_z(), (0.0, 0.0))
    assert rep["rank"] == 3 and rep["forcing"]
    np.testing.assert_allclose(rep["vectors"], [[1, 0, 0], [0, 2, 0], [0, 0, 24]])
    const = [Polynomial.constant(c, 2) for c in (1.0, 2.0, 3.0)]
    assert example46_forcing(const, (0.0, 0.0))["rank"] == 1
    u = Polynomial.variable(0, 2)
    rep = example46_forcing([Polynomial.constant(1.0, 2), u, Polynomial.constant(0.0, 2)], (0.0, 0.0))
    assert rep["rank"] <= 2 and not rep["forcing"]


def test_default_family_grid_is_centered():
    assert all(lo == -hi for lo, hi in zip(FAMILY_GRID.lower, FAMILY_GRID.upper))
