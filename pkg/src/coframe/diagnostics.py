"""Certificates for the boundary cases of the rank-1 theory.

* :func:`closedness_residual` checks ``d Omega = 0``.
* :func:`no_factor_certificate` shows that a 2-form whose coefficient vector
  ``c`` has a nondegenerate zero cannot be written ``gamma ^ beta`` with
  ``beta`` nonvanishing near that zero.
* :func:`family_verifier` checks the flat family
  ``omega = ((1 + g2(u1) u2 + g3(u1) u3) du1, du2, du3)``.
* :func:`projective_differential` and :func:`example46_forcing` certify a
  critical point of the projectivized ``z``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import FactorVanishes, NotAZero, ZeroVector
from .fields import Grid, Polynomial, PolynomialField
from .forms import (VForm1, VForm2, curvature_residual, exterior_derivative,
                    exterior_derivative2, solve_connection, wedge12)

ZERO_TOL = 1e-12
JACOBIAN_TOL = 1e-9
FACTOR_FLOOR = 1e-6
FORCING_RANK_TOL = 1e-9

NO_FACTOR = "NoNonvanishingFactor"
INCONCLUSIVE = "Inconclusive"

FAMILY_GRID = Grid((-0.25, -0.25, -0.25), (0.25, 0.25, 0.25), (17, 17, 17))


def _u(i, nvars=3):
    return Polynomial.variable(i, nvars)


def closedness_residual(omega2):
    """Max over components and nodes of the ``du1^du2^du3`` coefficient of ``d Omega``."""
    grid = omega2.grid
    return float(max(np.max(np.abs(np.broadcast_to(c.on_grid(grid), grid.shape)))
                     for c in exterior_derivative2(omega2)))


def upsilon_coefficients():
    """``(u1, u2, -2 u3)``, the coefficients of the closed 2-form with an isolated zero."""
    return [_u(0), _u(1), _u(2) * -2.0]


def upsilon_form(grid):
    """``Omega = (Upsilon, 0, 0)`` as a :class:`VForm2`."""
    zero = Polynomial.constant(0.0, 3)
    return VForm2.from_polynomials([upsilon_coefficients(), [zero] * 3, [zero] * 3], grid)


@dataclass
class ObstructionCertificate:
    point: tuple
    c_value: np.ndarray
    jacobian: np.ndarray
    jacobian_det: float
    conclusion: str
    justification: str

    def to_json(self):
        return {"point": list(self.point), "c_value": self.c_value.tolist(),
                "jacobian": self.jacobian.tolist(), "jacobian_det": self.jacobian_det,
                "conclusion": self.conclusion, "justification": self.justification}


def no_factor_certificate(c, point):
    """Certify that ``c . b`` cannot vanish identically near ``point`` for ``b(point) != 0``.

    If ``c(point) = 0`` and ``J = dc(point)`` is invertible, the linear part of
    ``c . b`` at ``point`` is ``b(point)^T J (u - point)``.  It vanishes only
    if ``b(point) = 0``.

    Raises
    ------
    NotAZero
        If ``|c(point)| > 1e-12``.
    """
    point = tuple(float(p) for p in point)
    pt = np.array(point)
    value = np.array([p(pt) for p in c], dtype=float)
    if np.max(np.abs(value)) > ZERO_TOL:
        raise NotAZero(f"c({point}) = {value.tolist()}")
    jac = np.array([[p.partial(j)(pt) for j in range(len(point))] for p in c], dtype=float)
    det = float(np.linalg.det(jac))
    if abs(det) >= JACOBIAN_TOL:
        conclusion = NO_FACTOR
        text = ("c vanishes at the point with invertible Jacobian; for continuous b with "
                "c.b = 0 nearby, the linear term b(p)^T J (u - p) must vanish, so b(p) = 0")
    else:
        conclusion = INCONCLUSIVE
        text = "Jacobian of c is singular at the point; the linearization argument does not apply"
    return ObstructionCertificate(point, value, jac, det, conclusion, text)


def family_coframe(g2, g3, grid):
    """``((1 + g2(u1) u2 + g3(u1) u3) du1, du2, du3)`` and its factor ``f``."""
    g2, g3 = (p.embed(3) if p.nvars != 3 else p for p in (g2, g3))
    if g2.depends_on(1) or g2.depends_on(2) or g3.depends_on(1) or g3.depends_on(2):
        raise ValueError("g2 and g3 depend on u1 only")
    one, zero = Polynomial.constant(1.0, 3), Polynomial.constant(0.0, 3)
    f = one + g2 * _u(1) + g3 * _u(2)
    form = VForm1.from_polynomials([[f, zero, zero], [zero, one, zero], [zero, zero, one]], grid)
    return form, f


def family_verifier(g2, g3, grid=FAMILY_GRID, fd_factor=5.0):
    """Check the flat family for given ``g2(u1)``, ``g3(u1)``.

    Raises
    ------
    FactorVanishes
        If ``1 + g2 u2 + g3 u3`` gets within ``1e-6`` of zero on the grid or
        changes sign between nodes.
    """
    form, f = family_coframe(g2, g3, grid)
    f_vals = np.broadcast_to(f.on_grid(grid), grid.shape)
    f_min = float(np.min(np.abs(f_vals)))
    if f_min < FACTOR_FLOOR:
        raise FactorVanishes(f"min |f| = {f_min:.3e}")
    if np.min(f_vals) < 0 < np.max(f_vals):
        raise FactorVanishes("f changes sign on the grid")
    d = exterior_derivative(form)
    other_zero = all(c.is_zero(ZERO_TOL) for i in (1, 2) for c in d.coeffs[i])
    contact = wedge12(form.component(0), d.component(0))
    contact_zero = contact.is_zero(ZERO_TOL)
    phi = solve_connection(form)
    expected = np.zeros((3, 3) + grid.shape)
    expected[1, 0] = -f.partial(2).on_grid(grid)
    expected[2, 0] = f.partial(1).on_grid(grid)
    connection_error = float(np.max(np.abs(phi.values() - expected)))
    curvature = curvature_residual(phi)
    tol = fd_factor * grid.h ** 2
    center = tuple(0.5 * (lo + hi) for lo, hi in zip(grid.lower, grid.upper))
    d1_center = np.array([c.evaluate(np.array(center)) for c in d.coeffs[0]], dtype=float)
    nonzero_center = bool(np.max(np.abs(d1_center)) > ZERO_TOL)
    checks = {"d_omega2_and_3_zero": other_zero, "omega1_wedge_d_omega1_zero": contact_zero,
              "connection_matches": connection_error <= tol, "flat": curvature <= tol}
    return {"checks": checks, "passed": all(checks.values()),
            "connection_error": connection_error, "curvature_residual": curvature,
            "tolerance": tol, "factor_min": f_min, "center": list(center),
            "d_omega1_center": d1_center.tolist(), "d_omega1_center_nonzero": nonzero_center}


def projective_differential(z, point):
    """Norm of ``d[[z]]`` at ``point``: ``|(I - zhat zhat^T) dz| / |z|`` (spectral norm).

    Raises
    ------
    ZeroVector
        If ``z(point) = 0``.
    """
    pt = np.zeros(z[0].nvars)
    pt[: len(point)] = point
    value = np.array([p(pt) for p in z], dtype=float)
    norm = float(np.linalg.norm(value))
    if norm <= ZERO_TOL:
        raise ZeroVector(f"z({tuple(point)}) = 0")
    jac = np.array([[p.partial(a)(pt) for a in range(2)] for p in z], dtype=float)
    zhat = value / norm
    proj = jac - np.outer(zhat, zhat @ jac)
    return float(np.linalg.norm(proj, 2) / norm)


def _derivative(p, axis, order):
    for _ in range(order):
        p = p.partial(axis)
    return p


def example46_forcing(z, point, axis=1):
    """Rank of ``(z, d^2 z, d^4 z)`` along ``axis`` at ``point``.

    Rank 3 means the only ``g`` with ``g . z = 0`` to fourth order along the
    axis is ``g = 0``.
    """
    pt = np.zeros(z[0].nvars)
    pt[: len(point)] = point
    vectors = np.array([[_derivative(p, axis, order)(pt) for p in z] for order in (0, 2, 4)],
                       dtype=float)
    s = np.linalg.svd(vectors, compute_uv=False)
    rank = 0 if s[0] == 0 else int(np.sum(s > FORCING_RANK_TOL * s[0]))
    return {"vectors": vectors.tolist(), "orders": [0, 2, 4], "rank": rank,
            "forcing": rank == 3, "point": list(point)}


def example46_z(nvars=2):
    """``(1, rho, rho^2)`` with ``rho = u1^2 + u2^2``."""
    u, v = Polynomial.variable(0, nvars), Polynomial.variable(1, nvars)
    rho = u * u + v * v
    return [Polynomial.constant(1.0, nvars), rho, rho * rho]
