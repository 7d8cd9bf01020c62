"""R^3-valued differential forms on a coordinate box.

Conventions
-----------
======================  ==============================================
1-form coefficients     ``coeffs[i][j]``: component ``i``, basis ``du^j``
2-form coefficients     ``coeffs[i][b]``: component ``i``, basis
                        ``(du2^du3, du3^du1, du1^du2)``
d of a 1-form           curl of the coefficient row
1-form ^ 1-form         cross product of coefficient rows
1-form ^ 2-form         dot product (coefficient of ``du1^du2^du3``)
d of a 2-form           divergence of the coefficient row
``[phi] ^ omega``       ``sum_{m,k} hat(e_m)[i,k] phi^m ^ omega^k``
======================  ==============================================

With these conventions the flatness equations read
``d phi^1 = phi^2 ^ phi^3`` (and cyclic), i.e. ``d phi = -1/2 [phi]^phi``.

Nodewise linear algebra works on arrays of shape ``(3, 3) + grid.shape``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .algebra3 import HAT_BASIS
from .errors import DegenerateCoframe, NotRank1, SingularSystem
from .fields import Grid, Polynomial, PolynomialField, SampledField, ScalarField

CONNECTION_COND_MAX = 1e8
RANK1_TOL = 1e-6

# Levi-Civita symbol
EPS = np.zeros((3, 3, 3))
for _i, _j, _k in ((0, 1, 2), (1, 2, 0), (2, 0, 1)):
    EPS[_i, _j, _k], EPS[_i, _k, _j] = 1.0, -1.0


def _as_field(x, grid):
    if isinstance(x, ScalarField):
        return x
    if isinstance(x, Polynomial):
        return PolynomialField(x, grid=grid)
    return PolynomialField.constant(float(x), 3, grid=grid)


def _cross(a, b):
    return [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]


def _dot(a, b):
    return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]


def _curl(a):
    return [a[2].partial(1) - a[1].partial(2),
            a[0].partial(2) - a[2].partial(0),
            a[1].partial(0) - a[0].partial(1)]


class _VForm:
    degree = None

    def __init__(self, coeffs, grid):
        if grid.dim != 3:
            raise ValueError("forms live on 3-dimensional grids")
        self.grid = grid
        self.coeffs = [[_as_field(c, grid) for c in row] for row in coeffs]
        if len(self.coeffs) != 3 or any(len(r) != 3 for r in self.coeffs):
            raise ValueError("form coefficients must be a 3x3 array")
        for row in self.coeffs:
            for c in row:
                if isinstance(c, SampledField) and c.grid != grid:
                    raise ValueError("form coefficients must share one grid")

    @classmethod
    def from_values(cls, grid, values):
        values = np.asarray(values, dtype=float)
        return cls([[SampledField(grid, values[i, j]) for j in range(3)] for i in range(3)], grid)

    @classmethod
    def from_polynomials(cls, polys, grid):
        return cls([[PolynomialField(p, grid=grid) for p in row] for row in polys], grid)

    @classmethod
    def zero(cls, grid):
        return cls([[0.0] * 3 for _ in range(3)], grid)

    @property
    def exact(self):
        return all(c.exact for row in self.coeffs for c in row)

    def component(self, i):
        return list(self.coeffs[i])

    def values(self):
        return np.stack([np.stack([np.broadcast_to(c.on_grid(self.grid), self.grid.shape)
                                   for c in row]) for row in self.coeffs])

    def sample(self):
        return type(self).from_values(self.grid, self.values())

    def __add__(self, other):
        return type(self)([[a + b for a, b in zip(r1, r2)]
                           for r1, r2 in zip(self.coeffs, other.coeffs)], self.grid)

    def __neg__(self):
        return type(self)([[-a for a in r] for r in self.coeffs], self.grid)

    def __sub__(self, other):
        return self + (-other)

    def rotated(self, r):
        """Constant rotation of the values: ``omega -> R omega``."""
        r = np.asarray(r, dtype=float)
        return type(self)([[sum((self.coeffs[k][j] * float(r[i, k]) for k in range(3)),
                                PolynomialField.constant(0.0, 3, self.grid))
                            for j in range(3)] for i in range(3)], self.grid)

    def to_json(self):
        return {"degree": self.degree, "grid": self.grid.to_json(),
                "coefficients": [[c.to_json() for c in row] for row in self.coeffs]}

    @classmethod
    def from_json(cls, data):
        grid = Grid.from_json(data["grid"])
        polys = [[Polynomial.from_json(c, nvars=3) for c in row] for row in data["coefficients"]]
        return cls.from_polynomials(polys, grid)

    def to_csv(self, path):
        """One row per node: ``u1,u2,u3`` then the nine coefficients ``c<i><j>``."""
        mesh = self.grid.mesh().reshape(-1, 3)
        vals = self.values().reshape(9, -1).T
        header = "u1,u2,u3," + ",".join(f"c{i + 1}{j + 1}" for i in range(3) for j in range(3))
        np.savetxt(path, np.hstack([mesh, vals]), delimiter=",", header=header, comments="",
                   fmt="%.17g")


class VForm1(_VForm):
    degree = 1


class VForm2(_VForm):
    degree = 2


# --- scalar-slice algebra ---------------------------------------------------

def wedge11(a, b):
    """``a ^ b`` for scalar 1-forms given as coefficient triples; returns a 2-form triple."""
    return _cross(a, b)


def wedge12(a, b):
    """``a ^ B`` for a scalar 1-form and 2-form; returns the volume coefficient."""
    return _dot(a, b)


def exterior_derivative(form):
    """d of a :class:`VForm1` (a :class:`VForm2`)."""
    return VForm2([_curl(form.component(i)) for i in range(3)], form.grid)


def exterior_derivative2(form):
    """d of a :class:`VForm2`: per component, the ``du1^du2^du3`` coefficient."""
    return [sum((form.coeffs[i][b].partial(b) for b in range(1, 3)), form.coeffs[i][0].partial(0))
            for i in range(3)]


def hat_wedge(phi, omega):
    """``[phi] ^ omega`` for two vector 1-forms, as a :class:`VForm2`."""
    out = []
    for i in range(3):
        acc = None
        for m in range(3):
            for k in range(3):
                s = HAT_BASIS[m, i, k]
                if s == 0:
                    continue
                term = [c * s for c in _cross(phi.component(m), omega.component(k))]
                acc = term if acc is None else [x + y for x, y in zip(acc, term)]
        out.append(acc)
    return VForm2(out, omega.grid)


# --- coframings -------------------------------------------------------------

@dataclass
class Coframing:
    """A :class:`VForm1` whose coefficient matrix is invertible at every node.

    ``det_floor`` is the smallest ``|det|`` over the nodes; ``orientation`` is
    its (constant) sign.
    """

    form: VForm1
    det_floor: float = field(default=None)
    orientation: int = field(default=1, init=False)

    def __post_init__(self):
        det = np.linalg.det(np.moveaxis(self.form.values(), (0, 1), (-2, -1)))
        scale = max(1.0, float(np.max(np.abs(self.form.values()))) ** 3)
        floor = float(np.min(np.abs(det)))
        if floor <= 1e-12 * scale or not (np.all(det > 0) or np.all(det < 0)):
            raise DegenerateCoframe(f"coefficient determinant reaches {floor:.3e}")
        if self.det_floor is not None and floor < self.det_floor:
            raise DegenerateCoframe(f"det floor {floor:.3e} below required {self.det_floor:.3e}")
        self.det_floor = floor
        self.orientation = 1 if det.flat[0] > 0 else -1

    @property
    def grid(self):
        return self.form.grid


def _as_coframing(omega):
    return omega if isinstance(omega, Coframing) else Coframing(omega)


def _nodewise(arr):
    """(3, 3, *shape) -> (N, 3, 3)."""
    return np.moveaxis(arr, (0, 1), (-2, -1)).reshape(-1, 3, 3)


def _connection_matrix(w):
    """Batched 9x9 matrices mapping phi coefficients to -[phi]^omega coefficients."""
    # L[i,b,m,n] = -sum_{k,j} hat(e_m)[i,k] eps[b,n,j] W[k,j]
    lmat = -np.einsum("mik,bnj,pkj->pibmn", HAT_BASIS, EPS, w)
    return lmat.reshape(-1, 9, 9)


def solve_connection(omega, cond_max=CONNECTION_COND_MAX):
    """The connection form ``phi`` with ``d omega = -[phi] ^ omega``, solved node by node."""
    omega = _as_coframing(omega)
    form = omega.form
    grid = form.grid
    w = _nodewise(form.values())
    d = _nodewise(exterior_derivative(form).values())
    lmat = _connection_matrix(w)
    cond = np.linalg.cond(lmat)
    if not np.all(np.isfinite(cond)) or np.max(cond) > cond_max:
        raise SingularSystem(f"connection system condition number {np.max(cond):.3e}")
    phi = np.linalg.solve(lmat, d.reshape(-1, 9, 1)).reshape(-1, 3, 3)
    phi = np.moveaxis(phi.reshape(grid.shape + (3, 3)), (-2, -1), (0, 1))
    return VForm1.from_values(grid, phi)


def flatness_defect(phi):
    """Array ``d phi^i - phi^j ^ phi^k`` (cyclic), shape ``(3, 3) + grid.shape``."""
    dphi = exterior_derivative(phi).values()
    p = phi.values()
    quad = np.stack([np.cross(p[(i + 1) % 3], p[(i + 2) % 3], axis=0) for i in range(3)])
    return dphi - quad


def curvature_residual(phi, margin=0):
    """Max over nodes and components of the flatness defect of ``phi``.

    ``margin`` drops that many node layers at each face of the grid.
    """
    defect = flatness_defect(phi)
    if margin:
        if min(phi.grid.shape) <= 2 * margin:
            raise ValueError("grid too small for the requested margin")
        defect = defect[(slice(None), slice(None)) + (slice(margin, -margin),) * 3]
    return float(np.max(np.abs(defect)))


def _wedge_sum_and_volume(form):
    w = form.values()
    d = exterior_derivative(form).values()
    sigma = np.einsum("ij...,ij...->...", w, d)
    vol = np.linalg.det(np.moveaxis(w, (0, 1), (-2, -1)))
    return sigma, vol


def lambda_of(omega):
    """``-(sum_i omega^i ^ d omega^i) / (2 omega^1^omega^2^omega^3)`` at every node."""
    omega = _as_coframing(omega)
    sigma, vol = _wedge_sum_and_volume(omega.form)
    return SampledField(omega.grid, -sigma / (2.0 * vol))


def structure_matrix(omega):
    """Nodewise ``C`` with ``d omega = C`` in the basis ``(w2^w3, w3^w1, w1^w2)``.

    Shape ``(N, 3, 3)`` in grid order.
    """
    form = omega.form if isinstance(omega, Coframing) else omega
    w = _nodewise(form.values())
    d = _nodewise(exterior_derivative(form).values())
    return d @ np.swapaxes(w, -1, -2) / np.linalg.det(w)[:, None, None]


@dataclass
class StructureData:
    """Split ``Y = lam I + v w^T`` of the nodewise structure matrix.

    ``mu`` is the length of the part of ``w`` orthogonal to ``v``; ``omega_zero``
    flags data where ``M`` vanishes (then ``v``, ``mu`` are meaningless and
    ``mu`` is reported as 0).
    """

    lam: SampledField
    mu: SampledField
    v: np.ndarray
    w: np.ndarray
    residual_rank: float
    omega_zero: bool
    m_norm_max: float

    @property
    def mu_min(self):
        return float(np.min(np.abs(self.mu.values)))


def decompose_structure(omega, tol=RANK1_TOL):
    """Recover ``lam``, ``v``, ``w``, ``mu`` from the structure equations of ``omega``.

    The structure matrix ``Y`` satisfies ``C = tr(Y) I - Y^T``; with
    ``Y = lam I + M`` and ``tr M = -2 lam`` this gives ``lam = tr(C)/2`` and
    ``M = -C^T``.

    Raises
    ------
    NotRank1
        If the second singular value of ``M`` exceeds ``tol`` (relative to
        ``max(1, |M|)``) somewhere while ``M`` itself does not vanish.
    """
    omega = _as_coframing(omega)
    grid = omega.grid
    c = structure_matrix(omega)
    lam = 0.5 * np.trace(c, axis1=1, axis2=2)
    m = -np.swapaxes(c, -1, -2)
    u, s, vt = np.linalg.svd(m)
    m_norm = float(np.max(s[:, 0]))
    residual_rank = float(np.max(s[:, 1]))
    omega_zero = m_norm <= tol
    if not omega_zero and residual_rank > tol * max(1.0, m_norm):
        raise NotRank1(f"second singular value {residual_rank:.3e} of the structure matrix")
    v = u[:, :, 0]
    w = s[:, 0, None] * vt[:, 0, :]
    # fix the sign of v by its first nonzero entry
    lead = np.argmax(np.abs(v) > 1e-12, axis=1)
    sign = np.sign(v[np.arange(len(v)), lead])
    sign[sign == 0] = 1.0
    v, w = v * sign[:, None], w * sign[:, None]
    perp = w - np.sum(v * w, axis=1)[:, None] * v
    mu = np.linalg.norm(perp, axis=1)
    if omega_zero:
        mu = np.zeros_like(mu)
    shape = grid.shape
    return StructureData(
        lam=SampledField(grid, lam.reshape(shape)),
        mu=SampledField(grid, mu.reshape(shape)),
        v=np.moveaxis(v.reshape(shape + (3,)), -1, 0),
        w=np.moveaxis(w.reshape(shape + (3,)), -1, 0),
        residual_rank=residual_rank,
        omega_zero=omega_zero,
        m_norm_max=m_norm,
    )
