"""Flat coframings with prescribed rank-1 exterior derivative.

Given ``Omega = z(u1, u2) du1^du2`` the solver finds ``g(u1)`` with
``g . z = 0``, solves ``-[g] k_2 = z`` for ``k_2``, integrates ``k`` in ``u2``
and assembles

    omega = (u3 g' + k_1 + [g] k) du1 + k_2 du2 + g du3,

whose exterior derivative is ``Omega`` by construction.  A rotation field
``a(u1)`` with ``a' = a [g]`` and a position ``x`` with ``dx = a omega`` then
realize ``omega = a^-1 dx``, so the metric of ``omega`` is flat.

When no constant ``g`` exists, the ratio ``u1~ = z^i / z^j`` becomes the new
first coordinate.  Ratios that are polynomials of the triangular form
``c u^a + s(u^b)`` give an exact polynomial change of coordinates.  Anything
else is resampled on the new grid.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.integrate import cumulative_trapezoid

from .algebra3 import hat, project_rotation
from .errors import (DegenerateHypothesis, Inconsistent, JacobianDegenerate,
                     NoIndependentChoice)
from .fields import Grid, Polynomial, PolynomialField, SampledField, ScalarField
from .forms import (Coframing, VForm1, VForm2, curvature_residual, decompose_structure,
                    exterior_derivative, lambda_of, solve_connection)

LINE_TOL = 1e-9
GRADIENT_FLOOR = 1e-6
NONVANISHING_FLOOR = 1e-6
JACOBIAN_FLOOR = 1e-6
HYPOTHESIS_TOL = 1e-8
K2_TOL = 1e-9
KBAR_FLOOR = 1e-3
DIVISION_TOL = 1e-12
MIN_NEW_NODES = 5
CURVATURE_MARGIN = 2

DEFAULT_TOLERANCES = {
    "domega_exact": 1e-9,
    "fd_factor": 5.0,
    "drift": 1e-8,
}

LINE = "Line"
SUBMERSION = "Submersion"
DEGENERATE = "Degenerate"


# --- problem ----------------------------------------------------------------

@dataclass
class Rank1Problem:
    """``Omega = z du1^du2`` on a 3D grid.

    ``z`` holds three polynomials in ``(u1, u2)`` (stored with 3 variables) or,
    after a sampled change of coordinates, three sampled fields.
    """

    z: list
    grid: Grid
    base: tuple = None

    def __post_init__(self):
        if self.grid.dim != 3:
            raise ValueError("rank-1 problems live on a 3D grid")
        z = []
        for c in self.z:
            if isinstance(c, Polynomial):
                c = c.embed(3) if c.nvars != 3 else c
                if c.depends_on(2):
                    raise ValueError("z must not depend on u3")
            z.append(c)
        if len(z) != 3:
            raise ValueError("z has three components")
        self.z = z
        if self.base is None:
            self.base = tuple(self.grid.lower)
        self.base = tuple(float(b) for b in self.base)
        if not self.grid.contains(self.base):
            raise ValueError("base point outside the grid")

    @property
    def exact(self):
        return all(isinstance(c, Polynomial) for c in self.z)

    @property
    def plane(self):
        """The ``(u1, u2)`` grid."""
        return Grid(self.grid.lower[:2], self.grid.upper[:2], self.grid.counts[:2])

    def z_fields(self):
        if self.exact:
            return [PolynomialField(c, grid=self.grid) for c in self.z]
        return list(self.z)

    def z_plane_values(self):
        """z at the nodes of the ``(u1, u2)`` grid, shape ``(3, n1, n2)``."""
        if self.exact:
            g3 = Grid(self.grid.lower[:2] + (0.0,), self.grid.upper[:2] + (1.0,),
                      self.grid.counts[:2] + (3,))
            return np.stack([c.on_grid(g3)[:, :, 0] for c in self.z])
        return np.stack([c.values[:, :, 0] for c in self.z])

    def omega_values(self):
        """Nodal coefficients of ``Omega`` (shape ``(3, 3) + grid.shape``)."""
        zv = self.z_plane_values()
        out = np.zeros((3, 3) + self.grid.shape)
        out[:, 2] = zv[..., None]
        return out

    def omega_form(self):
        zero = PolynomialField.constant(0.0, 3, self.grid)
        return VForm2([[zero, zero, c] for c in self.z_fields()], self.grid)

    def validate(self):
        zv = self.z_plane_values()
        norms = np.linalg.norm(zv, axis=0)
        if np.min(norms) < NONVANISHING_FLOOR:
            raise DegenerateHypothesis(f"z vanishes on the grid (min |z| = {np.min(norms):.3e})")

    @classmethod
    def from_json(cls, data):
        z = [Polynomial.from_json(c, nvars=3) for c in data["z"]]
        grid = Grid.from_json(data["grid"])
        return cls(z, grid, tuple(data["base"]) if "base" in data else None)

    def to_json(self):
        if not self.exact:
            raise ValueError("only polynomial problems serialize to JSON")
        return {"z": [c.embed(3).to_json() for c in self.z], "grid": self.grid.to_json(),
                "base": list(self.base)}

    @classmethod
    def load(cls, path):
        return cls.from_json(json.loads(Path(path).read_text()))


@dataclass
class HypothesisCase:
    kind: str
    a: np.ndarray = None
    i: int = None
    j: int = None
    witness: list = field(default_factory=list)

    def to_json(self):
        out = {"kind": self.kind}
        if self.kind == LINE:
            out["a"] = self.a.tolist()
        elif self.kind == SUBMERSION:
            out["ratio"] = [self.i + 1, self.j + 1]
        else:
            out["witness"] = [list(w) for w in self.witness]
        return out


# --- hypothesis -------------------------------------------------------------

def _ratio_gradient(z, i, j, plane):
    """``|grad(z^i / z^j)|`` on the plane nodes, plus ``|z^j|``."""
    g3 = Grid(plane.lower + (0.0,), plane.upper + (1.0,), plane.counts + (3,))

    def vals(p):
        return p.on_grid(g3)[:, :, 0]
    zi, zj = vals(z[i]), vals(z[j])
    gx = (vals(z[i].partial(0)) * zj - zi * vals(z[j].partial(0)))
    gy = (vals(z[i].partial(1)) * zj - zi * vals(z[j].partial(1)))
    with np.errstate(divide="ignore", invalid="ignore"):
        grad = np.hypot(gx, gy) / zj ** 2
    return grad, np.abs(zj)


def projective_differential_values(z, plane):
    """``|(I - zhat zhat^T) J| / |z|`` at every plane node (spectral norm)."""
    g3 = Grid(plane.lower + (0.0,), plane.upper + (1.0,), plane.counts + (3,))
    zv = np.stack([c.on_grid(g3)[:, :, 0] for c in z], axis=-1)
    jac = np.stack([np.stack([c.partial(a).on_grid(g3)[:, :, 0] for a in range(2)], axis=-1)
                    for c in z], axis=-2)  # (..., 3, 2)
    norm = np.linalg.norm(zv, axis=-1)
    zhat = zv / norm[..., None]
    proj = jac - zhat[..., :, None] * np.einsum("...i,...ia->...a", zhat, jac)[..., None, :]
    return np.linalg.norm(proj, ord=2, axis=(-2, -1)) / norm


def classify_hypothesis(problem):
    """Line, Submersion or Degenerate (see module docstring)."""
    if not problem.exact:
        raise ValueError("hypothesis classification needs polynomial z")
    problem.validate()
    plane = problem.plane
    zv = problem.z_plane_values().reshape(3, -1)
    u, s, _ = np.linalg.svd(zv, full_matrices=False)
    if s[2] <= LINE_TOL * s[0]:
        a = u[:, 2]
        lead = np.argmax(np.abs(a) > 1e-12)
        return HypothesisCase(LINE, a=a * np.sign(a[lead]))
    failing = None
    for i, j in itertools.permutations(range(3), 2):
        grad, zj = _ratio_gradient(problem.z, i, j, plane)
        if np.min(zj) < NONVANISHING_FLOOR:
            bad = np.ones(zj.shape, dtype=bool)
        else:
            bad = ~(grad >= GRADIENT_FLOOR)
            if not bad.any():
                return HypothesisCase(SUBMERSION, i=i, j=j)
        failing = bad if failing is None else failing & bad
    pd = projective_differential_values(problem.z, plane)
    mask = pd < GRADIENT_FLOOR
    if not mask.any():
        mask = failing
    mesh = plane.mesh()
    witness = [tuple(float(c) for c in mesh[idx]) for idx in zip(*np.nonzero(mask))]
    return HypothesisCase(DEGENERATE, witness=witness)


# --- change of coordinates --------------------------------------------------

@dataclass
class CoordinateMap:
    """``u1~ = z^i / z^j``, ``u2~ = u^b`` (``b`` in {0, 1}), ``u3`` unchanged."""

    kind: str  # "identity", "polynomial" or "sampled"
    i: int = None
    j: int = None
    b: int = None
    ratio_num: Polynomial = None
    ratio_den: Polynomial = None
    inverse: list = None  # polynomial map (u1~, u2~, u3) -> (u1, u2, u3), exact route
    jac_det: float = None  # constant det(d u~/d u), exact route
    range_a: tuple = None  # original range of the eliminated coordinate, sampled route

    def forward(self, points):
        """Original coordinates -> new coordinates."""
        pts = np.asarray(points, dtype=float)
        if self.kind == "identity":
            return pts.copy()
        r = self.ratio_num(pts) / self.ratio_den(pts)
        return np.stack([r, pts[..., self.b], pts[..., 2]], axis=-1)

    def backward(self, points):
        """New coordinates -> original coordinates."""
        pts = np.asarray(points, dtype=float)
        if self.kind == "identity":
            return pts.copy()
        if self.inverse is not None:
            return np.stack([p(pts) for p in self.inverse], axis=-1)
        return _invert_ratio(self, pts)

    def to_json(self):
        out = {"kind": self.kind}
        if self.kind != "identity":
            out.update({"u1_new": f"z{self.i + 1}/z{self.j + 1}", "u2_new": f"u{self.b + 1}"})
        return out


def _exact_quotient(num, den):
    """Polynomial ``q`` with ``q * den = num`` or ``None``."""
    if den.is_zero():
        return None
    deg = [max(num.degree_in(v) - den.degree_in(v), 0) for v in range(3)]
    monos = [e for e in itertools.product(*(range(d + 1) for d in deg))
             if sum(e) <= max(num.degree - den.degree, 0)]
    products = [den * Polynomial({e: 1.0}, 3) for e in monos]
    keys = sorted(set(num.terms).union(*(p.terms for p in products)))
    a = np.array([[p.terms.get(k, 0.0) for p in products] for k in keys])
    b = np.array([num.terms.get(k, 0.0) for k in keys])
    coef, *_ = np.linalg.lstsq(a, b, rcond=None)
    scale = max(num.max_abs_coefficient(), 1.0)
    if np.max(np.abs(a @ coef - b), initial=0.0) > DIVISION_TOL * scale:
        return None
    q = Polynomial({e: c for e, c in zip(monos, coef) if abs(c) > DIVISION_TOL * scale}, 3)
    return q


def _triangular_forms(r):
    """All ways to write ``r = c u^a + s(u^b)``; yields ``(a, b, c, s)``."""
    out = []
    for a in (0, 1):
        b = 1 - a
        lin = [e for e in r.terms if e[a] > 0]
        if len(lin) != 1:
            continue
        e = lin[0]
        if e[a] != 1 or e[b] != 0 or e[2] != 0:
            continue
        c = r.terms[e]
        s = Polynomial({k: v for k, v in r.terms.items() if k != e}, 3)
        if s.depends_on(a) or s.depends_on(2):
            continue
        out.append((a, b, c, s))
    return out


def _line_extremes(cmap, plane, refine=8):
    """Range of ``u1~`` common to every line ``u^b = const`` of the plane."""
    b = cmap.b
    a = 1 - b
    tb = np.linspace(plane.lower[b], plane.upper[b], refine * (plane.counts[b] - 1) + 1)
    ends = []
    for ua in (plane.lower[a], plane.upper[a]):
        pts = np.zeros((tb.size, 3))
        pts[:, a], pts[:, b] = ua, tb
        ends.append(cmap.forward(pts)[:, 0])
    lo = np.minimum(ends[0], ends[1])
    hi = np.maximum(ends[0], ends[1])
    return float(np.max(lo)), float(np.min(hi))


def _u2_windows(grid, b, base_b):
    """Node windows along ``u^b``: the full range, then 3/4, 1/2, 1/4 of it around the base."""
    n = grid.counts[b]
    step = grid.steps[b]
    centre = int(round((base_b - grid.lower[b]) / step))
    out = [(0, n - 1)]
    for frac in (0.75, 0.5, 0.25):
        m = max(int(round(frac * (n - 1))), 2)
        start = int(np.clip(centre - m // 2, 0, n - 1 - m))
        if (start, start + m) not in out:
            out.append((start, start + m))
    return out


def _new_grid(cmap, grid, base):
    """Largest product patch ``[lo1, hi1] x window`` inside the image of the box.

    The ``u2~ = u^b`` range is the full range or a window around the base
    point; the ``u1~`` range is what every line ``u^b = const`` in the window
    covers.  The grid step is kept when the patch holds at least
    ``MIN_NEW_NODES`` nodes along ``u1~``, else the node count is kept.
    """
    b = cmap.b
    a = 1 - b
    best = None
    for i0, i1 in _u2_windows(grid, b, base[b]):
        lo_b = grid.lower[b] + i0 * grid.steps[b]
        hi_b = grid.lower[b] + i1 * grid.steps[b]
        lower, upper, counts = list(grid.lower[:2]), list(grid.upper[:2]), list(grid.counts[:2])
        lower[b], upper[b], counts[b] = lo_b, hi_b, i1 - i0 + 1
        lo1, hi1 = _line_extremes(cmap, Grid(tuple(lower), tuple(upper), tuple(counts)))
        area = (hi1 - lo1) * (hi_b - lo_b)
        if hi1 > lo1 and (best is None or area > best[0]):
            best = (area, lo1, hi1, lo_b, hi_b, i1 - i0 + 1)
    if best is None:
        raise JacobianDegenerate("the new first coordinate has no common range on the box")
    _, lo1, hi1, lo_b, hi_b, n_b = best
    margin = 1e-12 * max(1.0, abs(lo1), abs(hi1))
    lo1, hi1 = lo1 + margin, hi1 - margin
    h = grid.h
    n1 = int(np.floor((hi1 - lo1) / h + 1e-9)) + 1
    if n1 >= MIN_NEW_NODES:
        hi1 = lo1 + (n1 - 1) * h
    else:
        n1 = grid.counts[a]
    return Grid((lo1, lo_b, grid.lower[2]), (hi1, hi_b, grid.upper[2]), (n1, n_b, grid.counts[2]))


def _invert_ratio(cmap, pts):
    """Solve ``r(u^a, u^b) = u1~`` for ``u^a`` by Newton iteration (sampled route)."""
    b, a = cmap.b, 1 - cmap.b
    num, den = cmap.ratio_num, cmap.ratio_den
    target = pts[..., 0]
    lo, hi = cmap.range_a
    # initial guess from a dense table along u^a at each u^b
    t = np.linspace(lo, hi, 257)
    work = np.zeros(pts.shape[:-1] + (3,))
    work[..., b] = pts[..., 1]
    tab = np.zeros(pts.shape[:-1] + t.shape)
    for k, tk in enumerate(t):
        work[..., a] = tk
        tab[..., k] = num(work) / den(work)
    if tab[(0,) * (tab.ndim - 1)][0] > tab[(0,) * (tab.ndim - 1)][-1]:
        tab, t = tab[..., ::-1], t[::-1]
    idx = np.clip(np.sum(tab < target[..., None], axis=-1), 1, t.size - 1)
    t0, t1 = t[idx - 1], t[idx]
    f0 = np.take_along_axis(tab, (idx - 1)[..., None], -1)[..., 0]
    f1 = np.take_along_axis(tab, idx[..., None], -1)[..., 0]
    ua = t0 + (target - f0) * (t1 - t0) / (f1 - f0)
    for _ in range(50):
        work[..., a] = ua
        nv, dv = num(work), den(work)
        f = nv / dv - target
        df = (num.partial(a)(work) * dv - nv * den.partial(a)(work)) / dv ** 2
        step = f / df
        ua = ua - step
        if np.max(np.abs(step)) <= 1e-15 * max(1.0, np.max(np.abs(ua))):
            break
    out = np.zeros(pts.shape)
    out[..., a], out[..., b], out[..., 2] = ua, pts[..., 1], pts[..., 2]
    return out


def change_coordinates(problem, case):
    """Make ``u1~ = z^i / z^j`` the first coordinate.

    Returns ``(new_problem, coordinate_map)``; the new ``z`` is
    ``z(u(u~)) / det(d u~ / d u)`` so that ``Omega`` is unchanged as a form,
    and it satisfies ``z^i = u1~ z^j``.
    """
    if case.kind != SUBMERSION:
        raise ValueError("change_coordinates needs a Submersion case")
    i, j = case.i, case.j
    z = problem.z
    quotient = _exact_quotient(z[i], z[j])
    forms = _triangular_forms(quotient) if quotient is not None else []
    if forms:
        # prefer the largest |c| (widest patch); ties keep u2~ = u2
        a, b, c, s = max(forms, key=lambda f: (abs(f[2]), f[0] == 0))
        if abs(c) < JACOBIAN_FLOOR:
            raise JacobianDegenerate(f"|det J| = {abs(c):.3e}")
        det = c if a == 0 else -c
        if a == 0 and c == 1.0 and s.is_zero():
            return problem, CoordinateMap("identity", i, j, 1, z[i], z[j], jac_det=1.0)
        v = [Polynomial.variable(k, 3) for k in range(3)]
        ua = (v[0] - _substitute_b(s, b)) * (1.0 / c)
        inverse = [None, None, v[2]]
        inverse[a], inverse[b] = ua, v[1]
        cmap = CoordinateMap("polynomial", i, j, b, quotient, Polynomial.constant(1.0, 3),
                             inverse=inverse, jac_det=det)
        grid = _new_grid(cmap, problem.grid, problem.base)
        new_z = [zc.compose(inverse) * (1.0 / det) for zc in z]
        base = _clip_base(cmap.forward(np.array(problem.base)), grid)
        return Rank1Problem(new_z, grid, base), cmap
    return _sampled_change(problem, i, j)


def _substitute_b(s, b):
    """``s(u^b)`` rewritten as a polynomial in ``u2~`` (variable 1)."""
    v = [Polynomial.variable(k, 3) for k in range(3)]
    if b == 1:
        return s
    return s.compose([v[1], v[1], v[2]])


def _clip_base(point, grid):
    return tuple(float(np.clip(p, lo, hi)) for p, lo, hi in zip(point, grid.lower, grid.upper))


def _sampled_change(problem, i, j):
    z = problem.z
    plane = problem.plane
    g3 = Grid(plane.lower + (0.0,), plane.upper + (1.0,), plane.counts + (3,))
    options = []
    for b in (1, 0):
        a = 1 - b
        ri = (z[i].partial(a) * z[j] - z[i] * z[j].partial(a)).on_grid(g3)[:, :, 0]
        zj = z[j].on_grid(g3)[:, :, 0]
        options.append((float(np.min(np.abs(ri / zj ** 2))), b))
    # widest Jacobian first; the other choice is a fallback if its patch is empty
    options.sort(key=lambda o: -o[0])
    if options[0][0] < JACOBIAN_FLOOR:
        raise JacobianDegenerate(f"min |det J| = {options[0][0]:.3e}")
    error = None
    for jmin, b in options:
        if jmin < JACOBIAN_FLOOR:
            continue
        a = 1 - b
        cmap = CoordinateMap("sampled", i, j, b, z[i], z[j],
                             range_a=(plane.lower[a], plane.upper[a]))
        try:
            grid = _new_grid(cmap, problem.grid, problem.base)
            break
        except JacobianDegenerate as exc:
            error = exc
    else:
        raise error
    new_plane = Grid(grid.lower[:2], grid.upper[:2], grid.counts[:2])
    pts = np.concatenate([new_plane.mesh(), np.zeros(new_plane.shape + (1,))], axis=-1)
    orig = cmap.backward(pts)
    zi, zj = z[i](orig), z[j](orig)
    dri = (z[i].partial(a)(orig) * zj - zi * z[j].partial(a)(orig)) / zj ** 2
    det = dri if a == 0 else -dri
    new_z = []
    for c in z:
        vals = c(orig) / det
        new_z.append(SampledField(grid, np.broadcast_to(vals[..., None], grid.shape)))
    base = _clip_base(cmap.forward(np.array(problem.base)), grid)
    return Rank1Problem(new_z, grid, base), cmap


# --- construction -----------------------------------------------------------

def _vec_fields(vals, grid):
    return [PolynomialField(v, grid=grid) if isinstance(v, Polynomial) else v for v in vals]


def build_g(case, grid=None):
    """``g(u1)`` as three polynomials in 3 variables (only ``u1`` appears)."""
    if case.kind == LINE:
        return [Polynomial.constant(float(c), 3) for c in case.a]
    if case.kind == SUBMERSION:
        g = [Polynomial.constant(0.0, 3) for _ in range(3)]
        g[case.j] = Polynomial.variable(0, 3)
        g[case.i] = Polynomial.constant(-1.0, 3)
        return g
    raise DegenerateHypothesis("no admissible g for a degenerate case")


def _cross(a, b):
    return [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]


def _hat_apply(g, k):
    """``[g] k``, which is ``k x g``."""
    return _cross(k, g)


def _values(fields_, grid):
    return np.stack([np.broadcast_to(f.on_grid(grid), grid.shape) for f in fields_])


def solve_k2(g, z, grid):
    """Minimum-norm solution of ``-[g] k2 = z``: ``k2 = (z x g) / |g|^2``.

    ``g``: polynomials; ``z``: fields on ``grid``.  Exact (rational) when ``z``
    is polynomial.
    """
    gf = _vec_fields(g, grid)
    zf = _vec_fields(z, grid)
    gv, zv = _values(gf, grid), _values(zf, grid)
    gnorm = np.linalg.norm(gv, axis=0)
    if np.min(gnorm) < NONVANISHING_FLOOR:
        raise Inconsistent("g vanishes on the grid")
    znorm = np.linalg.norm(zv, axis=0)
    dot = np.abs(np.sum(gv * zv, axis=0))
    if np.max(dot) > HYPOTHESIS_TOL * max(1.0, np.max(gnorm * znorm)):
        raise Inconsistent(f"g.z = {np.max(dot):.3e} is not zero")
    g_sq = g[0] * g[0] + g[1] * g[1] + g[2] * g[2]
    num = _cross(zf, [PolynomialField(c, grid=grid) for c in g])
    if g_sq.is_constant():
        k2 = [c * (1.0 / g_sq.constant_term()) for c in num]
    else:
        k2 = [c * PolynomialField(Polynomial.constant(1.0, 3), g_sq, 1, grid) for c in num]
    res = _values(_hat_apply(gf, k2), grid) + zv
    if np.max(np.abs(res)) > K2_TOL * max(1.0, np.max(znorm)):
        raise Inconsistent("k2 does not reproduce z")
    return k2


def integrate_k(k2, grid, base_u2):
    """``k = int k2 du2`` vanishing at ``u2 = base_u2``."""
    return [c.cumulative_integral(1, base_u2) for c in k2]


def kbar_candidates():
    """The 36 candidates ``c e_m`` and ``c u1 e_m``, in a fixed order."""
    out = []
    u1 = Polynomial.variable(0, 3)
    for scale in (1.0, -1.0, 2.0, -2.0, 4.0, -4.0):
        for m in range(3):
            for linear in (False, True):
                vec = [Polynomial.constant(0.0, 3) for _ in range(3)]
                vec[m] = u1 * scale if linear else Polynomial.constant(scale, 3)
                out.append(vec)
    return out


def _w_columns(g, k, grid):
    """``(w1, w2, w3)`` as lists of fields."""
    gf = [PolynomialField(c, grid=grid) for c in g]
    gp = [PolynomialField(c.partial(0), grid=grid) for c in g]
    u3 = PolynomialField.variable(2, 3, grid)
    hk = _hat_apply(gf, k)
    w1 = [u3 * gp[m] + k[m].partial(0) + hk[m] for m in range(3)]
    w2 = [k[m].partial(1) for m in range(3)]
    return w1, w2, gf


def _det_values(w1, w2, w3, grid):
    v1, v2, v3 = (_values(w, grid) for w in (w1, w2, w3))
    return np.einsum("i...,i...->...", v1, np.cross(v2, v3, axis=0)), v2, v3


def choose_kbar(g, k_particular, grid, floor=KBAR_FLOOR):
    """Pick ``kbar(u1)`` from :func:`kbar_candidates` maximizing ``min |det(w1, w2, w3)|``.

    Returns ``(kbar, det_floor)``.

    Raises
    ------
    NoIndependentChoice
        If the best candidate stays below ``floor`` times ``max |w2| |w3|``.
    """
    w1p, w2, w3 = _w_columns(g, k_particular, grid)
    v1p = _values(w1p, grid)
    v2, v3 = _values(w2, grid), _values(w3, grid)
    cross23 = np.cross(v2, v3, axis=0)
    base_det = np.einsum("i...,i...->...", v1p, cross23)
    scale = float(np.max(np.linalg.norm(v2, axis=0) * np.linalg.norm(v3, axis=0)))
    gf = [PolynomialField(c, grid=grid) for c in g]
    best = None
    for cand in kbar_candidates():
        kf = [PolynomialField(c, grid=grid) for c in cand]
        extra = [kf[m].partial(0) + _hat_apply(gf, kf)[m] for m in range(3)]
        det = base_det + np.einsum("i...,i...->...", _values(extra, grid), cross23)
        if not (np.all(det > 0) or np.all(det < 0)):
            score = 0.0
        else:
            score = float(np.min(np.abs(det)))
        if best is None or score > best[1]:
            best = (cand, score)
    if best[1] < floor * scale:
        raise NoIndependentChoice(f"best det floor {best[1]:.3e} below {floor * scale:.3e}")
    return best


def assemble_omega(g, k, grid):
    """``omega = (u3 g' + k_1 + [g] k) du1 + k_2 du2 + g du3`` as a :class:`Coframing`."""
    w1, w2, w3 = _w_columns(g, k, grid)
    form = VForm1([[w1[i], w2[i], w3[i]] for i in range(3)], grid)
    return Coframing(form)


# --- frame and position -----------------------------------------------------

def integrate_frame(g, u1_axis, a0, base_index=0):
    """RK4 for ``a' = a [g(u1)]`` on the nodes of ``u1_axis``, reprojecting every step.

    Returns ``(a_path, drift)`` with ``a_path[base_index] = a0`` and ``drift``
    the largest ``|a^T a - I|`` seen before reprojection.
    """
    u = np.asarray(u1_axis, dtype=float)
    g = [c if isinstance(c, Polynomial) else Polynomial.constant(float(c), 3) for c in g]

    def gmat(t):
        pt = np.array([t, 0.0, 0.0])
        return hat([float(c(pt)) for c in g])

    def rhs(t, a):
        return a @ gmat(t)

    path = np.zeros((u.size, 3, 3))
    path[base_index] = a0
    drift = 0.0
    for direction in (1, -1):
        idx = base_index
        while 0 <= idx + direction < u.size:
            t0, t1 = u[idx], u[idx + direction]
            h = t1 - t0
            a = path[idx]
            k1 = rhs(t0, a)
            k2 = rhs(t0 + h / 2, a + h / 2 * k1)
            k3 = rhs(t0 + h / 2, a + h / 2 * k2)
            k4 = rhs(t1, a + h * k3)
            nxt = a + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
            drift = max(drift, float(np.linalg.norm(nxt.T @ nxt - np.eye(3))))
            path[idx + direction] = project_rotation(nxt)
            idx += direction
    return path, drift


_ORDERINGS = tuple(itertools.permutations(range(3)))


def _path_integral(dx, steps, base_idx, order):
    """Integrate the gradient field ``dx[axis]`` (each ``(3,) + shape``) along ``order``."""
    shape = dx[0].shape[1:]
    x = np.zeros((3,) + shape)
    for pos, axis in enumerate(order):
        # already-integrated axes are free, later ones are pinned at the base
        sl = [slice(None)] * 3
        for later in order[pos + 1:]:
            sl[later] = slice(base_idx[later], base_idx[later] + 1)
        part = dx[axis][(slice(None),) + tuple(sl)]
        cum = cumulative_trapezoid(part, dx=steps[axis], axis=axis + 1, initial=0.0)
        cum = cum - np.take(cum, [base_idx[axis]], axis=axis + 1)
        x = x + cum
    return x


def integrate_position(a_path, omega, grid, base):
    """Integrate ``dx = a omega`` from the node nearest ``base``.

    Returns ``(x_values, path_independence)``; ``x_values`` has shape
    ``(3,) + grid.shape`` and uses the ``u1, u2, u3`` path.  The path
    independence is the largest difference between the six axis orderings.
    """
    form = omega.form if isinstance(omega, Coframing) else omega
    w = form.values()  # (i, j, ...)
    aw = np.einsum("pik,kjpqr->ijpqr", a_path, w)
    dx = [aw[:, j] for j in range(3)]
    base_idx = grid.nearest_index(base)
    results = [_path_integral(dx, grid.steps, base_idx, order) for order in _ORDERINGS]
    spread = max(float(np.max(np.abs(r - results[0]))) for r in results[1:])
    return results[0], spread


# --- solution and verification ----------------------------------------------

@dataclass
class SolveReport:
    residual_domega: float
    residual_curvature: float
    residual_lambda: float
    mu_min: float
    det_floor: float
    so3_drift: float
    path_independence: float
    residual_curvature_nodal: float = 0.0
    omega_zero: bool = False
    exact: bool = True
    thresholds: dict = field(default_factory=dict)

    @property
    def failures(self):
        t = self.thresholds
        out = []
        if self.residual_domega > t["domega"]:
            out.append("residual_domega")
        if self.residual_curvature > t["curvature"]:
            out.append("residual_curvature")
        if self.residual_lambda > t["lambda"]:
            out.append("residual_lambda")
        if not self.mu_min > 0:
            out.append("mu_min")
        if not self.det_floor > 0:
            out.append("det_floor")
        if self.so3_drift > t["drift"]:
            out.append("so3_drift")
        return out

    @property
    def passed(self):
        return not self.failures

    def to_json(self):
        return {"residual_domega": self.residual_domega,
                "residual_curvature": self.residual_curvature,
                "residual_lambda": self.residual_lambda, "mu_min": self.mu_min,
                "det_floor": self.det_floor, "so3_drift": self.so3_drift,
                "path_independence": self.path_independence,
                "residual_curvature_nodal": self.residual_curvature_nodal,
                "omega_zero": self.omega_zero,
                "exact": self.exact, "thresholds": self.thresholds,
                "passed": self.passed, "failures": self.failures}


@dataclass
class Rank1Solution:
    problem: Rank1Problem  # in the coordinates actually used
    case: HypothesisCase
    coordinate_map: CoordinateMap
    g: list
    k: list
    kbar: list
    omega: Coframing
    a_path: np.ndarray
    x: np.ndarray
    so3_drift: float
    path_independence: float
    report: SolveReport = None


def thresholds_for(grid, exact, overrides=None):
    tol = dict(DEFAULT_TOLERANCES)
    tol.update(overrides or {})
    h2 = tol["fd_factor"] * grid.h ** 2
    return {"domega": tol["domega_exact"] if exact else h2, "curvature": h2, "lambda": h2,
            "drift": tol["drift"]}


def verify_solution(solution, problem=None, tolerances=None):
    """Recompute every residual of ``solution`` with the forms operations.

    ``d omega - Omega`` uses exact derivatives when ``omega`` is exact.
    ``residual_curvature`` and ``residual_lambda`` are computed from the sampled
    coframe with finite differences, so they measure discretization error
    (the curvature away from the two outermost node layers, where nested
    one-sided differences are only first order).  ``residual_curvature_nodal``
    solves the connection from the exact ``d omega`` instead.
    """
    problem = problem or solution.problem
    omega = solution.omega
    form = omega.form
    grid = form.grid
    exact = form.exact and problem.exact
    d = exterior_derivative(form).values()
    residual_domega = float(np.max(np.abs(d - problem.omega_values())))
    # connection from the exact d omega: only the flatness check differentiates
    residual_nodal = curvature_residual(solve_connection(omega))
    # fully discrete route; the outer layers see nested one-sided stencils (O(h))
    sampled = Coframing(form.sample())
    margin = CURVATURE_MARGIN if min(grid.shape) > 2 * CURVATURE_MARGIN else 0
    residual_curvature = curvature_residual(solve_connection(sampled), margin)
    residual_lambda = float(np.max(np.abs(lambda_of(sampled).values)))
    structure = decompose_structure(omega)
    report = SolveReport(
        residual_domega=residual_domega,
        residual_curvature=residual_curvature,
        residual_curvature_nodal=residual_nodal,
        residual_lambda=residual_lambda,
        mu_min=0.0 if structure.omega_zero else structure.mu_min,
        det_floor=omega.det_floor,
        so3_drift=solution.so3_drift,
        path_independence=solution.path_independence,
        omega_zero=structure.omega_zero,
        exact=exact,
        thresholds=thresholds_for(grid, exact, tolerances),
    )
    return report


def solve(problem, a0=None, tolerances=None):
    """Run the full construction; see the module docstring.

    Raises
    ------
    DegenerateHypothesis
        If neither the line nor the submersion hypothesis holds.
    """
    case = classify_hypothesis(problem)
    if case.kind == DEGENERATE:
        where = case.witness[:3]
        raise DegenerateHypothesis(f"projectivized z is critical near {where}")
    if case.kind == SUBMERSION:
        work, cmap = change_coordinates(problem, case)
    else:
        work, cmap = problem, CoordinateMap("identity")
    grid = work.grid
    g = build_g(case)
    k2 = solve_k2(g, work.z_fields(), grid)
    kp = integrate_k(k2, grid, work.base[1])
    kbar, _ = choose_kbar(g, kp, grid)
    k = [kp[m] + PolynomialField(kbar[m], grid=grid) for m in range(3)]
    omega = assemble_omega(g, k, grid)
    a0 = np.eye(3) if a0 is None else np.asarray(a0, dtype=float)
    base_idx = grid.nearest_index(work.base)
    a_path, drift = integrate_frame(g, grid.axis(0), a0, base_idx[0])
    x, spread = integrate_position(a_path, omega, grid, work.base)
    sol = Rank1Solution(work, case, cmap, g, k, kbar, omega, a_path, x, drift, spread)
    sol.report = verify_solution(sol, work, tolerances)
    return sol
