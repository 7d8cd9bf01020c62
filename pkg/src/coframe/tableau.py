"""The tableau ``A_Q = {[x] + [y] Q}`` and its involutivity verdict.

Matrices are identified with vectors of length 9 in row-major order, and
functionals with matrices via the Frobenius pairing ``<L, B> = sum L_ij B_ij``.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .algebra3 import hat
from .errors import IdenticallyZero, LowDimension

RANK_TOL = 1e-9
CUBIC_ZERO_TOL = 1e-9
BRANCH_TOL = 1e-7
EIGEN_TIE_TOL = 1e-9

INVOLUTIVE = "Involutive"
CONE_RY0 = "DegenerateConeRY0"
CONE_R2 = "DegenerateConeR2"
LOW_DIMENSION = "LowDimension"

CUBIC_MONOMIALS = tuple(itertools.combinations_with_replacement(range(3), 3))
_UNIT = np.eye(3)


def _rank(mat, tol=RANK_TOL):
    s = np.linalg.svd(mat, compute_uv=False)
    if s.size == 0 or s[0] == 0:
        return 0
    return int(np.sum(s > tol * s[0]))


@dataclass
class Tableau:
    q: np.ndarray
    basis: list
    dimension: int
    annihilator: list
    singular_values: np.ndarray = field(repr=False)

    @property
    def matrix(self):
        """The 9x6 matrix whose columns are the vectorized basis elements."""
        return np.stack([b.ravel() for b in self.basis], axis=1)


def build_tableau(q):
    q = np.asarray(q, dtype=float).reshape(3, 3)
    basis = [hat(_UNIT[i]) for i in range(3)] + [hat(_UNIT[i]) @ q for i in range(3)]
    bmat = np.stack([b.ravel() for b in basis], axis=1)
    u, s, _ = np.linalg.svd(bmat)
    dim = int(np.sum(s > RANK_TOL * s[0]))
    annihilator = [u[:, k].reshape(3, 3) for k in range(dim, 9)]
    return Tableau(q=q, basis=basis, dimension=dim, annihilator=annihilator, singular_values=s)


@dataclass(frozen=True)
class CubicForm:
    """Homogeneous cubic ``sum c_ijk z_i z_j z_k`` over sorted index triples."""

    coefficients: tuple

    def __post_init__(self):
        if len(self.coefficients) != len(CUBIC_MONOMIALS):
            raise ValueError("a ternary cubic has 10 coefficients")
        object.__setattr__(self, "coefficients", tuple(float(c) for c in self.coefficients))

    @classmethod
    def from_tensor(cls, g):
        """Symmetrize a full 3x3x3 coefficient tensor."""
        coeffs = dict.fromkeys(CUBIC_MONOMIALS, 0.0)
        for idx in itertools.product(range(3), repeat=3):
            coeffs[tuple(sorted(idx))] += g[idx]
        return cls(tuple(coeffs[m] for m in CUBIC_MONOMIALS))

    def as_dict(self):
        return {"".join(str(i + 1) for i in m): c for m, c in zip(CUBIC_MONOMIALS, self.coefficients)}

    def __call__(self, z):
        z = np.asarray(z, dtype=float)
        out = np.zeros(z.shape[:-1])
        for (i, j, k), c in zip(CUBIC_MONOMIALS, self.coefficients):
            out = out + c * z[..., i] * z[..., j] * z[..., k]
        return out

    def gradient(self, z):
        z = np.asarray(z, dtype=float)
        out = np.zeros(z.shape)
        for mono, c in zip(CUBIC_MONOMIALS, self.coefficients):
            for pos in range(3):
                rest = [mono[t] for t in range(3) if t != pos]
                out[..., mono[pos]] += c * z[..., rest[0]] * z[..., rest[1]]
        return out

    def max_abs(self):
        return max(abs(c) for c in self.coefficients)

    def is_zero(self, tol=CUBIC_ZERO_TOL):
        return self.max_abs() <= tol


def _linear_det_tensor(t):
    """Coefficient tensor of ``det C(z)`` where ``C(z)[a, i] = sum_k t[a, i, k] z_k``."""
    eps = np.zeros((3, 3, 3))
    for p in itertools.permutations(range(3)):
        eps[p] = np.linalg.det(_UNIT[list(p)])
    return np.einsum("ijl,ia,jb,lc->abc", eps, t[0], t[1], t[2])


def characteristic_cubic(t):
    """The cubic ``det C_Q(z)`` with ``C(z)[a, i] = (L_a z)_i``.

    For dimension 6 the three annihilator functionals are orthonormal, so the
    coefficients are scale-stable.  For dimension 4 or 5 there are more than
    three functionals; the cubic is then the continuation
    ``det[B | vec(e_1 z^T), vec(e_2 z^T), vec(e_3 z^T)]`` with ``B`` the
    column-normalized 9x6 basis matrix.  At dimension 6 it equals the
    orthonormal-annihilator cubic times ``+-vol(B)``, and below dimension 6 it
    vanishes identically.

    Raises
    ------
    LowDimension
        When the tableau is ``so(3)`` (dimension 3, ``Q`` a multiple of I).
    """
    if t.dimension <= 3:
        raise LowDimension(f"tableau has dimension {t.dimension}")
    if t.dimension == 6:
        tens = np.stack([lmat for lmat in t.annihilator])  # (a, i, k)
        return CubicForm.from_tensor(_linear_det_tensor(tens))
    return _continuation_cubic(t)


def _continuation_cubic(t):
    b = t.matrix
    b = b / np.linalg.norm(b, axis=0)
    g = np.zeros((3, 3, 3))
    cols = [[np.outer(_UNIT[i], _UNIT[k]).ravel() for k in range(3)] for i in range(3)]
    for k1, k2, k3 in itertools.product(range(3), repeat=3):
        full = np.column_stack([b, cols[0][k1], cols[1][k2], cols[2][k3]])
        g[k1, k2, k3] = np.linalg.det(full)
    return CubicForm.from_tensor(g)


def plucker_cubic(t):
    """The continuation cubic at any dimension (used to cross-check the exact one)."""
    return _continuation_cubic(t)


# --- normal form ------------------------------------------------------------

@dataclass
class NormalForm:
    q_eigen: np.ndarray  # diagonal of the symmetric part in the rotated frame
    p: np.ndarray  # skew vector in the same frame
    rotation: np.ndarray
    scale: float
    residuals: dict  # kind -> (residual, axis)


def _align_skew(q_eig, rot, p, tie):
    """Rotate inside repeated eigenspaces so the skew vector has fewer components."""
    groups = []
    used = set()
    for i in range(3):
        if i in used:
            continue
        grp = [j for j in range(3) if j not in used and abs(q_eig[j] - q_eig[i]) <= tie]
        used.update(grp)
        groups.append(grp)
    for grp in groups:
        if len(grp) < 2:
            continue
        sub = p[grp]
        norm = np.linalg.norm(sub)
        if norm == 0:
            continue
        # orthonormal basis of the eigenspace whose first vector is along p
        basis, _ = np.linalg.qr(np.column_stack([sub / norm, np.eye(len(grp))]))
        basis = basis[:, : len(grp)]
        if basis[:, 0] @ sub < 0:
            basis[:, 0] *= -1
        if np.linalg.det(basis) < 0:
            basis[:, -1] *= -1
        rot[:, grp] = rot[:, grp] @ basis
        p[grp] = basis.T @ sub
    return rot, p


def normal_form(q):
    """Trace-free part of ``Q`` in an orthonormal eigenframe of its symmetric part.

    Returns per-branch residuals: the cone ``r = y = 0`` (``p_i = q_j - q_k = 0``)
    and the cone ``r^2 = x^2 + y^2`` (``p_i^2 + (q_j - q_i)(q_k - q_i) = 0``),
    each also requiring the other two skew components to vanish.
    """
    q = np.asarray(q, dtype=float).reshape(3, 3)
    q0 = q - np.trace(q) / 3.0 * np.eye(3)
    scale = float(np.linalg.norm(q0))
    sym = 0.5 * (q0 + q0.T)
    skew = 0.5 * (q0 - q0.T)
    p_world = np.array([skew[1, 2], skew[2, 0], skew[0, 1]])
    q_eig, rot = np.linalg.eigh(sym)
    if np.linalg.det(rot) < 0:
        rot[:, 2] *= -1
    p = rot.T @ p_world
    rot, p = _align_skew(q_eig, rot.copy(), p.copy(), EIGEN_TIE_TOL * max(scale, 1e-300))
    residuals = {CONE_RY0: (np.inf, None), CONE_R2: (np.inf, None)}
    for i in range(3):
        j, k = (i + 1) % 3, (i + 2) % 3
        off = max(abs(p[j]), abs(p[k]))
        ry0 = max(abs(p[i]), abs(q_eig[j] - q_eig[k]), off)
        quad = p[i] ** 2 + (q_eig[j] - q_eig[i]) * (q_eig[k] - q_eig[i])
        r2 = max(np.sqrt(abs(quad)), off)
        if ry0 < residuals[CONE_RY0][0]:
            residuals[CONE_RY0] = (float(ry0), i)
        if r2 < residuals[CONE_R2][0]:
            residuals[CONE_R2] = (float(r2), i)
    return NormalForm(q_eigen=q_eig, p=p, rotation=rot, scale=scale, residuals=residuals)


def _witness(nf, axis):
    i = axis
    j, k = (i + 1) % 3, (i + 2) % 3
    x = -nf.q_eigen[i] / 2.0
    r = (nf.q_eigen[j] - nf.q_eigen[k]) / 6.0
    y = nf.p[i] / 3.0
    return (float(x), float(y), float(r))


# --- characters -------------------------------------------------------------

def characters(t, seed=0):
    """Cartan characters ``(s1, s2, s3)`` for a generic (seeded random) flag."""
    rng = np.random.default_rng(seed)
    frame, _ = np.linalg.qr(rng.standard_normal((3, 3)))
    ranks = [0]
    for k in range(1, 4):
        rows = np.concatenate([np.stack([b @ frame[:, c] for b in t.basis], axis=1)
                               for c in range(k)], axis=0)
        ranks.append(_rank(rows))
    return tuple(int(ranks[k] - ranks[k - 1]) for k in range(1, 4))


def prolongation_dimension(t):
    """``dim`` of the first prolongation ``{T : T(., w) in A, T symmetric in its inputs}``."""
    sym_index = list(itertools.combinations_with_replacement(range(3), 2))
    ncols = 3 * len(sym_index)
    rows = []
    for lmat in t.annihilator:
        for w in range(3):
            row = np.zeros(ncols)
            for i in range(3):
                for jj in range(3):
                    key = tuple(sorted((jj, w)))
                    row[i * len(sym_index) + sym_index.index(key)] += lmat[i, jj]
            rows.append(row)
    if not rows:
        return ncols
    return ncols - _rank(np.array(rows))


@dataclass
class Verdict:
    kind: str
    characters: tuple
    dimension: int
    witness: tuple = None
    residuals: dict = field(default_factory=dict)
    cubic_zero: bool = None
    axis: int = None

    @property
    def involutive(self):
        return self.kind == INVOLUTIVE

    def to_json(self):
        out = {"kind": self.kind, "characters": list(self.characters),
               "dimension": self.dimension, "cubic_zero": self.cubic_zero}
        if self.witness is not None:
            out["witness"] = dict(zip(("x", "y", "r"), self.witness))
        if self.residuals:
            out["residuals"] = {k: v for k, v in self.residuals.items()}
        return out


def classify(q, seed=0):
    """Involutivity verdict for ``A_Q``.

    ``Involutive`` when the tableau has dimension 6 and a nonzero cubic;
    ``LowDimension`` when the trace-free part of ``Q`` vanishes; otherwise the
    cone whose normal-form residual is smallest (ties go to ``r = y = 0``).
    """
    t = build_tableau(q)
    chars = characters(t, seed)
    if t.dimension <= 3:
        return Verdict(LOW_DIMENSION, chars, t.dimension, cubic_zero=True)
    cubic = characteristic_cubic(t)
    cubic_zero = cubic.is_zero()
    nf = normal_form(q)
    thresh = BRANCH_TOL * nf.scale
    residuals = {k: v[0] for k, v in nf.residuals.items()}
    if t.dimension == 6 and not cubic_zero:
        return Verdict(INVOLUTIVE, chars, t.dimension, residuals=residuals, cubic_zero=False)
    qualifying = [k for k in (CONE_RY0, CONE_R2) if nf.residuals[k][0] <= thresh]
    # ties (both residuals equal) go to the r = y = 0 cone
    kind = min(qualifying or [CONE_RY0, CONE_R2], key=lambda k: nf.residuals[k][0])
    axis = nf.residuals[kind][1]
    attached = residuals if len(qualifying) == 2 else {kind: residuals[kind]}
    return Verdict(kind, chars, t.dimension, witness=_witness(nf, axis), residuals=attached,
                   cubic_zero=cubic_zero, axis=axis)


# --- exploratory ------------------------------------------------------------

def cubic_gradient_sample(c, n=1000, seed=0):
    """Sample real points of the projective zero set and report the smallest gradient.

    Each sample intersects the cone ``{c = 0}`` with a random affine line
    ``a + t b`` and keeps the real roots, normalized to the unit sphere.
    """
    if c.is_zero(0.0):
        raise IdenticallyZero("cubic vanishes identically")
    rng = np.random.default_rng(seed)
    points = []
    ts = np.array([-1.0, 0.0, 1.0, 2.0])
    vander = np.vander(ts, 4)
    for _ in range(n):
        a, b = rng.standard_normal(3), rng.standard_normal(3)
        vals = c(a[None, :] + ts[:, None] * b[None, :])
        coeffs = np.linalg.solve(vander, vals)
        if np.allclose(coeffs[:3], 0.0, atol=1e-14):
            continue
        for root in np.roots(np.trim_zeros(coeffs, "f")):
            if abs(root.imag) <= 1e-9 * max(1.0, abs(root)):
                z = a + root.real * b
                points.append(z / np.linalg.norm(z))
    if not points:
        return {"roots": 0, "min_gradient": None, "argmin": None}
    pts = np.array(points)
    grads = np.linalg.norm(c.gradient(pts), axis=1)
    k = int(np.argmin(grads))
    return {"roots": len(pts), "min_gradient": float(grads[k]), "argmin": pts[k].tolist(),
            "max_value_residual": float(np.max(np.abs(c(pts))))}
