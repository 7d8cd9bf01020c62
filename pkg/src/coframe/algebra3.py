"""Linear algebra on R^3 and 3x3 matrices.

Vectors are numpy arrays of shape ``(3,)`` and matrices of shape ``(3, 3)``;
every function here also broadcasts over leading batch axes where that is
natural (``hat``, ``vee``, ``cofactor``).

The hat map follows the sign pattern

    [x] = [[ 0,   x3, -x2],
           [-x3,  0,   x1],
           [ x2, -x1,  0 ]]

so that ``[x] y = y cross x`` (note the order).
"""

from __future__ import annotations

import itertools

import numpy as np
from scipy.spatial.transform import Rotation

from .errors import Degenerate, NotSkew

ALGEBRA_TOL = 1e-12
ORTHO_TOL = 1e-10

# hat(e_m)[i, k] for the unit vectors e_m; hat(x) = einsum("m,mik", x, HAT_BASIS)
HAT_BASIS = np.zeros((3, 3, 3))
HAT_BASIS[0, 1, 2], HAT_BASIS[0, 2, 1] = 1.0, -1.0
HAT_BASIS[1, 0, 2], HAT_BASIS[1, 2, 0] = -1.0, 1.0
HAT_BASIS[2, 0, 1], HAT_BASIS[2, 1, 0] = 1.0, -1.0


def hat(v):
    """Skew matrix ``[v]``; accepts shape ``(..., 3)``."""
    v = np.asarray(v, dtype=float)
    return np.einsum("...m,mik->...ik", v, HAT_BASIS)


def vee(m, tol=ALGEBRA_TOL):
    """Inverse of :func:`hat`. Raises :class:`NotSkew` if ``m`` is not skew."""
    m = np.asarray(m, dtype=float)
    scale = max(1.0, float(np.max(np.abs(m), initial=0.0)))
    if np.max(np.abs(m + np.swapaxes(m, -1, -2)), initial=0.0) > tol * scale:
        raise NotSkew("matrix is not skew-symmetric")
    skew = 0.5 * (m - np.swapaxes(m, -1, -2))
    return np.stack([skew[..., 1, 2], skew[..., 2, 0], skew[..., 0, 1]], axis=-1)


def cofactor(a):
    """Cofactor matrix, ``det(A) * inv(A).T`` without the inversion."""
    a = np.asarray(a, dtype=float)
    c0, c1, c2 = a[..., :, 0], a[..., :, 1], a[..., :, 2]
    # columns of the cofactor matrix are cross products of column pairs
    return np.stack([np.cross(c1, c2), np.cross(c2, c0), np.cross(c0, c1)], axis=-1)


def is_rotation(r, tol=ORTHO_TOL):
    r = np.asarray(r, dtype=float)
    if r.shape != (3, 3) or not np.all(np.isfinite(r)):
        return False
    return (np.linalg.norm(r.T @ r - np.eye(3)) <= tol
            and abs(np.linalg.det(r) - 1.0) <= tol)


def project_rotation(m, tol=1e-12, max_iter=100):
    """Nearest rotation to ``m`` (orthogonal polar factor).

    Uses the scaled Newton iteration ``X <- (g X + inv(X).T / g) / 2``.
    ``m`` must have positive determinant.
    """
    x = np.array(m, dtype=float)
    d = np.linalg.det(x)
    if not np.isfinite(d) or d <= tol:
        raise Degenerate(f"det = {d:.3e}; polar factor is not a rotation")
    for _ in range(max_iter):
        inv_t = np.linalg.inv(x).T
        # determinant scaling speeds up the first few steps when far from SO(3)
        g = abs(np.linalg.det(x)) ** (-1.0 / 3.0)
        x_new = 0.5 * (g * x + inv_t / g)
        if np.max(np.abs(x_new - x)) <= tol:
            x = x_new
            break
        x = x_new
    # one unscaled step cleans up residual drift
    return 0.5 * (x + np.linalg.inv(x).T)


def random_rotations(n, seed):
    rots = Rotation.random(n, random_state=np.random.default_rng(seed))
    return rots.as_matrix()


# --- constant-coefficient forms on R^3 -------------------------------------
#
# A form is stored by its 8 coefficients on the monomials du^I, I a subset of
# {1,2,3} encoded as a bitmask (bit 0 = du^1).  Vector- and matrix-valued
# forms add leading axes.  Only the identity suite uses this representation.

def _wedge_table():
    table = np.zeros((8, 8, 8))
    for a, b in itertools.product(range(8), repeat=2):
        if a & b:
            continue
        inversions = sum(1 for i in range(3) for j in range(3)
                         if (a >> i) & 1 and (b >> j) & 1 and i > j)
        table[a, b, a | b] = (-1) ** inversions
    return table


_WEDGE = _wedge_table()
_WEDGE_ENTRIES = [(p, q, r, _WEDGE[p, q, r]) for p, q, r in zip(*np.nonzero(_WEDGE))]
_ONE_FORM_SLOTS = (1, 2, 4)


def _one_forms(coeffs):
    """(..., 3) coefficient arrays on du^1, du^2, du^3 -> (..., 8) forms."""
    out = np.zeros(coeffs.shape[:-1] + (8,))
    out[..., _ONE_FORM_SLOTS] = coeffs
    return out


def _scalar(x):
    out = np.zeros(np.shape(x) + (8,))
    out[..., 0] = x
    return out


def _wedge(subscripts, a, b):
    """Wedge two form-valued arrays; ``subscripts`` covers the value axes only."""
    live_a = [p for p in range(8) if np.any(a[..., p])]
    live_b = [q for q in range(8) if np.any(b[..., q])]
    out = None
    for p, q, r, sign in _WEDGE_ENTRIES:
        if p not in live_a or q not in live_b:
            continue
        term = sign * np.einsum(subscripts, a[..., p], b[..., q])
        if out is None:
            out = np.zeros(term.shape + (8,))
        out[..., r] += term
    if out is None:
        out = np.zeros(np.einsum(subscripts, a[..., 0], b[..., 0]).shape + (8,))
    return out


def _mm(a, b):
    return _wedge("nij,njk->nik", a, b)


def _mv(a, b):
    return _wedge("nij,nj->ni", a, b)


def _dot(a, b):
    return _wedge("nj,nj->n", a, b)


def _outer(a, b):
    return _wedge("ni,nk->nik", a, b)


def _smul(s, m):
    return _wedge("n,nik->nik", s, m)


def _hat_forms(a):
    return np.einsum("mik,nmp->nikp", HAT_BASIS, a)


def _transpose(m):
    return np.swapaxes(m, 1, 2)


def _trace(m):
    return np.einsum("niip->np", m)


def identity_suite(seed=0, samples=1000):
    """Evaluate the cross-product identity block on random inputs.

    Returns a dict mapping identity name to its maximum absolute defect over
    ``samples`` draws (entries uniform in [-1, 1]; rotations Haar-random).
    """
    rng = np.random.default_rng(seed)
    n = samples
    x = rng.uniform(-1, 1, (n, 3))
    y = rng.uniform(-1, 1, (n, 3))
    a_mat = rng.uniform(-1, 1, (n, 3, 3))
    alpha = _one_forms(rng.uniform(-1, 1, (n, 3, 3)))
    beta = _one_forms(rng.uniform(-1, 1, (n, 3, 3)))
    gamma = _one_forms(rng.uniform(-1, 1, (n, 3, 3, 3)))
    rot = random_rotations(n, rng.integers(2**32))
    eye = np.broadcast_to(np.eye(3), (n, 3, 3))

    hx, hy = hat(x), hat(y)
    tr_a = np.trace(a_mat, axis1=1, axis2=2)[:, None, None]
    a_t = _transpose(a_mat)
    ha, hb = _hat_forms(alpha), _hat_forms(beta)
    a_f = _scalar(a_mat)
    a_alpha = _mv(a_f, alpha)

    defects = {}
    defects["antisymmetry"] = np.einsum("nij,nj->ni", hx, y) + np.einsum("nij,nj->ni", hy, x)
    defects["hat_of_product"] = (hat(np.einsum("nij,nj->ni", a_mat, x))
                                 - (tr_a * hx - a_t @ hx - hx @ a_mat))
    defects["hat_product"] = (hx @ hy - (np.einsum("ni,nj->nij", y, x)
                                         - np.einsum("ni,ni->n", x, y)[:, None, None] * eye))
    defects["hat_form_swap"] = _mv(ha, beta) - _mv(hb, alpha)
    defects["hat_of_matrix_form"] = (
        _hat_forms(_mv(gamma, alpha))
        - (_smul(_trace(gamma), ha) - _mm(_transpose(gamma), ha) + _mm(ha, gamma)))
    defects["hat_form_product"] = (
        _mm(ha, hb) - (_dot(beta, alpha)[:, None, None, :] * eye[..., None] - _outer(beta, alpha)))
    defects["triple_wedge"] = (
        _dot(alpha, _mv(ha, alpha))
        + 6 * _dot(alpha[:, :1], _dot(alpha[:, 1:2], alpha[:, 2:3])[:, None, :]))
    defects["hat_quadratic"] = (
        _mv(_hat_forms(a_alpha), alpha)
        - _mv(0.5 * _scalar(tr_a * eye - a_t), _mv(ha, alpha)))
    defects["conjugation"] = hat(np.einsum("nij,nj->ni", rot, x)) - rot @ hx @ _transpose(rot)
    defects["gl3_quadratic"] = (_mv(_hat_forms(a_alpha), a_alpha)
                                - _mv(_scalar(cofactor(a_mat)), _mv(ha, alpha)))
    return {name: float(np.max(np.abs(d))) for name, d in defects.items()}
