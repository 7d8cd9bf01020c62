"""Seeded problem families shared by the test modules."""

import itertools

import numpy as np

from coframe.algebra3 import random_rotations
from coframe.fields import Grid, Polynomial
from coframe.rank1_solver import Rank1Problem

BOX_SIDE = 0.5


def random_poly(rng, degree, scale=1.0, nvars=3, plane_only=True):
    """Polynomial in (u1, u2) with every monomial of total degree <= ``degree``."""
    terms = {}
    for e in itertools.product(range(degree + 1), repeat=2):
        if sum(e) <= degree:
            terms[e + (0,)] = scale * rng.uniform(-1.0, 1.0)
    return Polynomial(terms, nvars)


def box_grid(lower, h):
    upper = tuple(lo + BOX_SIDE for lo in lower)
    return Grid.with_step(lower, upper, h)


def line_problem(seed, h=1 / 64):
    """z in the plane orthogonal to a random unit vector; degree 3."""
    rng = np.random.default_rng(seed)
    a = rng.standard_normal(3)
    a /= np.linalg.norm(a)
    b1 = np.cross(a, rng.standard_normal(3))
    b1 /= np.linalg.norm(b1)
    b2 = np.cross(a, b1)
    eps = 0.3
    p1 = random_poly(rng, 3, eps)
    p2 = random_poly(rng, 3, eps)
    coeff1 = Polynomial.constant(1.0, 3) + p1
    z = [coeff1 * float(b1[m]) + p2 * float(b2[m]) for m in range(3)]
    lower = tuple(rng.uniform(-0.5, 0.0, 3))
    return Rank1Problem(z, box_grid(lower, h)), a


def submersion_problem(seed, h=1 / 64):
    """z = (r p, p, q) with an affine ratio r = alpha u1 + beta u2 + gamma."""
    rng = np.random.default_rng(10_000 + seed)
    alpha = rng.choice([-1.0, 1.0]) * rng.uniform(1.0, 1.5)
    beta = rng.uniform(-0.5, 0.5)
    gamma = rng.uniform(-0.5, 0.5)
    u1, u2 = Polynomial.variable(0, 3), Polynomial.variable(1, 3)
    r = u1 * alpha + u2 * beta + gamma
    p = Polynomial.constant(1.0, 3) + random_poly(rng, 2, 0.3)
    q = random_poly(rng, 3, 1.0)
    lower = tuple(rng.uniform(-0.5, 0.0, 3))
    return Rank1Problem([r * p, p, q], box_grid(lower, h)), (alpha, beta, gamma)


def cone_q(rng, branch, rotation):
    """Random trace-shifted conjugate of a degenerate normal form."""
    x, y = rng.uniform(-1.0, 1.0, 2)
    if branch == "ry0":
        r, y = 0.0, 0.0
    else:
        r = np.hypot(x, y) * rng.choice([-1.0, 1.0])
    q0 = np.array([[-2 * x, 0, 0], [0, x + 3 * r, 3 * y], [0, -3 * y, x - 3 * r]])
    return rotation @ q0 @ rotation.T + rng.uniform(-2, 2) * np.eye(3)


def cone_samples(n, seed):
    rng = np.random.default_rng(seed)
    rots = random_rotations(n, seed + 1)
    out = []
    for k in range(n):
        branch = "ry0" if k % 2 == 0 else "r2"
        out.append((branch, cone_q(rng, branch, rots[k])))
    return out
