"""Admissible integral elements: ``Q`` from ``(P, Z)`` and the search for an involutive ``P``."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import RankDeficient, SearchExhausted, SingularP
from .tableau import Verdict, classify

SINGULAR_P_TOL = 1e-10
REJECT_DET = 1e-3
RANK_TOL = 1e-9


def q_from_p(p, z):
    """``Q = det(P)^-1 (P Z^T - tr(P Z^T)/2 I)``."""
    p = np.asarray(p, dtype=float).reshape(3, 3)
    z = np.asarray(z, dtype=float).reshape(3, 3)
    det = np.linalg.det(p)
    if abs(det) <= SINGULAR_P_TOL:
        raise SingularP(f"det P = {det:.3e}")
    pz = p @ z.T
    return (pz - 0.5 * np.trace(pz) * np.eye(3)) / det


def balance_defect(p, q, z):
    """Max entry of ``(tr Q) I - Q^T + Z P^T / det P``; zero for admissible pairs."""
    p, q, z = (np.asarray(m, dtype=float).reshape(3, 3) for m in (p, q, z))
    return float(np.max(np.abs(np.trace(q) * np.eye(3) - q.T + z @ p.T / np.linalg.det(p))))


def omega_nondegenerate(z, tol=RANK_TOL):
    """``(rank(Z) >= 2, rank(Z))`` with rank counted above ``tol * max singular value``."""
    s = np.linalg.svd(np.asarray(z, dtype=float).reshape(3, 3), compute_uv=False)
    rank = 0 if s[0] == 0 else int(np.sum(s > tol * s[0]))
    return rank >= 2, rank


@dataclass
class IntegralElement:
    p_matrix: np.ndarray
    q_matrix: np.ndarray
    z_matrix: np.ndarray
    verdict: Verdict
    attempts: int
    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))

    def to_json(self):
        return {"P": self.p_matrix.tolist(), "Q": self.q_matrix.tolist(),
                "Z": self.z_matrix.tolist(), "verdict": self.verdict.to_json(),
                "attempts": self.attempts, "rotation": self.rotation.tolist(),
                "balance_defect": balance_defect(self.p_matrix, self.q_matrix, self.z_matrix)}


def rank2_rotation(z):
    """Rotation ``R`` (det +1) with ``R Z`` having a vanishing bottom row."""
    u, _, _ = np.linalg.svd(np.asarray(z, dtype=float).reshape(3, 3))
    rot = u.T
    if np.linalg.det(rot) < 0:
        rot[0] *= -1
    return rot


def find_involutive_p(z, attempts=10, seed=0):
    """Draw random ``P`` until ``A_Q`` is involutive.

    ``P`` has entries uniform in [-1, 1]; draws with ``|det P| < 1e-3`` are
    rejected without counting as attempts.  For rank-2 ``Z`` the search runs on
    ``Z' = R Z`` (bottom row zero) and maps back with ``P = R^T P'``; ``Q`` is
    then recomputed from ``(P, Z)``.

    Raises
    ------
    RankDeficient
        If ``rank Z <= 1``.
    SearchExhausted
        If no attempt gives an involutive tableau.
    """
    z = np.asarray(z, dtype=float).reshape(3, 3)
    ok, rank = omega_nondegenerate(z)
    if not ok:
        raise RankDeficient(f"Z has rank {rank}")
    rot = rank2_rotation(z) if rank == 2 else np.eye(3)
    z_work = rot @ z
    rng = np.random.default_rng(seed)
    for attempt in range(1, int(attempts) + 1):
        while True:
            p_work = rng.uniform(-1.0, 1.0, (3, 3))
            if abs(np.linalg.det(p_work)) >= REJECT_DET:
                break
        p = rot.T @ p_work
        q = q_from_p(p, z)
        verdict = classify(q)
        if verdict.involutive:
            return IntegralElement(p, q, z, verdict, attempt, rot)
    raise SearchExhausted(f"no involutive P in {attempts} attempts")
