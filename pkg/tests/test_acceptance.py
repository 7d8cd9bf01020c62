"""End-to-end acceptance checks, one test per criterion.

Each test records a one-line verdict (see ``conftest.py``) before asserting,
so the summary at the end of the run lists every criterion.
"""

import json
import time

import numpy as np
import pytest

from coframe.algebra3 import identity_suite, random_rotations
from coframe.cli import example_problem, main
from coframe.diagnostics import example46_forcing, example46_z, family_verifier, projective_differential
from coframe.errors import CoframeError, LowDimension, RankDeficient
from coframe.fields import Grid, Polynomial
from coframe.integral_elements import balance_defect, find_involutive_p, q_from_p
from coframe.rank1_solver import DEGENERATE, LINE, SUBMERSION, classify_hypothesis, integrate_frame, solve
from coframe.tableau import (CONE_R2, CONE_RY0, INVOLUTIVE, LOW_DIMENSION, build_tableau,
                             characteristic_cubic, characters, classify, prolongation_dimension)

from conftest import record
from generators import cone_samples, line_problem, submersion_problem

N_PROBLEMS = 10


def test_criterion_1_identity_suite():
    start = time.perf_counter()
    report = identity_suite(seed=2024, samples=10_000)
    elapsed = time.perf_counter() - start
    worst = max(report.values())
    ok = worst <= 1e-12 and elapsed < 5.0 and {"conjugation", "gl3_quadratic"} <= set(report)
    record(1, ok, f"{len(report)} identities, max defect {worst:.1e}, {elapsed:.2f} s")
    assert ok


def _cubic_zero(q):
    try:
        return characteristic_cubic(build_tableau(q)).is_zero()
    except LowDimension:
        return True


def test_criterion_2_tableau_trichotomy():
    start = time.perf_counter()
    problems = []
    generic_ok = 0
    for seed in range(1000):
        q = np.random.default_rng(seed).uniform(-1, 1, (3, 3))
        v = classify(q, seed=seed)
        generic_ok += v.kind == INVOLUTIVE and v.characters == (3, 3, 0)
        problems.append((q, v))
    cone_ok = 0
    for branch, q in cone_samples(1000, seed=77):
        v = classify(q)
        expected = CONE_RY0 if branch == "ry0" else CONE_R2
        cone_ok += v.kind == expected and _cubic_zero(q)
        problems.append((q, v))
    low = [classify(np.zeros((3, 3))), classify(2.5 * np.eye(3)), classify(-np.eye(3))]
    low_ok = all(v.kind == LOW_DIMENSION and v.dimension == 3 for v in low)
    # the normal-form classifier and the cubic must agree on every sample
    agree = sum((v.kind == INVOLUTIVE) == (not _cubic_zero(q)) for q, v in problems)
    elapsed = time.perf_counter() - start
    ok = (generic_ok == 1000 and cone_ok == 1000 and low_ok and agree == len(problems)
          and elapsed < 30.0)
    record(2, ok, f"generic {generic_ok}/1000, cones {cone_ok}/1000, low-dim {low_ok}, "
                  f"agreement {agree}/{len(problems)}, {elapsed:.1f} s")
    assert ok


def test_criterion_3_integral_elements():
    rng = np.random.default_rng(3)
    worst = 0.0
    pairs = 0
    while pairs < 10_000:
        p, z = rng.uniform(-1, 1, (2, 3, 3))
        if abs(np.linalg.det(p)) < 1e-3:
            continue
        worst = max(worst, balance_defect(p, q_from_p(p, z), z))
        pairs += 1
    rank3 = rank2 = 0
    for seed in range(100):
        zr = np.random.default_rng(1000 + seed)
        z3 = zr.uniform(-1, 1, (3, 3))
        z2 = zr.uniform(-1, 1, (3, 2)) @ zr.uniform(-1, 1, (2, 3))
        for z, tally in ((z3, 3), (z2, 2)):
            try:
                el = find_involutive_p(z, attempts=10, seed=seed)
            except CoframeError:
                continue
            good = el.verdict.involutive and balance_defect(el.p_matrix, el.q_matrix, z) <= 1e-10
            if tally == 3:
                rank3 += good
            else:
                rank2 += good
    low_rank = [np.zeros((3, 3))] + [np.outer(*rng.uniform(-1, 1, (2, 3))) for _ in range(20)]
    deficient = 0
    for z in low_rank:
        try:
            find_involutive_p(z)
        except RankDeficient:
            deficient += 1
    ok = worst <= 1e-10 and rank3 >= 99 and rank2 >= 95 and deficient == len(low_rank)
    record(3, ok, f"balance max {worst:.1e} on {pairs} pairs, rank-3 {rank3}/100, "
                  f"rank-2 {rank2}/100, RankDeficient {deficient}/{len(low_rank)}")
    assert ok


def _frame_order(g, lower):
    # endpoints must coincide, so the interval width is a multiple of the coarsest step
    a0 = random_rotations(1, 5)[0]
    ends = [integrate_frame(g, np.linspace(lower, lower + 0.5, n), a0)[0][-1] for n in (9, 17, 33)]
    e1 = np.max(np.abs(ends[0] - ends[1]))
    e2 = np.max(np.abs(ends[1] - ends[2]))
    return np.log2(e1 / e2)


@pytest.fixture(scope="module")
def solver_sweep():
    start = time.perf_counter()
    rows = []
    for make, kind in ((line_problem, LINE), (submersion_problem, SUBMERSION)):
        for seed in range(N_PROBLEMS):
            coarse = solve(make(seed, h=1 / 32)[0])
            fine = solve(make(seed, h=1 / 64)[0])
            rows.append((kind, seed, coarse, fine))
    return rows, time.perf_counter() - start


def test_criterion_4_rank1_solver(solver_sweep):
    rows, elapsed = solver_sweep
    failures = []
    ratios = {"curvature": [], "lambda": [], "path": []}
    orders = []
    h = 1 / 64
    for kind, seed, coarse, fine in rows:
        rep, rc = fine.report, coarse.report
        tag = f"{kind}-{seed}"
        if fine.case.kind != kind:
            failures.append(f"{tag}: case {fine.case.kind}")
        if not (rep.passed and rep.residual_domega <= 1e-9 and rep.residual_curvature <= 5 * h * h
                and rep.residual_lambda <= 5 * h * h and rep.mu_min > 0
                and rep.so3_drift <= 1e-8):
            failures.append(f"{tag}: residuals {rep.failures}")
        pairs = [("curvature", rc.residual_curvature, rep.residual_curvature),
                 ("path", rc.path_independence, rep.path_independence)]
        if kind == LINE:
            # lambda of a line-case solution vanishes identically; only roundoff remains
            if rep.residual_lambda > 1e-12:
                failures.append(f"{tag}: line lambda {rep.residual_lambda:.1e}")
        else:
            pairs.append(("lambda", rc.residual_lambda, rep.residual_lambda))
        for name, a, b in pairs:
            ratio = a / b
            ratios[name].append(ratio)
            if not 3.0 <= ratio <= 5.0:
                failures.append(f"{tag}: {name} ratio {ratio:.2f}")
        order = _frame_order(fine.g, fine.problem.grid.lower[0])
        orders.append(order)
        if abs(order - 4.0) > 0.3:
            failures.append(f"{tag}: frame order {order:.2f}")
    if elapsed >= 60.0:
        failures.append(f"runtime {elapsed:.1f} s")
    span = ", ".join(f"{k} [{min(v):.2f}, {max(v):.2f}]" for k, v in ratios.items())
    detail = (f"{len(rows)} problems, ratios {span}, frame order "
              f"[{min(orders):.2f}, {max(orders):.2f}], {elapsed:.1f} s")
    ok = not failures
    record(4, ok, detail if ok else detail + "; " + "; ".join(failures[:5]))
    assert ok, failures


def test_criterion_5_gauge_invariance():
    worst_omega = worst_x = 0.0
    rots = random_rotations(4, 55)
    for k, (make, seed) in enumerate([(line_problem, 1), (line_problem, 2),
                                      (submersion_problem, 1), (submersion_problem, 2)]):
        problem = make(seed, h=1 / 32)[0]
        r = rots[k]
        s1 = solve(problem)
        # the default frame at the base point is the identity
        s2 = solve(problem, a0=r)
        worst_omega = max(worst_omega, np.max(np.abs(s1.omega.form.values()
                                                     - s2.omega.form.values())))
        rx = np.einsum("ij,j...->i...", r, s1.x)
        shift = np.mean((s2.x - rx).reshape(3, -1), axis=1)
        worst_x = max(worst_x, np.max(np.abs(s2.x - rx - shift[:, None, None, None])))
    ok = worst_omega <= 1e-12 and worst_x <= 1e-8
    record(5, ok, f"max omega change {worst_omega:.1e}, rigid-motion defect in x {worst_x:.1e}")
    assert ok


def _p1(coeffs):
    return Polynomial({(k,): float(c) for k, c in enumerate(coeffs)}, 1)


def test_criterion_6_example_upsilon(capsys):
    code = main(["diagnose", "upsilon"])
    data = json.loads(capsys.readouterr().out)
    cert = data["certificate"]
    upsilon_ok = (code == 0 and cert["conclusion"] == "NoNonvanishingFactor"
                  and cert["jacobian"] == np.diag([1.0, 1.0, -2.0]).tolist()
                  and data["closedness_residual"] == 0.0)
    grid = Grid((-0.5,) * 3, (0.5,) * 3, (17, 17, 17))
    passed = matched = 0
    for seed in range(100):
        coeffs = np.random.default_rng(seed).uniform(-0.4, 0.4, (2, 4))
        if seed % 2 == 0:
            coeffs[:, 0] = 0.0
        elif seed % 4 == 1:
            coeffs[0, 0] = 0.0
        rep = family_verifier(_p1(coeffs[0]), _p1(coeffs[1]), grid)
        passed += rep["passed"]
        expect_nonzero = bool(coeffs[0, 0] != 0.0 or coeffs[1, 0] != 0.0)
        matched += rep["d_omega1_center_nonzero"] == expect_nonzero
    ok = upsilon_ok and passed == 100 and matched == 100
    record(6, ok, f"upsilon certificate {upsilon_ok}, family passed {passed}/100, "
                  f"d omega1(0) rule {matched}/100")
    assert ok


def test_criterion_7_example_degenerate():
    case = classify_hypothesis(example_problem("example46"))
    at_origin = any(np.allclose(w[:2], (0.0, 0.0), atol=1e-12) for w in case.witness)
    pd = projective_differential(example46_z(), (0.0, 0.0))
    forcing = example46_forcing(example46_z(), (0.0, 0.0))
    ok = case.kind == DEGENERATE and at_origin and pd <= 1e-10 and forcing["rank"] == 3
    record(7, ok, f"case {case.kind}, witness at origin {at_origin}, |d[[z]]| {pd:.1e}, "
                  f"forcing rank {forcing['rank']}")
    assert ok


def test_criterion_8_finite_certificates_only():
    # analytic existence is out of reach; check the finite Cartan test instead
    cartan = 0
    for seed in range(20):
        z = np.random.default_rng(500 + seed).uniform(-1, 1, (3, 3))
        el = find_involutive_p(z, seed=seed)
        t = build_tableau(el.q_matrix)
        s = characters(t, seed)
        cartan += s == (3, 3, 0) and prolongation_dimension(t) == s[0] + 2 * s[1] + 3 * s[2]
    ok = cartan == 20
    record(8, ok, f"not reproducible (analytic existence, prolongation counts); finite Cartan "
                  f"test holds for {cartan}/20 integral elements")
    assert ok
