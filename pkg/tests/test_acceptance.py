"""Acceptance gate: one test per criterion, each recording a PASS/FAIL line.

Run alone with ``pytest tests/test_acceptance.py -v -s``; the summary lines
are also printed at the end of any pytest session that includes this file.
"""

import subprocess
import sys
import time
from pathlib import Path

import numpy as np
import pytest

from sdfstab import symexpr as sx
from sdfstab.classifier import GridSpec, Tag, scan_region
from sdfstab.liealg import hall_basis
from sdfstab.simloop import Partition, run_closed_loop, stability_sweep
from sdfstab.synth import m_differences, synthesize
from sdfstab.systems import SystemDef, corollary2, verify_template

from oracles import witt_dimension

RESULTS: dict[int, str] = {}
TESTS = Path(__file__).resolve().parent


def record(k: int, ok: bool, detail: str) -> bool:
    line = f"criterion {k}: {'PASS' if ok else 'FAIL'} - {detail}"
    RESULTS[k] = line
    print(line)
    return ok


def ball_points(rng, n, r_lo, r_hi, dim=3, uniform_volume=False):
    out = []
    for _ in range(n):
        d = rng.normal(size=dim)
        d /= np.linalg.norm(d)
        r = r_hi * rng.uniform() ** (1 / dim) if uniform_volume else rng.uniform(r_lo, r_hi)
        out.append(d * r)
    return out


# -- 1 ----------------------------------------------------------------------

TEMPLATE_CASES = [(3, "1", "1"), (5, "1", "1"), (3, "2 + sin(x1)", "1 + x2^2")]


def bracket_regression(flip=False):
    reports = [verify_template(L, a, b, points=100, seed=11, tol=1e-8, flip=flip)
               for L, a, b in TEMPLATE_CASES]
    return all(r.passed for r in reports), max(r.max_abs_diff for r in reports)


def test_criterion_1_bracket_identities():
    t = time.perf_counter()
    ok, worst = bracket_regression()
    dt = time.perf_counter() - t
    assert record(1, ok and dt <= 10, f"3 templates x 100 points, max |diff| {worst:.2e} (<= 1e-8), {dt:.2f}s (<= 10s)")


# -- 2 ----------------------------------------------------------------------


def test_criterion_2_hall_counts():
    t = time.perf_counter()
    basis = hall_basis(8)
    counts = [sum(w.order == k for w in basis) for k in range(1, 9)]
    dt = time.perf_counter() - t
    want = [witt_dimension(k) for k in range(1, 9)]
    assert record(2, counts == want and dt <= 1, f"Hall sizes {counts} vs Witt {want}, {dt:.3f}s (<= 1s)")


# -- 3 ----------------------------------------------------------------------


def stratification(sysdef):
    rep = scan_region(sysdef, GridSpec.cube(3, 1.0, 0.25, exclude_radius=1e-6))
    bad = []
    for x, c in zip(rep.points, rep.results):
        eps0 = 1e-9 * (1 + np.linalg.norm(x))
        if c is None:
            bad.append((x, "error"))
        elif abs(x[2]) > eps0:
            if c.tag is not Tag.GNonzero:
                bad.append((x, c.tag))
        elif x[1] != 0:
            if (c.tag, c.N) != (Tag.P2, 1):
                bad.append((x, c.tag, c.N))
        elif (c.tag, c.N) != (Tag.P2, 3):
            bad.append((x, c.tag, c.N))
    return rep, bad


def test_criterion_3_stratification():
    t = time.perf_counter()
    rep, bad = stratification(corollary2(3))
    dt = time.perf_counter() - t
    unc = rep.counts["Unclassified"]
    assert record(3, not bad and unc == 0 and dt <= 60,
                  f"{len(rep.points)} lattice points, {len(bad)} misclassified, {unc} Unclassified, {dt:.2f}s (<= 60s)")


# -- 4 ----------------------------------------------------------------------


def test_criterion_4_vanishing_derivatives():
    t = time.perf_counter()
    s = corollary2(3)
    rng = np.random.default_rng(4)
    failures = []
    for _ in range(20):
        x0 = [rng.uniform(-2, 2), rng.choice([-1, 1]) * rng.uniform(0.1, 2), 0.0]
        w = synthesize(s, x0, 0.25)
        d1, d2 = m_differences(s, x0, w.u1, w.rho, 1e-4, 2)
        if not (abs(d1) <= 1e-6 and d2 < 0):
            failures.append(("case1", x0, d1, d2))
    for _ in range(10):
        x0 = [rng.choice([-1, 1]) * rng.uniform(0.1, 2), 0.0, 0.0]
        w = synthesize(s, x0, 0.25)
        d = m_differences(s, x0, w.u1, w.rho, 1e-3, 4)
        if not (max(abs(v) for v in d[:3]) <= 1e-6 and d[3] < 0):
            failures.append(("case2", x0, d))
    dt = time.perf_counter() - t
    assert record(4, not failures and dt <= 60,
                  f"20 case-1 + 10 case-2 points, {len(failures)} failures, {dt:.2f}s (<= 60s)")


# -- 5 ----------------------------------------------------------------------


def test_criterion_5_witnesses():
    t = time.perf_counter()
    s = corollary2(3)
    rng = np.random.default_rng(5)
    pts = ball_points(rng, 50, 0.1, 2.0)
    failures = []
    for x0 in pts:
        for cap in (0.25, 0.01):
            try:
                w = synthesize(s, list(x0), cap)
            except Exception as exc:  # recorded as a failure, not raised
                failures.append((list(x0), cap, repr(exc)))
                continue
            if not (w.V_end < w.V_start and w.V_max_along <= 2 * w.V_start and w.duration <= cap * (1 + 1e-12)):
                failures.append((list(x0), cap))
    dt = time.perf_counter() - t
    assert record(5, not failures and dt <= 120,
                  f"50 states x 2 caps, {len(failures)} failures, {dt:.2f}s (<= 120s)")


# -- 6 ----------------------------------------------------------------------


def closed_loop_batch(sysdef, pts, horizon, delta=0.25):
    part = Partition.uniform(delta, horizon)
    return [run_closed_loop(sysdef, list(x0), part, R=2.0, radius=1e-2) for x0 in pts]


def test_criterion_6_closed_loop_convergence():
    t = time.perf_counter()
    s = corollary2(3)
    pts = ball_points(np.random.default_rng(6), 50, 0.0, 2.0, uniform_volume=True)
    runs = closed_loop_batch(s, pts, 200.0)
    rerun = closed_loop_batch(s, pts, 200.0)
    dt = time.perf_counter() - t
    converged = sum(r.converged for r in runs)
    monotone = all(
        all(V[i + 1] < V[i] for i in range(len(V) - 1) if np.linalg.norm(r.sample_states[i]) > 1e-2)
        for r in runs for V in [r.sample_V])
    identical = all(a.to_csv() == b.to_csv() for a, b in zip(runs, rerun))
    worst = max(float(np.linalg.norm(r.final)) for r in runs)
    ok = converged == len(runs) and monotone and identical and dt <= 600
    assert record(6, ok, f"{converged}/{len(runs)} runs reached |x| <= 1e-2 (worst final |x| {worst:.3g}), "
                         f"monotone V {monotone}, bit-identical rerun {identical}, {dt:.0f}s (<= 600s)")


# -- 7 ----------------------------------------------------------------------


def test_criterion_7_stability_trend():
    t = time.perf_counter()
    s = corollary2(3)
    deltas = [0.05, 0.1, 0.2, 0.5, 1.0]
    rep = stability_sweep(s, deltas, Partition.uniform(0.25, 20.0), samples=20, seed=7)
    dt = time.perf_counter() - t
    table = rep.table()
    ok = rep.is_monotone(slack=0.1) and not any(rep.failures.values())
    assert record(7, ok, "sup-peak " + ", ".join(f"{d:g}->{e:.3g}" for d, e in table) + f", {dt:.0f}s")


# -- 8 ----------------------------------------------------------------------


def test_criterion_8_negative_controls():
    t = time.perf_counter()
    # a = 0: x1 cannot move, so the convergence criterion must fail
    broken = corollary2(3, a="0")
    rng = np.random.default_rng(8)
    pts = [p for p in ball_points(rng, 5, 0.5, 2.0) if abs(p[0]) > 0.05]
    runs = closed_loop_batch(broken, pts, 200.0)
    a_zero_fails = not any(r.converged for r in runs) and all(
        np.all(r.states[:, 0] == x0[0]) for r, x0 in zip(runs, pts))
    # flipped bracket sign must fail the closed-form regression
    flip_ok, _ = bracket_regression(flip=True)
    flip_fails = not flip_ok
    # non-proper V leaves Unclassified points on the stratification grid
    s = corollary2(3)
    nonproper = SystemDef(s.f, s.g, sx.parse("x1^2/2", 3), strict=False)
    rep, bad = stratification(nonproper)
    nonproper_fails = rep.counts["Unclassified"] > 0
    dt = time.perf_counter() - t
    ok = a_zero_fails and flip_fails and nonproper_fails
    assert record(8, ok, f"a=0 non-convergence {a_zero_fails}, flipped bracket rejected {flip_fails}, "
                         f"non-proper V Unclassified={rep.counts['Unclassified']}, {dt:.0f}s")


# -- 9 ----------------------------------------------------------------------

PROPERTY_SELECTION = ("soundness or print_then_parse or matches_central_difference or antisymmetry "
                      "or jacobi or leibniz or flow_commutator or halving_step or counts_match_witt "
                      "or order_is_leaf_count")


def test_criterion_9_property_suites():
    t = time.perf_counter()
    proc = subprocess.run(
        [sys.executable, "-m", "pytest", "-q", "-p", "no:cacheprovider",
         str(TESTS / "test_symexpr.py"), str(TESTS / "test_liealg.py"), str(TESTS / "test_ode.py"),
         "-k", PROPERTY_SELECTION],
        capture_output=True, text=True, cwd=TESTS.parent)
    dt = time.perf_counter() - t
    tail = proc.stdout.strip().splitlines()[-1] if proc.stdout.strip() else proc.stderr[-200:]
    assert record(9, proc.returncode == 0 and dt <= 60, f"{tail}, {dt:.1f}s (<= 60s)")
