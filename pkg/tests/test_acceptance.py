"""End-to-end acceptance checks, one test per criterion.

Each test records a PASS/FAIL line (shown in the terminal summary) and
fails if its criterion does not hold at the stated tolerance.
"""

import math
import os
import subprocess
import sys
import time
from pathlib import Path

import numpy as np
from scipy import stats

from locpriv.bounds import (
    FANO_TOL,
    FanoInputs,
    ball_prob_bound,
    binary_entropy,
    bound_report,
    hamming_ball_logsize,
    loose_fano_bound,
    max_subset_marginal,
    mi_bound_gaussian,
    tight_fano_bound,
)
from locpriv.estimators import constant_success_exact, map_estimate, prior_estimate
from locpriv.markov import marginals, matrix_powers, sample_trajectory, spectral_gap, synthetic_prior
from locpriv.mechanism import Mechanism, Scenario, observe, random_schedule
from locpriv.montecarlo import CONSTANT, CONSTANT_MAX, MAP, PRIOR, SweepSpec, attack, estimate_loss, run_point, sweep
from locpriv.oracle import brute_ball_prob, brute_max_subset_marginal, brute_posterior_argmax, brute_prior_argmax

from conftest import random_prior

FIXTURE = Path(__file__).parent / "data" / "checkins.tsv"
ESTIMATORS = (MAP, PRIOR, CONSTANT_MAX)


def test_viterbi_matches_enumeration(verdict):
    gen = np.random.default_rng(1)
    start = time.perf_counter()
    bad = []
    for i in range(200):
        M, T = int(gen.integers(2, 5)), int(gen.integers(2, 6))
        mech = Mechanism.raw() if i % 2 == 0 else Mechanism.gaussian(float(gen.uniform(0.3, 3)))
        prior = random_prior(gen, M, stationary=bool(gen.integers(2)))
        scen = Scenario(tuple(gen.integers(0, M, size=T)), tuple(gen.integers(0, 4, size=T)))
        y = observe(sample_trajectory(prior, T, 1000 + i), scen, mech, 2000 + i)
        for got, want in (
            (map_estimate(prior, y, scen, mech), brute_posterior_argmax(prior, y, scen, mech)),
            (prior_estimate(prior, T), brute_prior_argmax(prior, T)),
        ):
            if not np.array_equal(got.traj, want.traj) or abs(got.log_score - want.log_score) > 1e-10:
                bad.append(i)
    elapsed = time.perf_counter() - start
    verdict(1, not bad and elapsed < 10, f"200 instances, {len(bad)} mismatches, {elapsed:.2f}s (< 10s)")


def test_subset_marginal_matches_enumeration(verdict):
    gen = np.random.default_rng(2)
    start = time.perf_counter()
    worst = 0.0
    for _ in range(100):
        M, T = int(gen.integers(1, 4)), int(gen.integers(1, 6))
        prior = random_prior(gen, M)
        table = max_subset_marginal(prior, None, T)
        for m in range(1, T + 1):
            worst = max(worst, abs(table[m] - brute_max_subset_marginal(prior, T, m)))
    violations = 0
    for _ in range(10_000):
        M, T = int(gen.integers(2, 6)), int(gen.integers(2, 9))
        f = max_subset_marginal(random_prior(gen, M), None, T).log_f
        violations += int(np.any(np.diff(f) > 1e-12))
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-10 and violations == 0 and elapsed < 30
    verdict(2, ok, f"max |diff| {worst:.2e} (<= 1e-10), {violations} monotonicity violations in 1e4 chains, {elapsed:.1f}s (< 30s)")


def test_ball_bound_is_sound(verdict):
    gen = np.random.default_rng(3)
    unsound, inexact = 0, 0
    for _ in range(100):
        M, T = int(gen.integers(2, 4)), int(gen.integers(2, 5))
        s = int(gen.integers(0, min(2, T - 1) + 1))
        prior = random_prior(gen, M)
        bound = math.exp(ball_prob_bound(prior, None, T, s))
        exact = brute_ball_prob(prior, T, s)
        unsound += int(bound < exact - 1e-12)
        if s == 0:
            inexact += int(abs(bound - exact) > 1e-12)
    verdict(3, unsound == 0 and inexact == 0, f"100 instances, {unsound} below enumeration, {inexact} inexact at s=0")


def _grid_smallest(values, grid):
    ok = np.flatnonzero(values >= 0)
    return 1.0 if ok.size == 0 else float(grid[ok[0]])


def test_fano_solvers_match_grid(verdict):
    gen = np.random.default_rng(4)
    grid = np.linspace(0.0, 1.0, 1_000_001)
    with np.errstate(divide="ignore", invalid="ignore"):
        h = np.nan_to_num(-grid * np.log(grid) - (1 - grid) * np.log1p(-grid))
    worst, bad_constraint = 0.0, 0
    for _ in range(100):
        M, T = int(gen.integers(2, 50)), int(gen.integers(2, 15))
        s = int(gen.integers(0, T))
        t_log_m = T * math.log(M)
        h_x = float(gen.uniform(0, t_log_m))
        i_tilde = float(gen.uniform(0, 1.5 * h_x))
        log_q = -float(gen.uniform(0, t_log_m))
        inp = FanoInputs(h_x, i_tilde, hamming_ball_logsize(T, M, s), t_log_m, log_q)
        L = t_log_m - inp.log_ns
        L = L + math.log(-math.expm1(-L))

        def g_loose(p):
            return binary_entropy(p) + p * L - (h_x - i_tilde - inp.log_ns)

        def g_tight(p):
            return binary_entropy(p) + (1 - p) * log_q + i_tilde

        for g, got, want in (
            (g_loose, loose_fano_bound(inp)[0], _grid_smallest(h + grid * L - (h_x - i_tilde - inp.log_ns), grid)),
            (g_tight, tight_fano_bound(i_tilde, log_q)[0], _grid_smallest(h + (1 - grid) * log_q + i_tilde, grid)),
        ):
            worst = max(worst, abs(got - want))
            if got < 1.0 and g(got) < 0:
                bad_constraint += 1
            if got > 10 * FANO_TOL and g(got - 10 * FANO_TOL) >= 0:
                bad_constraint += 1
    verdict(4, worst <= 1e-6 and bad_constraint == 0, f"max |solver - grid| {worst:.2e} (<= 1e-6), {bad_constraint} constraint violations")


def test_bounds_dominate_attacks(verdict):
    M, T, tau = 20, 8, 0.1
    prior = synthetic_prior(M, tau)
    scen = Scenario(random_schedule(M, T, 0))
    cache = matrix_powers(prior.P, T)
    failures = []
    for mech in (Mechanism.raw(), Mechanism.gaussian(1.0)):
        for s in (0, 2, 4):
            rep = bound_report(prior, scen, mech, s, cache=cache)
            losses = attack(prior, scen, mech, s, 2000, 0)
            for k in ESTIMATORS:
                floor = losses[k].mean - 3 * losses[k].stderr
                if rep.loose_ub < floor or rep.tight_ub < floor:
                    failures.append(f"{mech} s={s} {k}")
    verdict(5, not failures, f"12 estimator/grid points, violations: {failures or 'none'}")


def test_constant_estimator_unbiased(verdict):
    # a 3-stderr Wald check needs n*p >= 10 and n*(1-p) >= 10; at the boundary the
    # plug-in stderr collapses to 0, so draws outside that range are redrawn
    n = 10_000
    gen = np.random.default_rng(6)
    within, drawn = 0, 0
    for i in range(100):
        while True:
            drawn += 1
            M, T = int(gen.integers(2, 6)), int(gen.integers(2, 9))
            s, l = int(gen.integers(0, T)), int(gen.integers(M))
            prior = random_prior(gen, M, stationary=bool(gen.integers(2)))
            exact = constant_success_exact(prior, l, T, s)
            if min(exact, 1 - exact) * n >= 10:
                break
        est = estimate_loss(prior, Scenario((0,) * T), Mechanism.raw(), CONSTANT, s, n, 100 + i, location=l)
        within += int(abs(est.mean - exact) <= 3 * est.stderr)
    verdict(6, within >= 99, f"{within}/100 configurations within 3 stderr (>= 99), {drawn} drawn")


def _monotone(seq, increasing):
    pairs = zip(seq, seq[1:])
    return all(a <= b for a, b in pairs) if increasing else all(a >= b for a, b in pairs)


def test_attack_trends(verdict):
    start = time.perf_counter()
    by_m = [r.losses[MAP].mean for r in sweep(SweepSpec("M", (10, 50, 100), T=10, s=5))]
    by_s = sweep(SweepSpec("s", tuple(range(10)), M=100, T=10))
    s_ok = all(_monotone([r.losses[k].successes for r in by_s], True) for k in ESTIMATORS)
    by_t = [r.losses[MAP].mean for r in sweep(SweepSpec("T", (4, 6, 8, 10), M=100, s_rule="T-2"))]
    rep = by_s[0].bounds
    elapsed = time.perf_counter() - start
    parts = {
        "a": _monotone(by_m, False),
        "b": s_ok,
        "c": _monotone(by_t, True),
        "d": rep.tight_ub < rep.loose_ub,
    }
    detail = (
        f"(a) MAP over M {by_m}; (b) monotone in s: {s_ok}; (c) MAP over T {by_t}; "
        f"(d) tight {rep.tight_ub:.4f} < loose {rep.loose_ub:.4f}; {elapsed:.0f}s (< 300s)"
    )
    verdict(7, all(parts.values()) and elapsed < 300, detail)


def test_tight_bound_falls_with_spectral_gap(verdict):
    M, T, s = 100, 10, 5
    gaps, ubs = [], []
    for i, tau in enumerate(np.geomspace(0.02, 1.0, 50)):
        prior = synthetic_prior(M, float(tau))
        scen = Scenario(random_schedule(M, T, i))
        gaps.append(spectral_gap(prior.P))
        ubs.append(bound_report(prior, scen, Mechanism.raw(), s).tight_ub)
    rho = stats.spearmanr(gaps, ubs).statistic
    verdict(8, rho < -0.3, f"Spearman(tight UB, spectral gap) = {rho:.3f} (< -0.3) over 50 users")


def test_gaussian_information_decreases_with_noise(verdict):
    gen = np.random.default_rng(9)
    priors = [synthetic_prior(20, 0.1)] + [random_prior(gen, 5, stationary=bool(k % 2)) for k in range(10)]
    decreasing, worst = True, 0.0
    for prior in priors:
        c = tuple(gen.integers(0, prior.M, size=6))
        vals = [mi_bound_gaussian(prior, c, sigma) for sigma in (0.5, 1, 2, 4, 8)]
        decreasing &= all(a > b for a, b in zip(vals, vals[1:]))
        p = marginals(prior, len(c))[np.arange(len(c)), c]
        limit = sum(binary_entropy(v) for v in p)
        worst = max(worst, abs(mi_bound_gaussian(prior, c, 1e-4) - limit))
    verdict(9, decreasing and worst <= 1e-3, f"strictly decreasing: {decreasing}; |I(1e-4) - sum H(p_t)| max {worst:.2e} (<= 1e-3)")


def test_performance(verdict):
    prior = synthetic_prior(100, 0.1)
    start = time.perf_counter()
    max_subset_marginal(prior, matrix_powers(prior.P, 10), 10)
    table_s = time.perf_counter() - start
    start = time.perf_counter()
    run_point(100, 10, 0.1, 5, Mechanism.raw(), 1000, 0)
    row_s = time.perf_counter() - start
    verdict(10, table_s < 5 and row_s < 60, f"subset-marginal table {table_s:.2f}s (< 5s), default sweep row {row_s:.2f}s (< 60s)")


def _pipeline(workdir: Path) -> dict[str, bytes]:
    workdir.mkdir()
    env = {**os.environ, "PYTHONHASHSEED": "0"}
    steps = [
        ["fit", "--input", str(FIXTURE), "--seed", "7", "--out", "bundle.json"],
        ["attack", "--priors", "bundle.json", "--seed", "7", "--s", "1", "--mechanism", "gaussian", "--out", "attack.json"],
        ["bound", "--priors", "bundle.json", "--seed", "7", "--s", "1", "--out", "bound.json"],
    ]
    for argv in steps:
        subprocess.run([sys.executable, "-m", "locpriv.cli", *argv], cwd=workdir, env=env, check=True)
    return {name: (workdir / name).read_bytes() for name in ("bundle.json", "attack.json", "bound.json")}


def test_pipeline_is_deterministic(verdict, tmp_path):
    first = _pipeline(tmp_path / "run1")
    second = _pipeline(tmp_path / "run2")
    same = [name for name in first if first[name] == second[name]]
    verdict(11, len(same) == 3, f"byte-identical outputs: {same}")
