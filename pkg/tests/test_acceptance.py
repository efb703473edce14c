"""End-to-end acceptance checks, one test per criterion.

Every test prints a single ``criterion N: PASS|FAIL`` line (visible even under
captured output) before asserting, so a plain ``pytest tests/test_acceptance.py``
shows the whole scorecard.
"""
import json
import math
import time

import numpy as np
import pytest

from mvplab import cli
from mvplab.bounds import CONSTANTS, inputs_from_report, upper_bound_value
from mvplab.envs import (LowerBoundSpec, make_lower_bound_instance, make_random_mdp,
                         uniform_gap_groups)
from mvplab.harness import (aggregate_seeds, fit_log_regression, run_experiment, run_seeds,
                            variance_tail_check)
from mvplab.mdp import DeterministicPolicy, state_marginals
from mvplab.solver import (brute_force_max_future_variance, brute_force_optimal,
                           brute_force_var_max_conditional, brute_force_var_max_unconditional,
                           iter_policy_batches, optimal_values, solve_report,
                           var_max_unconditional)

from conftest import TINY_SPEC


@pytest.fixture
def report(capsys):
    def _report(n: int, ok: bool, detail: str):
        with capsys.disabled():
            print(f"\ncriterion {n}: {'PASS' if ok else 'FAIL'} ({detail})")
        assert ok, detail
    return _report


def test_criterion_1_oracle_equivalence(report):
    t0 = time.perf_counter()
    rng = np.random.default_rng(2024)
    worst_v = worst_var = 0.0
    for i in range(200):
        S, A, H = (int(x) for x in rng.integers(1, [4, 3, 4]))
        mdp = make_random_mdp(S, A, H, sparsity=float(rng.uniform(0, 0.8)), seed=i)
        sol = optimal_values(mdp)
        worst_v = max(worst_v, abs(sol.v0_star - brute_force_optimal(mdp)))
        worst_var = max(worst_var, abs(var_max_unconditional(mdp, sol)
                                       - brute_force_var_max_unconditional(mdp, sol)))
    elapsed = time.perf_counter() - t0
    ok = worst_v <= 1e-10 and worst_var <= 1e-10 and elapsed < 10
    report(1, ok, f"max |dv0| {worst_v:.2e}, max |dvar| {worst_var:.2e}, {elapsed:.1f}s")


def test_criterion_2_conditional_variance_oracle(report):
    mdp, _ = make_lower_bound_instance(TINY_SPEC)
    sol = optimal_values(mdp)
    c = brute_force_var_max_conditional(mdp, sol)
    u = var_max_unconditional(mdp, sol)
    ok = abs(c - 71 / 64) <= 1e-10 and abs(u - 15 / 64) <= 1e-10
    report(2, ok, f"conditional {c!r} vs 71/64, unconditional {u!r} vs 15/64")


FIDELITY_SPECS = [
    TINY_SPEC,
    LowerBoundSpec(2, 3, 4, 4, uniform_gap_groups(2, 3, 4, [0, 0.3, 1.1])),
    LowerBoundSpec(3, 2, 5, 9, uniform_gap_groups(3, 2, 5, [0, 2.5])),
    LowerBoundSpec(2, 2, 8, 16, uniform_gap_groups(2, 2, 8, [0, 0.2])),
]


def test_criterion_3_construction_fidelity(report):
    err_gap = err_var = err_d = 0.0
    for spec in FIDELITY_SPECS:
        mdp, meta = make_lower_bound_instance(spec)
        sol = optimal_values(mdp)
        band = slice(1, spec.S + 1)
        err_gap = max(err_gap, np.abs(sol.gaps[:, band] - np.asarray(spec.gaps)[meta.sigma] / 4).max())
        p = meta.p_table
        err_var = max(err_var, np.abs(sol.per_step_var[:, band] - p * (1 - p) * spec.L).max())
        marg = state_marginals(mdp, DeterministicPolicy.constant(spec.H, mdp.S))
        err_d = max(err_d, np.abs(meta.d_table - marg[1:, band]).max())
    ok = max(err_gap, err_var, err_d) <= 1e-12
    report(3, ok, f"gap err {err_gap:.1e}, variance err {err_var:.1e}, d_table err {err_d:.1e}")


def test_criterion_4_separation(report):
    from mvplab.solver import variance_profile
    t0 = time.perf_counter()
    lows, highs = [], []
    for H in (8, 16, 32):
        for L in (1, 4, 16):
            mdp, _ = make_lower_bound_instance(
                LowerBoundSpec(2, 2, H, L, uniform_gap_groups(2, 2, H, [0, 0.2])))
            prof = variance_profile(mdp, optimal_values(mdp))
            lows.append(prof.var_max_c_future / L)
            highs.append(prof.var_max)
    elapsed = time.perf_counter() - t0
    ok = min(lows) >= 3 / 16 and max(highs) <= 3.0 and elapsed < 30
    report(4, ok, f"min var_max_c/L {min(lows):.4f} >= 0.1875, max var_max {max(highs):.4f} <= 3, "
                  f"{elapsed:.1f}s")


@pytest.mark.slow
def test_criterion_5_optimism(report):
    t0 = time.perf_counter()
    mdp, _ = make_lower_bound_instance(TINY_SPEC)
    sol = optimal_values(mdp)
    traces = [run_experiment(mdp, sol, 5000, 0.1, seed=s) for s in range(20)]
    rate = aggregate_seeds(traces)["violation_rate"]
    elapsed = time.perf_counter() - t0
    report(5, rate <= 0.55 and elapsed < 120, f"violation rate {rate:.2f} <= 0.55, {elapsed:.1f}s")


@pytest.mark.slow
def test_criterion_6_log_regret_regime(report):
    t0 = time.perf_counter()
    spec = LowerBoundSpec(2, 3, 8, 4, uniform_gap_groups(2, 3, 8, [0, 0.2, 0.4]))
    mdp, _ = make_lower_bound_instance(spec)
    sol = optimal_values(mdp)
    assert sol.delta_min == pytest.approx(0.2 / 4)   # solver gap is a quarter of the group gap
    K = 10**5
    traces = run_seeds(mdp, sol, K, 0.1, range(5), diagnostics=False)
    mean = aggregate_seeds(list(traces.values()))["mean_cum_regret"]
    _, _, r2 = fit_log_regression(mean, (K // 2, K))
    late, early = mean[K - 1] / math.sqrt(K), mean[K // 4 - 1] / math.sqrt(K // 4)
    elapsed = time.perf_counter() - t0
    ok = r2 >= 0.9 and late < early and elapsed < 600
    report(6, ok, f"R^2 {r2:.3f} >= 0.9, regret/sqrt(k) at K {late:.3f} < at K/4 {early:.3f}, "
                  f"{elapsed:.0f}s")


def test_criterion_7_variance_sum_bound(report):
    small = [TINY_SPEC, LowerBoundSpec(2, 2, 3, 4, uniform_gap_groups(2, 2, 3, [0, 0.5])),
             LowerBoundSpec(1, 3, 3, 9, uniform_gap_groups(1, 3, 3, [0, 1.0, 2.0]))]
    instances = [make_lower_bound_instance(s)[0] for s in small]
    instances += [make_random_mdp(3, 2, 3, 0.4, seed) for seed in range(5)]
    margin = -np.inf
    for mdp in instances:
        sol = optimal_values(mdp)
        margin = max(margin, brute_force_max_future_variance(mdp, sol) - mdp.H ** 2)
    mdp, _ = make_lower_bound_instance(TINY_SPEC)
    sol = optimal_values(mdp)
    delta = 0.1
    worst = max(variance_tail_check(mdp, sol, DeterministicPolicy(pols[0]), 10**4, delta, seed=i).exceedance
                for i, pols in enumerate(iter_policy_batches(mdp, batch=1)) if i < 8)
    ok = margin <= 1e-9 and worst <= delta
    report(7, ok, f"max(future sum - H^2) {margin:.3g} <= 1e-9, tail exceedance {worst:.4f} <= {delta}")


def test_criterion_8_kl_inequality(report):
    x = np.linspace(0.001, 0.999, 1001)
    lhs = (0.5 - x) ** 2 / (x * (1 - x))
    rhs = x * np.log(2 * x) + (1 - x) * np.log(2 - 2 * x)
    violation = float(max(0.0, (rhs - lhs).max()))
    report(8, violation <= 1e-12, f"max violation {violation:.2e}")


def test_criterion_9_determinism(report, tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"env": {"type": "lower_bound", "S": 1, "A": 2, "H": 2, "L": 4,
                                       "gaps": [0, 0.4, 0, 0.8]},
                               "K": 2000, "delta": 0.1, "seeds": [0, 1, 2]}))
    for d in ("a", "b"):
        assert cli.main(["run", str(cfg), "--out-dir", str(tmp_path / d)]) == 0
    names = sorted(p.name for p in (tmp_path / "a").iterdir())
    same = all((tmp_path / "a" / n).read_bytes() == (tmp_path / "b" / n).read_bytes() for n in names)
    report(9, same and len(names) == 7, f"{len(names)} files compared byte-for-byte")


def test_criterion_10_bound_constants(report):
    worst = 0.0
    for spec in FIDELITY_SPECS[:2]:
        rep = solve_report(make_lower_bound_instance(spec)[0])
        for K in (100, 10**4, 10**6):
            inp = inputs_from_report(rep, K, 0.05)
            lead, full = upper_bound_value(inp, "leading"), upper_bound_value(inp, "full-constants")
            for name, c in CONSTANTS.items():
                worst = max(worst, abs(getattr(full, name) / (c * getattr(lead, name)) - 1))
    report(10, worst <= 1e-9, f"max relative deviation {worst:.1e}")
