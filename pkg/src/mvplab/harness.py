"""Seeded MVP runs with exact per-episode regret and white-box diagnostics."""
from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import learner as mvp
from .errors import NoGapsError, ValidationError
from .mdp import DeterministicPolicy, TabularMdp, sample_trajectory
from .solver import OptimalSolution, VarianceProfile, policy_evaluation

OPTIMISM_TOL = 1e-9
DEFAULT_C4 = 1.0 / 6.0
CSV_HEADER = ("k", "instant_regret", "cum_regret", "opt_violations", "min_q_slack", "max_surplus")


@dataclass
class RegretTrace:
    """Per-episode records for one seeded run.

    Diagnostics in row ``k`` describe the learner tables after episode ``k``'s
    update, i.e. the tables that drive episode ``k + 1``. Without diagnostics
    ``min_q_slack`` and ``max_surplus`` are NaN and ``opt_violations`` is 0.
    """

    instant_regret: np.ndarray
    cum_regret: np.ndarray
    opt_violations: np.ndarray
    min_q_slack: np.ndarray
    max_surplus: np.ndarray
    counts: np.ndarray            # n_h^K(s, a), shape (H, S, A)
    seed: int
    K: int
    delta: float
    env_id: str = ""
    surplus_sums: np.ndarray = field(default=None, repr=False)  # per-episode sum of surpluses
    final_tables: dict = field(default=None, repr=False)       # learner q_table / v_table after K

    @property
    def k(self) -> np.ndarray:
        return np.arange(1, self.K + 1)

    @property
    def any_violation(self) -> bool:
        return bool(self.opt_violations.sum() > 0)

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(CSV_HEADER)
            for i in range(self.K):
                w.writerow((i + 1, repr(float(self.instant_regret[i])),
                            repr(float(self.cum_regret[i])), int(self.opt_violations[i]),
                            repr(float(self.min_q_slack[i])), repr(float(self.max_surplus[i]))))

    def counts_dict(self) -> dict:
        return {"seed": self.seed, "K": self.K, "delta": self.delta, "env": self.env_id,
                "n": self.counts.tolist()}


def read_trace_csv(path: str | Path) -> dict[str, np.ndarray]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return {key: np.array([float(r[key]) for r in rows]) for key in CSV_HEADER}


@dataclass(frozen=True)
class SurplusReport:
    surplus: np.ndarray
    clipped: np.ndarray
    threshold: np.ndarray


def surpluses(mdp: TabularMdp, snapshot) -> np.ndarray:
    """``Q_h(s,a) - (r_h(s,a) + P_h V_{h+1})`` using the true model.

    ``snapshot`` is a :class:`~mvplab.learner.LearnerState` or any object (or
    dict) exposing ``q_table`` of shape ``(H, S, A)`` and ``v_table`` of shape
    ``(H+1, S)``.
    """
    q = np.asarray(snapshot["q_table"] if isinstance(snapshot, dict) else snapshot.q_table)
    v = np.asarray(snapshot["v_table"] if isinstance(snapshot, dict) else snapshot.v_table)
    if q.shape != (mdp.H, mdp.S, mdp.A) or v.shape != (mdp.H + 1, mdp.S):
        raise ValidationError("snapshot dimensions do not match the MDP")
    backup = mdp.r_mean + np.einsum("hsat,ht->hsa", mdp.P, v[1:])
    return q - backup


def clip(value, threshold):
    """``value * 1{value >= threshold}``; elementwise for arrays."""
    if np.any(np.asarray(threshold) < 0):
        raise ValidationError("clip threshold must be nonnegative")
    if np.ndim(value) == 0 and np.ndim(threshold) == 0:
        return value if value >= threshold else 0.0
    return np.where(np.asarray(value) >= threshold, value, 0.0)


def clip_thresholds(sol: OptimalSolution, var_max_c: float, c4: float = DEFAULT_C4) -> np.ndarray:
    if sol.delta_min is None:
        raise NoGapsError()
    H = sol.q_star.shape[0]
    denom = min(H * H, var_max_c)
    ratio = sol.per_step_var / denom if denom > 0 else np.zeros_like(sol.per_step_var)
    return c4 * sol.delta_min * (ratio + 1.0 / H)


def clipped_surpluses(surplus: np.ndarray, sol: OptimalSolution, profile: VarianceProfile,
                      c4: float = DEFAULT_C4, use_exact: bool = False) -> SurplusReport:
    """Zero every surplus below its gap- and variance-scaled threshold.

    ``H^2 ∧ Var_max^c`` uses ``profile.var_max_c_future`` unless ``use_exact``.
    """
    vmc = profile.var_max_c_exact if use_exact else profile.var_max_c_future
    if vmc is None:
        raise ValidationError("exact conditional variance requested but not computed")
    thr = clip_thresholds(sol, vmc, c4)
    return SurplusReport(surplus=surplus, clipped=clip(surplus, thr), threshold=thr)


def run_experiment(mdp: TabularMdp, solution: OptimalSolution, K: int, delta: float, seed: int,
                   diagnostics: bool = True, constants: dict | None = None,
                   env_id: str = "") -> RegretTrace:
    """Run MVP for ``K`` episodes; a pure function of its arguments."""
    rng = np.random.default_rng(seed)
    state = mvp.init(mdp.S, mdp.A, mdp.H, K, delta, constants)
    q_star, v0_star = solution.q_star, solution.v0_star
    regret = np.empty(K)
    viol = np.zeros(K, dtype=np.int64)
    slack = np.full(K, np.nan)
    smax = np.full(K, np.nan)
    ssum = np.full(K, np.nan)
    values: dict[bytes, float] = {}
    if diagnostics:
        backup_r = mdp.r_mean
        P = mdp.P
    for i in range(K):
        policy = mvp.greedy_policy(state)
        key = policy.action_table.tobytes()
        v0 = values.get(key)
        if v0 is None:
            v0 = values[key] = policy_evaluation(mdp, policy).v0
        regret[i] = v0_star - v0
        mvp.update(state, sample_trajectory(mdp, policy, rng))
        if diagnostics:
            gap = state.q_table - q_star
            viol[i] = int(np.count_nonzero(gap < -OPTIMISM_TOL))
            slack[i] = gap.min()
            e = state.q_table - backup_r - np.einsum("hsat,ht->hsa", P, state.v_table[1:])
            smax[i] = e.max()
            ssum[i] = e.sum()
    return RegretTrace(
        instant_regret=regret, cum_regret=np.cumsum(regret), opt_violations=viol,
        min_q_slack=slack, max_surplus=smax, counts=state.n.copy(), seed=seed, K=K,
        delta=delta, env_id=env_id, surplus_sums=ssum,
        final_tables={"q_table": state.q_table.copy(), "v_table": state.v_table.copy()})


def _run_kwargs(kw):
    return run_experiment(**kw)


def run_seeds(mdp: TabularMdp, solution: OptimalSolution, K: int, delta: float,
              seeds: Sequence[int], jobs: int = 1, **kwargs) -> dict[int, RegretTrace]:
    """Run one experiment per seed, optionally in worker processes; keyed by seed."""
    jobs_kw = [dict(mdp=mdp, solution=solution, K=K, delta=delta, seed=s, **kwargs) for s in seeds]
    if jobs <= 1 or len(seeds) == 1:
        traces = [run_experiment(**kw) for kw in jobs_kw]
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            traces = list(pool.map(_run_kwargs, jobs_kw))
    return {t.seed: t for t in sorted(traces, key=lambda t: t.seed)}


def fit_log_regression(trace, window: tuple[int, int]) -> tuple[float, float, float]:
    """Least squares ``cum_regret(k) ~ slope * log k + intercept`` for ``k`` in the 1-based
    inclusive ``window``. A constant series gets slope 0 and R^2 = 0.
    """
    y_all = np.asarray(trace.cum_regret if hasattr(trace, "cum_regret") else trace, dtype=float)
    lo, hi = window
    if lo < 1 or hi > len(y_all) or hi - lo + 1 < 10:
        raise ValidationError(f"degenerate window {window} for K={len(y_all)}")
    k = np.arange(lo, hi + 1, dtype=float)
    y = y_all[lo - 1:hi]
    x = np.log(k)
    xc, yc = x - x.mean(), y - y.mean()
    ss_tot = float(yc @ yc)
    slope = float(xc @ yc / (xc @ xc))
    intercept = float(y.mean() - slope * x.mean())
    if ss_tot == 0.0:
        return 0.0, intercept, 0.0
    resid = y - (slope * x + intercept)
    return slope, intercept, float(1.0 - resid @ resid / ss_tot)


def aggregate_seeds(traces: Sequence[RegretTrace]) -> dict:
    """Pointwise mean / population stddev of cumulative regret and the fraction of runs
    with any optimism violation."""
    if not traces:
        raise ValidationError("no traces to aggregate")
    K, env = traces[0].K, traces[0].env_id
    if any(t.K != K or t.env_id != env for t in traces):
        raise ValidationError("shape mismatch: traces differ in K or environment")
    cum = np.stack([t.cum_regret for t in sorted(traces, key=lambda t: t.seed)])
    return {
        "K": K,
        "env": env,
        "seeds": sorted(t.seed for t in traces),
        "mean_cum_regret": cum.mean(axis=0),
        "std_cum_regret": cum.std(axis=0),
        "violation_rate": float(np.mean([t.any_violation for t in traces])),
    }


def growth_summary(mean_cum: np.ndarray, r2_threshold: float = 0.9) -> dict:
    """Log-fit over ``[K/2, K]`` and the sub-square-root growth check at ``K/4`` vs ``K``."""
    K = len(mean_cum)
    out: dict = {}
    if K >= 20:
        slope, intercept, r2 = fit_log_regression(mean_cum, (K // 2, K))
        out.update(log_fit_slope=slope, log_fit_intercept=intercept, log_fit_r2=r2,
                   log_fit_ok=bool(r2 >= r2_threshold))
    if K >= 4:
        q = K // 4
        late = float(mean_cum[K - 1] / math.sqrt(K))
        early = float(mean_cum[q - 1] / math.sqrt(q))
        out.update(regret_over_sqrt_K=late, regret_over_sqrt_K4=early,
                   sub_sqrt_growth=bool(late < early))
    return out


def summary_json(traces: Sequence[RegretTrace]) -> dict:
    agg = aggregate_seeds(traces)
    mean = agg["mean_cum_regret"]
    return {
        "K": agg["K"], "env": agg["env"], "seeds": agg["seeds"], "delta": traces[0].delta,
        "violation_rate": agg["violation_rate"],
        "final_cum_regret": {str(t.seed): float(t.cum_regret[-1]) for t in traces},
        "mean_final_cum_regret": float(mean[-1]),
        "std_final_cum_regret": float(agg["std_cum_regret"][-1]),
        **growth_summary(mean),
        "mean_cum_regret": [float(x) for x in mean],
        "std_cum_regret": [float(x) for x in agg["std_cum_regret"]],
    }


@dataclass(frozen=True)
class TailCheck:
    exceedance: float
    threshold: float
    sums: np.ndarray


def variance_tail_check(mdp: TabularMdp, solution: OptimalSolution, policy: DeterministicPolicy,
                        num_samples: int, delta: float, seed: int = 0) -> TailCheck:
    """Fraction of sampled trajectories whose summed per-step variance exceeds
    ``160 H^2 log(4(H+1)/delta)``."""
    rng = np.random.default_rng(seed)
    var = solution.per_step_var
    sums = np.empty(num_samples)
    for i in range(num_samples):
        t = sample_trajectory(mdp, policy, rng)
        sums[i] = sum(var[h, s, a] for h, (s, a) in enumerate(zip(t.states, t.actions)))
    thr = 160.0 * mdp.H ** 2 * math.log(4 * (mdp.H + 1) / delta)
    return TailCheck(exceedance=float(np.mean(sums > thr)), threshold=thr, sums=sums)


def monte_carlo_return(mdp: TabularMdp, policy: DeterministicPolicy, num_samples: int,
                       seed: int = 0) -> tuple[float, float]:
    """Sample mean and standard error of the episode return."""
    rng = np.random.default_rng(seed)
    g = np.array([sum(sample_trajectory(mdp, policy, rng).rewards) for _ in range(num_samples)])
    return float(g.mean()), float(g.std(ddof=1) / math.sqrt(num_samples))


def write_run_outputs(traces: dict[int, RegretTrace], out_dir: str | Path) -> dict:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for seed, t in traces.items():
        t.write_csv(out / f"trace_seed{seed}.csv")
        with open(out / f"counts_seed{seed}.json", "w") as fh:
            json.dump(t.counts_dict(), fh)
            fh.write("\n")
    summary = summary_json(list(traces.values()))
    with open(out / "summary.json", "w") as fh:
        json.dump(summary, fh, indent=1)
        fh.write("\n")
    return summary
