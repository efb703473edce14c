"""Exact dynamic programming for optimal values, gaps and variance quantities.

The ``brute_force_*`` functions enumerate every deterministic Markov policy and
never call the max-DP routines, so they serve as independent oracles for them.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator

import numpy as np

from .errors import EnumerationTooLarge, UnreachableError
from .mdp import DeterministicPolicy, TabularMdp

GAP_TOL = 1e-9
REACH_TOL = 1e-15
DEFAULT_ENUM_CAP = 10**6


@dataclass(frozen=True)
class OptimalSolution:
    q_star: np.ndarray        # (H, S, A)
    v_star: np.ndarray        # (H+1, S), last row zero
    v0_star: float
    gaps: np.ndarray          # (H, S, A)
    delta_min: float | None
    z_opt: tuple[tuple[int, int, int], ...]
    z_sub: tuple[tuple[int, int, int], ...]
    per_step_var: np.ndarray  # (H, S, A)

    @property
    def sub_mask(self) -> np.ndarray:
        return self.gaps > GAP_TOL

    def sub_gaps(self) -> np.ndarray:
        """Positive gaps in (h, s, a) lexicographic order."""
        return self.gaps[self.sub_mask]


@dataclass(frozen=True)
class VarianceProfile:
    var_max: float
    w_table: np.ndarray       # (H, S)
    var_max_c_future: float
    var_max_c_exact: float | None
    q_star_max: float


@dataclass(frozen=True)
class PolicyValue:
    v: np.ndarray             # (H+1, S)
    v0: float


def _expect_next(P_h: np.ndarray, v_next: np.ndarray) -> np.ndarray:
    return P_h @ v_next


def optimal_values(mdp: TabularMdp) -> OptimalSolution:
    """Backward induction with ``V[H] = 0`` and lowest-index argmax."""
    H, S, A = mdp.H, mdp.S, mdp.A
    P, r = mdp.P, mdp.r_mean
    V = np.zeros((H + 1, S))
    Q = np.zeros((H, S, A))
    var = np.zeros((H, S, A))
    for h in reversed(range(H)):
        ev = _expect_next(P[h], V[h + 1])
        Q[h] = r[h] + ev
        V[h] = Q[h].max(axis=1)
        dev = V[h + 1][None, None, :] - ev[:, :, None]
        var[h] = mdp.r_var[h] + np.einsum("sat,sat->sa", P[h], dev * dev)
    gaps = V[:H, :, None] - Q
    sub = gaps > GAP_TOL
    triples = [(h, s, a) for h in range(H) for s in range(S) for a in range(A)]
    z_sub = tuple(t for t in triples if sub[t])
    z_opt = tuple(t for t in triples if not sub[t])
    delta_min = float(gaps[sub].min()) if z_sub else None
    return OptimalSolution(
        q_star=Q, v_star=V, v0_star=float(mdp.mu @ V[0]), gaps=gaps,
        delta_min=delta_min, z_opt=z_opt, z_sub=z_sub, per_step_var=np.maximum(var, 0.0))


def policy_evaluation(mdp: TabularMdp, policy: DeterministicPolicy) -> PolicyValue:
    v = _policy_backward(mdp, mdp.r_mean, policy.action_table)
    return PolicyValue(v=v, v0=float(mdp.mu @ v[0]))


def _policy_backward(mdp: TabularMdp, reward: np.ndarray, table: np.ndarray) -> np.ndarray:
    H, S = mdp.H, mdp.S
    idx = np.arange(S)
    v = np.zeros((H + 1, S))
    for h in reversed(range(H)):
        a = table[h]
        v[h] = reward[h, idx, a] + mdp.P[h, idx, a] @ v[h + 1]
    return v


def greedy_policy_from_q(q: np.ndarray) -> DeterministicPolicy:
    return DeterministicPolicy(np.argmax(q, axis=2))


def var_max_unconditional(mdp: TabularMdp, sol: OptimalSolution) -> float:
    """Best-policy expected sum of per-step variances from the initial distribution."""
    U = _max_backward(mdp, sol.per_step_var)
    return float(mdp.mu @ U[0])


def _max_backward(mdp: TabularMdp, reward: np.ndarray) -> np.ndarray:
    U = np.zeros((mdp.H + 1, mdp.S))
    for h in reversed(range(mdp.H)):
        U[h] = (reward[h] + mdp.P[h] @ U[h + 1]).max(axis=1)
    return U


def reachable(mdp: TabularMdp) -> np.ndarray:
    """``(H, S)`` mask of states reachable at each step under some policy."""
    mask = np.zeros((mdp.H, mdp.S), dtype=bool)
    mask[0] = mdp.mu > 0
    for h in range(mdp.H - 1):
        support = (mdp.P[h] > 0).any(axis=1)          # (S, S'): any action
        mask[h + 1] = support[mask[h]].any(axis=0)
    return mask


def future_conditional_variance(mdp: TabularMdp, sol: OptimalSolution) -> tuple[np.ndarray, float]:
    """``W_h(s) = max_a [Var*_h(s,a) + P W_{h+1}]`` and its max over reachable ``(h, s)``."""
    W = _max_backward(mdp, sol.per_step_var)[: mdp.H]
    return W, float(W[reachable(mdp)].max())


def variance_profile(mdp: TabularMdp, sol: OptimalSolution, exact: bool = False,
                     cap: int = DEFAULT_ENUM_CAP) -> VarianceProfile:
    """Collect all variance quantities; ``exact`` adds the enumeration oracle (may raise)."""
    w, w_max = future_conditional_variance(mdp, sol)
    return VarianceProfile(
        var_max=var_max_unconditional(mdp, sol),
        w_table=w,
        var_max_c_future=w_max,
        var_max_c_exact=brute_force_var_max_conditional(mdp, sol, cap) if exact else None,
        q_star_max=float(sol.per_step_var.max()),
    )


# --- enumeration oracles --------------------------------------------------


def num_policies(mdp: TabularMdp) -> int:
    return mdp.A ** (mdp.H * mdp.S)


def iter_policy_batches(mdp: TabularMdp, cap: int = DEFAULT_ENUM_CAP,
                        batch: int = 4096) -> Iterator[np.ndarray]:
    """Yield ``(n, H, S)`` integer arrays covering every deterministic Markov policy."""
    total = num_policies(mdp)
    if total > cap:
        raise EnumerationTooLarge(
            f"too large: {total} deterministic policies exceeds the enumeration cap {cap}")
    digits = mdp.H * mdp.S
    weights = mdp.A ** np.arange(digits - 1, -1, -1, dtype=np.int64)
    for start in range(0, total, batch):
        ids = np.arange(start, min(start + batch, total), dtype=np.int64)
        table = (ids[:, None] // weights[None, :]) % mdp.A
        yield table.reshape(-1, mdp.H, mdp.S)


def _batched_backward(mdp: TabularMdp, reward: np.ndarray, pols: np.ndarray) -> np.ndarray:
    n, S = pols.shape[0], mdp.S
    idx = np.arange(S)[None, :]
    v = np.zeros((n, mdp.H + 1, S))
    for h in reversed(range(mdp.H)):
        a = pols[:, h, :]
        v[:, h] = reward[h][idx, a] + np.einsum("nst,nt->ns", mdp.P[h][idx, a], v[:, h + 1])
    return v


def _batched_forward(mdp: TabularMdp, reward: np.ndarray, pols: np.ndarray):
    """Occupancy ``alpha`` and reward-weighted occupancy ``beta``, both ``(n, H, S)``.

    ``beta[h, s] / alpha[h, s]`` is the expected reward accumulated over steps
    ``< h`` given ``s_h = s``.
    """
    n, S = pols.shape[0], mdp.S
    idx = np.arange(S)[None, :]
    alpha = np.zeros((n, mdp.H, S))
    beta = np.zeros((n, mdp.H, S))
    alpha[:, 0] = mdp.mu
    for h in range(mdp.H - 1):
        a = pols[:, h, :]
        P_pi = mdp.P[h][idx, a]
        alpha[:, h + 1] = np.einsum("ns,nst->nt", alpha[:, h], P_pi)
        carried = beta[:, h] + alpha[:, h] * reward[h][idx, a]
        beta[:, h + 1] = np.einsum("ns,nst->nt", carried, P_pi)
    return alpha, beta


def brute_force_optimal(mdp: TabularMdp, cap: int = DEFAULT_ENUM_CAP) -> float:
    best = -np.inf
    for pols in iter_policy_batches(mdp, cap):
        v = _batched_backward(mdp, mdp.r_mean, pols)
        best = max(best, float((v[:, 0] @ mdp.mu).max()))
    return best


def brute_force_var_max_unconditional(mdp: TabularMdp, sol: OptimalSolution,
                                      cap: int = DEFAULT_ENUM_CAP) -> float:
    best = -np.inf
    for pols in iter_policy_batches(mdp, cap):
        v = _batched_backward(mdp, sol.per_step_var, pols)
        best = max(best, float((v[:, 0] @ mdp.mu).max()))
    return best


def brute_force_var_max_conditional(mdp: TabularMdp, sol: OptimalSolution,
                                    cap: int = DEFAULT_ENUM_CAP) -> float:
    """Max over policies and on-policy-reachable ``(h, s)`` of the conditional total variance."""
    best = -np.inf
    for pols in iter_policy_batches(mdp, cap):
        future = _batched_backward(mdp, sol.per_step_var, pols)[:, : mdp.H]
        alpha, beta = _batched_forward(mdp, sol.per_step_var, pols)
        ok = alpha > REACH_TOL
        past = np.divide(beta, alpha, out=np.zeros_like(beta), where=ok)
        total = np.where(ok, past + future, -np.inf)
        best = max(best, float(total.max()))
    return best


def brute_force_max_future_variance(mdp: TabularMdp, sol: OptimalSolution,
                                    cap: int = DEFAULT_ENUM_CAP) -> float:
    """Max over policies and on-policy-reachable ``(h, s)`` of the future variance sum alone."""
    best = -np.inf
    for pols in iter_policy_batches(mdp, cap):
        future = _batched_backward(mdp, sol.per_step_var, pols)[:, : mdp.H]
        alpha, _ = _batched_forward(mdp, sol.per_step_var, pols)
        best = max(best, float(np.where(alpha > REACH_TOL, future, -np.inf).max()))
    return best


def conditional_total_variance(mdp: TabularMdp, sol: OptimalSolution,
                               policy: DeterministicPolicy, h: int, s: int) -> float:
    """``E^pi[sum_t Var*_t(s_t, a_t) | s_h = s]`` as past ratio plus future sum."""
    pols = policy.action_table[None]
    alpha, beta = _batched_forward(mdp, sol.per_step_var, pols)
    if alpha[0, h, s] <= REACH_TOL:
        raise UnreachableError(f"unreachable: P(s_{h} = {s}) = {alpha[0, h, s]:.3g} under policy")
    future = _batched_backward(mdp, sol.per_step_var, pols)[0, h, s]
    return float(beta[0, h, s] / alpha[0, h, s] + future)


def solve_report(mdp: TabularMdp, exact: bool = True, cap: int = DEFAULT_ENUM_CAP) -> dict:
    """JSON-ready summary of the solution and variance profile.

    The exact conditional variance is included only when enumeration fits the cap;
    otherwise ``var_max_c_exact`` is null and ``var_max_c_exact_status`` says why.
    """
    sol = optimal_values(mdp)
    prof = variance_profile(mdp, sol, exact=False)
    status = "skipped"
    exact_val = None
    if exact:
        try:
            exact_val = brute_force_var_max_conditional(mdp, sol, cap)
            status = "computed"
        except EnumerationTooLarge as exc:
            status = str(exc)
    return {
        "H": mdp.H, "S": mdp.S, "A": mdp.A,
        "v0_star": sol.v0_star,
        "v_star": sol.v_star.tolist(),
        "q_star": sol.q_star.tolist(),
        "gaps": sol.gaps.tolist(),
        "delta_min": sol.delta_min,
        "z_opt": [list(t) for t in sol.z_opt],
        "z_sub": [list(t) for t in sol.z_sub],
        "per_step_var": sol.per_step_var.tolist(),
        "per_step_var_min": float(sol.per_step_var.min()),
        "per_step_var_max": float(sol.per_step_var.max()),
        "q_star_max": prof.q_star_max,
        "var_max": prof.var_max,
        "w_table": prof.w_table.tolist(),
        "var_max_c_future": prof.var_max_c_future,
        "var_max_c_exact": exact_val,
        "var_max_c_exact_status": status,
    }
