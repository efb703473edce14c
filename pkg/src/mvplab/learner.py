"""Monotonic Value Propagation: model-based optimistic learner with a three-term bonus."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError
from .mdp import DeterministicPolicy, Trajectory

DEFAULT_CONSTANTS = {"c1": 2.0, "c2": 2.0, "c3": 10.0}


def bonus_value(next_var, reward_var, n, H: int, iota: float,
                c1: float = 2.0, c2: float = 2.0, c3: float = 10.0):
    """``c1*sqrt(v*iota/n) + c2*sqrt(w*iota/n) + c3*H*iota/n`` with ``n`` floored at 1.

    Works elementwise on arrays.
    """
    n1 = np.maximum(n, 1)
    return (c1 * np.sqrt(next_var * iota / n1) + c2 * np.sqrt(reward_var * iota / n1)
            + c3 * H * iota / n1)


@dataclass
class LearnerState:
    S: int
    A: int
    H: int
    K: int
    delta: float
    c1: float
    c2: float
    c3: float
    iota: float
    n: np.ndarray = field(repr=False)               # (H, S, A)
    successor_counts: np.ndarray = field(repr=False)  # (H, S, A, S)
    reward_sum: np.ndarray = field(repr=False)      # theta, (H, S, A)
    reward_sq_sum: np.ndarray = field(repr=False)   # kappa, (H, S, A)
    q_table: np.ndarray = field(repr=False)         # (H, S, A)
    v_table: np.ndarray = field(repr=False)         # (H+1, S); row H stays zero
    episodes: int = 0

    def snapshot(self) -> dict:
        return {"q_table": self.q_table.tolist(), "v_table": self.v_table.tolist(),
                "n": self.n.tolist()}

    def copy(self) -> "LearnerState":
        arrays = {k: getattr(self, k).copy() for k in
                  ("n", "successor_counts", "reward_sum", "reward_sq_sum", "q_table", "v_table")}
        return LearnerState(self.S, self.A, self.H, self.K, self.delta, self.c1, self.c2,
                            self.c3, self.iota, episodes=self.episodes, **arrays)


def init(S: int, A: int, H: int, K: int, delta: float,
         constants: dict | None = None) -> LearnerState:
    if K < 1:
        raise ValidationError("invalid-parameter: K must be >= 1")
    if not 0 < delta:
        raise ValidationError("invalid-parameter: delta must be positive")
    c = {**DEFAULT_CONSTANTS, **(constants or {})}
    ratio = S * A * H * K / delta
    if ratio <= 1:
        raise ValidationError(f"invalid-parameter: iota = log({ratio:g}) would be <= 0")
    return LearnerState(
        S=S, A=A, H=H, K=K, delta=delta, c1=float(c["c1"]), c2=float(c["c2"]),
        c3=float(c["c3"]), iota=math.log(ratio),
        n=np.zeros((H, S, A), dtype=np.int64),
        successor_counts=np.zeros((H, S, A, S), dtype=np.int64),
        reward_sum=np.zeros((H, S, A)), reward_sq_sum=np.zeros((H, S, A)),
        q_table=np.zeros((H, S, A)), v_table=np.zeros((H + 1, S)),
    )


def greedy_policy(state: LearnerState) -> DeterministicPolicy:
    # np.argmax returns the first maximiser, i.e. lowest action index on ties
    return DeterministicPolicy(np.argmax(state.q_table, axis=2))


def _level_stats(state: LearnerState, h: int):
    n = state.n[h]
    n1 = np.maximum(n, 1)
    r_hat = state.reward_sum[h] / n1
    sigma_hat = state.reward_sq_sum[h] / n1
    p_hat = state.successor_counts[h] / n1[:, :, None]
    v_next = state.v_table[h + 1]
    ev = p_hat @ v_next
    dev = v_next[None, None, :] - ev[:, :, None]
    next_var = np.einsum("sat,sat->sa", p_hat, dev * dev)
    reward_var = np.maximum(sigma_hat - r_hat * r_hat, 0.0)
    return n, r_hat, ev, next_var, reward_var


def level_bonus(state: LearnerState, h: int) -> np.ndarray:
    n, _, _, next_var, reward_var = _level_stats(state, h)
    return bonus_value(next_var, reward_var, n, state.H, state.iota, state.c1, state.c2, state.c3)


def bonus(state: LearnerState, h: int, s: int, a: int) -> float:
    return float(level_bonus(state, h)[s, a])


def _recompute_level(state: LearnerState, h: int) -> None:
    n, r_hat, ev, next_var, reward_var = _level_stats(state, h)
    b = bonus_value(next_var, reward_var, n, state.H, state.iota, state.c1, state.c2, state.c3)
    q = np.minimum(r_hat + ev + b, state.H)
    state.q_table[h] = q
    state.v_table[h] = q.max(axis=1)


def update(state: LearnerState, traj: Trajectory) -> LearnerState:
    """Absorb one episode, then recompute every ``(s, a)`` at each level from ``H-1`` down to 0.

    Mutates and returns ``state``.
    """
    H = state.H
    if len(traj) != H:
        raise ValidationError(f"length-mismatch: trajectory has {len(traj)} steps, H={H}")
    states, actions, rewards = traj.states, traj.actions, traj.rewards
    for h in reversed(range(H)):
        s, a, r = states[h], actions[h], rewards[h]
        state.n[h, s, a] += 1
        state.reward_sum[h, s, a] += r
        state.reward_sq_sum[h, s, a] += r * r
        if h < H - 1:
            state.successor_counts[h, s, a, states[h + 1]] += 1
        _recompute_level(state, h)
    state.episodes += 1
    return state
