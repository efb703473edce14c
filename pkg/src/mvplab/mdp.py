"""Time-inhomogeneous tabular MDPs with finite-support rewards.

Steps, states and actions are 0-based throughout: step ``h`` runs over
``0..H-1`` and ``V[H]`` is the terminal zero value.
"""
from __future__ import annotations

import json
from bisect import bisect_right
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ValidationError

ROW_TOL = 1e-12
PATH_REWARD_TOL = 1e-9


@dataclass(frozen=True)
class FiniteRewardDist:
    """Categorical reward distribution given as ``(value, prob)`` atoms."""

    atoms: tuple[tuple[float, float], ...]

    @classmethod
    def point(cls, value: float) -> "FiniteRewardDist":
        return cls(((float(value), 1.0),))

    @classmethod
    def bernoulli(cls, value: float, p: float) -> "FiniteRewardDist":
        return cls(((float(value), float(p)), (0.0, 1.0 - float(p))))

    def mean(self) -> float:
        return float(sum(v * p for v, p in self.atoms))

    def second_moment(self) -> float:
        return float(sum(v * v * p for v, p in self.atoms))

    def variance(self) -> float:
        m = self.mean()
        return float(sum(p * (v - m) ** 2 for v, p in self.atoms))

    def max_value(self) -> float:
        """Largest atom carrying positive probability."""
        vals = [v for v, p in self.atoms if p > 0]
        return max(vals) if vals else 0.0


@dataclass(frozen=True)
class TabularMdp:
    """Ground-truth episodic environment.

    ``transitions[h][s][a]`` is a tuple of ``(next_state, prob)`` pairs and
    ``rewards[h][s][a]`` a :class:`FiniteRewardDist`. Construction does not
    validate; use :func:`validate_mdp`.
    """

    H: int
    S: int
    A: int
    transitions: tuple
    rewards: tuple
    init_dist: tuple[float, ...]

    @cached_property
    def P(self) -> np.ndarray:
        """Dense transition tensor of shape ``(H, S, A, S)``."""
        P = np.zeros((self.H, self.S, self.A, self.S))
        for h in range(self.H):
            for s in range(self.S):
                for a in range(self.A):
                    for s2, p in self.transitions[h][s][a]:
                        P[h, s, a, s2] += p
        return P

    @cached_property
    def r_mean(self) -> np.ndarray:
        return self._reward_table(FiniteRewardDist.mean)

    @cached_property
    def r_var(self) -> np.ndarray:
        return self._reward_table(FiniteRewardDist.variance)

    @cached_property
    def mu(self) -> np.ndarray:
        return np.asarray(self.init_dist, dtype=float)

    def _reward_table(self, fn) -> np.ndarray:
        out = np.empty((self.H, self.S, self.A))
        for h in range(self.H):
            for s in range(self.S):
                for a in range(self.A):
                    out[h, s, a] = fn(self.rewards[h][s][a])
        return out

    @cached_property
    def _sampler(self):
        # cumulative tables as plain lists: bisect on short lists beats numpy here
        def cum(pairs):
            keys, acc, c = [], [], 0.0
            for k, p in pairs:
                c += p
                keys.append(k)
                acc.append(c)
            return keys, acc

        trans = [[[cum(self.transitions[h][s][a]) for a in range(self.A)]
                  for s in range(self.S)] for h in range(self.H)]
        rew = [[[cum(self.rewards[h][s][a].atoms) for a in range(self.A)]
                for s in range(self.S)] for h in range(self.H)]
        return cum(enumerate(self.init_dist)), trans, rew

    def to_dict(self) -> dict:
        return {
            "H": self.H,
            "S": self.S,
            "A": self.A,
            "transitions": [[[[[int(s2), float(p)] for s2, p in row] for row in sa]
                             for sa in step] for step in self.transitions],
            "rewards": [[[[[float(v), float(p)] for v, p in dist.atoms] for dist in sa]
                         for sa in step] for step in self.rewards],
            "init_dist": [float(p) for p in self.init_dist],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TabularMdp":
        try:
            H, S, A = int(d["H"]), int(d["S"]), int(d["A"])
            transitions = tuple(
                tuple(tuple(tuple((int(s2), float(p)) for s2, p in row) for row in sa)
                      for sa in step)
                for step in d["transitions"])
            rewards = tuple(
                tuple(tuple(FiniteRewardDist(tuple((float(v), float(p)) for v, p in dist))
                            for dist in sa)
                      for sa in step)
                for step in d["rewards"])
            init = tuple(float(p) for p in d["init_dist"])
        except (KeyError, TypeError, ValueError) as exc:
            raise ValidationError(f"malformed MDP document: {exc!r}") from exc
        return cls(H, S, A, transitions, rewards, init)


@dataclass(frozen=True)
class DeterministicPolicy:
    """Markov deterministic policy; ``action_table[h, s]`` is an action index."""

    action_table: np.ndarray

    def __post_init__(self):
        table = np.asarray(self.action_table, dtype=np.int64)
        if table.ndim != 2:
            raise ValidationError("action_table must be 2-d (H, S)")
        object.__setattr__(self, "action_table", table)

    @classmethod
    def constant(cls, H: int, S: int, action: int = 0) -> "DeterministicPolicy":
        return cls(np.full((H, S), action, dtype=np.int64))

    def check(self, mdp: TabularMdp) -> None:
        t = self.action_table
        if t.shape != (mdp.H, mdp.S):
            raise ValidationError(f"policy shape {t.shape} != {(mdp.H, mdp.S)}")
        if t.size and (t.min() < 0 or t.max() >= mdp.A):
            raise ValidationError("policy action out of range")


@dataclass(frozen=True)
class Trajectory:
    states: tuple[int, ...]
    actions: tuple[int, ...]
    rewards: tuple[float, ...]

    def __len__(self) -> int:
        return len(self.states)

    @property
    def steps(self) -> list[tuple[int, int, float]]:
        return list(zip(self.states, self.actions, self.rewards))


@dataclass(frozen=True)
class Violation:
    check: str
    site: tuple | None
    detail: str

    def __str__(self) -> str:
        where = "" if self.site is None else f" at (h,s,a)={self.site}"
        return f"{self.check}{where}: {self.detail}"


def max_total_reward(mdp: TabularMdp) -> float:
    """Largest summed reward over trajectories with positive probability.

    Backward recursion ``M_h(s) = max_a [max atom + max_{s' in supp} M_{h+1}(s')]``,
    then the max over the support of the initial distribution.
    """
    M_next = [0.0] * mdp.S
    for h in reversed(range(mdp.H)):
        M = [0.0] * mdp.S
        for s in range(mdp.S):
            best = -np.inf
            for a in range(mdp.A):
                succ = [M_next[s2] for s2, p in mdp.transitions[h][s][a] if p > 0]
                val = mdp.rewards[h][s][a].max_value() + (max(succ) if succ else 0.0)
                best = max(best, val)
            M[s] = best
        M_next = M
    starts = [M_next[s] for s, p in enumerate(mdp.init_dist) if p > 0]
    return float(max(starts)) if starts else 0.0


def validate_mdp(mdp: TabularMdp) -> list[Violation]:
    """Return every invariant violation found; an empty list means valid."""
    out: list[Violation] = []
    H, S, A = mdp.H, mdp.S, mdp.A
    if H < 1 or S < 1 or A < 1:
        return [Violation("dimensions", None, f"H={H}, S={S}, A={A} must be positive")]
    for name, table in (("transitions", mdp.transitions), ("rewards", mdp.rewards)):
        if len(table) != H or any(len(step) != S for step in table) or any(
                len(sa) != A for step in table for sa in step):
            return [Violation("shape", None, f"{name} is not indexed [H][S][A]")]
    if len(mdp.init_dist) != S:
        return [Violation("shape", None, f"init_dist has length {len(mdp.init_dist)} != S={S}")]

    for h in range(H):
        for s in range(S):
            for a in range(A):
                site = (h, s, a)
                row = mdp.transitions[h][s][a]
                if any(p < 0 for _, p in row):
                    out.append(Violation("negative probability", site, "transition"))
                if any(not 0 <= s2 < S for s2, _ in row):
                    out.append(Violation("next state out of range", site, str(row)))
                tot = sum(p for _, p in row)
                if abs(tot - 1.0) > ROW_TOL:
                    out.append(Violation("row sum", site, f"transition row sums to {tot!r}"))
                atoms = mdp.rewards[h][s][a].atoms
                if any(p < 0 for _, p in atoms):
                    out.append(Violation("negative probability", site, "reward atom"))
                rtot = sum(p for _, p in atoms)
                if abs(rtot - 1.0) > ROW_TOL:
                    out.append(Violation("reward probability sum", site, f"atoms sum to {rtot!r}"))
                bad = [v for v, _ in atoms if not 0.0 <= v <= H]
                if bad:
                    out.append(Violation("reward range", site, f"values {bad} outside [0, {H}]"))
    if any(p < 0 for p in mdp.init_dist):
        out.append(Violation("negative probability", None, "init_dist"))
    itot = sum(mdp.init_dist)
    if abs(itot - 1.0) > ROW_TOL:
        out.append(Violation("init sum", None, f"init_dist sums to {itot!r}"))
    if not out:
        m = max_total_reward(mdp)
        if m > H + PATH_REWARD_TOL:
            out.append(Violation("total reward exceeds H", None,
                                 f"max path reward {m!r} > H={H}"))
    return out


def require_valid(mdp: TabularMdp) -> TabularMdp:
    problems = validate_mdp(mdp)
    if problems:
        raise ValidationError("invalid MDP: " + "; ".join(map(str, problems[:5])))
    return mdp


def sample_trajectory(mdp: TabularMdp, policy: DeterministicPolicy,
                      rng: np.random.Generator) -> Trajectory:
    """Roll out one episode; a pure function of the generator state."""
    init, trans, rew = mdp._sampler
    table = policy.action_table
    u = rng.random(2 * mdp.H + 1)
    s = _draw(init, u[0])
    states, actions, rewards = [], [], []
    for h in range(mdp.H):
        a = int(table[h, s])
        states.append(s)
        actions.append(a)
        rewards.append(float(_draw(rew[h][s][a], u[2 * h + 1])))
        s = _draw(trans[h][s][a], u[2 * h + 2])
    return Trajectory(tuple(states), tuple(actions), tuple(rewards))


def _draw(table, u: float):
    keys, acc = table
    i = bisect_right(acc, u * acc[-1])
    return keys[min(i, len(keys) - 1)]


def state_marginals(mdp: TabularMdp, policy: DeterministicPolicy) -> np.ndarray:
    """Occupancy ``d[h, s] = P(s_h = s)`` for ``h = 0..H``; row ``H`` is after the last step."""
    d = np.zeros((mdp.H + 1, mdp.S))
    d[0] = mdp.mu
    idx = np.arange(mdp.S)
    for h in range(mdp.H):
        P_pi = mdp.P[h, idx, policy.action_table[h]]
        d[h + 1] = d[h] @ P_pi
    return d


def load_mdp(path: str | Path) -> TabularMdp:
    """Read an MDP JSON file. Raises ``json.JSONDecodeError`` on bad syntax."""
    with open(path) as fh:
        return TabularMdp.from_dict(json.load(fh))


def save_mdp(mdp: TabularMdp, path: str | Path) -> None:
    with open(path, "w") as fh:
        json.dump(mdp.to_dict(), fh)
        fh.write("\n")


def dense_from_arrays(P: np.ndarray, rewards: Sequence, init_dist: Sequence[float]) -> TabularMdp:
    """Build an MDP from a dense ``(H, S, A, S)`` tensor, dropping zero-probability successors."""
    H, S, A, _ = P.shape
    transitions = tuple(
        tuple(tuple(tuple((int(s2), float(P[h, s, a, s2])) for s2 in np.flatnonzero(P[h, s, a]))
                    for a in range(A)) for s in range(S)) for h in range(H))
    return TabularMdp(H, S, A, transitions, tuple(tuple(tuple(r) for r in step) for step in rewards),
                      tuple(float(p) for p in init_dist))
