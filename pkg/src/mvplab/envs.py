"""Environment generators: the gap/variance lower-bound family plus test fixtures."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .mdp import FiniteRewardDist, TabularMdp, max_total_reward


@dataclass(frozen=True)
class LowerBoundSpec:
    """Parameters of the hard family: ``S`` bandit states, ``S*A*H`` gaps, target variance ``L``."""

    S: int
    A: int
    H: int
    L: float
    gaps: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "gaps", tuple(float(g) for g in self.gaps))

    def validate(self) -> None:
        S, A, H, L = self.S, self.A, self.H, self.L
        if min(S, A, H) < 1:
            raise ValidationError(f"S, A, H must be positive (got S={S}, A={A}, H={H})")
        if not 1 <= L <= H * H:
            raise ValidationError(f"target variance L={L} must lie in [1, H^2] = [1, {H * H}]")
        if len(self.gaps) != S * A * H:
            raise ValidationError(f"expected S*A*H = {S * A * H} gaps, got {len(self.gaps)}")
        if any(g < 0 for g in self.gaps):
            raise ValidationError("gaps must be nonnegative")
        zeros = sum(1 for g in self.gaps if g == 0)
        if zeros < S * H:
            raise ValidationError(
                f"realizability violated: need at least S*H = {S * H} zero gaps, got {zeros}")
        root = math.sqrt(L)
        bad = [g for g in self.gaps if g >= root]
        if bad:
            raise ValidationError(
                f"assumption gap < sqrt(L) = {root:g} violated by gaps {bad}")


@dataclass(frozen=True)
class LowerBoundMeta:
    """Construction bookkeeping; all tables are indexed ``[h, i, ...]`` with 0-based ``h``
    and bandit index ``i`` in ``0..S-1`` (MDP state ``i + 1``).

    ``d_table[h, i]`` is the probability of occupying bandit ``i`` at step ``h + 1``.
    """

    sigma: np.ndarray    # (H, S, A) -> index into spec.gaps
    p_table: np.ndarray  # (H, S, A)
    d_table: np.ndarray  # (H, S)

    def to_dict(self) -> dict:
        return {"sigma": self.sigma.tolist(), "p_table": self.p_table.tolist(),
                "d_table": self.d_table.tolist()}


def main_state() -> int:
    return 0


def bandit_state(i: int) -> int:
    return i + 1


def terminal_state(S: int) -> int:
    return S + 1


def assign_groups(gaps, S: int, A: int, H: int) -> np.ndarray:
    """Map each ``(h, i, a)`` to a gap index so every group holds a zero.

    The first ``S*H`` zeros (by index) seed one group each at action 0; the
    remaining indices fill the other slots in index order.
    """
    zeros = [j for j, g in enumerate(gaps) if g == 0][: S * H]
    taken = set(zeros)
    rest = [j for j in range(len(gaps)) if j not in taken]
    sigma = np.empty((H, S, A), dtype=np.int64)
    for g, (h, i) in enumerate((h, i) for h in range(H) for i in range(S)):
        sigma[h, i] = [zeros[g]] + rest[g * (A - 1):(g + 1) * (A - 1)]
    return sigma


def success_prob(gap: float, L: float) -> float:
    return 0.5 - gap / (4.0 * math.sqrt(L))


def make_lower_bound_instance(spec: LowerBoundSpec) -> tuple[TabularMdp, LowerBoundMeta]:
    """Main state feeding ``S`` Bernoulli bandit states that exit to an absorbing terminal."""
    spec.validate()
    S, A, H, L = spec.S, spec.A, spec.H, float(spec.L)
    n = S + 2
    term = terminal_state(S)
    root = math.sqrt(L)
    sigma = assign_groups(spec.gaps, S, A, H)
    p_table = np.vectorize(lambda j: success_prob(spec.gaps[j], L), otypes=[float])(sigma)

    stay = 1.0 - 1.0 / (L * H)
    enter = 1.0 / (L * S * H)
    main_row = ((0, stay),) + tuple((bandit_state(i), enter) for i in range(S))
    zero = FiniteRewardDist.point(0.0)

    transitions, rewards = [], []
    for h in range(H):
        t_h, r_h = [], []
        for s in range(n):
            if s == 0:
                t_h.append((main_row,) * A)
                r_h.append((zero,) * A)
            elif s == term:
                t_h.append((((term, 1.0),),) * A)
                r_h.append((zero,) * A)
            else:
                t_h.append((((term, 1.0),),) * A)
                r_h.append(tuple(FiniteRewardDist.bernoulli(root, p_table[h, s - 1, a])
                                 for a in range(A)))
        transitions.append(tuple(t_h))
        rewards.append(tuple(r_h))
    init = tuple(1.0 if s == 0 else 0.0 for s in range(n))
    mdp = TabularMdp(H, n, A, tuple(transitions), tuple(rewards), init)

    d_table = np.repeat((enter * stay ** np.arange(H))[:, None], S, axis=1)
    return mdp, LowerBoundMeta(sigma=sigma, p_table=p_table, d_table=d_table)


def make_chain(H: int) -> TabularMdp:
    """One state, one action, reward 1 on the final step only."""
    if H < 1:
        raise ValidationError("H must be >= 1")
    step = lambda r: (((((0, 1.0),),),), ((FiniteRewardDist.point(r),),))  # noqa: E731
    parts = [step(1.0 if h == H - 1 else 0.0) for h in range(H)]
    return TabularMdp(H, 1, 1, tuple(p[0] for p in parts), tuple(p[1] for p in parts), (1.0,))


def make_random_mdp(S: int, A: int, H: int, sparsity: float = 0.5, seed: int = 0) -> TabularMdp:
    """Random sparse MDP whose rewards are rescaled so every path sums to at most ``H``.

    ``sparsity`` is the fraction of states in each transition row's support.
    """
    if min(S, A, H) < 1 or not 0 < sparsity <= 1:
        raise ValidationError("S, A, H must be positive and sparsity in (0, 1]")
    rng = np.random.default_rng(seed)
    k = max(1, math.ceil(sparsity * S))

    def row():
        supp = np.sort(rng.choice(S, size=k, replace=False))
        probs = rng.dirichlet(np.ones(k))
        return tuple((int(s2), float(p)) for s2, p in zip(supp, probs))

    def dist():
        m = int(rng.integers(1, 4))
        vals = rng.uniform(0.0, H, size=m)
        probs = rng.dirichlet(np.ones(m))
        return [(float(v), float(p)) for v, p in zip(vals, probs)]

    transitions = tuple(tuple(tuple(row() for _ in range(A)) for _ in range(S)) for _ in range(H))
    raw = [[[dist() for _ in range(A)] for _ in range(S)] for _ in range(H)]
    init_supp = np.sort(rng.choice(S, size=k, replace=False))
    init = np.zeros(S)
    init[init_supp] = rng.dirichlet(np.ones(k))

    def build(scale: float) -> TabularMdp:
        rewards = tuple(tuple(tuple(FiniteRewardDist(tuple((v * scale, p) for v, p in d))
                                    for d in sa) for sa in step) for step in raw)
        return TabularMdp(H, S, A, transitions, rewards, tuple(float(p) for p in init))

    mdp = build(1.0)
    m = max_total_reward(mdp)
    return build(H / m) if m > H else mdp


def scale_rewards(mdp: TabularMdp, c: float) -> TabularMdp:
    rewards = tuple(tuple(tuple(FiniteRewardDist(tuple((v * c, p) for v, p in d.atoms))
                                for d in sa) for sa in step) for step in mdp.rewards)
    return TabularMdp(mdp.H, mdp.S, mdp.A, mdp.transitions, rewards, mdp.init_dist)


def uniform_gap_groups(S: int, A: int, H: int, group: list[float]) -> tuple[float, ...]:
    """Repeat one per-group gap list (which must contain a zero) for every ``(h, i)``."""
    if len(group) != A or 0 not in group:
        raise ValidationError("group must have A entries including a zero")
    return tuple(g for _ in range(S * H) for g in group)
