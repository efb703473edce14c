"""Closed-form regret upper and lower bound envelopes for a solved instance."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import NoGapsError, ValidationError

# printed prefactors of the four terms of the high-probability upper bound
CONSTANTS = {"gap_term": 48600.0, "opt_term": 21600.0, "s2_term": 270000.0, "h5_term": 276.0}
MODES = ("leading", "full-constants")


@dataclass(frozen=True)
class BoundInputs:
    gaps: tuple[float, ...]   # positive gaps over Z_sub
    n_opt: int                # |Z_opt|
    delta_min: float
    H: int
    S: int                    # number of MDP states
    A: int
    K: int
    delta: float
    var_max_c: float
    var_source: str = "future"

    def __post_init__(self):
        object.__setattr__(self, "gaps", tuple(float(g) for g in self.gaps))
        if not self.gaps:
            raise NoGapsError()
        if min(self.gaps) <= 0:
            raise ValidationError("all gaps over Z_sub must be strictly positive")
        if self.iota <= 0:
            raise ValidationError(f"iota = log(SAHK/delta) = {self.iota:g} must be positive")

    @property
    def iota(self) -> float:
        return math.log(self.S * self.A * self.H * self.K / self.delta)

    @property
    def w_bar_cap(self) -> float:
        return 160.0 * self.H ** 2 * math.log(4 * self.K * (self.H + 1) / self.delta)

    @property
    def w_bar(self) -> float:
        return min(self.w_bar_cap, self.var_max_c)


@dataclass(frozen=True)
class BoundValue:
    gap_term: float
    opt_term: float
    s2_term: float
    h5_term: float
    mode: str = "leading"
    notes: list[str] = field(default_factory=list, compare=False)

    @property
    def total(self) -> float:
        return self.gap_term + self.opt_term + self.s2_term + self.h5_term

    def as_dict(self) -> dict:
        return {"mode": self.mode, "total": self.total, "gap_term": self.gap_term,
                "opt_term": self.opt_term, "s2_term": self.s2_term, "h5_term": self.h5_term}


def upper_bound_value(inp: BoundInputs, mode: str = "leading") -> BoundValue:
    """Four-term gap-dependent upper bound; ``leading`` sets every prefactor to 1."""
    if mode not in MODES:
        raise ValidationError(f"mode must be one of {MODES}")
    scale = CONSTANTS if mode == "full-constants" else dict.fromkeys(CONSTANTS, 1.0)
    iota, H, S, A = inp.iota, inp.H, inp.S, inp.A
    gap = sum(inp.w_bar * iota / g for g in inp.gaps)
    opt = inp.n_opt * min(H * H, inp.var_max_c) * iota / inp.delta_min
    s2 = S * S * A * H ** 4 * iota * math.log(10 * S * A * H * iota / inp.delta_min)
    h5 = S * A * H ** 5 * iota
    return BoundValue(
        gap_term=scale["gap_term"] * gap, opt_term=scale["opt_term"] * opt,
        s2_term=scale["s2_term"] * s2, h5_term=scale["h5_term"] * h5, mode=mode,
        notes=["W_bar = min(160 H^2 log(4K(H+1)/delta), Var_max^c); the informal statement "
               "writes H^2 log K ∧ Var_max^c instead"])


def lower_bound_value(gaps: Sequence[float], L: float, K: float) -> float:
    """``sum over positive gaps of (L / gap) * log K``."""
    if K < 3:
        raise ValidationError("K must be >= 3")
    pos = [float(g) for g in gaps if g > 0]
    if not pos:
        raise NoGapsError("empty-gap-set: no positive gaps")
    return float(sum(L / g for g in pos) * math.log(K))


def inputs_from_report(report: dict, K: int, delta: float, var_source: str = "auto") -> BoundInputs:
    """Build bound inputs from a ``solve`` report.

    ``var_source`` is ``exact``, ``future`` or ``auto`` (exact when present).
    """
    try:
        gaps = np.asarray(report["gaps"], dtype=float)
        H, S, A = int(report["H"]), int(report["S"]), int(report["A"])
        n_sub = len(report["z_sub"])
        n_opt = len(report["z_opt"])
        delta_min = report["delta_min"]
        exact = report.get("var_max_c_exact")
        future = report["var_max_c_future"]
    except KeyError as exc:
        raise ValidationError(f"report is missing field {exc.args[0]!r}") from exc
    if n_sub == 0 or delta_min is None:
        raise NoGapsError()
    sub = [gaps[h, s, a] for h, s, a in report["z_sub"]]
    if var_source == "auto":
        var_source = "exact" if exact is not None else "future"
    if var_source == "exact":
        if exact is None:
            raise ValidationError("report has no var_max_c_exact")
        vmc = float(exact)
    elif var_source == "future":
        vmc = float(future)
    else:
        raise ValidationError(f"unknown var_max_c source {var_source!r}")
    return BoundInputs(gaps=tuple(sub), n_opt=n_opt, delta_min=float(delta_min), H=H, S=S, A=A,
                       K=K, delta=delta, var_max_c=vmc, var_source=var_source)
