"""Command-line front end: ``gen``, ``solve``, ``run`` and ``bounds``.

Exit statuses: 0 success, 1 I/O or parse error, 2 validation error,
3 domain error (e.g. no suboptimal actions).
"""
from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path


from . import bounds as bnd
from . import envs, harness, solver
from .errors import DomainError, ValidationError
from .mdp import TabularMdp, load_mdp, require_valid, save_mdp

EXIT_OK, EXIT_IO, EXIT_VALIDATION, EXIT_DOMAIN = 0, 1, 2, 3


@dataclass
class ExperimentConfig:
    """Run configuration; see README for the JSON schema."""

    env: object
    K: int
    delta: float
    seeds: list[int]
    constants: dict = field(default_factory=dict)
    diagnostics: bool = True
    output_dir: str = "runs"
    base_dir: Path = Path(".")

    @classmethod
    def from_dict(cls, d: dict, base_dir: Path = Path(".")) -> "ExperimentConfig":
        unknown = set(d) - {"env", "K", "delta", "seeds", "constants", "diagnostics", "output_dir"}
        if unknown:
            raise ValidationError(f"unknown config keys: {sorted(unknown)}")
        for key in ("env", "K", "delta", "seeds"):
            if key not in d:
                raise ValidationError(f"config is missing {key!r}")
        cfg = cls(env=d["env"], K=d["K"], delta=d["delta"], seeds=list(d["seeds"]),
                  constants=dict(d.get("constants", {})),
                  diagnostics=bool(d.get("diagnostics", True)),
                  output_dir=str(d.get("output_dir", "runs")), base_dir=base_dir)
        cfg.validate()
        return cfg

    def validate(self) -> None:
        if not isinstance(self.K, int) or self.K < 1:
            raise ValidationError("K must be an integer >= 1")
        if not 0 < float(self.delta) < 1:
            raise ValidationError("delta must lie in (0, 1)")
        if not self.seeds or len(set(self.seeds)) != len(self.seeds):
            raise ValidationError("seeds must be a nonempty list of distinct integers")
        if not all(isinstance(s, int) for s in self.seeds):
            raise ValidationError("seeds must be integers")
        bad = set(self.constants) - {"c1", "c2", "c3", "c4"}
        if bad:
            raise ValidationError(f"unknown constants: {sorted(bad)}")

    def build_env(self) -> tuple[TabularMdp, str]:
        env = self.env
        if isinstance(env, str):
            path = Path(env)
            if not path.is_absolute():
                path = self.base_dir / path
            return require_valid(load_mdp(path)), path.name
        if not isinstance(env, dict) or "type" not in env:
            raise ValidationError("env must be a path or an object with a 'type'")
        kind = env["type"]
        args = {k: v for k, v in env.items() if k != "type"}
        try:
            if kind == "lower_bound":
                mdp, _ = envs.make_lower_bound_instance(envs.LowerBoundSpec(**args))
            elif kind == "chain":
                mdp = envs.make_chain(**args)
            elif kind == "random":
                mdp = envs.make_random_mdp(**args)
            else:
                raise ValidationError(f"unknown env type {kind!r}")
        except TypeError as exc:
            raise ValidationError(f"bad env parameters: {exc}") from exc
        env_id = kind + ":" + json.dumps(args, sort_keys=True, separators=(",", ":"))
        return require_valid(mdp), env_id


def _write_json(obj, path: Path | None) -> None:
    text = json.dumps(obj, indent=1) + "\n"
    if path is None:
        sys.stdout.write(text)
    else:
        path.write_text(text)


def _floats(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise ValidationError(f"cannot parse number list {text!r}") from exc


def cmd_gen(args) -> int:
    if args.kind == "lower-bound":
        spec = envs.LowerBoundSpec(S=args.S, A=args.A, H=args.H, L=args.L, gaps=_floats(args.gaps))
        mdp, meta = envs.make_lower_bound_instance(spec)
    elif args.kind == "chain":
        mdp, meta = envs.make_chain(args.H), None
    else:
        mdp, meta = envs.make_random_mdp(args.S, args.A, args.H, args.sparsity, args.seed), None
    out = Path(args.out or f"{args.kind.replace('-', '_')}.json")
    save_mdp(mdp, out)
    print(out)
    if meta is not None:
        meta_path = out.with_suffix(".meta.json")
        _write_json({"spec": {"S": spec.S, "A": spec.A, "H": spec.H, "L": spec.L,
                              "gaps": list(spec.gaps)}, **meta.to_dict()}, meta_path)
        print(meta_path)
    return EXIT_OK


def cmd_solve(args) -> int:
    mdp = require_valid(load_mdp(args.mdp))
    report = solver.solve_report(mdp, exact=not args.no_exact, cap=args.enum_cap)
    _write_json(report, Path(args.out) if args.out else None)
    return EXIT_OK


def cmd_run(args) -> int:
    cfg_path = Path(args.config)
    cfg = ExperimentConfig.from_dict(json.loads(cfg_path.read_text()), base_dir=cfg_path.parent)
    mdp, env_id = cfg.build_env()
    sol = solver.optimal_values(mdp)
    learner_constants = {k: v for k, v in cfg.constants.items() if k != "c4"}
    traces = harness.run_seeds(mdp, sol, cfg.K, float(cfg.delta), cfg.seeds, jobs=args.jobs,
                               diagnostics=cfg.diagnostics, constants=learner_constants,
                               env_id=env_id)
    out_dir = Path(args.out_dir) if args.out_dir else cfg.base_dir / cfg.output_dir
    summary = harness.write_run_outputs(traces, out_dir)
    if cfg.diagnostics and sol.delta_min is not None:
        prof = solver.variance_profile(mdp, sol)
        c4 = float(cfg.constants.get("c4", harness.DEFAULT_C4))
        clipped = {}
        for seed, t in traces.items():
            rep = harness.clipped_surpluses(harness.surpluses(mdp, t.final_tables), sol, prof, c4)
            clipped[str(seed)] = {"surplus_sum": float(rep.surplus.sum()),
                                  "clipped_surplus_sum": float(rep.clipped.sum())}
        summary["final_surplus"] = clipped
        summary["c4"] = c4
        _write_json(summary, out_dir / "summary.json")
    print(out_dir)
    return EXIT_OK


def cmd_bounds(args) -> int:
    report = json.loads(Path(args.report).read_text())
    inp = bnd.inputs_from_report(report, args.K, args.delta, args.var_source)
    val = bnd.upper_bound_value(inp, args.mode)
    out = {
        **val.as_dict(), "K": inp.K, "delta": inp.delta, "iota": inp.iota, "w_bar": inp.w_bar,
        "w_bar_cap": inp.w_bar_cap, "var_max_c": inp.var_max_c, "var_max_c_source": inp.var_source,
        "num_sub": len(inp.gaps), "num_opt": inp.n_opt, "delta_min": inp.delta_min,
        "notes": val.notes,
    }
    _write_json(out, Path(args.out) if args.out else None)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mvplab", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="generate an MDP JSON file")
    gsub = g.add_subparsers(dest="kind", required=True)
    lb = gsub.add_parser("lower-bound", help="hard gap/variance family (writes a .meta.json too)")
    lb.add_argument("--S", type=int, required=True)
    lb.add_argument("--A", type=int, required=True)
    lb.add_argument("--H", type=int, required=True)
    lb.add_argument("--L", type=float, required=True)
    lb.add_argument("--gaps", required=True, help="comma-separated list of S*A*H gaps")
    ch = gsub.add_parser("chain", help="single-state chain with reward 1 at the last step")
    ch.add_argument("--H", type=int, required=True)
    rd = gsub.add_parser("random", help="random sparse MDP with bounded total reward")
    rd.add_argument("--S", type=int, required=True)
    rd.add_argument("--A", type=int, required=True)
    rd.add_argument("--H", type=int, required=True)
    rd.add_argument("--sparsity", type=float, default=0.5)
    rd.add_argument("--seed", type=int, default=0)
    for q in (lb, ch, rd):
        q.add_argument("-o", "--out", help="output MDP path (default: <kind>.json)")
    g.set_defaults(func=cmd_gen)

    s = sub.add_parser("solve", help="exact solution and variance report")
    s.add_argument("mdp")
    s.add_argument("-o", "--out")
    s.add_argument("--no-exact", action="store_true",
                   help="skip the enumeration oracle for var_max_c_exact")
    s.add_argument("--enum-cap", type=int, default=solver.DEFAULT_ENUM_CAP)
    s.set_defaults(func=cmd_solve)

    r = sub.add_parser("run", help="seeded MVP experiments from a JSON config")
    r.add_argument("config")
    r.add_argument("--jobs", type=int, default=1)
    r.add_argument("--out-dir", help="override output_dir from the config")
    r.set_defaults(func=cmd_run)

    b = sub.add_parser("bounds", help="evaluate the regret upper bound for a solved report")
    b.add_argument("report")
    b.add_argument("--K", type=int, required=True)
    b.add_argument("--delta", type=float, required=True)
    b.add_argument("--mode", choices=bnd.MODES, default="leading")
    b.add_argument("--var-source", choices=("auto", "exact", "future"), default="auto")
    b.add_argument("-o", "--out")
    b.set_defaults(func=cmd_bounds)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except json.JSONDecodeError as exc:
        print(f"error: JSON parse error at line {exc.lineno} column {exc.colno}: {exc.msg}",
              file=sys.stderr)
        return EXIT_IO
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except DomainError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN


if __name__ == "__main__":
    sys.exit(main())
