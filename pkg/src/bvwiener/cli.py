"""Command-line entry point: ``bvwiener <command> [preset] [options]``.

Exit codes: 0 all checks passed, 1 a statistical check failed, 2 bad input,
3 numerical failure. Output is deterministic for fixed seed and worker count.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import chain_rule, clark_ocone, orlicz, presets
from .bv_measure import BVScalarFunction, tv_estimate_level_set
from .clark_ocone import rows_to_csv
from .errors import ConditioningError, InvalidArgument, NumericError
from .functional import CylindricalFunctional, Direction, ibp_check
from .grid_paths import grid_from_times, make_grid
from .kernels import NormalizedDirection, std_normal_density
from .montecarlo import MCConfig
from .steps import StepFunction

EXIT_PASS, EXIT_FAIL, EXIT_INPUT, EXIT_NUMERIC = 0, 1, 2, 3
IDENTITY_COLUMNS = ["lhs", "rhs", "stderr_lhs", "stderr_rhs", "quad_budget", "pass"]


@dataclass(frozen=True)
class RunConfig:
    command: str
    preset: str | None
    spec: Path | None
    T: float
    steps: int | None
    refinement: str
    ratio: float
    paths: int
    seed: int
    workers: int
    bridge: bool
    out: Path | None
    fmt: str

    def grid(self, default_steps: int | None = None):
        steps = self.steps if self.steps is not None else default_steps
        if steps is None:
            return None
        return make_grid(self.T, steps, self.refinement, self.ratio)

    def mc(self, default_steps: int | None = None) -> MCConfig:
        return MCConfig(self.paths, self.grid(default_steps), self.seed, self.workers, self.bridge)


def _refine(text: str) -> tuple[str, float]:
    if text == "uniform":
        return "uniform", 0.5
    if text == "geo" or text.startswith("geo:"):
        try:
            ratio = float(text[4:]) if ":" in text else 0.5
        except ValueError:
            raise argparse.ArgumentTypeError(f"bad ratio in {text!r}") from None
        if not 0 < ratio < 1:
            raise argparse.ArgumentTypeError("geo ratio must lie in (0, 1)")
        return "geometric-terminal", ratio
    raise argparse.ArgumentTypeError("refine must be 'uniform' or 'geo:RATIO'")


def _int_list(text: str) -> list[int]:
    try:
        vals = [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None
    if not vals:
        raise argparse.ArgumentTypeError("empty list")
    return vals


def _positive(kind):
    def parse(text):
        v = kind(text)
        if not v > 0 or (kind is float and not math.isfinite(v)):
            raise argparse.ArgumentTypeError(f"expected a positive number, got {text!r}")
        return v
    return parse


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--spec", type=Path, help="JSON spec file instead of a preset")
    common.add_argument("--T", type=_positive(float), default=1.0, help="horizon (default 1)")
    common.add_argument("--steps", type=_positive(int), help="grid steps")
    common.add_argument("--refine", type=_refine, default=("geometric-terminal", 0.5),
                        help="uniform or geo:RATIO (default geo:0.5)")
    common.add_argument("--paths", type=_positive(int), default=20000)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--workers", type=_positive(int), default=1)
    common.add_argument("--bridge", choices=["on", "off"], default="on",
                        help="bridge-corrected maxima (default on)")
    common.add_argument("--out", type=Path, help="output file (default stdout)")
    common.add_argument("--format", dest="fmt", choices=["json", "csv"], default="json")

    p = argparse.ArgumentParser(prog="bvwiener", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("represent", parents=[common],
                       help="check f = E f + int H dW on sampled paths")
    r.add_argument("preset", nargs="?", choices=["digital", "barrier"])
    r.add_argument("--t", type=_positive(float), default=None, help="digital maturity (default T)")
    r.add_argument("--y", type=_positive(float), default=1.0, help="barrier level")
    r.add_argument("--check-steps", type=_int_list, default=[],
                   help="extra grid sizes for the convergence table")
    r.add_argument("--l1-tol", type=float, default=None)
    r.add_argument("--bound", action="store_true", help="also run the integrability bound")

    c = sub.add_parser("chain", parents=[common], help="two-sided chain-rule checks")
    c.add_argument("preset", nargs="?", choices=["levelset", "orthogonal", "ramp"])
    c.add_argument("--x", type=float, default=0.0)

    o = sub.add_parser("orlicz", parents=[common], help="Luxembourg-norm experiments")
    o.add_argument("preset", nargs="?", choices=["zero", "pairing", "martingale"])
    o.add_argument("--sigma", type=_positive(float), default=1.0)
    o.add_argument("--t", type=_positive(float), default=None, help="default T/3")
    o.add_argument("--levels", type=_positive(int), default=8)

    i = sub.add_parser("ibp", parents=[common], help="integration by parts on fixed triples")
    i.add_argument("preset", nargs="?", choices=["triple"], default="triple")
    i.add_argument("--triple", type=int, default=None, help="index 0-4 (default all)")

    t = sub.add_parser("tv", parents=[common], help="level-set variation sequence")
    t.add_argument("--x", type=float, default=0.0)
    t.add_argument("--n-list", type=_int_list, default=[1, 10, 100, 1000])
    t.add_argument("--mode", choices=["quadrature", "mc"], default="quadrature")
    return p


def _config(args) -> RunConfig:
    refinement, ratio = args.refine
    return RunConfig(args.command, getattr(args, "preset", None), args.spec, args.T, args.steps,
                     refinement, ratio, args.paths, args.seed, args.workers, args.bridge == "on",
                     args.out, args.fmt)


def _load_json(path: Path):
    try:
        return json.loads(path.read_text())
    except OSError as exc:
        raise InvalidArgument(f"cannot read {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise InvalidArgument(f"malformed JSON in {path}: {exc}") from None


def _need_one(cfg: RunConfig) -> None:
    if (cfg.preset is None) == (cfg.spec is None):
        raise InvalidArgument("give exactly one of a preset or --spec")


# -- commands -------------------------------------------------------------------

def cmd_represent(cfg: RunConfig, args) -> tuple[dict, str, bool]:
    _need_one(cfg)
    tol = args.l1_tol
    if cfg.spec is not None:
        spec = clark_ocone.spec_from_dict(_load_json(cfg.spec))
    elif cfg.preset == "digital":
        spec = clark_ocone.digital(args.t if args.t is not None else cfg.T)
        tol = 0.05 if tol is None else tol
    else:
        spec = clark_ocone.barrier(args.y)
        tol = 0.08 if tol is None else tol
    mc = cfg.mc(default_steps=4096)
    extra = []
    if isinstance(spec, clark_ocone.Cylindrical):
        # the grid must carry the breakpoints of k
        bp = spec.direction.k.breakpoints
        mc = MCConfig(mc.paths, grid_from_times(cfg.T, mc.grid.points, bp), mc.seed,
                      mc.workers, mc.bridge)
        extra = [grid_from_times(cfg.T, make_grid(cfg.T, n, cfg.refinement, cfg.ratio).points, bp)
                 for n in args.check_steps]
    else:
        extra = [make_grid(cfg.T, n, cfg.refinement, cfg.ratio) for n in args.check_steps]
    rep = clark_ocone.verify_representation(spec, mc, extra, l1_tol=tol)
    out = rep.to_dict()
    ok = rep.passed
    if args.bound:
        b = clark_ocone.integrability_bound_check(spec, mc)
        out["bound"] = b.to_dict()
        ok = ok and b.passed
    return out, rep.rows_csv(), ok


def _identity_csv(rows: list[dict], lead: list[str] = ()) -> str:
    return rows_to_csv(rows, list(lead) + IDENTITY_COLUMNS)


def cmd_chain(cfg: RunConfig, args) -> tuple[dict, str, bool]:
    _need_one(cfg)
    mc = cfg.mc()
    one = CylindricalFunctional.constant(1.0, cfg.T)
    if cfg.spec is not None:
        d = _load_json(cfg.spec)
        if not isinstance(d, dict) or "k" not in d or "phi" not in d:
            raise InvalidArgument("chain spec needs 'k' and 'phi'")
        direction = NormalizedDirection(StepFunction.from_dict(d["k"]))
        phi = BVScalarFunction.from_dict(d["phi"])
        h = Direction(StepFunction.from_dict(d["h"])) if "h" in d else Direction(direction.k)
        rep = chain_rule.chain_rule_check_phi(direction, phi, one, h, mc)
    else:
        direction = presets.unit_direction(cfg.T)
        if cfg.preset == "levelset":
            rep = chain_rule.levelset_check(direction, one, Direction(direction.k), args.x, mc)
        elif cfg.preset == "orthogonal":
            rep = chain_rule.levelset_check(direction, one, presets.orthogonal_direction(cfg.T),
                                            args.x, mc)
        else:
            rep = chain_rule.chain_rule_check_phi(direction, BVScalarFunction.ramp(0.0, 1.0),
                                                  presets.cos_terminal(cfg.T),
                                                  Direction(direction.k), mc)
    out = rep.to_dict()
    return out, _identity_csv([out]), rep.passed


def cmd_orlicz(cfg: RunConfig, args) -> tuple[dict, str, bool]:
    _need_one(cfg)
    if cfg.spec is not None or cfg.preset == "zero":
        if cfg.spec is not None:
            d = _load_json(cfg.spec)
            if not isinstance(d, dict) or "values" not in d:
                raise InvalidArgument("sample spec needs 'values'")
            X = orlicz.Sample(d["values"], d.get("weights"))
        else:
            X = orlicz.Sample(np.zeros(cfg.paths))
        k = orlicz.luxembourg_norm(X)
        out = {"norm": k, "stderr": orlicz.luxembourg_stderr(X, k), "n": int(X.values.size),
               "pass": True}
        return out, rows_to_csv([out], ["norm", "stderr", "n"]), True
    mc = MCConfig(cfg.paths, None, cfg.seed, cfg.workers)
    if cfg.preset == "pairing":
        rep = orlicz.pairing_inequality_check(lambda z, z2: args.sigma * z, args.sigma, mc)
        out = rep.to_dict()
        return out, rows_to_csv([out], ["e_abs_xy", "stderr_xy", "norm_x", "stderr_norm",
                                        "constant", "bound", "pass"]), rep.passed
    t = args.t if args.t is not None else cfg.T / 3
    rep = orlicz.martingale_orlicz_convergence(t, orlicz.clamp, args.levels, mc, T=cfg.T)
    return rep.to_dict(), rows_to_csv(rep.rows(), ["level", "norm", "stderr"]), rep.passed


def cmd_ibp(cfg: RunConfig, args) -> tuple[dict, str, bool]:
    triples = presets.ibp_triples(cfg.T)
    if args.triple is not None:
        if not 0 <= args.triple < len(triples):
            raise InvalidArgument(f"--triple must lie in 0..{len(triples) - 1}")
        triples = [triples[args.triple]]
    reports = []
    for tr in triples:
        rep = ibp_check(tr.f, tr.g, tr.h, cfg.mc())
        reports.append({"name": tr.name, **rep.to_dict()})
    ok = all(r["pass"] for r in reports)
    return {"triples": reports, "pass": ok}, _identity_csv(reports, ["name"]), ok


def cmd_tv(cfg: RunConfig, args) -> tuple[dict, str, bool]:
    direction = presets.unit_direction(cfg.T)
    target = float(std_normal_density(args.x))
    quad = tv_estimate_level_set(direction, args.x, args.n_list)
    if args.mode == "quadrature":
        ests = quad
        ok = abs(quad[-1].mean - target) <= 1e-3
    else:
        ests = tv_estimate_level_set(direction, args.x, args.n_list, cfg.mc())
        ok = all(e.within(q.mean) for e, q in zip(ests, quad))
    rows = [{"n": n, "value": e.mean, "stderr": e.stderr, "quadrature": q.mean}
            for n, e, q in zip(args.n_list, ests, quad)]
    return ({"x": args.x, "limit": target, "mode": args.mode, "rows": rows, "pass": ok},
            rows_to_csv(rows, ["n", "value", "stderr", "quadrature"]), ok)


COMMANDS = {"represent": cmd_represent, "chain": cmd_chain, "orlicz": cmd_orlicz,
            "ibp": cmd_ibp, "tv": cmd_tv}


def _emit(text: str, out: Path | None) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        try:
            out.write_text(text)
        except OSError as exc:
            raise InvalidArgument(f"cannot write {out}: {exc.strerror}") from None


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = _config(args)
        report, table, ok = COMMANDS[cfg.command](cfg, args)
        text = (json.dumps(report, sort_keys=True, indent=2) + "\n") if cfg.fmt == "json" else table
        _emit(text, cfg.out)
    except (InvalidArgument, ValueError) as exc:
        print(f"bvwiener: error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (NumericError, ConditioningError, ArithmeticError) as exc:
        print(f"bvwiener: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_PASS if ok else EXIT_FAIL
