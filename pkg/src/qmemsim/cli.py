"""``qmemsim`` command line: simulate, ratio, table, reorder, compare-nh, sweep.

Every subcommand writes its result files into ``--out`` together with a
``manifest.json`` holding the parameters, seed, version and integrator
digest needed to regenerate them.  Exit codes: 0 success, 2 bad
arguments or inputs, 3 integration failure (including no crossing).
"""

from __future__ import annotations

import argparse
import datetime as dt
import json
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

from qmemsim import __version__, experiments, specs
from qmemsim.errors import IntegrationError, NoCrossingError, QmemsimError
from qmemsim.integrator import IntegratorConfig
from qmemsim.propagate import evolve, time_to_fidelity

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_INTEGRATION = 3


@dataclass
class RunManifest:
    subcommand: str
    params: dict
    seed: int | None
    version: str
    config_digest: str
    started: str
    finished: str | None = None
    outputs: list[str] = field(default_factory=list)

    def write(self, out_dir: Path) -> Path:
        path = out_dir / "manifest.json"
        path.write_text(json.dumps(self.__dict__, indent=2, sort_keys=True), encoding="utf-8")
        return path


def _now() -> str:
    return dt.datetime.now(dt.timezone.utc).isoformat(timespec="seconds")


def _config(args) -> IntegratorConfig:
    return IntegratorConfig(rtol=args.rtol, atol=args.atol)


def _profile(args) -> str:
    profile = os.environ.get("QMEMSIM_PROFILE") or args.profile
    if profile not in experiments.PROFILE_QUBITS:
        raise argparse.ArgumentTypeError(f"unknown profile {profile!r}")
    return profile


def _floats(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from exc


def _ints(text: str) -> list[int]:
    lo, sep, hi = text.partition("-")
    try:
        if sep:
            return list(range(int(lo), int(hi) + 1))
        return [int(x) for x in text.split(",") if x]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected integers like 2-10 or 2,4,8, got {text!r}") from exc


def cmd_simulate(args) -> dict:
    state = specs.parse_state(args.state, args.seed)
    model = specs.parse_model(args.model, args.gamma)
    psi = model.encoding.place(state) if model.encoding else state
    config = _config(args)
    summary = {}
    t_end = args.t_end
    if args.target is not None:
        cross = time_to_fidelity(model, psi, args.target, config)
        summary["crossing"] = cross.to_dict()
        t_end = t_end or cross.t_cross
    if t_end is None:
        raise QmemsimError("simulate needs --t-end or --target")
    trace = evolve(model, psi, t_end, config)
    trace.to_csv(args.out / "trace.csv")
    summary["trace"] = experiments.summarize_trace(trace)
    return summary


def cmd_ratio(args) -> dict:
    state = specs.parse_state(args.state, args.seed)
    pair = specs.default_pair(state.dim, args.gamma)
    model_a = specs.parse_model(args.a, args.gamma) if args.a else pair[0]
    model_b = specs.parse_model(args.b, args.gamma) if args.b else pair[1]
    report = experiments.run_ratio(state, model_a, model_b, args.ftarget, _config(args), args.seed)
    experiments.write_jsonl([report], args.out / "ratio.jsonl")
    return {"simulated": report.simulated, "predicted_first": report.predicted_first,
            "predicted_second": report.predicted_second, "t_a": report.t_a, "t_b": report.t_b}


def cmd_table(args) -> dict:
    catalog = experiments.default_catalog(_profile(args), args.states_dir, args.n_random, args.seed)
    result = experiments.run_table(catalog, args.ftarget, _config(args), args.jobs)
    experiments.write_table_csv(result.rows, args.out / "table.csv")
    experiments.write_jsonl(result.reports, args.out / "reports.jsonl")
    for item in result.skipped:
        print(f"skipped: {item}", file=sys.stderr)
    return {"rows": [r.to_dict() for r in result.rows], "skipped": result.skipped}


def cmd_reorder(args) -> dict:
    results = experiments.run_reorder_specs(args.state, args.ftarget, _config(args), args.seed, args.jobs)
    with open(args.out / "reorder.jsonl", "w", encoding="utf-8") as fh:
        for r in results:
            fh.write(json.dumps(r.to_dict(), sort_keys=True) + "\n")
    return {"results": [{"state": r.state, "ratio": r.ratio, "status": r.status} for r in results]}


def cmd_compare_nh(args) -> dict:
    state = specs.parse_state(args.state, args.seed)
    model = specs.parse_model(args.model, args.gamma)
    comp = experiments.run_nh_comparison(state, model, args.t_end, args.points, _config(args))
    comp.to_csv(args.out / "compare_nh.csv")
    return {"max_abs_difference": comp.max_abs_difference()}


def cmd_sweep(args) -> dict:
    if args.nq:
        state_specs = [f"ghz:{n}" for n in args.nq]
    elif args.state:
        state_specs = args.state
    else:
        top = experiments.PROFILE_QUBITS[_profile(args)]
        state_specs = [f"ghz:{n}" for n in range(2, top + 1)]
    grouped = experiments.run_ftar_sweep(state_specs, args.ftargets, _config(args), args.seed, args.jobs)
    reports = [r for group in grouped.values() for r in group]
    experiments.write_jsonl(reports, args.out / "sweep.jsonl")
    with open(args.out / "sweep.csv", "w", encoding="utf-8", newline="") as fh:
        fh.write("ftarget,state,simulated,predicted_first,predicted_second\n")
        for target, group in grouped.items():
            for r in group:
                fh.write(",".join([repr(target), r.state, repr(r.simulated), repr(r.predicted_first),
                                   experiments._fmt(r.predicted_second)]) + "\n")
    return {str(t): [r.simulated for r in g] for t, g in grouped.items()}


COMMANDS = {
    "simulate": cmd_simulate,
    "ratio": cmd_ratio,
    "table": cmd_table,
    "reorder": cmd_reorder,
    "compare-nh": cmd_compare_nh,
    "sweep": cmd_sweep,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", type=Path, default=Path("results"), help="output directory")
    common.add_argument("--seed", type=int, default=0, help="seed for random-state categories")
    common.add_argument("--gamma", type=float, default=1.0, help="noise rate; times come out in 1/gamma")
    common.add_argument("--ftarget", type=float, default=experiments.DEFAULT_TARGET,
                        help="target fidelity for crossing times")
    common.add_argument("--profile", choices=sorted(experiments.PROFILE_QUBITS), default="ci",
                        help="register size (QMEMSIM_PROFILE overrides)")
    common.add_argument("--jobs", type=int, default=1, help="worker processes")
    common.add_argument("--rtol", type=float, default=1e-8, help="integrator relative tolerance")
    common.add_argument("--atol", type=float, default=1e-10, help="integrator absolute tolerance")

    parser = argparse.ArgumentParser(prog="qmemsim", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", parents=[common], help="evolve one state under one memory model")
    p.add_argument("--state", required=True, help="state spec, e.g. ghz:6 or file:psi.json")
    p.add_argument("--model", required=True, help="model spec, e.g. qubit:6 or qudit:64")
    p.add_argument("--t-end", type=float, help="end time (default with --target: the crossing time)")
    p.add_argument("--target", type=float, help="also locate the fidelity crossing")

    p = sub.add_parser("ratio", parents=[common], help="simulated and predicted t_a/t_b")
    p.add_argument("--state", required=True, help="state spec")
    p.add_argument("--a", help="memory a (default: qubit register)")
    p.add_argument("--b", help="memory b (default: single qudit)")

    p = sub.add_parser("table", parents=[common], help="per-category ratio summary table")
    p.add_argument("--states-dir", type=Path, help="directory with vqe*.json / qaoa*.json amplitude files")
    p.add_argument("--n-random", type=int, default=4, help="instances per random category")

    p = sub.add_parser("reorder", parents=[common], help="gain from sorting amplitudes onto low levels")
    p.add_argument("--state", required=True, action="append", help="state spec (repeatable)")

    p = sub.add_parser("compare-nh", parents=[common], help="Lindblad vs non-Hermitian fidelity traces")
    p.add_argument("--state", required=True, help="state spec")
    p.add_argument("--model", required=True, help="model spec")
    p.add_argument("--t-end", type=float, required=True, help="end time")
    p.add_argument("--points", type=int, default=101, help="samples on a uniform grid")

    p = sub.add_parser("sweep", parents=[common], help="ratios across target fidelities")
    p.add_argument("--ftargets", type=_floats, default=[0.7, 0.75, 0.9], help="comma-separated target fidelities")
    p.add_argument("--state", action="append", help="state spec (repeatable)")
    p.add_argument("--nq", type=_ints, help="GHZ register sizes, e.g. 2-10")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    params = {k: (str(v) if isinstance(v, Path) else v) for k, v in vars(args).items()}
    try:
        config = _config(args)
    except QmemsimError as exc:
        parser.error(str(exc))
    args.out.mkdir(parents=True, exist_ok=True)
    manifest = RunManifest(args.command, params, args.seed, __version__,
                           experiments.config_digest(config), _now())
    try:
        summary = COMMANDS[args.command](args)
    except (NoCrossingError, IntegrationError) as exc:
        print(f"qmemsim {args.command}: integration failed: {exc}", file=sys.stderr)
        return EXIT_INTEGRATION
    except (QmemsimError, ValueError, OSError, argparse.ArgumentTypeError) as exc:
        parser.print_usage(sys.stderr)
        print(f"qmemsim {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    manifest.finished = _now()
    manifest.outputs = sorted(p.name for p in args.out.iterdir() if p.name != "manifest.json")
    manifest.write(args.out)
    print(json.dumps(summary, indent=2, sort_keys=True, default=float))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
