"""
sidx command line.

Commands:
    simulate        Sample paths on a grid, ball, flow or pc-level design
    estimate        Exponent estimates (long-format CSV plus JSON summary)
    check           Assumption report for rectangles or lower layers
    flow            Projection covariance table along a flow
    demo-unbounded  Adaptive-set sum of positive increments and its growth
    entropy         Covering numbers and the Dudley integral

Exit codes: 0 success, 1 numeric or statistical failure, 2 usage error.
Every output file carries the tool version and the merged config; files
written by a failing command are removed.
"""

import argparse
import csv
import io
import json
import logging
import sys
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import ValidationError

from src import __version__
from src.analysis.assumptions import (
    LOWER_LAYERS_MAX_LEVEL,
    CollectionDescriptor,
    check_assumptions,
    lower_layers_report,
)
from src.analysis.entropy import DEFAULT_EPSILONS, covering_table
from src.cli.config import RunConfig, build_config
from src.cli.run_log import RunLogger
from src.errors import NUMERIC_ERRORS, USAGE_ERRORS, DomainError
from src.flows.flow import (
    ElementaryFlow,
    Flow,
    load_flow,
    projected_sets,
    projected_values,
    projection_table,
    theta_range,
)
from src.gaussian.sampling import (
    BINARY_MAGIC,
    SamplePath,
    read_binary,
    read_csv,
    sample_paths,
    write_binary,
    write_csv,
)
from src.gaussian.unbounded import demo_unbounded, growth_table
from src.geometry.dyadic import DyadicLevel, enumerate_An
from src.geometry.rects import Rect
from src.regularity.design import ScalePlan, ball_design
from src.regularity.deterministic import deterministic_exponents, deterministic_pc
from src.regularity.estimators import (
    CSV_FIELDS,
    DET_LOCAL,
    DET_PC,
    DET_POINTWISE,
    LOCAL,
    LOCAL_C,
    PC,
    POINTWISE,
    POINTWISE_C,
    ExponentReport,
    estimate_local,
    estimate_pc,
    estimate_pc_path,
    estimate_pointwise,
    pc_closure,
)

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_NUMERIC = 1
EXIT_USAGE = 2

PATH_KINDS = (POINTWISE, LOCAL, POINTWISE_C, LOCAL_C)


# ============ Output handling ============

class OutputSet:
    """Files written by one command; discard() removes them after a failure."""

    def __init__(self, out_dir: str):
        self.out_dir = Path(out_dir)
        self.written: List[Path] = []

    def path(self, name: str) -> Path:
        self.out_dir.mkdir(parents=True, exist_ok=True)
        target = self.out_dir / name
        self.written.append(target)
        return target

    def write_text(self, name: str, text: str) -> Path:
        target = self.path(name)
        target.write_text(text)
        return target

    def discard(self) -> None:
        for target in self.written:
            target.unlink(missing_ok=True)
        if self.written:
            logger.info("removed %d partial output files", len(self.written))
        self.written = []


def _json_default(value: Any) -> Any:
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating):
        return float(value)
    if isinstance(value, np.bool_):
        return bool(value)
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, (set, frozenset, tuple)):
        return list(value)
    raise TypeError(f"not JSON serializable: {type(value).__name__}")


def dumps(data: Any) -> str:
    return json.dumps(data, indent=2, sort_keys=True, default=_json_default) + "\n"


def _header(config: RunConfig) -> Dict[str, Any]:
    return {"version": __version__, "config": config.echo()}


def _comment_lines(config: RunConfig) -> List[str]:
    return [
        f"sidx {__version__}",
        "config " + json.dumps(config.echo(), sort_keys=True, separators=(",", ":")),
    ]


def write_json(outputs: OutputSet, name: str, config: RunConfig, body: Dict[str, Any]) -> Path:
    return outputs.write_text(name, dumps({**_header(config), **body}))


def write_table(
    outputs: OutputSet,
    name: str,
    config: RunConfig,
    rows: Sequence[Dict[str, Any]],
    fields: Optional[Sequence[str]] = None,
) -> Path:
    """Long-format CSV with the version and config as leading # lines."""
    fields = list(fields or (rows[0].keys() if rows else []))
    buffer = io.StringIO()
    for line in _comment_lines(config):
        buffer.write(f"# {line}\n")
    writer = csv.DictWriter(buffer, fieldnames=fields, lineterminator="\n", extrasaction="ignore")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: _cell(v) for k, v in row.items()})
    return outputs.write_text(name, buffer.getvalue())


def _cell(value: Any) -> Any:
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, (dict, list, tuple)):
        return json.dumps(value, sort_keys=True, default=_json_default)
    return value


# ============ Designs ============

def scale_plan(config: RunConfig) -> ScalePlan:
    return ScalePlan(
        center=Rect.of(*config.center_point()),
        radii=config.radii(),
        pair_budget=config.pair_budget,
        metric=config.metric or "d_m",
    )


def resolve_flow(config: RunConfig) -> Flow:
    """The flow file, or the diagonal flow from the origin to the unit corner."""
    if config.flow is None:
        return ElementaryFlow.linear((0.0,) * config.dim, (1.0,) * config.dim)
    if not Path(config.flow).is_file():
        raise DomainError(f"flow file not found: {config.flow}")
    return load_flow(config.flow)


def flow_grid(flow: Flow, points: int) -> np.ndarray:
    """points measure times in (theta(start), theta(end)]."""
    lo, hi = theta_range(flow)
    return np.linspace(lo, hi, points + 1)[1:]


def design_sets(config: RunConfig) -> List[Rect]:
    if config.design == "grid":
        sets = enumerate_An(DyadicLevel(config.grid_level, config.dim))
        return [r for r in sets if r.measure > 0.0]
    if config.design == "ball":
        return ball_design(scale_plan(config), config.design_seed, cap=config.max_sets)
    if config.design == "flow":
        flow = resolve_flow(config)
        return projected_sets(flow, flow_grid(flow, config.flow_points))
    return pc_closure(config.t_point(), config.level_list())


def read_input(config: RunConfig) -> SamplePath:
    """Sample path from a simulate output, CSV or binary (detected by its magic)."""
    source = Path(config.input)
    if not source.is_file():
        raise DomainError(f"input file not found: {config.input}")
    with open(source, "rb") as fh:
        if fh.read(len(BINARY_MAGIC)) == BINARY_MAGIC:
            return read_binary(source)
    return read_csv(source)


# ============ Commands ============

def cmd_simulate(config: RunConfig, outputs: OutputSet) -> Dict[str, Any]:
    """Sample the configured design and write the path."""
    sets = design_sets(config)
    path = sample_paths(
        config.cov_model(), sets, config.seed, config.reps, threads=config.threads,
        cap=config.max_sets,
    )
    if config.format == "csv":
        write_csv(path, outputs.path("paths.csv"), comments=_comment_lines(config))
    elif config.format == "binary":
        write_binary(path, outputs.path("paths.sidx"), meta=_header(config))
    else:
        write_json(outputs, "paths.json", config, {
            "metadata": path.metadata(),
            "sets": [r.to_json() for r in path.sets],
            "values": path.values.tolist(),
        })
    print(f"simulate: {path.replicates} replicates over {len(sets)} sets ({config.design})")
    return {"sets": len(sets), "replicates": path.replicates, "factor": path.factor_info}


def _guarded(kind: str, location: Any, fn: Callable[[], Any]) -> Any:
    try:
        return fn()
    except NUMERIC_ERRORS as exc:
        raise type(exc)(f"{kind} at {location}: {exc}") from exc


def run_estimators(config: RunConfig) -> List[ExponentReport]:
    """Reports for every requested kind, in the requested order."""
    model = config.cov_model()
    kinds = list(dict.fromkeys(config.kinds))
    plan = scale_plan(config)
    t = config.t_point()
    levels = config.level_list()
    center = plan.center.corner

    path: Optional[SamplePath] = None
    if any(k in PATH_KINDS for k in kinds) or (PC in kinds and config.input):
        if config.input:
            path = read_input(config)
        else:
            sets = ball_design(plan, config.design_seed, cap=config.max_sets)
            path = sample_paths(model, sets, config.seed, config.reps, threads=config.threads,
                                cap=config.max_sets)

    deterministic: Dict[str, ExponentReport] = {}
    reports = []
    for kind in kinds:
        if kind == POINTWISE:
            rep = _guarded(kind, center, lambda: estimate_pointwise(path, plan))
        elif kind == POINTWISE_C:
            rep = _guarded(kind, center, lambda: estimate_pointwise(path, plan, ordered=True))
        elif kind == LOCAL:
            rep = _guarded(kind, center, lambda: estimate_local(path, plan, config.local_method))
        elif kind == LOCAL_C:
            rep = _guarded(
                kind, center, lambda: estimate_local(path, plan, config.local_method, ordered=True)
            )
        elif kind == PC:
            if config.input:
                rep = _guarded(kind, t, lambda: estimate_pc_path(path, t, levels))
            else:
                rep = _guarded(kind, t, lambda: estimate_pc(
                    model, t, levels, config.seed, config.reps, threads=config.threads))
        elif kind in (DET_POINTWISE, DET_LOCAL):
            if not deterministic:
                pw, loc = _guarded(kind, center, lambda: deterministic_exponents(model, plan))
                deterministic = {DET_POINTWISE: pw, DET_LOCAL: loc}
            rep = deterministic[kind]
        else:
            rep = _guarded(DET_PC, t, lambda: deterministic_pc(model, t, levels))
        reports.append(rep)
    return reports


def cmd_estimate(config: RunConfig, outputs: OutputSet) -> Dict[str, Any]:
    """Run the requested estimators; long-format CSV plus a JSON summary."""
    reports = run_estimators(config)
    rows = [row for rep in reports for row in rep.csv_rows()]
    write_table(outputs, "estimates.csv", config, rows, CSV_FIELDS)
    write_json(outputs, "estimates.json", config, {"reports": [r.to_json() for r in reports]})
    for rep in reports:
        target = "" if rep.target is None else f" (target {rep.target:.3f})"
        print(f"{rep.kind:>12}: {rep.estimate:.4f}{target}")
    return {rep.kind: rep.to_json()["estimate"] for rep in reports}


def cmd_check(config: RunConfig, outputs: OutputSet) -> Dict[str, Any]:
    """Assumption report; prints the level table and the verdict line."""
    if config.collection == "lower-layers":
        if config.metric not in (None, "d_m"):
            raise DomainError("lower layers are checked under d_m only")
        n_max = config.levels[1] if config.levels else LOWER_LAYERS_MAX_LEVEL
        report = lower_layers_report(n_max, seed=config.seed)
    else:
        lo, hi = config.levels if config.levels else (None, None)
        desc = CollectionDescriptor.rectangles(
            config.dim, config.metric or "d_hausdorff", level_min=lo, level_max=hi
        )
        report = check_assumptions(
            desc, seed=config.seed, deltas=config.deltas, samples=config.samples
        )
    table = report.table()
    write_json(outputs, "check.json", config, {"report": report.to_json()})
    write_table(outputs, "check.csv", config, table)
    print(f"{'level':>5} {'k_n':>12} {'sup_gap':>12} {'bound':>12}  pass")
    for row in table:
        print(f"{row['level']:>5} {row['k_n']:>12} {row['sup_gap']:>12.6g} "
              f"{row['bound']:>12.6g}  {row['pass']}")
    q = "n/a" if report.q_fit is None else f"{report.q_fit:.3f}"
    print(f"verdict: {report.verdict} (q_fit={q})")
    return {"verdict": report.verdict, "q_fit": report.q_fit, "q_used": report.q_used}


def cmd_flow(config: RunConfig, outputs: OutputSet) -> Dict[str, Any]:
    """Projection covariance against fbm_cov, optionally with sampled projected paths."""
    model = config.cov_model()
    flow = resolve_flow(config)
    grid = flow_grid(flow, config.flow_points)
    rows = projection_table(model, flow, grid)
    max_diff = max(row["absdiff"] for row in rows)
    if config.format == "csv":
        write_table(outputs, "flow.csv", config, rows)
    else:
        write_json(outputs, "flow.json", config, {"rows": rows, "max_absdiff": max_diff})
    if config.sample_flow:
        path = sample_paths(model, projected_sets(flow, grid), config.seed, config.reps,
                            threads=config.threads, cap=config.max_sets)
        values = projected_values(path, flow, grid)
        long_rows = [
            {"replicate": rep, "s": float(s), "value": float(values[rep, j])}
            for rep in range(values.shape[0])
            for j, s in enumerate(grid)
        ]
        write_table(outputs, "flow_paths.csv", config, long_rows)
    print(f"flow: max |projected - fbm| = {max_diff:.3e} over {len(rows)} pairs")
    return {"max_absdiff": max_diff, "pairs": len(rows)}


def cmd_demo_unbounded(config: RunConfig, outputs: OutputSet) -> Dict[str, Any]:
    """Mean of W_C against sqrt(k h / 2 pi), plus the growth table."""
    report = demo_unbounded(config.h, config.cells, config.seed, config.reps)
    body: Dict[str, Any] = {"report": report.to_dict()}
    rows = [report.to_dict()]
    if config.growth:
        growth = growth_table(config.h, config.seed, config.reps)
        body["growth"] = growth
        rows = growth["rows"]
    write_json(outputs, "unbounded.json", config, body)
    write_table(outputs, "unbounded.csv", config, rows)
    print(f"demo-unbounded: k={report.cells} mean W_C {report.mean_wc:.4f} "
          f"vs {report.theoretical_mean:.4f}")
    return {"mean_wc": report.mean_wc, "theoretical_mean": report.theoretical_mean}


def cmd_entropy(config: RunConfig, outputs: OutputSet) -> Dict[str, Any]:
    """Covering numbers of the rectangles and the Dudley integral."""
    desc = CollectionDescriptor.rectangles(config.dim, config.metric or "d_m")
    report = covering_table(desc, config.epsilons or DEFAULT_EPSILONS)
    write_json(outputs, "entropy.json", config, {"report": report.to_json()})
    write_table(outputs, "entropy.csv", config, report.table())
    for row in report.table():
        print(f"eps={row['eps']:<10.6g} N={row['covering']:<8} bound={row['bound']:.6g}")
    print(f"q_entropy={report.q_entropy:.3f} dudley={report.dudley:.4f}")
    return {"q_entropy": report.q_entropy, "dudley": report.dudley}


COMMANDS: Dict[str, Callable[[RunConfig, OutputSet], Dict[str, Any]]] = {
    "simulate": cmd_simulate,
    "estimate": cmd_estimate,
    "check": cmd_check,
    "flow": cmd_flow,
    "demo-unbounded": cmd_demo_unbounded,
    "entropy": cmd_entropy,
}


# ============ Argument parsing ============

def _opt(parser: argparse.ArgumentParser, *names: str, **kwargs) -> None:
    # Absent flags stay absent so lower-precedence sources can fill them.
    parser.add_argument(*names, default=argparse.SUPPRESS, **kwargs)


def _global_args(parser: argparse.ArgumentParser) -> None:
    _opt(parser, "--seed", type=int, help="Philox stream key")
    _opt(parser, "--reps", type=int, help="Number of replicates")
    _opt(parser, "--out", help="Output directory")
    _opt(parser, "--format", help="csv or json (simulate also takes binary)")
    _opt(parser, "--threads", type=int, help="Worker threads for replicate loops")
    _opt(parser, "--config", help="JSON config file (an output file's config is accepted)")
    _opt(parser, "--log-level", dest="log_level", help="DEBUG, INFO, WARNING or ERROR")
    _opt(parser, "--max-sets", dest="max_sets", type=int, help="Covariance matrix cap")
    _opt(parser, "--no-run-log", dest="run_log", action="store_false",
         help="Do not write a run record")


def _model_args(parser: argparse.ArgumentParser) -> None:
    _opt(parser, "--model", help="sibm, sifbm or siou")
    _opt(parser, "--H", dest="H", type=float, help="SIFBM index in (0, 0.5]")
    _opt(parser, "--sigma", type=float, help="SIOU noise scale")
    _opt(parser, "--gamma", type=float, help="SIOU mean reversion rate")
    _opt(parser, "--dim", type=int, help="Dimension N of [0,1]^N")


def _ball_args(parser: argparse.ArgumentParser) -> None:
    _opt(parser, "--center", help="Corner of U0, e.g. 0.6,0.6")
    _opt(parser, "--rho-max", dest="rho_max", type=float, help="Largest ball radius")
    _opt(parser, "--scales", type=int, help="Number of dyadic radii")
    _opt(parser, "--pair-budget", dest="pair_budget", type=int, help="Random sets per radius")
    _opt(parser, "--design-seed", dest="design_seed", type=int, help="Key of the design")
    _opt(parser, "--metric", help="d_m or d_hausdorff")


def _pc_args(parser: argparse.ArgumentParser) -> None:
    _opt(parser, "--t", dest="t", help="Point t of the open cube, e.g. 0.37,0.61")
    _opt(parser, "--levels", help="Level range lo:hi")


def _flow_args(parser: argparse.ArgumentParser) -> None:
    _opt(parser, "--flow", help="JSON flow descriptor")
    _opt(parser, "--flow-points", dest="flow_points", type=int, help="Measure times on the grid")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sidx", description="Set-indexed Gaussian processes and their Hölder regularity"
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    _global_args(parser)
    sub = parser.add_subparsers(dest="command")

    p = sub.add_parser("simulate", help="Sample paths on a design")
    _global_args(p)
    _model_args(p)
    _opt(p, "--design", help="grid, ball, flow or pc")
    _opt(p, "--grid-level", dest="grid_level", type=int, help="Level n of the grid design")
    _ball_args(p)
    _pc_args(p)
    _flow_args(p)

    p = sub.add_parser("estimate", help="Estimate regularity exponents")
    _global_args(p)
    _model_args(p)
    _opt(p, "--kind", dest="kinds", help="Comma-separated exponent kinds")
    _opt(p, "--local-method", dest="local_method", help="ratio (default) or bands")
    _opt(p, "--input", help="Sample path CSV written by simulate")
    _ball_args(p)
    _pc_args(p)

    p = sub.add_parser("check", help="Check the assumptions on an indexing collection")
    _global_args(p)
    _opt(p, "--collection", help="rectangles or lower-layers")
    _opt(p, "--dim", type=int, help="Dimension N of [0,1]^N")
    _opt(p, "--metric", help="d_m or d_hausdorff (rectangles default to d_hausdorff)")
    _opt(p, "--levels", help="Level range lo:hi")
    _opt(p, "--deltas", help="Comma-separated delta grid of the ratio tests")
    _opt(p, "--samples", type=int, help="Random confirmations of the gap per level")

    p = sub.add_parser("flow", help="Projection covariance along a flow")
    _global_args(p)
    _model_args(p)
    _flow_args(p)
    _opt(p, "--sample-paths", dest="sample_flow", action="store_true",
         help="Also write sampled projected paths")

    p = sub.add_parser("demo-unbounded", help="Unboundedness over an adaptive class-C set")
    _global_args(p)
    _opt(p, "--cells", type=int, help="Number of cells k, a power of 2")
    _opt(p, "--h", dest="h", type=float, help="Strip height")
    _opt(p, "--no-growth", dest="growth", action="store_false", help="Skip the growth table")

    p = sub.add_parser("entropy", help="Covering numbers of the rectangles")
    _global_args(p)
    _opt(p, "--dim", type=int, help="Dimension N of [0,1]^N")
    _opt(p, "--metric", help="d_m or d_hausdorff")
    _opt(p, "--epsilons", help="Comma-separated scales in (0, 1/2]")
    return parser


def _validation_message(exc: ValidationError) -> str:
    return "; ".join(
        f"{'.'.join(str(part) for part in err['loc'])}: {err['msg']}" for err in exc.errors()
    )


def configure_logging(level: str) -> None:
    logging.basicConfig(format="%(asctime)s %(name)s %(levelname)s: %(message)s")
    logging.getLogger().setLevel(level)


def _log_run(config: RunConfig, outputs: OutputSet, summary: Dict[str, Any]) -> Optional[str]:
    if not config.run_log:
        return None
    run_logger = RunLogger(Path(config.out) / "runs")
    summary = json.loads(dumps(summary))
    return run_logger.log_run(
        __version__, config.command, config.echo(), [str(p) for p in outputs.written], summary
    )


def parse_config(argv: Optional[Sequence[str]] = None) -> Tuple[Optional[RunConfig], int]:
    """Parse argv into a validated config, or an exit code."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return None, exc.code if isinstance(exc.code, int) else EXIT_USAGE
    flags = vars(args)
    command = flags.pop("command", None)
    if command is None:
        parser.print_usage(sys.stderr)
        return None, EXIT_USAGE
    config_path = flags.pop("config", None)
    try:
        return build_config(command, flags, config_path), EXIT_OK
    except ValidationError as exc:
        print(f"error: {_validation_message(exc)}", file=sys.stderr)
    except (DomainError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
    return None, EXIT_USAGE


def main(argv: Optional[Sequence[str]] = None) -> int:
    config, code = parse_config(argv)
    if config is None:
        return code
    configure_logging(config.log_level)
    outputs = OutputSet(config.out)
    try:
        summary = COMMANDS[config.command](config, outputs)
    except NUMERIC_ERRORS as exc:
        outputs.discard()
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except USAGE_ERRORS as exc:
        outputs.discard()
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except BaseException:
        outputs.discard()
        raise
    digest = _log_run(config, outputs, summary)
    if digest:
        logger.info("run record %s", digest[:16])
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
