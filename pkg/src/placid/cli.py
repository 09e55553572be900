"""Command-line entry point: ``placid <command> ...``.

Exit codes: 0 success, 2 configuration or usage error, 3 data error
(including a cyclic ARG file), 4 degeneracy (peeling stall or singular
estimation problem), 5 internal error.
"""

from __future__ import annotations

import argparse
import datetime as _dt
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from . import __version__
from ._accel import backend
from .dataio import (
    FORMAT_VERSION,
    ConfigError,
    RunConfig,
    load_config,
    load_dataset,
    write_dataset_csv,
    write_json,
    write_matrix_csv,
)
from .dcor import independence_matrices
from .errors import BasisError, CycleError, DataError, DegeneracyError
from .gmm import estimate
from .graph import AncestralGraph
from .peeling import PeelingResult, estimate_arg
from .simulation import PRESETS, SimConfig, run_benchmark, simulate

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_DEGENERATE, EXIT_INTERNAL = 0, 2, 3, 4, 5

log = logging.getLogger("placid")


def _artifact(command: str, config: dict, body: dict) -> dict:
    return {"format_version": FORMAT_VERSION, "command": command, "config": config, **body}


def _write_metadata(out: Path, command: str, argv):
    write_json(
        out / "metadata.json",
        {
            "command": command,
            "argv": list(argv),
            "version": __version__,
            "backend": backend(),
            "created": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
        },
    )


def _run_config(args) -> RunConfig:
    cfg = load_config(args.config)
    return cfg.with_overrides(
        alpha=getattr(args, "alpha", None),
        gamma=getattr(args, "gamma", None),
        q_star=getattr(args, "q_star", None),
        omega=getattr(args, "omega", None),
        degree=getattr(args, "degree", None),
    )


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_dcor(out: Path, cfg: RunConfig, dc):
    write_json(
        out / "dcor.json",
        _artifact(
            "dcor",
            cfg.to_dict(),
            {"rows": list(cfg.secondary), "columns": list(cfg.primary), **dc.to_dict()},
        ),
    )
    write_matrix_csv(out / "C.csv", dc.c, cfg.secondary, cfg.primary)
    write_matrix_csv(out / "R.csv", dc.rejections.astype(int), cfg.secondary, cfg.primary)


def _write_arg(out: Path, cfg: RunConfig, peel: PeelingResult):
    write_json(out / "arg.json", _artifact("discover", cfg.to_dict(), peel.to_dict()))
    (out / "arg.dot").write_text(peel.arg.to_dot())


def _write_estimate(out: Path, cfg: RunConfig, est):
    payload = est.to_dict()
    names = {"primary": list(cfg.primary), "secondary": list(cfg.secondary)}
    write_json(out / "estimate.json", _artifact("estimate", cfg.to_dict(), {**names, **payload}))
    (out / "selected.dot").write_text(est.to_dot())


def cmd_dcor(args) -> int:
    cfg = _run_config(args)
    data = load_dataset(args.data, cfg)
    out = _out_dir(args)
    dc = independence_matrices(data.X, data.Y, cfg.alpha)
    _write_dcor(out, cfg, dc)
    _write_metadata(out, "dcor", args.argv)
    return EXIT_OK


def _discover(cfg, data, out):
    dc = independence_matrices(data.X, data.Y, cfg.alpha)
    peel = estimate_arg(dc)
    _write_dcor(out, cfg, dc)
    _write_arg(out, cfg, peel)
    for msg in peel.warnings:
        log.warning(msg)
    return peel


def cmd_discover(args) -> int:
    cfg = _run_config(args)
    data = load_dataset(args.data, cfg)
    out = _out_dir(args)
    peel = _discover(cfg, data, out)
    _write_metadata(out, "discover", args.argv)
    return EXIT_DEGENERATE if peel.stalled else EXIT_OK


def _load_arg(path) -> AncestralGraph:
    try:
        payload = json.loads(Path(path).read_text())
    except OSError as exc:
        raise DataError(f"cannot read ARG file {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from None
    graph = payload.get("arg", payload)
    try:
        return AncestralGraph.from_dict(graph)
    except CycleError as exc:
        raise CycleError(exc.cycle, f"{path}: {exc}") from None
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"{path}: malformed ARG: {exc}") from None


def cmd_estimate(args) -> int:
    cfg = _run_config(args)
    data = load_dataset(args.data, cfg)
    graph = _load_arg(args.arg)
    if (graph.p, graph.q) != (data.Y.shape[1], data.X.shape[1]):
        raise DataError(
            f"{args.arg}: ARG has p={graph.p}, q={graph.q} but the config selects "
            f"{data.Y.shape[1]} primary and {data.X.shape[1]} secondary columns"
        )
    out = _out_dir(args)
    est = estimate(
        data.X, data.Y, graph, gamma=cfg.gamma, omega=cfg.omega, q_star=cfg.q_star,
        basis=cfg.basis, augment=cfg.augment,
    )
    _write_estimate(out, cfg, est)
    _write_metadata(out, "estimate", args.argv)
    return EXIT_OK


def cmd_pipeline(args) -> int:
    cfg = _run_config(args)
    data = load_dataset(args.data, cfg)
    out = _out_dir(args)
    peel = _discover(cfg, data, out)
    est = estimate(
        data.X, data.Y, peel, gamma=cfg.gamma, omega=cfg.omega, q_star=cfg.q_star,
        basis=cfg.basis, augment=cfg.augment,
    )
    _write_estimate(out, cfg, est)
    _write_metadata(out, "pipeline", args.argv)
    return EXIT_DEGENERATE if peel.stalled else EXIT_OK


def _sim_config(args) -> SimConfig:
    if args.preset and args.sim_config:
        raise ConfigError("give either --preset or --sim-config, not both")
    if args.preset:
        cfg = PRESETS[args.preset]
    elif args.sim_config:
        try:
            cfg = SimConfig.from_dict(json.loads(Path(args.sim_config).read_text()))
        except OSError as exc:
            raise ConfigError(f"cannot read {args.sim_config}: {exc.strerror}") from None
        except (json.JSONDecodeError, TypeError, ValueError) as exc:
            raise ConfigError(f"{args.sim_config}: {exc}") from None
    else:
        raise ConfigError("one of --preset or --sim-config is required")
    changes = {}
    if getattr(args, "reps", None) is not None:
        changes["n_reps"] = args.reps
    if args.seed is not None:
        changes["seed"] = args.seed
    if getattr(args, "n", None) is not None:
        changes["n"] = args.n
    if getattr(args, "alpha", None) is not None:
        changes["alpha"] = args.alpha
    try:
        return replace(cfg, **changes)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def cmd_simulate(args) -> int:
    cfg = _sim_config(args)
    data = simulate(cfg, args.rep)
    out = _out_dir(args)
    secondary = [f"X{i}" for i in range(1, data.truth.q + 1)]
    primary = [f"Y{j}" for j in range(1, data.truth.p + 1)]
    write_dataset_csv(out / "data.csv", data.X, data.Y, secondary, primary)
    kind = cfg.basis.kinds
    run_cfg = RunConfig(
        primary=tuple(primary),
        secondary=tuple(secondary),
        kinds=dict.fromkeys(secondary, kind),
        alpha=cfg.alpha,
        gamma=cfg.gamma,
        q_star=cfg.q_star,
        omega=cfg.omega,
        degree=cfg.degree,
        augment=cfg.augment,
        seed=cfg.seed,
    )
    write_json(out / "config.json", run_cfg.to_dict())
    write_json(
        out / "truth.json",
        {
            "format_version": FORMAT_VERSION,
            "simulation": cfg.to_dict(),
            "rep": args.rep,
            "graph": data.truth.to_dict(),
            "coefficients": data.B_true.tolist(),
        },
    )
    (out / "truth.dot").write_text(data.truth.to_dot())
    _write_metadata(out, "simulate", args.argv)
    return EXIT_OK


def cmd_benchmark(args) -> int:
    cfg = _sim_config(args)
    out = _out_dir(args)

    def progress(done, total):
        if args.verbose:
            print(f"replication {done}/{total}", file=sys.stderr)

    summary = run_benchmark(cfg, workers=args.workers, progress=progress)
    (out / "summary.json").write_text(summary.to_json())
    (out / "summary.csv").write_text(summary.to_csv())
    if args.records:
        (out / "records.jsonl").write_text(summary.to_jsonl())
    _write_metadata(out, "benchmark", args.argv)
    for metric, (mean, sd) in summary.stats.items():
        print(f"{metric:10s} {mean:.4f} ({sd:.4f})")
    if summary.n_failed:
        print(f"{summary.n_failed} of {cfg.n_reps} replications failed", file=sys.stderr)
    return EXIT_OK


def _add_run_options(p: argparse.ArgumentParser, estimation: bool = True):
    p.add_argument("--data", required=True, help="CSV file with a header row")
    p.add_argument("--config", required=True, help="JSON run configuration")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--alpha", type=float, help="fixed DC test level (default 1/n^2)")
    if estimation:
        p.add_argument("--gamma", type=int)
        p.add_argument("--q-star", dest="q_star", type=float)
        p.add_argument("--omega", choices=("identity", "two-step"))
        p.add_argument("--degree", type=int)


def _add_sim_options(p: argparse.ArgumentParser):
    p.add_argument("--preset", choices=sorted(PRESETS))
    p.add_argument("--sim-config", help="JSON file with simulation settings")
    p.add_argument("--seed", type=int)
    p.add_argument("--n", type=int, help="sample size override")
    p.add_argument("--alpha", type=float)
    p.add_argument("--out", required=True)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="placid", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("dcor", help="distance correlations and test decisions")
    _add_run_options(p, estimation=False)
    p.set_defaults(func=cmd_dcor)

    p = sub.add_parser("discover", help="estimate the ancestral relation graph")
    _add_run_options(p, estimation=False)
    p.set_defaults(func=cmd_discover)

    p = sub.add_parser("estimate", help="estimate effects on a given ARG")
    _add_run_options(p)
    p.add_argument("--arg", required=True, help="ARG JSON from 'discover' or hand written")
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("pipeline", help="discover then estimate")
    _add_run_options(p)
    p.set_defaults(func=cmd_pipeline)

    p = sub.add_parser("simulate", help="write one simulated dataset")
    _add_sim_options(p)
    p.add_argument("--rep", type=int, default=0)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("benchmark", help="run a simulation benchmark")
    _add_sim_options(p)
    p.add_argument("--reps", type=int)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--records", action="store_true", help="also write per-replication JSON lines")
    p.set_defaults(func=cmd_benchmark)
    return parser


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    args.argv = argv
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="placid: %(levelname)s: %(message)s",
    )
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"placid: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, CycleError, BasisError) as exc:
        print(f"placid: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except DegeneracyError as exc:
        print(f"placid: degenerate problem: {exc}", file=sys.stderr)
        return EXIT_DEGENERATE
    except Exception as exc:  # noqa: BLE001
        print(f"placid: internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
