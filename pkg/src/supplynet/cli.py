"""``supplynet`` command line.

Every subcommand writes ``manifest.json`` next to its outputs. The manifest
records the exact argument vector, the resolved parameters and seeds, input
file hashes, output files, the package version and the wall time, and
``supplynet replay`` re-runs it. Exit codes: 0 success, 1 validation or
runtime failure, 2 usage error.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .esri import NonConvergenceError, ensemble_esri, esri_all
from .esri.engine import BACKEND
from .ingest import (
    EXCLUDED_SECTORS,
    load_comm_edges,
    load_firms,
    load_io_table,
    load_sector_mapping,
    load_supply_network,
    load_survey,
    write_csv,
    write_firms,
    write_io_table,
    write_results,
    write_supply_edges,
)
from .model import ValidationError

logger = logging.getLogger("supplynet")

MANIFEST_SCHEMA = 1


class UsageError(Exception):
    pass


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _jsonable(x):
    if isinstance(x, Path):
        return str(x)
    if isinstance(x, np.generic):
        return x.item()
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    return x


def _write_json(path, doc) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(_jsonable(doc), indent=1, sort_keys=True) + "\n")
    return path


class Run:
    """Collects what a subcommand read and wrote, then emits the manifest."""

    def __init__(self, command: str, argv: list[str], args: argparse.Namespace):
        self.command = command
        self.argv = argv
        self.params = {k: v for k, v in vars(args).items() if k not in ("func", "command")}
        self.seeds: dict = {}
        self.inputs: dict[str, str] = {}
        self.outputs: list[str] = []
        self.extra: dict = {}
        self.t0 = time.perf_counter()

    def read(self, path):
        if path is not None:
            self.inputs[str(path)] = _sha256(path)
        return path

    def wrote(self, path):
        self.outputs.append(str(path))
        return path

    def finish(self, out_dir) -> Path:
        return _write_json(Path(out_dir) / "manifest.json", {
            "schema": MANIFEST_SCHEMA,
            "tool": "supplynet",
            "version": __version__,
            "command": self.command,
            "argv": self.argv,
            "params": self.params,
            "seeds": self.seeds,
            "inputs": self.inputs,
            "outputs": self.outputs,
            "elapsed_s": round(time.perf_counter() - self.t0, 3),
            **self.extra,
        })


def _floats(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _ints(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


# ------------------------------------------------------------------ commands


def cmd_reconstruct(args, run: Run) -> None:
    from .reconstruct import ReconstructionConfig, reconstruct_ensemble

    out = Path(args.out_dir)
    comm = load_comm_edges(run.read(args.comm))
    every = load_firms(run.read(args.firms), exclude=())
    firms = [f for f in every if f.sector not in EXCLUDED_SECTORS]
    iot = load_io_table(run.read(args.iot))
    sector_map = load_sector_mapping(run.read(args.sector_map)) if args.sector_map else None
    overrides = dict(
        duration_threshold=args.duration_threshold, device_threshold=args.device_threshold,
        rng_seed=args.seed, ensemble_size=args.ensemble_size,
    )
    if args.config:
        cfg = ReconstructionConfig.from_file(run.read(args.config), **overrides)
    else:
        cfg = ReconstructionConfig(**{k: v for k, v in overrides.items() if v is not None})
    excluded = {f.id for f in every} - {f.id for f in firms}
    if excluded:
        # firms whose phone traffic is their product leave the network entirely
        keep = np.array([i for i, x in enumerate(comm.ids) if x not in excluded], dtype=np.int64)
        logger.info("dropping %d firms from excluded sectors", comm.n - keep.size)
        comm = comm.induced(keep)
    ensemble = reconstruct_ensemble(comm, firms, iot, cfg, sector_map)
    run.seeds = {"rng_seed": cfg.rng_seed, "member_spawn_keys": list(range(cfg.ensemble_size))}
    run.extra["config"] = cfg.to_dict()
    run.extra["excluded_firms"] = len(excluded)
    lookup = {f.id: f for f in firms}
    run.wrote(write_firms(out / "firms.csv", [lookup[i] for i in comm.ids]))
    for k, net in enumerate(ensemble):
        run.wrote(write_supply_edges(out / f"rsn_{k:03d}.csv", net))
    run.finish(out)


def _load_ensemble(d: Path, run: Run):
    files = sorted(d.glob("rsn_*.csv"))
    if not files:
        raise ValidationError(f"no rsn_*.csv files in {d}")
    firms_path = d / "firms.csv"
    if not firms_path.exists():
        raise ValidationError(f"{firms_path} is missing")
    run.read(firms_path)
    return [load_supply_network(run.read(f), firms_path) for f in files]


def cmd_esri(args, run: Run) -> None:
    out = Path(args.out)
    run.extra["backend"] = BACKEND
    if args.ensemble_dir:
        nets = _load_ensemble(Path(args.ensemble_dir), run)
        stats = ensemble_esri(nets, args.top_k, args.pilot, args.epsilon, args.max_iter, args.workers)
        run.wrote(write_results(stats.sorted(), out))
        failed = [(m, i) for m, i in stats.failed]
        header = ("member", "id")
    else:
        net = load_supply_network(run.read(args.network), run.read(args.firms))
        prof = esri_all(net, args.epsilon, args.max_iter, args.workers)
        run.wrote(write_results(prof.sorted(), out))
        failed = [(i,) for i in prof.failed]
        header = ("id",)
    if failed:
        side = out.with_name(out.stem + "_nonconverged.csv")
        run.wrote(write_csv(side, header, failed))
        logger.warning("%d cascades did not converge; listed in %s", len(failed), side)
    run.finish(out.parent)


def cmd_topology(args, run: Run) -> None:
    from . import topology as topo

    out = Path(args.out_dir)
    if args.comm:
        net = load_comm_edges(run.read(args.comm))
    else:
        if not args.network or not args.firms:
            raise UsageError("--network needs --firms (or pass --comm)")
        net = load_supply_network(run.read(args.network), run.read(args.firms))
    mode = "total" if args.comm else args.mode
    stats = topo.degree_stats(net, mode)
    run.wrote(write_csv(out / "ccdf.csv", ("degree", "pmf", "ccdf"),
                        ((k, stats.pmf[k], stats.ccdf[k]) for k in sorted(stats.pmf))))
    run.wrote(write_csv(out / "knn.csv", ("degree", "knn"), sorted(topo.knn_curve(net).items())))
    curve, _ = topo.clustering_curve(net)
    run.wrote(write_csv(out / "clustering.csv", ("degree", "clustering"), sorted(curve.items())))
    summary = topo.network_summary(net)
    summary["degree_mode"] = mode
    if args.kmin is not None:
        alpha, err = topo.powerlaw_tail_fit(topo.degrees(net, mode), args.kmin)
        summary["tail_fit"] = {"kmin": args.kmin, "alpha": alpha, "stderr": err}
    run.wrote(_write_json(out / "summary.json", summary))
    run.finish(out)


def cmd_overlap(args, run: Run) -> None:
    from . import overlap as ov

    out = Path(args.out_dir)
    comm = load_comm_edges(run.read(args.comm))
    survey = load_survey(run.read(args.survey))
    devices = None
    if args.firms:
        devices = {f.id: f.devices for f in load_firms(run.read(args.firms), exclude=())}
    psc = ov.conditional_s_given_c(comm, survey, args.bins)
    run.seeds = {"bootstrap_seed": args.seed}
    bands = [ov.bootstrap_psc(comm, [pt], args.sample_size or pt.n_links, args.reps, args.seed)[0] for pt in psc]
    run.wrote(write_csv(out / "psc.csv", ("threshold", "estimate", "q25", "q75", "n_links"),
                        ((p.threshold, p.estimate, b.q25, b.q75, p.n_links) for p, b in zip(psc, bands))))
    pcs = ov.conditional_c_given_s(comm, survey, args.device_thresholds, devices)
    comm_pairs = comm.edge_pairs()
    samples = {}
    for t in (p.threshold for p in pcs):
        kept = [p for p in survey.pairs() if devices is None or all(devices.get(x, 0) > t for x in p)]
        samples[t] = sorted(int(p in comm_pairs) for p in kept)
    pcs_bands = ov.bootstrap_pcs(samples, args.reps, args.seed) if samples else []
    run.wrote(write_csv(out / "pcs.csv", ("threshold", "estimate", "q25", "q75", "n_links"),
                        ((p.threshold, p.estimate, b.q25, b.q75, p.n_links) for p, b in zip(pcs, pcs_bands))))
    run.finish(out)


EXPERIMENT_KEYS = {
    "m": float, "pcs": float, "pc_not_s": float, "min_pair_links": int,
    "top_fraction": float, "wide_fraction": float, "epsilon": float, "max_iter": int,
}
GENERATOR_KEYS = {
    "n": int, "mean_degree": float, "tail_exponent": float, "n_sectors": int,
    "size_sigma": float, "polarization": float, "sector_skew": float, "gen_seed": int,
}


def _parse_params(text: str | None) -> dict:
    out = {}
    if not text:
        return out
    for item in text.split(","):
        if not item.strip():
            continue
        if "=" not in item:
            raise UsageError(f"--params entries must be key=value, got {item!r}")
        k, v = (s.strip() for s in item.split("=", 1))
        conv = EXPERIMENT_KEYS.get(k) or GENERATOR_KEYS.get(k)
        if conv is None:
            raise UsageError(f"unknown parameter {k!r}")
        try:
            out[k] = conv(v)
        except ValueError:
            raise UsageError(f"bad value for {k}: {v!r}") from None
    return out


def cmd_robustness(args, run: Run) -> None:
    from . import robustness as rb
    from .synthgen import aggregate_io_table, generate_economy

    out = Path(args.out_dir)
    p = _parse_params(args.params)
    gen = {k: p.pop(k) for k in list(p) if k in GENERATOR_KEYS}
    if args.network:
        if not args.firms:
            raise UsageError("--network needs --firms")
        if gen:
            raise UsageError(f"generator parameters {sorted(gen)} make no sense with --network")
        net = load_supply_network(run.read(args.network), run.read(args.firms))
        iot = load_io_table(run.read(args.iot)) if args.iot else aggregate_io_table(net)
    else:
        gen_seed = gen.pop("gen_seed", args.seed)
        net, iot = generate_economy(seed=gen_seed, **gen)
        run.seeds["generator_seed"] = gen_seed
    run.seeds["experiment_seed"] = args.seed
    exp = args.experiment
    allowed = {
        "market-share": {"m", "epsilon", "max_iter"},
        "overlap": {"m", "pcs", "pc_not_s", "epsilon", "max_iter"},
        "full": {"m", "pcs", "pc_not_s", "top_fraction", "wide_fraction", "epsilon", "max_iter"},
        "directions": {"min_pair_links"},
    }[exp]
    if set(p) - allowed:
        raise UsageError(f"parameters {sorted(set(p) - allowed)} do not apply to --experiment {exp}")
    esri_kw = dict(eps=p.pop("epsilon", 1e-2), max_iter=p.pop("max_iter", 1000), workers=args.workers)
    m = p.pop("m", 1 / 3)
    pcs = p.pop("pcs", 0.21)
    pc_not_s = p.pop("pc_not_s", 9.3e-5)
    if exp == "market-share":
        res = rb.market_share_experiment(net, m, args.reps, args.seed, **esri_kw)
    elif exp == "overlap":
        res = rb.overlap_experiment(net, pcs, pc_not_s, m, args.reps, args.seed, iot=iot, **esri_kw)
    elif exp == "full":
        top = {k: p.pop(k) for k in ("top_fraction", "wide_fraction") if k in p}
        res = rb.full_pipeline_experiment(net, iot, pcs, pc_not_s, m, args.reps, args.seed, **top, **esri_kw)
    else:
        res = rb.direction_recovery_experiment(net, args.reps, args.seed, p.pop("min_pair_links", 1))
    run.wrote(write_results(res.as_table(), out / "reps.csv"))
    summary = res.summary()
    summary["network"] = {"n": net.n, "m": net.m, **({"generator": gen} if not args.network else {})}
    run.wrote(_write_json(out / "summary.json", summary))
    run.finish(out)


def cmd_synth(args, run: Run) -> None:
    from .synthgen import generate_economy

    out = Path(args.out_dir)
    net, iot = generate_economy(
        args.n, args.mean_degree, args.tail_exponent, args.n_sectors, args.size_sigma, args.seed,
        args.polarization, args.sector_skew,
    )
    run.seeds = {"seed": args.seed}
    run.wrote(write_firms(out / "firms.csv", net.firms()))
    run.wrote(write_supply_edges(out / "network.csv", net))
    run.wrote(write_io_table(out / "iot.csv", iot))
    run.finish(out)


def cmd_replay(args, run: Run) -> int:
    doc = json.loads(Path(args.manifest).read_text())
    if doc.get("tool") != "supplynet" or "argv" not in doc:
        raise ValidationError(f"{args.manifest} is not a supplynet manifest")
    argv = list(doc["argv"])
    if args.out_dir:
        for flag in ("--out-dir", "--out"):
            if flag in argv:
                i = argv.index(flag) + 1
                old = Path(argv[i])
                argv[i] = str(Path(args.out_dir) / old.name) if flag == "--out" else args.out_dir
    if doc.get("version") != __version__:
        logger.warning("manifest written by version %s, running %s", doc.get("version"), __version__)
    return main(argv)


# ------------------------------------------------------------------ parser


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="supplynet", description="Supply-network reconstruction and systemic risk.")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("reconstruct", help="threshold, orient and weight a communication network")
    p.add_argument("--comm", required=True)
    p.add_argument("--firms", required=True)
    p.add_argument("--iot", required=True)
    p.add_argument("--config")
    p.add_argument("--sector-map")
    p.add_argument("--duration-threshold", type=float)
    p.add_argument("--device-threshold", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--ensemble-size", type=int)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_reconstruct)

    p = sub.add_parser("esri", help="systemic risk of every firm, or ensemble statistics")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--network")
    src.add_argument("--ensemble-dir")
    p.add_argument("--firms")
    p.add_argument("--epsilon", type=float, default=1e-2)
    p.add_argument("--max-iter", type=int, default=1000)
    p.add_argument("--top-k", type=int, default=1000)
    p.add_argument("--pilot", type=int, default=5)
    p.add_argument("--workers", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_esri)

    p = sub.add_parser("topology", help="degree, k_nn and clustering curves")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--network")
    src.add_argument("--comm")
    p.add_argument("--firms")
    p.add_argument("--mode", choices=("total", "in", "out", "undirected"), default="undirected")
    p.add_argument("--kmin", type=int)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_topology)

    p = sub.add_parser("overlap", help="p(s|c) and p(c|s) curves with bootstrap bands")
    p.add_argument("--comm", required=True)
    p.add_argument("--survey", required=True)
    p.add_argument("--firms", help="firm table providing device counts")
    p.add_argument("--bins", type=_floats, default=[0.0, 10.0, 20.0, 30.0, 40.0, 50.0, 60.0])
    p.add_argument("--device-thresholds", type=_ints, default=[0])
    p.add_argument("--sample-size", type=int, help="survey size for the p(s|c) bootstrap (default: links per point)")
    p.add_argument("--reps", type=int, default=1500)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_overlap)

    p = sub.add_parser("robustness", help="simulation studies of reconstruction error")
    p.add_argument("--experiment", required=True, choices=("market-share", "overlap", "full", "directions"))
    p.add_argument("--params", help="comma-separated key=value pairs")
    p.add_argument("--network")
    p.add_argument("--firms")
    p.add_argument("--iot")
    p.add_argument("--reps", type=int, default=50)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_robustness)

    p = sub.add_parser("synth", help="generate a synthetic economy")
    p.add_argument("--n", type=int, default=10_000)
    p.add_argument("--mean-degree", type=float, default=2.1)
    p.add_argument("--tail-exponent", type=float, default=2.4)
    p.add_argument("--n-sectors", type=int, default=20)
    p.add_argument("--size-sigma", type=float, default=1.0)
    p.add_argument("--polarization", type=float, default=0.12)
    p.add_argument("--sector-skew", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("replay", help="re-run a command from its manifest")
    p.add_argument("manifest")
    p.add_argument("--out-dir", help="write outputs here instead")
    p.set_defaults(func=cmd_replay)
    return ap


def _fail(code: int, kind: str, exc: BaseException) -> int:
    err = {"error": kind, "message": str(exc)}
    for attr in ("field", "line"):
        val = getattr(exc, attr, None)
        if val is not None:
            err[attr] = val
    print(json.dumps(err), file=sys.stderr)
    return code


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    if args.command == "esri" and args.network and not args.firms:
        parser.print_usage(sys.stderr)
        print("supplynet esri: error: --network needs --firms", file=sys.stderr)
        return 2
    run = Run(args.command, argv, args)
    try:
        rc = args.func(args, run)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"supplynet {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except ValidationError as exc:
        return _fail(1, "validation", exc)
    except NonConvergenceError as exc:
        return _fail(1, "non-convergence", exc)
    except (OSError, ValueError) as exc:
        return _fail(1, type(exc).__name__, exc)
    return int(rc or 0)


if __name__ == "__main__":
    sys.exit(main())
