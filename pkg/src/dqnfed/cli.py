"""Command-line front end.

    dqnfed run --config run.toml [--out DIR] [--emit-histogram]
    dqnfed compare --config run.toml --methods dqnfed,fedavg [--out DIR]
    dqnfed verify [--suite NAME] [--iters N]

Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error,
3 verification failure.  Errors are written to stderr as one JSON object.
"""

import argparse
import csv
import datetime
import json
import logging
import math
import os
import sys
import tempfile
from dataclasses import asdict
from importlib import metadata

from . import verify as _verify
from .config import METHODS, FederationConfig, parse_config
from .errors import DQNFedError, ValidationError
from .orchestrator import RoundLog, build_federation, run_federation

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE, EXIT_VERIFY = 0, 1, 2, 3

ROUND_COLUMNS = [
    "round", "method", "seed", "mean_acc", "std_acc", "worst10", "best10", "angle_deg",
    "kl_nats", "rho", "global_loss", "eta", "eta_applied", "num_dropped", "wallclock_ms",
]


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def code_version():
    try:
        return metadata.version("dqnfed")
    except metadata.PackageNotFoundError:
        return "unknown"


def _num(x):
    if x is None:
        return ""
    x = float(x)
    return "" if math.isnan(x) else repr(x)


def round_row(entry: RoundLog) -> list:
    f = entry.fairness
    fair = [None] * 6 if f is None else [f.mean_acc, f.std_acc, f.worst_k, f.best_k,
                                         f.angle_deg, f.kl_nats]
    return [entry.round, entry.method, entry.seed, *map(_num, fair),
            _num(entry.rho), _num(entry.global_loss), _num(entry.eta), _num(entry.eta_applied),
            len(entry.dropped_clients), entry.wallclock_ms]


def _now():
    return datetime.datetime.now(datetime.timezone.utc).isoformat(timespec="seconds")


def write_json_atomic(path, payload):
    folder = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=folder, prefix=".tmp-", suffix=".json")
    try:
        with os.fdopen(fd, "w") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)
            fh.write("\n")
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _summary(cfg: FederationConfig, result):
    last = result.logs[-1]
    return {
        "method": cfg.method,
        "seed": cfg.master_seed,
        "rounds": cfg.rounds,
        "final_fairness": asdict(last.fairness) if last.fairness is not None else None,
        "final_global_loss": last.global_loss,
        "client_losses": [float(x) for x in result.client_losses],
        "config": cfg.to_dict(),
    }


def execute(cfg: FederationConfig, out_dir, emit_histogram=False, federation=None):
    """Run one configuration and write its artifacts into ``out_dir``."""
    os.makedirs(out_dir, exist_ok=True)
    paths = {
        "rounds": os.path.join(out_dir, "rounds.csv"),
        "summary": os.path.join(out_dir, "summary.json"),
    }
    if emit_histogram:
        paths["histogram"] = os.path.join(out_dir, "histogram.csv")
    manifest_path = os.path.join(out_dir, "manifest.json")
    manifest = {
        "config": cfg.to_dict(),
        "artifacts": {k: os.path.basename(v) for k, v in paths.items()},
        "code_version": code_version(),
        "started_at": _now(),
        "finished_at": None,
        "status": "running",
    }
    write_json_atomic(manifest_path, manifest)

    with open(paths["rounds"], "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(ROUND_COLUMNS)

        def on_round(entry):
            writer.writerow(round_row(entry))
            fh.flush()

        try:
            result = run_federation(cfg, federation=federation, on_round=on_round)
        except BaseException:
            manifest.update(status="failed", finished_at=_now())
            write_json_atomic(manifest_path, manifest)
            raise

    write_json_atomic(paths["summary"], _summary(cfg, result))
    if emit_histogram:
        with open(paths["histogram"], "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["client_id", "accuracy"])
            if result.client_accuracies is not None:
                for k, a in enumerate(result.client_accuracies):
                    writer.writerow([k, repr(float(a))])
    manifest.update(status="complete", finished_at=_now())
    write_json_atomic(manifest_path, manifest)
    return result


def join_rounds(per_method: dict) -> tuple:
    """Wide table keyed by round; every other column is prefixed by the method."""
    methods = list(per_method)
    header = ["round"] + [f"{m}.{c}" for m in methods for c in ROUND_COLUMNS[1:]]
    rounds = len(next(iter(per_method.values())))
    rows = []
    for t in range(rounds):
        row = [t]
        for m in methods:
            row += round_row(per_method[m][t])[1:]
        rows.append(row)
    return header, rows


def cmd_run(args):
    cfg = parse_config(args.config)
    out = args.out or os.path.join("runs", f"{cfg.method}-seed{cfg.master_seed}")
    result = execute(cfg, out, emit_histogram=args.emit_histogram)
    last = result.logs[-1]
    print(json.dumps({"out": out, "rounds": len(result.logs), "final_global_loss": last.global_loss}))
    return EXIT_OK


def cmd_compare(args):
    cfg = parse_config(args.config)
    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    if not methods:
        raise UsageError("--methods needs at least one method")
    bad = [m for m in methods if m not in METHODS]
    if bad:
        raise ValidationError("--methods", f"unknown method {bad[0]!r}; one of {', '.join(METHODS)}")
    if len(set(methods)) != len(methods):
        raise UsageError("--methods lists a method twice")
    out = args.out or os.path.join("runs", f"compare-seed{cfg.master_seed}")
    # one federation object: identical data, partition, splits and initial model
    fed = build_federation(cfg)
    logs = {}
    for m in methods:
        res = execute(cfg.with_method(m), os.path.join(out, m), federation=fed)
        logs[m] = res.logs
    header, rows = join_rounds(logs)
    path = os.path.join(out, "compare.csv")
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)
    print(json.dumps({"out": out, "methods": methods, "joined": path}))
    return EXIT_OK


def cmd_verify(args):
    names = [args.suite] if args.suite else list(_verify.SUITES)
    if args.suite and args.suite not in _verify.SUITES:
        raise UsageError(f"unknown suite {args.suite!r}; choose from {', '.join(_verify.SUITES)}")
    if args.iters is not None and args.iters < 1:
        raise UsageError("--iters must be >= 1")
    results = [_verify.run_suite(n, args.iters) for n in names]
    for r in results:
        print(r.line())
    ok = all(r.passed for r in results)
    print(json.dumps({
        "passed": ok,
        "suites": [{"name": r.name, "cases": r.cases, "max_error": r.max_error,
                    "tolerance": r.tolerance, "passed": r.passed} for r in results],
    }))
    return EXIT_OK if ok else EXIT_VERIFY


def build_parser():
    p = _Parser(prog="dqnfed", description="Fair quasi-Newton federated learning simulator")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    run = sub.add_parser("run", help="execute one configuration")
    run.add_argument("--config", required=True)
    run.add_argument("--out")
    run.add_argument("--emit-histogram", action="store_true")
    run.set_defaults(func=cmd_run)

    cmp_ = sub.add_parser("compare", help="run several methods on the same federation")
    cmp_.add_argument("--config", required=True)
    cmp_.add_argument("--methods", required=True, help="comma-separated, e.g. dqnfed,fedavg")
    cmp_.add_argument("--out")
    cmp_.set_defaults(func=cmd_compare)

    ver = sub.add_parser("verify", help="run the oracle verification suites")
    ver.add_argument("--suite")
    ver.add_argument("--iters", type=int)
    ver.set_defaults(func=cmd_verify)
    return p


def _fail(kind, message, code, **extra):
    payload = {"error": kind, "message": str(message), "exit_code": code, **extra}
    print(json.dumps(payload), file=sys.stderr)
    return code


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        return _fail("UsageError", exc, EXIT_USAGE)
    if args.verbose:
        logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        return _fail("UsageError", exc, EXIT_USAGE)
    except ValidationError as exc:
        return _fail("ValidationError", exc, EXIT_USAGE, key=exc.key)
    except FileNotFoundError as exc:
        return _fail("IoError", exc, EXIT_USAGE if _is_config(exc, args) else EXIT_RUNTIME)
    except OSError as exc:
        return _fail("IoError", exc, EXIT_RUNTIME)
    except DQNFedError as exc:
        return _fail(type(exc).__name__, exc, EXIT_RUNTIME)


def _is_config(exc, args):
    return getattr(exc, "filename", None) == getattr(args, "config", None)


if __name__ == "__main__":
    sys.exit(main())
