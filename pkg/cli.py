#!/usr/bin/env python3
"""
rr-identities: command-line entry point.

Subcommands
    eval        expand a record's sum side (or product side) to a given order
    verify      compare both sides of one record
    verify-all  verify the whole catalog and print a report
    prodmake    recognize a record's sum side as an infinite product
    ct          replay a record's constant-term scripts
    search      run a grid search from a config file
    serve       start the MCP tool server on stdio

Exit codes: 0 when everything passes, 1 on any mismatch or infrastructure
failure, 2 on usage, schema or unknown-id errors.
"""
import argparse
import json
import logging
import sys
from typing import List, Optional

from pydantic import ValidationError

from catalog import Catalog, load_catalog, render_reports, replay_proofs, verify, verify_all, write_text
from errors import QSeriesError, SchemaError, UnknownIdentity
from search import SearchStats, append_candidate, load_search_config, parse_shard, recognize_series, run_search
from settings import Settings, configure_logging

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_MISMATCH = 1
EXIT_USAGE = 2

LOG_LEVELS = ["DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"]


def positive_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}")
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a value >= 1, got {value}")
    return value


def non_negative_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}")
    if value < 0:
        raise argparse.ArgumentTypeError(f"expected a value >= 0, got {value}")
    return value


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--catalog", help="Catalog JSON file (default: shipped catalog)")
    common.add_argument("--order", type=positive_int, help="Truncation order N")
    common.add_argument("--param-degree", type=non_negative_int, help="Parameter degree bound M")
    common.add_argument("--format", choices=["text", "structured"], help="Output format")
    common.add_argument("--jobs", type=positive_int, help="Worker processes for catalog and grid runs")
    common.add_argument("--out", help="Write the output to this file")
    common.add_argument("--log-level", choices=LOG_LEVELS, type=str.upper, help="Logging level")

    parser = argparse.ArgumentParser(prog="rr-identities",
                                     description="Verify, recognize and search Rogers-Ramanujan type identities")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("eval", parents=[common], help="Expand one side of a record")
    p.add_argument("--id", required=True, help="Record id or alias")
    p.add_argument("--side", choices=["lhs", "rhs"], default="lhs", help="Which side to expand")

    p = sub.add_parser("verify", parents=[common], help="Verify one record")
    p.add_argument("--id", required=True, help="Record id or alias")

    p = sub.add_parser("verify-all", parents=[common], help="Verify the whole catalog")
    p.add_argument("--status", choices=["classical", "paper-new", "non-modular", "conjecture", "misprint"],
                   help="Only records with this status")

    p = sub.add_parser("prodmake", parents=[common], help="Recognize a record's sum side as a product")
    p.add_argument("--id", required=True, help="Record id or alias")
    p.add_argument("--max-period", type=positive_int, help="Largest period tried")

    p = sub.add_parser("ct", parents=[common], help="Replay a record's constant-term scripts")
    p.add_argument("--id", required=True, help="Record id or alias")

    p = sub.add_parser("search", parents=[common], help="Run a grid search")
    p.add_argument("--config", required=True, help="Search config JSON file")
    p.add_argument("--shard", help="Shard i/n of the grid")
    p.add_argument("--max-period", type=positive_int, help="Largest period tried (overrides the config)")

    sub.add_parser("serve", parents=[common], help="Start the MCP tool server on stdio")
    return parser


def _settings(args: argparse.Namespace) -> Settings:
    return Settings().merged(
        CATALOG_PATH=args.catalog,
        ORDER=args.order,
        PARAM_DEGREE=args.param_degree,
        JOBS=args.jobs,
        MAX_PERIOD=getattr(args, "max_period", None),
        LOG_LEVEL=args.log_level,
        OUTPUT_FORMAT=args.format,
    )


def _emit(text: str, out: Optional[str]) -> None:
    if out:
        write_text(out, text)
    else:
        print(text)


def cmd_eval(args, settings: Settings, catalog: Catalog) -> int:
    record = catalog.lookup(args.id)
    order = settings.ORDER
    if args.side == "lhs":
        series = record.eval_lhs(order, settings.PARAM_DEGREE)
    else:
        series = record.eval_rhs(order, settings.PARAM_DEGREE)
    if settings.OUTPUT_FORMAT == "structured":
        text = json.dumps({"id": record.id, "side": args.side, "order": order, "series": series.to_text()})
    else:
        text = series.to_text()
    _emit(text, args.out)
    return EXIT_OK


def cmd_verify(args, settings: Settings, catalog: Catalog) -> int:
    record = catalog.lookup(args.id)
    report = verify(record, settings.ORDER, settings.PARAM_DEGREE)
    _emit(render_reports([report], None, settings.OUTPUT_FORMAT), args.out)
    return EXIT_OK if report.passed else EXIT_MISMATCH


def cmd_verify_all(args, settings: Settings, catalog: Catalog) -> int:
    records = catalog.select(status=args.status)
    reports, summary = verify_all(records, settings.ORDER, settings.PARAM_DEGREE, settings.JOBS)
    _emit(render_reports(reports, summary, settings.OUTPUT_FORMAT), args.out)
    return EXIT_OK if summary.ok else EXIT_MISMATCH


def cmd_prodmake(args, settings: Settings, catalog: Catalog) -> int:
    record = catalog.lookup(args.id)
    order = settings.ORDER
    series = record.eval_lhs(order, settings.PARAM_DEGREE)
    rp, rhs = recognize_series(series, order, settings.MAX_PERIOD)
    if rp is None:
        logger.error(f"{record.id}: the sum side has no rational leading coefficient")
        return EXIT_MISMATCH
    product = None if rhs is None else rhs.to_text()
    if settings.OUTPUT_FORMAT == "structured":
        text = json.dumps({"id": record.id, "order": order, "shift": str(rp.shift), "period": rp.period,
                           "exponents": list(rp.exponents), "product": product})
    elif product is None:
        text = f"no period <= {settings.MAX_PERIOD}; exponents {list(rp.exponents)}"
    else:
        text = product
    _emit(text, args.out)
    return EXIT_OK if product is not None else EXIT_MISMATCH


def cmd_ct(args, settings: Settings, catalog: Catalog) -> int:
    record = catalog.lookup(args.id)
    if not record.proofs:
        print(f"{record.id} has no constant-term script", file=sys.stderr)
        return EXIT_USAGE
    reports = replay_proofs(record, settings.ORDER)
    if settings.OUTPUT_FORMAT == "structured":
        text = json.dumps({"id": record.id, "reports": [r.model_dump() for r in reports]}, indent=2)
    else:
        lines = []
        for i, r in enumerate(reports):
            verdict = "pass" if r.passed else f"FAIL at q^{r.mismatch_exponent}: ct {r.got} vs sum {r.expected}"
            lines.append(f"{record.id} script {i}: {verdict} to q^{r.order} ({r.seconds:.2f}s)")
        text = "\n".join(lines)
    _emit(text, args.out)
    return EXIT_OK if all(r.passed for r in reports) else EXIT_MISMATCH


def cmd_search(args, settings: Settings, catalog: Catalog) -> int:
    cfg = load_search_config(args.config)
    shard_index, shard_count = parse_shard(args.shard) if args.shard else (None, None)
    try:
        cfg = cfg.with_overrides(shard_index=shard_index, shard_count=shard_count, out=args.out,
                                 jobs=args.jobs, max_period=args.max_period)
    except ValidationError as exc:
        raise SchemaError(f"search config {args.config} with command-line overrides: {exc.errors()[0]['msg']}")
    stats = SearchStats()
    for candidate in run_search(cfg, catalog, stats):
        if cfg.out:
            append_candidate(cfg.out, candidate)
        else:
            print(candidate.to_line())
    if settings.OUTPUT_FORMAT == "structured":
        print(json.dumps(stats.model_dump()), file=sys.stderr)
    return EXIT_OK


def cmd_serve(args, settings: Settings, catalog: Catalog) -> int:
    from identity_server import serve
    serve(settings, catalog)
    return EXIT_OK


COMMANDS = {
    "eval": cmd_eval,
    "verify": cmd_verify,
    "verify-all": cmd_verify_all,
    "prodmake": cmd_prodmake,
    "ct": cmd_ct,
    "search": cmd_search,
    "serve": cmd_serve,
}


def main(argv: Optional[List[str]] = None) -> int:
    """Main entry point"""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    try:
        settings = _settings(args)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    configure_logging(settings.LOG_LEVEL)
    try:
        catalog = load_catalog(settings.CATALOG_PATH)
        logger.info(f"Loaded {len(catalog)} records from {settings.CATALOG_PATH}")
        return COMMANDS[args.command](args, settings, catalog)
    except (SchemaError, UnknownIdentity) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except QSeriesError as exc:
        logger.error(f"{type(exc).__name__}: {exc}")
        return EXIT_MISMATCH


if __name__ == "__main__":
    sys.exit(main())
