"""Command line entry points.

    ppcc index build --model net.json --out net.idx
    ppcc serve --index net.idx --addr 127.0.0.1:7707 --budget 4
    ppcc check --addr 127.0.0.1:7707 --log log.csv
    ppcc align --model net.json --log log.csv
    ppcc bench --model net.json --log log.csv --repetitions 3

Exit codes: 0 ok, 2 input error, 3 protocol abort, 4 transport error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import statistics
import sys
import time
from pathlib import Path
from typing import Optional, Sequence

from .crypto import DEFAULT_MAX_PLAIN, get_backend
from .errors import (BudgetExhausted, CryptoError, IndexFormatError, LabelMismatchError,
                     ModelError, PPCCError, ProtocolError, TransportError, UnknownLabelError)
from .eventlog import LogFormatError, TraceVariant, read_events, traces, variants
from .index import FmIndex
from .model import DEFAULT_CAP, DEFAULT_MAX_EVENTS, load_model, relabel, runs_text_from_net
from .net import ServerConfig, connect, serve, start_server
from .protocol import IndexServer, required_max_plain

EXIT_OK, EXIT_INPUT, EXIT_ABORT, EXIT_TRANSPORT = 0, 2, 3, 4

log = logging.getLogger("ppcc")


def parse_budget(text: str) -> Optional[int]:
    if text.strip().lower() in ("inf", "infinity", "unlimited", "∞"):
        return None
    value = int(text)
    if value < 0:
        raise argparse.ArgumentTypeError("budget must be >= 0 or 'inf'")
    return value


def parse_trace(text: str) -> tuple[str, ...]:
    return tuple(x.strip() for x in text.split(",") if x.strip())


def build_index(model_path, cap=DEFAULT_CAP, max_events=DEFAULT_MAX_EVENTS):
    net = load_model(model_path)
    text, stats = runs_text_from_net(net, cap, max_events)
    return net, FmIndex.build(text), stats


def load_index(args) -> FmIndex:
    if getattr(args, "index", None):
        return FmIndex.load(args.index)
    return build_index(args.model, args.cap)[1]


def selected_variants(args, labels: Sequence[str]) -> list[TraceVariant]:
    """Traces to check: --trace, or --log (optionally one --case)."""
    if args.trace is not None:
        trace = parse_trace(args.trace)
        unknown = sorted(set(trace) - set(labels))
        if unknown:
            raise UnknownLabelError(unknown[0])
        return [TraceVariant(trace, 1)]
    events = read_events(args.log)
    if not events:
        return []
    relabel(labels, {e.activity for e in events})
    if args.case is not None:
        per_case = traces(events)
        if args.case not in per_case:
            raise LogFormatError(f"no case {args.case!r} in log")
        return [TraceVariant(per_case[args.case], 1)]
    return variants(events)


def report_entry(variant: TraceVariant, alignment, seconds: float) -> dict:
    return {
        "trace": list(variant.activities),
        "frequency": variant.frequency,
        "moves": alignment.to_json(),
        "cost": alignment.cost,
        "seconds": seconds,
        "seconds_per_symbol": seconds / (len(variant.activities) + 1),
    }


def finish_report(entries: list[dict]) -> dict:
    return {
        "traces": sum(e["frequency"] for e in entries),
        "variants": len(entries),
        "total_cost": sum(e["cost"] * e["frequency"] for e in entries),
        "results": entries,
    }


def strip_timings(report: dict) -> dict:
    out = dict(report)
    out["results"] = [{k: v for k, v in e.items() if not k.startswith("seconds")}
                      for e in report["results"]]
    return out


def _emit(obj, out_path=None) -> None:
    text = json.dumps(obj, indent=2)
    if out_path:
        Path(out_path).write_text(text + "\n")
    else:
        print(text)


def cmd_index_build(args) -> int:
    _net, index, stats = build_index(args.model, args.cap)
    index.save(args.out)
    _emit({
        "runs": stats.runs,
        "linearizations": stats.linearizations,
        "events": stats.events,
        "cutoffs": stats.cutoffs,
        "text_length": index.length,
        "alphabet_size": index.alphabet.size,
        "width": index.width,
        "out": str(args.out),
    })
    return EXIT_OK


def cmd_serve(args) -> int:
    index = load_index(args)
    config = ServerConfig(budget=args.budget, backends=tuple(args.backend or ("group", "mock")),
                          seed=args.seed)
    try:
        serve(args.addr, IndexServer(index), config)
    except KeyboardInterrupt:
        pass
    return EXIT_OK


def _client_backend(name: str):
    return get_backend(name) if name == "mock" else get_backend(name, max_plain=DEFAULT_MAX_PLAIN)


def run_check(addr: str, selection: list[TraceVariant], backend) -> list[dict]:
    """One session per trace variant."""
    entries = []
    if isinstance(backend, str):
        backend = _client_backend(backend)
    for variant in selection:
        with connect(addr, backend) as session:
            start = time.perf_counter()
            alignment = session.check(variant.activities)
            entries.append(report_entry(variant, alignment, time.perf_counter() - start))
    return entries


def cmd_check(args) -> int:
    backend = _client_backend(args.backend)
    # the server's alphabet is needed to validate the input before checking
    with connect(args.addr, backend) as probe:
        labels = probe.config.alphabet.labels
        size = probe.config.size
    if backend.max_plain < required_max_plain(size):
        backend = get_backend(args.backend, max_plain=required_max_plain(size))
    selection = selected_variants(args, labels)
    _emit(finish_report(run_check(args.addr, selection, backend)), args.out)
    return EXIT_OK


def cmd_align(args) -> int:
    index = load_index(args)
    entries = []
    for variant in selected_variants(args, index.alphabet.labels):
        start = time.perf_counter()
        alignment = index.align(variant.activities, args.budget)
        entries.append(report_entry(variant, alignment, time.perf_counter() - start))
    _emit(finish_report(entries), args.out)
    return EXIT_OK


BENCH_FIELDS = ["kind", "backend", "trace", "repetition", "length", "cost",
                "seconds", "seconds_per_symbol"]


def run_bench(index: FmIndex, selection: list[TraceVariant], backends: Sequence[str],
              repetitions: int) -> list[dict]:
    """Time secure checks over loopback; one row per trace and repetition,
    then mean and standard deviation rows per backend."""
    rows: list[dict] = []
    if repetitions <= 0 or not selection:
        return rows
    server = start_server("127.0.0.1:0", IndexServer(index), ServerConfig(budget=None))
    try:
        for name in backends:
            per_trace, per_symbol = [], []
            backend = _client_backend(name)
            for rep in range(repetitions):
                for entry in run_check(server.address, selection, backend):
                    rows.append({
                        "kind": "trace", "backend": name, "trace": " ".join(entry["trace"]),
                        "repetition": rep, "length": len(entry["trace"]), "cost": entry["cost"],
                        "seconds": entry["seconds"],
                        "seconds_per_symbol": entry["seconds_per_symbol"],
                    })
                    per_trace.append(entry["seconds"])
                    per_symbol.append(entry["seconds_per_symbol"])
            for kind, fn in (("mean", statistics.fmean), ("std", statistics.pstdev)):
                rows.append({"kind": kind, "backend": name, "trace": "", "repetition": "",
                             "length": "", "cost": "", "seconds": fn(per_trace),
                             "seconds_per_symbol": fn(per_symbol)})
    finally:
        server.shutdown()
        server.server_close()
    return rows


def bench_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=BENCH_FIELDS, lineterminator="\n")
    writer.writeheader()
    writer.writerows(rows)
    return buf.getvalue()


def cmd_bench(args) -> int:
    index = load_index(args)
    selection = selected_variants(args, index.alphabet.labels)
    rows = run_bench(index, selection, args.backend or ("mock", "group"), args.repetitions)
    text = bench_csv(rows)
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ppcc", description=__doc__.split("\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def model_source(p, required=True):
        g = p.add_mutually_exclusive_group(required=required)
        g.add_argument("--model", help="Petri net (.json native format or .pnml)")
        g.add_argument("--index", help="index file written by 'index build'")
        p.add_argument("--cap", type=int, default=DEFAULT_CAP,
                       help="maximum number of linearizations")

    def trace_source(p):
        g = p.add_mutually_exclusive_group(required=True)
        g.add_argument("--trace", help="comma separated activity labels")
        g.add_argument("--log", help="CSV log with case_id,activity,timestamp")
        p.add_argument("--case", help="check only this case of the log")

    index_p = sub.add_parser("index", help="index operations")
    index_sub = index_p.add_subparsers(dest="index_command", required=True)
    build = index_sub.add_parser("build", help="build and persist an index")
    build.add_argument("--model", required=True)
    build.add_argument("--out", required=True)
    build.add_argument("--cap", type=int, default=DEFAULT_CAP)
    build.set_defaults(func=cmd_index_build)

    serve_p = sub.add_parser("serve", help="serve an index")
    model_source(serve_p)
    serve_p.add_argument("--addr", default=None, help="host:port (default 127.0.0.1:7707)")
    serve_p.add_argument("--budget", type=parse_budget, default=4,
                         help="log moves allowed per session, or 'inf' (default 4)")
    serve_p.add_argument("--backend", action="append", choices=["mock", "group"],
                         help="accepted backend; repeat to accept several (default both)")
    serve_p.add_argument("--seed", type=int, default=None, help=argparse.SUPPRESS)
    serve_p.set_defaults(func=cmd_serve)

    check = sub.add_parser("check", help="check traces against a server")
    check.add_argument("--addr", required=True)
    check.add_argument("--backend", choices=["mock", "group"], default="group")
    check.add_argument("--out")
    trace_source(check)
    check.set_defaults(func=cmd_check)

    align = sub.add_parser("align", help="plaintext alignment of traces")
    model_source(align)
    align.add_argument("--budget", type=parse_budget, default=None)
    align.add_argument("--out")
    trace_source(align)
    align.set_defaults(func=cmd_align)

    bench = sub.add_parser("bench", help="time secure checks, CSV output")
    model_source(bench)
    bench.add_argument("--backend", action="append", choices=["mock", "group"])
    bench.add_argument("--repetitions", type=int, default=1)
    bench.add_argument("--out")
    trace_source(bench)
    bench.set_defaults(func=cmd_bench)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = make_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except BudgetExhausted as exc:
        print(f"ppcc: aborted: {exc}", file=sys.stderr)
        return EXIT_ABORT
    except TransportError as exc:
        print(f"ppcc: transport error: {exc}", file=sys.stderr)
        return EXIT_TRANSPORT
    except ProtocolError as exc:
        print(f"ppcc: protocol error: {exc}", file=sys.stderr)
        return EXIT_ABORT
    except (ModelError, LabelMismatchError, UnknownLabelError, IndexFormatError,
            LogFormatError, CryptoError, ValueError, OSError) as exc:
        print(f"ppcc: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except PPCCError as exc:
        print(f"ppcc: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
