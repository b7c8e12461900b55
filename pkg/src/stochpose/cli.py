"""Command-line entry point: ``stochpose run|stats|plot|check``.

Exit codes: 0 on success, 2 for configuration or usage errors, 3 when the
scenario fails an observability or gain precondition.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .config import ConfigError, PreconditionError, load_scenario, parse_seeds
from .harness import (
    CHARTS,
    FILTERS,
    RunConfig,
    check_preconditions,
    emit_plots,
    emit_report,
    execute,
    format_table,
    group_traces,
    read_csv,
    window_stats,
)

EXIT_OK, EXIT_CONFIG, EXIT_PRECONDITION = 0, 2, 3


def _choices(value: str, allowed: tuple) -> tuple:
    return allowed if value == "both" else (value,)


def _window(text: str) -> tuple[float, float]:
    try:
        t0, t1 = (float(x) for x in text.split(","))
    except ValueError:
        raise ConfigError(f"--window expects T0,T1, got {text!r}") from None
    return t0, t1


def _load_traces(out: Path, seeds=None):
    files = sorted(out.glob("seed*_*_*.csv"))
    traces = [read_csv(f) for f in files]
    if seeds:
        traces = [tr for tr in traces if tr.seed in seeds]
    if not traces:
        raise ConfigError(f"no trace CSVs found in {out}")
    return traces


def cmd_run(args) -> int:
    scenario = load_scenario(args.scenario)
    seeds = parse_seeds(args.seeds) if args.seeds else ()
    cfg = RunConfig(
        scenario,
        filters=_choices(args.filter, FILTERS),
        charts=_choices(args.chart, CHARTS),
        seeds=seeds,
        dt_override=args.dt_override,
        out_dir=Path(args.out),
    )
    result = execute(cfg, write_csv=not args.no_csv, plots=args.plots)
    print(format_table(result.stats))
    print(f"wrote {len(result.files)} files to {args.out}")
    return EXIT_OK


def cmd_stats(args) -> int:
    out = Path(args.out)
    traces = _load_traces(out)
    if args.window:
        t0, t1 = _window(args.window)
    elif args.scenario:
        t0, t1 = load_scenario(args.scenario).window
    else:
        t0, t1 = float(traces[0].t[0]), float(traces[0].t[-1])
    stats = [window_stats(group, t0, t1) for group in group_traces(traces).values()]
    emit_report(stats, out, {"source": str(out), "seeds": ",".join(sorted({str(t.seed) for t in traces}, key=int))})
    print(format_table(stats))
    return EXIT_OK


def cmd_plot(args) -> int:
    out = Path(args.out)
    seeds = set(parse_seeds(args.seeds)) if args.seeds else None
    n = 0
    for tr in _load_traces(out, seeds):
        n += len(emit_plots(tr, out))
    print(f"wrote {n} plots to {out}")
    return EXIT_OK


def cmd_check(args) -> int:
    scenario = load_scenario(args.scenario)
    report = check_preconditions(scenario)
    print(f"scenario {scenario.name}: rank {report.rank}, {report.n_landmarks} landmark(s), weights ok, gains ok")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="stochpose", description="Stochastic SE(3) pose filter simulations.")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="simulate a scenario and write traces and a report")
    run.add_argument("--scenario", required=True, help="scenario file or shipped name (e.g. paper_sec5)")
    run.add_argument("--filter", choices=FILTERS + ("both",), default="both")
    run.add_argument("--chart", choices=CHARTS + ("both",), default="matrix")
    run.add_argument("--seeds", help="seed list such as 1-20 or 1,4,9 (default: from the scenario)")
    run.add_argument("--out", required=True, help="output directory")
    run.add_argument("--dt-override", type=float, help="replace the scenario step size (s)")
    run.add_argument("--no-csv", action="store_true", help="skip per-trace CSV files")
    run.add_argument("--plots", action="store_true", help="also write PNG plots")
    run.set_defaults(func=cmd_run)

    st = sub.add_parser("stats", help="window statistics of traces in a directory")
    st.add_argument("--out", required=True, help="directory holding trace CSVs")
    st.add_argument("--window", help="T0,T1 in seconds")
    st.add_argument("--scenario", help="take the window from this scenario")
    st.set_defaults(func=cmd_stats)

    pl = sub.add_parser("plot", help="plot traces in a directory")
    pl.add_argument("--out", required=True, help="directory holding trace CSVs")
    pl.add_argument("--seeds", help="restrict to these seeds")
    pl.set_defaults(func=cmd_plot)

    ck = sub.add_parser("check", help="diagnose observability and gain preconditions")
    ck.add_argument("--scenario", required=True)
    ck.set_defaults(func=cmd_check)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except PreconditionError as exc:
        print(f"precondition failed: {exc}", file=sys.stderr)
        return EXIT_PRECONDITION
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
