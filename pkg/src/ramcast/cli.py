"""Command-line front end: sweeps, simulations, verification, figures.

Every command that writes files also writes a JSON manifest alongside
them recording the resolved configuration, tool version, seeds and
output list, so any artifact can be reproduced from its manifest alone.
CSV files use UTF-8, LF line endings, a header row, and ``repr``-format
floats (shortest round-trip), so re-reading a CSV recovers the exact
values and identical invocations produce byte-identical files.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .capacity import capacity_sweep, rate_bounds
from .channel import (
    AccessProbabilities,
    ArrivalRates,
    ChannelError,
    load_channel,
    PRESETS,
)
from .gf2 import rank_cdf, rank_pmf
from .regions import stable_equals_throughput_frontier
from .retrans import retrans_service_rates
from .rlc_markov import ChainError, build_chain, rlc_service_rates, service_rate
from .sim import SimConfig, run as sim_run

DEFAULTS = {"grid_step": 0.01, "slots": 1_000_000, "seed": 42}
OUT_DIR_ENV = "RAMCAST_OUT_DIR"


def _resolve_out(path: str | Path) -> Path:
    p = Path(path)
    base = os.environ.get(OUT_DIR_ENV)
    if base and not p.is_absolute():
        p = Path(base) / p
    p.parent.mkdir(parents=True, exist_ok=True)
    return p


def _fmt(cell) -> str:
    if isinstance(cell, float):
        return repr(cell)
    return str(cell)


def write_csv(path: Path, header: list[str], rows) -> None:
    lines = [",".join(header)]
    lines.extend(",".join(_fmt(c) for c in row) for row in rows)
    path.write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")


def read_csv(path: Path) -> tuple[list[str], list[list[str]]]:
    text = Path(path).read_text(encoding="utf-8")
    lines = [ln for ln in text.split("\n") if ln]
    header = lines[0].split(",")
    return header, [ln.split(",") for ln in lines[1:]]


def _write_manifest(
    out_files: list[Path], command: str, params: dict, seed, started: float
) -> Path:
    target = out_files[0]
    manifest = {
        "command": command,
        "tool": "ramcast",
        "version": __version__,
        "params": params,
        "seed": seed,
        "outputs": [p.name for p in out_files],
        "defaults": DEFAULTS,
        "duration_s": round(time.time() - started, 3),
    }
    path = target.with_name(target.stem + ".manifest.json")
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def _channel_params(spec: str) -> dict:
    ch = load_channel(spec)
    return {"channel": spec, **ch.as_dict()}


def cmd_capacity(args) -> int:
    started = time.time()
    channel = load_channel(args.channel)
    p1s, p2s, r1, r2, frontier = capacity_sweep(channel, args.step)
    on = {(pt.p1, pt.p2) for pt in frontier.points}
    out = _resolve_out(args.out)
    rows = [
        [float(a), float(b), float(x), float(y), int((a, b) in on)]
        for a, b, x, y in zip(p1s.tolist(), p2s.tolist(), r1.tolist(), r2.tolist())
    ]
    write_csv(out, ["p1", "p2", "r1", "r2", "on_frontier"], rows)
    _write_manifest(
        [out], "capacity", {**_channel_params(args.channel), "step": args.step}, None, started
    )
    print(f"wrote {out} ({len(rows)} grid points, {len(frontier.points)} on frontier)")
    return 0


def cmd_rates(args) -> int:
    started = time.time()
    channel = load_channel(args.channel)
    access = AccessProbabilities(args.p1, args.p2)
    if args.policy == "retrans":
        rates = retrans_service_rates(channel, access)
    else:
        rates = rlc_service_rates(channel, access, args.K, variant=args.variant)
    header = ["policy", "K", "p1", "p2", "mu_1b", "mu_1e", "mu_2b", "mu_2e"]
    row = [
        args.policy,
        rates.generation_size,
        args.p1,
        args.p2,
        rates.backlogged[0],
        rates.empty[0],
        rates.backlogged[1],
        rates.empty[1],
    ]
    print(",".join(header))
    print(",".join(_fmt(c) for c in row))
    if args.out:
        out = _resolve_out(args.out)
        write_csv(out, header, [row])
        _write_manifest(
            [out],
            "rates",
            {
                **_channel_params(args.channel),
                "policy": args.policy,
                "K": args.K,
                "p1": args.p1,
                "p2": args.p2,
                "variant": args.variant,
            },
            None,
            started,
        )
    return 0


def _frontier_rows(frontier) -> list[list]:
    kind = frontier.kind
    K = frontier.K if frontier.K is not None else ""
    return [
        [kind, K, pt.p1, pt.p2, pt.x, pt.y] for pt in frontier.points
    ]


def _compute_frontier(kind: str, channel, step: float, K: int, variant: str, jobs: int):
    if kind == "capacity":
        return capacity_sweep(channel, step)[4]
    return stable_equals_throughput_frontier(
        kind, channel, step, K=K if kind == "rlc" else None, variant=variant, jobs=jobs
    )


def cmd_region(args) -> int:
    started = time.time()
    channel = load_channel(args.channel)
    frontier = _compute_frontier(
        args.kind, channel, args.step, args.K, args.variant, args.jobs
    )
    out = _resolve_out(args.out)
    write_csv(out, ["kind", "K", "p1", "p2", "x", "y"], _frontier_rows(frontier))
    _write_manifest(
        [out],
        "region",
        {
            **_channel_params(args.channel),
            "kind": args.kind,
            "K": args.K,
            "step": args.step,
            "variant": args.variant,
            "jobs": args.jobs,
        },
        None,
        started,
    )
    print(f"wrote {out} ({len(frontier.points)} frontier points)")
    return 0


def cmd_rankdist(args) -> int:
    started = time.time()
    out = _resolve_out(args.out)
    rows = [[j, rank_cdf(args.K, j), rank_pmf(args.K, j)] for j in range(args.max_j + 1)]
    write_csv(out, ["j", "cdf", "pmf"], rows)
    _write_manifest([out], "rankdist", {"K": args.K, "max_j": args.max_j}, None, started)
    print(f"wrote {out}")
    return 0


def cmd_sim(args) -> int:
    started = time.time()
    channel = load_channel(args.channel)
    config = SimConfig(
        channel=channel,
        access=AccessProbabilities(args.p1, args.p2),
        arrivals=ArrivalRates(args.lambda1, args.lambda2),
        policy=args.policy,
        K=args.K,
        slots=args.slots,
        seed=args.seed,
        mode=args.mode,
    )
    result = sim_run(config)
    header = [
        "source",
        "policy",
        "K",
        "mode",
        "slots",
        "seed",
        "departure_rate",
        "stderr",
        "mean_queue",
        "max_queue",
        "mean_service_time",
        "services",
        "mean_decode_d1",
        "mean_decode_d2",
    ]
    rows = []
    for n, src in enumerate(result.sources, start=1):
        d1, d2 = src.mean_decode_count if src.mean_decode_count else ("", "")
        rows.append(
            [
                n,
                args.policy,
                args.K,
                args.mode,
                args.slots,
                args.seed,
                src.departure_rate,
                src.stderr,
                src.mean_queue,
                src.max_queue,
                src.mean_service_time,
                src.services,
                d1,
                d2,
            ]
        )
    for row in [header] + rows:
        print(",".join(_fmt(c) for c in row))
    if args.out:
        out = _resolve_out(args.out)
        write_csv(out, header, rows)
        _write_manifest(
            [out],
            "sim",
            {
                **_channel_params(args.channel),
                "policy": args.policy,
                "K": args.K,
                "p1": args.p1,
                "p2": args.p2,
                "lambda1": args.lambda1,
                "lambda2": args.lambda2,
                "slots": args.slots,
                "mode": args.mode,
            },
            args.seed,
            started,
        )
    return 0


def cmd_verify_chain(args) -> int:
    started = time.time()
    channel = load_channel(args.channel)
    access = AccessProbabilities(args.p1, args.p2)
    sim_res = sim_run(
        SimConfig(
            channel=channel,
            access=access,
            policy="rlc",
            K=args.K,
            slots=args.slots,
            seed=args.seed,
            mode="saturated",
        )
    )
    header = [
        "metric",
        "variant",
        "K",
        "p1",
        "p2",
        "source",
        "value",
        "reference",
        "stderr",
        "rel_delta",
    ]
    rows = []
    worst = 0.0
    for variant in ("paper", "exact"):
        for source in (1, 2):
            chain = build_chain(channel, access, source, True, args.K, variant)
            resid = float(np.abs(chain.row_sums() - 1.0).max())
            rows.append(
                ["row_sum_residual", variant, args.K, args.p1, args.p2, source, resid, 0.0, "", ""]
            )
            analytic = service_rate(chain)
            simulated = sim_res.sources[source - 1].departure_rate
            se = sim_res.sources[source - 1].stderr
            rel = (analytic - simulated) / simulated if simulated else float("nan")
            rows.append(
                ["mu_b", variant, args.K, args.p1, args.p2, source, analytic, simulated, se, rel]
            )
            worst = max(worst, abs(rel))
    out = _resolve_out(args.out)
    write_csv(out, header, rows)
    _write_manifest(
        [out],
        "verify-chain",
        {
            **_channel_params(args.channel),
            "K": args.K,
            "p1": args.p1,
            "p2": args.p2,
            "slots": args.slots,
        },
        args.seed,
        started,
    )
    print(f"wrote {out} (worst |rel delta| vs simulation: {worst:.4%})")
    return 0


_PLOT_SCRIPT = """\
#!/usr/bin/env python3
\"\"\"Plot the region CSVs emitted next to this script (capacity, retrans,
rlc for each K) in the layout of the throughput-region figures.\"\"\"
import csv
import glob
import os

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt

here = os.path.dirname(os.path.abspath(__file__))


def load(name):
    with open(os.path.join(here, name), encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    xs = [float(r["x"]) for r in rows]
    ys = [float(r["y"]) for r in rows]
    return xs, ys


fig, ax = plt.subplots(figsize=(6, 5))
xs, ys = load("capacity.csv")
ax.plot(xs, ys, "k-", lw=2, label="Shannon capacity")
xs, ys = load("retrans.csv")
ax.plot(xs, ys, "b--", lw=1.5, label="retransmissions")
for path in sorted(glob.glob(os.path.join(here, "rlc_K*.csv")),
                   key=lambda p: int(os.path.basename(p)[5:-4])):
    k = int(os.path.basename(path)[5:-4])
    xs, ys = load(os.path.basename(path))
    ax.plot(xs, ys, lw=1, label=f"RLC, K={k}")
ax.set_xlabel("rate of source 1 (packets/slot)")
ax.set_ylabel("rate of source 2 (packets/slot)")
ax.legend(fontsize=8)
ax.grid(True, alpha=0.3)
fig.tight_layout()
fig.savefig(os.path.join(here, "figure.png"), dpi=150)
print("wrote", os.path.join(here, "figure.png"))
"""


def cmd_figure(args) -> int:
    started = time.time()
    channel = load_channel(args.channel)
    out_dir = _resolve_out(Path(args.out) / "x").parent
    out_dir.mkdir(parents=True, exist_ok=True)
    k_list = [int(k) for k in args.K_list.split(",") if k]
    outputs = []

    frontier = capacity_sweep(channel, args.step)[4]
    path = out_dir / "capacity.csv"
    write_csv(path, ["kind", "K", "p1", "p2", "x", "y"], _frontier_rows(frontier))
    outputs.append(path)

    frontier = stable_equals_throughput_frontier(
        "retrans", channel, args.step, jobs=args.jobs
    )
    path = out_dir / "retrans.csv"
    write_csv(path, ["kind", "K", "p1", "p2", "x", "y"], _frontier_rows(frontier))
    outputs.append(path)

    for k in k_list:
        frontier = stable_equals_throughput_frontier(
            "rlc", channel, args.step, K=k, variant=args.variant, jobs=args.jobs
        )
        path = out_dir / f"rlc_K{k}.csv"
        write_csv(path, ["kind", "K", "p1", "p2", "x", "y"], _frontier_rows(frontier))
        outputs.append(path)

    script = out_dir / "plot_figure.py"
    script.write_text(_PLOT_SCRIPT, encoding="utf-8")
    outputs.append(script)
    manifest = {
        "command": "figure",
        "tool": "ramcast",
        "version": __version__,
        "params": {
            **_channel_params(args.channel),
            "K_list": k_list,
            "step": args.step,
            "variant": args.variant,
            "jobs": args.jobs,
        },
        "seed": None,
        "outputs": [p.name for p in outputs],
        "defaults": DEFAULTS,
        "duration_s": round(time.time() - started, 3),
    }
    (out_dir / "manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    print(f"wrote {len(outputs)} files to {out_dir}")
    return 0


def cmd_check(args) -> int:
    from .checks import run_checks

    results = run_checks(quick=args.quick)
    ok = True
    for res in results:
        status = "PASS" if res.passed else "FAIL"
        print(f"{status} {res.name}: {res.detail}")
        ok = ok and res.passed
    return 0 if ok else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ramcast",
        description=(
            "Capacity and stable-throughput analysis of two-source random-access "
            "multicast with retransmission and random-linear-coding policies."
        ),
        epilog=(
            f"Channel presets: {', '.join(sorted(PRESETS))}. Relative output paths "
            f"are resolved under ${OUT_DIR_ENV} when it is set."
        ),
    )
    parser.add_argument("--version", action="version", version=f"ramcast {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_channel(p):
        p.add_argument(
            "--channel",
            required=True,
            help="channel preset name or config file (JSON / key=value)",
        )

    p = sub.add_parser("capacity", help="sweep the capacity region and emit CSV")
    add_channel(p)
    p.add_argument("--step", type=float, default=DEFAULTS["grid_step"])
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_capacity)

    p = sub.add_parser("rates", help="service rates for one (p1, p2) point")
    add_channel(p)
    p.add_argument("--policy", choices=("retrans", "rlc"), required=True)
    p.add_argument("--K", type=int, default=1)
    p.add_argument("--p1", type=float, required=True)
    p.add_argument("--p2", type=float, required=True)
    p.add_argument("--variant", choices=("paper", "exact"), default="paper")
    p.add_argument("--out")
    p.set_defaults(func=cmd_rates)

    p = sub.add_parser("region", help="Pareto frontier of a region, as CSV")
    add_channel(p)
    p.add_argument("--kind", choices=("capacity", "retrans", "rlc"), required=True)
    p.add_argument("--K", type=int, default=1)
    p.add_argument("--step", type=float, default=DEFAULTS["grid_step"])
    p.add_argument("--variant", choices=("paper", "exact"), default="paper")
    p.add_argument("--jobs", type=int, default=os.cpu_count() or 1)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_region)

    p = sub.add_parser("rankdist", help="decode-count distribution F_K, f_K")
    p.add_argument("--K", type=int, required=True)
    p.add_argument("--max-j", type=int, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_rankdist)

    p = sub.add_parser("sim", help="slot-level Monte Carlo run")
    add_channel(p)
    p.add_argument("--policy", choices=("retrans", "rlc"), default="retrans")
    p.add_argument("--K", type=int, default=1)
    p.add_argument("--p1", type=float, required=True)
    p.add_argument("--p2", type=float, required=True)
    p.add_argument("--lambda1", type=float, default=0.0)
    p.add_argument("--lambda2", type=float, default=0.0)
    p.add_argument("--slots", type=int, default=DEFAULTS["slots"])
    p.add_argument("--seed", type=int, default=DEFAULTS["seed"])
    p.add_argument("--mode", choices=("saturated", "arrivals"), default="saturated")
    p.add_argument("--out")
    p.set_defaults(func=cmd_sim)

    p = sub.add_parser(
        "verify-chain",
        help="row-sum residuals and sim-vs-analytic deltas for both chain variants",
    )
    add_channel(p)
    p.add_argument("--K", type=int, required=True)
    p.add_argument("--p1", type=float, default=0.5)
    p.add_argument("--p2", type=float, default=0.5)
    p.add_argument("--slots", type=int, default=DEFAULTS["slots"])
    p.add_argument("--seed", type=int, default=DEFAULTS["seed"])
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_verify_chain)

    p = sub.add_parser("figure", help="emit all region CSVs plus a plot script")
    add_channel(p)
    p.add_argument("--K-list", dest="K_list", default="1,2,5,10,50")
    p.add_argument("--step", type=float, default=DEFAULTS["grid_step"])
    p.add_argument("--variant", choices=("paper", "exact"), default="paper")
    p.add_argument("--jobs", type=int, default=os.cpu_count() or 1)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_figure)

    p = sub.add_parser("check", help="run the cross-validation suite")
    p.add_argument("--quick", action="store_true", help="reduced sizes, skips slow probes")
    p.set_defaults(func=cmd_check)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ChannelError, ChainError, ValueError, OSError) as exc:
        print(f"ramcast: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
