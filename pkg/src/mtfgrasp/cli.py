"""Command-line entry point.

    mtfgrasp run <config> [--out DIR]
    mtfgrasp table <results-dir> --format {beta-sweep,alpha-sweep,per-robot}
    mtfgrasp validate <config>

Exit codes: 0 success, 1 runtime failure, 2 config/usage error.
``MTFGRASP_OUTPUT_DIR`` overrides the config's output directory.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import statistics
import sys
import tempfile
from collections import defaultdict
from pathlib import Path

from .config import ConfigError, RunManifest, load_config, validate
from .data import skew_report
from .orchestrator import Algorithm, run_experiment

log = logging.getLogger("mtfgrasp")

OUTPUT_ENV = "MTFGRASP_OUTPUT_DIR"
EXIT_OK, EXIT_RUNTIME, EXIT_CONFIG = 0, 1, 2

ROUNDS_FILE = "rounds.jsonl"
SUMMARY_FILE = "summary.csv"
SKEW_FILE = "skew_report.csv"
LEDGER_FILE = "comm_ledger.csv"

SWEEP_BETAS = [0.5, 0.6, 0.7, 0.8]
SWEEP_ALPHAS = [0.5, 0.25, 0.1, 0.0]
MISSING = "--"
ARM_ORDER = [a.value for a in Algorithm]


def _atomic_write(path: Path, text: str) -> None:
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _csv_text(header: list[str], rows: list[list]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _plan_label(plan: dict) -> str:
    if plan["scheme"] == "iid":
        return "IID"
    if plan["scheme"] == "class_skew":
        return f"alpha={plan['alpha']:g}"
    return f"beta={plan['beta']:g}"


def _fmt(x: float) -> str:
    return repr(float(x))


def cmd_run(manifest: RunManifest, out_dir: Path) -> int:
    data = manifest.load_data()
    report = validate(manifest, data)
    for line in report.lines():
        log.info("validate: %s", line)
    if not report.ok:
        for e in report.errors:
            print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG

    out_dir.mkdir(parents=True, exist_ok=True)
    n = manifest.federation["n"]
    robot_cols = [f"r{r + 1}" for r in range(n)]
    round_lines: list[str] = []
    summary_rows: list[list] = []
    skew_rows: list[list] = []
    ledger_rows: list[list] = []
    finals: dict[tuple[str, str], list[tuple[float, float, list[float]]]] = defaultdict(list)
    failed = 0

    for plan in manifest.plans:
        label = _plan_label(plan)
        skewed_seeds: set[int] = set()
        for arm in manifest.arms:
            for seed in manifest.seeds:
                ident = [label, plan["scheme"], plan.get("beta", ""), plan.get("alpha", ""), arm.value, seed]
                try:
                    cfg = manifest.experiment(plan, arm, seed, data.d, data.m)
                    res = run_experiment(cfg, data)
                except Exception as exc:  # keep the sweep going; the row is flagged
                    failed += 1
                    log.error("run %s/%s/seed=%s failed: %s", label, arm.value, seed, exc)
                    summary_rows.append(["run", *ident, "", "", "", ""] + [""] * n + [f"failed: {exc}"])
                    continue
                log.info("%s %s seed=%d final=%.4f", label, arm.value, seed, res.final_accuracy)
                for rec in res.records:
                    row = {"setting": label, "arm": arm.value, "seed": seed, **rec.to_dict()}
                    round_lines.append(json.dumps(row, sort_keys=True))
                for rnd, link, kind, params in res.ledger.rows():
                    ledger_rows.append([label, arm.value, seed, rnd, link, kind, params])
                if seed not in skewed_seeds:
                    skewed_seeds.add(seed)
                    for sr in skew_report(res.parts):
                        skew_rows.append([label, seed, sr.robot_id, *sr.class_counts, sr.total, int(sr.empty)])
                per_robot = res.records[-1].per_robot_accuracy if res.records else {}
                robot_acc = [per_robot.get(r, float("nan")) for r in range(n)]
                top = ";".join(str(t) for t in sorted(res.tiers.top)) if res.tiers else ""
                comm = sum(r.comm_params for r in res.records)
                summary_rows.append(
                    ["run", *ident, _fmt(res.final_accuracy), _fmt(res.best_accuracy), comm, top]
                    + [_fmt(a) for a in robot_acc]
                    + ["ok"]
                )
                finals[(label, arm.value)].append((res.final_accuracy, res.best_accuracy, robot_acc))

    for plan in manifest.plans:
        label = _plan_label(plan)
        for arm in manifest.arms:
            vals = finals.get((label, arm.value), [])
            if not vals:
                continue
            ident = [label, plan["scheme"], plan.get("beta", ""), plan.get("alpha", ""), arm.value]
            status = "ok" if len(vals) == len(manifest.seeds) else f"partial {len(vals)}/{len(manifest.seeds)}"
            cols = list(zip(*[(f, b, *ra) for f, b, ra in vals]))
            means = [statistics.fmean(c) for c in cols]
            stds = [statistics.stdev(c) if len(c) > 1 else 0.0 for c in cols]
            for kind, stats in (("mean", means), ("std", stds)):
                summary_rows.append(
                    [kind, *ident, "", _fmt(stats[0]), _fmt(stats[1]), "", ""] + [_fmt(s) for s in stats[2:]] + [status]
                )

    m = data.m
    _atomic_write(out_dir / ROUNDS_FILE, "".join(line + "\n" for line in round_lines))
    _atomic_write(
        out_dir / SUMMARY_FILE,
        _csv_text(
            ["row_type", "setting", "scheme", "beta", "alpha", "arm", "seed", "final_accuracy", "best_accuracy",
             "comm_params_total", "top_robots", *robot_cols, "status"],
            summary_rows,
        ),
    )
    _atomic_write(
        out_dir / SKEW_FILE,
        _csv_text(["setting", "seed", "robot", *[f"class_{c}" for c in range(m)], "total", "empty"], skew_rows),
    )
    _atomic_write(
        out_dir / LEDGER_FILE,
        _csv_text(["setting", "arm", "seed", "round", "link_class", "kind", "params"], ledger_rows),
    )
    if failed:
        print(f"{failed} run(s) failed; see {out_dir / SUMMARY_FILE}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


def _read_summary(results: Path) -> list[dict]:
    path = results / SUMMARY_FILE
    if not path.is_file():
        raise FileNotFoundError(f"no {SUMMARY_FILE} in {results}")
    with path.open(newline="", encoding="utf-8") as fh:
        rows = [r for r in csv.DictReader(fh) if r["row_type"] == "run" and r["status"] == "ok"]
    if not rows:
        raise ValueError(f"{path} holds no completed runs")
    return rows


def _arms_in(rows: list[dict]) -> list[str]:
    present = {r["arm"] for r in rows}
    return [a for a in ARM_ORDER if a in present]


def _render(header: list[str], body: list[list[str]]) -> str:
    widths = [max(len(str(x)) for x in col) for col in zip(header, *body)]
    fmt = "  ".join(f"{{:<{w}}}" for w in widths)
    return "\n".join([fmt.format(*header), fmt.format(*["-" * w for w in widths])] + [fmt.format(*r) for r in body])


def _pct(values: list[float]) -> str:
    return f"{100 * statistics.fmean(values):.2f}" if values else MISSING


def table_rows(results: Path, fmt: str) -> tuple[list[str], list[list[str]]]:
    """Accuracy grid (percent, mean over seeds) in the requested layout; absent cells are ``--``."""
    rows = _read_summary(results)
    by_cell: dict[tuple[str, str], list[float]] = defaultdict(list)
    for r in rows:
        by_cell[(r["arm"], r["setting"])].append(float(r["final_accuracy"]))
    arms = _arms_in(rows)

    if fmt in ("beta-sweep", "alpha-sweep"):
        if fmt == "beta-sweep":
            scheme, key, wanted = "quantity_skew", "beta", SWEEP_BETAS
            extra = sorted({float(r["beta"]) for r in rows if r["scheme"] == scheme} - set(wanted))
            cols = [f"beta={v:g}" for v in wanted + extra]
        else:
            scheme, key, wanted = "class_skew", "alpha", SWEEP_ALPHAS
            extra = sorted({float(r["alpha"]) for r in rows if r["scheme"] == scheme} - set(wanted), reverse=True)
            cols = ["IID"] + [f"alpha={v:g}" for v in wanted + extra]
        body = [[a] + [_pct(by_cell.get((a, c), [])) for c in cols] for a in arms]
        return ["algorithm", *cols], body

    if fmt == "per-robot":
        n = sum(1 for k in rows[0] if k.startswith("r") and k[1:].isdigit())
        settings = list(dict.fromkeys(r["setting"] for r in rows))

        def tops(r: dict) -> set[int]:
            return {int(t) for t in r["top_robots"].split(";")} if r["top_robots"] else set()

        # a robot counts as top in a setting only if every run promoted it; cells average the other runs
        always_top = {s: set.intersection(*[tops(r) for r in rows if r["setting"] == s]) for s in settings}
        robots = [k for k in range(n) if any(k not in always_top[s] for s in settings)]
        body = []
        for s in settings:
            for a in arms:
                sel = [r for r in rows if r["setting"] == s and r["arm"] == a]
                cells = []
                for k in robots:
                    low = [float(r[f"r{k + 1}"]) for r in sel if k not in tops(r)]
                    cells.append("top" if k in always_top[s] else _pct(low))
                body.append([s, a] + cells)
        return ["setting", "algorithm", *[f"R{k + 1}" for k in robots]], body

    raise ValueError(f"unknown table format {fmt!r}")


def cmd_table(results: Path, fmt: str) -> str:
    header, body = table_rows(results, fmt)
    return _render(header, body)


def cmd_validate(path) -> tuple[int, list[str]]:
    try:
        manifest = load_config(path)
    except ConfigError as exc:
        return EXIT_CONFIG, [f"ERROR: {exc}"]
    report = validate(manifest)
    return (EXIT_OK if report.ok else EXIT_RUNTIME), report.lines()


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mtfgrasp", description="Multi-tier federated learning simulator.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run every (setting x arm x seed) in a config")
    run.add_argument("config")
    run.add_argument("--out", help=f"output directory (overrides ${OUTPUT_ENV} and the config)")

    tab = sub.add_parser("table", help="render an accuracy table from a results directory")
    tab.add_argument("results")
    tab.add_argument("--format", required=True, choices=["beta-sweep", "alpha-sweep", "per-robot"])

    val = sub.add_parser("validate", help="check a config without training")
    val.add_argument("config")
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")

    if args.command == "validate":
        code, lines = cmd_validate(args.config)
        print("\n".join(lines))
        return code

    if args.command == "table":
        try:
            print(cmd_table(Path(args.results), args.format))
        except (OSError, ValueError) as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_RUNTIME
        return EXIT_OK

    try:
        manifest = load_config(args.config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = Path(args.out or os.environ.get(OUTPUT_ENV) or manifest.output_dir)
    try:
        return cmd_run(manifest, out)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
