"""Command line entry points: ``gslab run`` and ``gslab list``.

``run`` executes scenarios (the shipped six by default, or a JSON config),
writes ``report.json`` plus per-scenario CSV tables and figures into the
output directory, and exits nonzero when any verdict fails.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

from .errors import ConfigError, GSLabError
from .report import run_scenario_job
from .scenarios import shipped_config, shipped_scenarios, validate_config


def list_scenarios():
    return [s.name for s in shipped_scenarios()]


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def write_artifacts(art, outdir, *, figures=True):
    outdir.mkdir(parents=True, exist_ok=True)
    if art.heat_rows:
        _write_csv(outdir / "heat_asymptotics.csv",
                   ["t", "R", "log_ratio_estimate", "slope_estimate"],
                   art.heat_rows)
    if art.beta_table:
        _write_csv(outdir / "beta_profile.csv",
                   ["t", "beta_closed", "beta_quadrature"], art.beta_table)
    if art.moser_rows:
        _write_csv(outdir / "moser_trace.csv", ["k", "j_k", "theta_k"],
                   art.moser_rows)
    if art.uc_rows:
        _write_csv(outdir / "uc_bounds.csv",
                   ["transform", "t", "kernel_max", "bound", "ok"], art.uc_rows)
    if art.ladder_rows:
        header = list(art.ladder_rows[0].keys())
        _write_csv(outdir / "ladder.csv", header,
                   [[r[k] for k in header] for r in art.ladder_rows])
    if art.green_center is not None:
        coords = art.coords
        rows = [list(coords[i]) + [art.green_center[i]]
                for i in range(len(art.green_center))]
        _write_csv(outdir / "green_column_center.csv",
                   [f"x{k}" for k in range(coords.shape[1])] + ["g"], rows)
    if figures:
        from . import figures as figmod

        figmod.render_all(art, outdir)


def run(config_path=None, *, scenario_names=None, out_dir="gslab-out",
        jobs=1, seed=None, figures=True, stream=sys.stdout):
    """Execute a run; returns (exit_code, report_dict)."""
    if config_path is None:
        cfg = shipped_config()
    else:
        try:
            cfg = json.loads(Path(config_path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config: {exc}", str(config_path))
    run_seed, scenarios = validate_config(cfg)
    if seed is not None:
        run_seed = seed
    if scenario_names:
        known = {s.name for s in scenarios}
        missing = [n for n in scenario_names if n not in known]
        if missing:
            raise ConfigError(f"unknown scenario(s): {', '.join(missing)}",
                              "config.scenarios")
        scenarios = [s for s in scenarios if s.name in set(scenario_names)]

    results = []
    if jobs > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = [pool.submit(run_scenario_job, s.as_dict(), run_seed)
                       for s in scenarios]
            results = [f.result() for f in futures]
    else:
        results = [run_scenario_job(s.as_dict(), run_seed) for s in scenarios]

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    payloads, timings = [], {}
    for scn, (payload, art, timing) in zip(scenarios, results):
        payloads.append(payload)
        timings[scn.name] = timing
        write_artifacts(art, out / scn.name, figures=figures)
        status = "pass" if payload.get("pass") else "FAIL"
        print(f"[{status}] {scn.name}", file=stream)
        if "error" in payload:
            print(f"        {payload['error']}", file=stream)

    report = {
        "meta": {"seed": run_seed, "scenarios_requested": [s.name for s in scenarios]},
        "scenarios": payloads,
        "timings": timings,
    }
    (out / "report.json").write_text(json.dumps(report, indent=2, sort_keys=True))
    all_pass = all(p.get("pass") for p in payloads)
    print(f"report written to {out / 'report.json'}", file=stream)
    return (0 if all_pass else 1), report


def deterministic_dump(report):
    """The byte-stable section of a report (timings excluded)."""
    return json.dumps(
        {"meta": report["meta"], "scenarios": report["scenarios"]},
        indent=2, sort_keys=True,
    )


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="gslab",
        description="Ground-state vs potential comparison lab for perturbed "
                    "Dirichlet grid operators",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="execute scenarios and write reports")
    p_run.add_argument("--config", default=None,
                       help="JSON config path (defaults to the shipped scenarios)")
    p_run.add_argument("--scenario", action="append", default=None,
                       help="restrict to a named scenario (repeatable)")
    p_run.add_argument("--out", default="gslab-out", help="output directory")
    p_run.add_argument("--jobs", type=int, default=1,
                       help="scenario-level parallelism")
    p_run.add_argument("--seed", type=int, default=None,
                       help="override the config probe seed")
    p_run.add_argument("--no-figures", action="store_true",
                       help="skip figure rendering")
    sub.add_parser("list", help="print the shipped scenario names")

    args = parser.parse_args(argv)
    if args.command == "list":
        for name in list_scenarios():
            print(name)
        return 0
    try:
        code, _ = run(
            args.config, scenario_names=args.scenario, out_dir=args.out,
            jobs=args.jobs, seed=args.seed, figures=not args.no_figures,
        )
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except GSLabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    return code


if __name__ == "__main__":
    sys.exit(main())
