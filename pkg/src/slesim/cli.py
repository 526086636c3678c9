"""Command-line entry points.

Batch commands call the same core functions as the HTTP service handlers, so
a CLI run and the equivalent service calls are side-effect-identical. Exit
codes: 0 ok, 1 input/validation failure, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import importlib.resources
import json
import sys
from datetime import timedelta
from pathlib import Path

from .dispatch import (
    DispatchError,
    optimize_co2,
    problem_from_dict,
    schedule_to_dict,
    write_schedule_csv,
)
from .metrics import (
    MetricsError,
    breakdown_from_arrays,
    kpi_report,
    write_kpi_csv,
    DEFAULT_DISPLACED_INTENSITY_KG_PER_KWH,
)
from .network import NetworkError
from .telemetry import GenerationSpec, TelemetryError, generate_synthetic_profiles, parse_timestamp
from .twin import (
    PipelineConfig,
    Scenario,
    TwinError,
    compare,
    diff_to_dict,
    result_to_dict,
    run_pipeline,
    run_scenario,
    scenario_from_dict,
)

VALIDATION_ERRORS = (
    NetworkError,
    TelemetryError,
    DispatchError,
    MetricsError,
    TwinError,
    json.JSONDecodeError,
    FileNotFoundError,
    NotADirectoryError,
    IsADirectoryError,
    ValueError,
    KeyError,
)


def _fixture_document(name: str) -> dict:
    """Resolve --fixture: a file path or a bundled fixture name."""
    path = Path(name)
    if path.is_file():
        return json.loads(path.read_text(encoding="utf-8"))
    resource = importlib.resources.files("slesim.fixtures").joinpath(f"{name}.json")
    if resource.is_file():
        return json.loads(resource.read_text(encoding="utf-8"))
    raise FileNotFoundError(f"fixture {name!r}: not a file and not a bundled fixture")


def _config_from_args(args: argparse.Namespace) -> PipelineConfig:
    return PipelineConfig(
        network=_fixture_document(args.fixture),
        seed=args.seed,
        start=args.start,
        days=args.days,
        interval_minutes=args.interval_min,
        meters=args.meters,
        annual_electric_kwh=args.annual_electric_kwh,
        annual_heat_kwh=args.annual_heat_kwh,
        annual_gas_kwh=args.annual_gas_kwh,
        strategy=args.strategy,
        forecast_sigma=args.forecast_sigma,
    )


def _dump_json(payload: dict, path: Path) -> None:
    path.write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n", encoding="utf-8")


def cmd_gen_data(args: argparse.Namespace) -> int:
    spec = GenerationSpec(
        meters=args.meters,
        start=parse_timestamp(args.start),
        days=args.days,
        interval_minutes=args.interval_min,
        annual_electric_kwh=args.annual_electric_kwh,
        annual_heat_kwh=args.annual_heat_kwh,
        annual_gas_kwh=args.annual_gas_kwh,
    )
    dataset = generate_synthetic_profiles(spec, args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rows = dataset.write_telemetry_csv(out / "telemetry.csv")
    dataset.write_weather_csv(out / "weather.csv")
    dataset.write_carbon_csv(out / "carbon.csv")
    print(f"wrote {rows} readings over {spec.intervals} intervals to {out}")
    return 0


def _timeline_document(artifacts) -> dict:
    timeline = artifacts.timeline
    return {
        "start": artifacts.timestamps[0].isoformat(),
        "interval_minutes": timeline.interval_minutes,
        "horizon": timeline.horizon,
        "realized_demand_kw": {k: list(v) for k, v in timeline.realized_demand_kw.items()},
        "realized_renewable_kw": {k: list(v) for k, v in timeline.realized_renewable_kw.items()},
        "grid_import_kw": list(timeline.grid_import_kw),
        "grid_export_kw": list(timeline.grid_export_kw),
        "battery_kw": list(timeline.battery_kw),
        "soc_kwh": list(timeline.soc_kwh),
        "energy_saved_kwh": dict(timeline.energy_saved_kwh),
        "total_co2_kg": timeline.total_co2_kg,
    }


def cmd_run(args: argparse.Namespace) -> int:
    config = _config_from_args(args)
    artifacts = run_pipeline(config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    result = artifacts.result
    write_kpi_csv(list(result.kpis), out / "kpis.csv")
    write_schedule_csv(
        artifacts.schedule,
        out / "schedule.csv",
        start=artifacts.timestamps[0],
        interval_minutes=config.interval_minutes,
        grid_intensity=artifacts.problem.grid_intensity,
    )
    _dump_json(result_to_dict(result), out / "result.json")
    _dump_json(_timeline_document(artifacts), out / "timeline.json")
    campus = result.kpis[0]
    print(
        f"run complete: SS {campus.self_sufficiency_pct:.3f}% "
        f"SC {campus.self_consumption_pct:.3f}% co2 {result.dispatch.total_co2_kg:.1f} kg "
        f"(baseline {result.dispatch.baseline_co2_kg:.1f} kg)"
    )
    return 0


def cmd_optimize(args: argparse.Namespace) -> int:
    raw = json.loads(Path(args.problem).read_text(encoding="utf-8"))
    start = parse_timestamp(raw["start"]) if "start" in raw else parse_timestamp("1970-01-01T00:00:00+00:00")
    problem = problem_from_dict(raw)
    schedule = optimize_co2(problem, strategy=args.strategy)
    out = Path(args.out)
    if out.suffix == ".csv":
        write_schedule_csv(schedule, out, start, problem.interval_minutes, problem.grid_intensity)
    else:
        _dump_json(schedule_to_dict(schedule), out)
    print(f"schedule written to {out}: total co2 {schedule.total_co2_kg:.3f} kg")
    return 0


def cmd_report(args: argparse.Namespace) -> int:
    raw = json.loads(Path(args.timeline).read_text(encoding="utf-8"))
    import numpy as np

    start = parse_timestamp(raw["start"])
    interval_minutes = int(raw["interval_minutes"])
    horizon = int(raw["horizon"])
    window = (start, start + timedelta(minutes=interval_minutes * horizon))
    demand = {k: np.asarray(v) for k, v in raw["realized_demand_kw"].items()}
    renew = {k: np.asarray(v) for k, v in raw["realized_renewable_kw"].items()}
    saved = raw.get("energy_saved_kwh", {})
    gen_total = sum(renew.values()) if renew else np.zeros(horizon)
    demand_total = sum(demand.values()) if demand else np.zeros(horizon)
    reports = [
        kpi_report(
            "campus",
            window,
            breakdown_from_arrays(gen_total, demand_total, interval_minutes),
            energy_saved_kwh=float(sum(saved.values())),
            displaced_intensity=args.displaced_intensity,
        )
    ]
    safe_total = np.where(demand_total > 0, demand_total, 1.0)
    for building in sorted(demand):
        series = demand[building]
        reports.append(
            kpi_report(
                building,
                window,
                breakdown_from_arrays(gen_total * (series / safe_total), series, interval_minutes),
                energy_saved_kwh=float(saved.get(building, 0.0)),
                displaced_intensity=args.displaced_intensity,
            )
        )
    write_kpi_csv(reports, args.out)
    print(f"wrote {len(reports)} KPI rows to {args.out}")
    return 0


def cmd_scenario(args: argparse.Namespace) -> int:
    config = _config_from_args(args)
    scenario = scenario_from_dict(json.loads(Path(args.scenario).read_text(encoding="utf-8")))
    base = run_scenario(config, Scenario())
    result = run_scenario(config, scenario)
    diff = compare(base, result)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _dump_json(result_to_dict(base), out / "baseline.json")
    _dump_json(result_to_dict(result), out / "scenario.json")
    _dump_json(diff_to_dict(diff), out / "diff.json")
    print(
        f"scenario {scenario.name!r}: co2 delta {diff.co2_delta_kg:+.2f} kg, "
        f"violations +{len(diff.violations_added)}/-{len(diff.violations_removed)}"
    )
    return 0


def cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    from .service.app import create_app

    config = _config_from_args(args)
    log_path = Path(args.log) if args.log else None
    ui_dir = Path(args.ui_dir) if args.ui_dir else None
    app = create_app(config, speed=args.speed, log_path=log_path, ui_dir=ui_dir)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


def _add_pipeline_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--fixture", default="keele", help="network fixture name or JSON path")
    parser.add_argument("--seed", type=int, default=42)
    parser.add_argument("--start", default="2022-06-06T00:00:00+00:00")
    parser.add_argument("--days", type=int, default=7)
    parser.add_argument("--interval-min", type=int, default=30)
    parser.add_argument("--meters", type=int, default=1500)
    parser.add_argument("--strategy", default="lp", help="dispatch strategy name")
    parser.add_argument("--forecast-sigma", type=float, default=0.0)
    parser.add_argument("--annual-electric-kwh", type=float, default=10.5e6)
    parser.add_argument("--annual-heat-kwh", type=float, default=30.5e6)
    parser.add_argument("--annual-gas-kwh", type=float, default=22.0e6)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="slesim", description="campus energy-system simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="write synthetic telemetry/weather/carbon CSVs")
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--meters", type=int, default=1500)
    p.add_argument("--start", default="2022-06-06T00:00:00+00:00")
    p.add_argument("--days", type=int, default=7)
    p.add_argument("--interval-min", type=int, default=30)
    p.add_argument("--annual-electric-kwh", type=float, default=10.5e6)
    p.add_argument("--annual-heat-kwh", type=float, default=30.5e6)
    p.add_argument("--annual-gas-kwh", type=float, default=22.0e6)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("run", help="batch simulate a fixture and write reports")
    _add_pipeline_args(p)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("optimize", help="optimize a dispatch problem file")
    p.add_argument("problem", help="dispatch problem JSON")
    p.add_argument("--strategy", default="lp")
    p.add_argument("--out", required=True, help="schedule output (.json or .csv)")
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("report", help="KPI CSV from a timeline JSON")
    p.add_argument("timeline", help="timeline JSON from `run`")
    p.add_argument("--displaced-intensity", type=float, default=DEFAULT_DISPLACED_INTENSITY_KG_PER_KWH)
    p.add_argument("--out", required=True, help="KPI CSV path")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("scenario", help="run a what-if scenario against the baseline")
    _add_pipeline_args(p)
    p.add_argument("scenario", help="scenario JSON file")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_scenario)

    p = sub.add_parser("serve", help="host the operator HTTP service")
    _add_pipeline_args(p)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--speed", type=float, default=0.0, help="replay speed multiplier (0 = paused)")
    p.add_argument("--log", default=None, help="event log JSONL path")
    p.add_argument("--ui-dir", default=None, help="static console bundle directory")
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except VALIDATION_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - boundary: anything else is a runtime failure
        print(f"runtime error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
