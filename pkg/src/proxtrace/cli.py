"""Command-line front end.

Subcommands: risk, curve, surface, trace, simulate, replay.  Exit codes
are 0 for success, 1 for any validation or usage failure, 2 for a no-data
outcome (nothing to score).  Every file-writing command also emits a run
manifest (<out>.manifest.json) naming the command, config digest, seed,
tool version, and the SHA-256 of each declared output; reruns with the
same inputs reproduce every output byte for byte.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import hashlib
import json
import sys
from pathlib import Path
from typing import Sequence

from . import __version__
from .core import Category, DeviceId, SimClock, read_contact_graph
from .errors import NoObservationsError, ProxTraceError, ValidationError
from .protocol import Registry, read_event_log
from .risk import (
    DEFAULT_AREA_RADIUS_M,
    DEFAULT_PLACEMENT_REPEATS,
    DEFAULT_WEIGHTS,
    WeightConfig,
    classify,
    risk_curve,
    risk_surface,
    score_from_arrays,
    write_curve_csv,
    write_surface_csv,
)
from .sim import DayStats, SimConfig, compare, replicate_compare, run
from .tracing import trace_co_contacts

OK, FAILURE, NO_DATA = 0, 1, 2

SIM_CSV_HEADER = ("day", "new_infections", "cumulative", "quarantined", "susceptible", "arm")


class _Parser(argparse.ArgumentParser):
    """argparse that reports usage problems as ValidationError (exit 1)."""

    def error(self, message: str) -> None:  # type: ignore[override]
        raise ValidationError(message)


# =========================================================================
# Helpers
# =========================================================================

def _parse_weights(text: str) -> WeightConfig:
    try:
        values = tuple(float(part) for part in text.split(","))
    except ValueError as exc:
        raise ValidationError(f"weights must be comma-separated numbers: {text!r}") from exc
    return WeightConfig(values)


def _sha256_file(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as handle:
        for block in iter(lambda: handle.read(1 << 16), b""):
            digest.update(block)
    return digest.hexdigest()


def _write_manifest(command: str, params: dict, seed: int | None, outputs: list[Path]) -> None:
    config_digest = hashlib.sha256(
        json.dumps(params, sort_keys=True, default=str).encode("utf-8")
    ).hexdigest()
    manifest = {
        "command": command,
        "config_digest": config_digest,
        "seed": seed,
        "tool_version": __version__,
        "outputs": [{"path": str(path), "sha256": _sha256_file(path)} for path in outputs],
    }
    manifest_path = Path(str(outputs[0]) + ".manifest.json")
    with open(manifest_path, "w") as handle:
        json.dump(manifest, handle, indent=2, sort_keys=True)
        handle.write("\n")


def _read_observation_rows(path: str, k: int) -> tuple[list[int], list[float]]:
    categories: list[int] = []
    distances: list[float] = []
    with open(path, newline="") as handle:
        for lineno, row in enumerate(csv.reader(handle), start=1):
            if not row or (lineno == 1 and [c.strip().lower() for c in row] == ["category", "distance"]):
                continue
            try:
                if len(row) != 2:
                    raise ValidationError("expected exactly two fields (category, distance)")
                raw_cat = row[0].strip()
                if raw_cat.lstrip("+-").isdigit():
                    cat = int(raw_cat)
                else:
                    cat = int(Category.from_letter(raw_cat))
                if not 0 <= cat < k:
                    raise ValidationError(f"category index {cat} outside 0..{k - 1}")
                distance = float(row[1])
                if not distance > 0:
                    raise ValidationError("distance must be strictly positive")
            except (ValueError, ValidationError) as exc:
                raise ValidationError(f"line {lineno}: {exc}") from exc
            categories.append(cat)
            distances.append(distance)
    return categories, distances


# =========================================================================
# Subcommands
# =========================================================================

def _cmd_risk(args: argparse.Namespace) -> int:
    weights = _parse_weights(args.weights)
    categories, distances = _read_observation_rows(args.observations, len(weights))
    if not categories:
        print("no observations: nothing to score", file=sys.stderr)
        return NO_DATA
    for distance in distances:
        if distance > args.radius:
            raise ValidationError(f"distance {distance} m outside the {args.radius} m radius")
    import numpy as np

    score = score_from_arrays(
        np.asarray(categories, dtype=np.int64), np.asarray(distances, dtype=float), weights
    )
    print(f"{score:.6f} {classify(score).name}")
    return OK


def _cmd_curve(args: argparse.Namespace) -> int:
    weights = _parse_weights(args.weights)
    points = risk_curve(
        args.n,
        args.k,
        weights,
        radius=args.radius,
        placement=args.placement,
        repeats=args.repeats,
        seed=args.seed,
        jobs=args.jobs,
    )
    out = Path(args.out)
    write_curve_csv(points, out, args.k)
    _write_manifest(
        "curve",
        {
            "n": args.n, "k": args.k, "weights": list(weights.weights),
            "radius": args.radius, "placement": args.placement,
            "repeats": args.repeats, "seed": args.seed,
        },
        args.seed,
        [out],
    )
    print(f"wrote {len(points)} curve points to {out}")
    return OK


def _cmd_surface(args: argparse.Namespace) -> int:
    weights = _parse_weights(args.weights)
    cells = risk_surface(
        args.n_max,
        weights,
        radius=args.radius,
        placement=args.placement,
        repeats=args.repeats,
        seed=args.seed,
        jobs=args.jobs,
    )
    out = Path(args.out)
    write_surface_csv(cells, out)
    _write_manifest(
        "surface",
        {
            "n_max": args.n_max, "weights": list(weights.weights),
            "radius": args.radius, "placement": args.placement,
            "repeats": args.repeats, "seed": args.seed,
        },
        args.seed,
        [out],
    )
    print(f"wrote {len(cells)} surface cells to {out}")
    return OK


def _cmd_trace(args: argparse.Namespace) -> int:
    graph = read_contact_graph(args.graph)
    index_case = DeviceId.from_hex(args.case)
    traced = trace_co_contacts(index_case, graph, SimClock(args.day))
    lines = [device.hex for device in traced]
    if args.out:
        out = Path(args.out)
        out.write_text("".join(line + "\n" for line in lines))
        _write_manifest(
            "trace",
            {"graph": args.graph, "case": args.case, "day": args.day},
            args.seed,
            [out],
        )
    else:
        for line in lines:
            print(line)
    return OK


def _load_sim_config(args: argparse.Namespace) -> SimConfig:
    values: dict[str, object] = {}
    field_types = {f.name: f.type for f in dataclasses.fields(SimConfig)}
    if args.config:
        with open(args.config) as handle:
            for lineno, raw in enumerate(handle, start=1):
                line = raw.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise ValidationError(f"line {lineno}: expected 'key = value'")
                key, _, value = (part.strip() for part in line.partition("="))
                if key not in field_types:
                    raise ValidationError(f"line {lineno}: unknown config field {key!r}")
                values[key] = _coerce_config_value(key, value)
    if args.seed is not None:
        values["seed"] = args.seed
    if args.population is not None:
        values["population"] = args.population
    if args.days is not None:
        values["max_days"] = args.days
    return SimConfig(**values)  # type: ignore[arg-type]


def _coerce_config_value(key: str, text: str) -> object:
    ints = {
        "population", "initial_infected", "symptom_onset_delay", "quarantine_start_delay",
        "quarantine_days", "infectious_period", "seed", "max_days",
    }
    floats = {
        "arena_side", "bluetooth_range", "infection_radius",
        "infection_probability", "encounter_duration_s",
    }
    try:
        if key in ints:
            return int(text)
        if key in floats:
            return float(text)
        if key == "app_enabled":
            lowered = text.lower()
            if lowered in {"true", "1", "yes"}:
                return True
            if lowered in {"false", "0", "no"}:
                return False
            raise ValueError("expected a boolean")
    except ValueError as exc:
        raise ValidationError(f"config field {key!r}: {exc}") from exc
    raise ValidationError(f"config field {key!r} is not settable from a file")


def _sim_rows(stats: list[DayStats], arm: str, seed: int | None) -> list[list[object]]:
    rows = []
    for s in stats:
        row: list[object] = [
            s.day, s.new_infections, s.cumulative_infections,
            s.quarantined_count, s.susceptible_count, arm,
        ]
        if seed is not None:
            row.append(seed)
        rows.append(row)
    return rows


def _cmd_simulate(args: argparse.Namespace) -> int:
    config = _load_sim_config(args)
    multi = args.replicates > 1
    rows: list[list[object]] = []
    summaries: list[str] = []
    if args.arm == "both":
        results = replicate_compare(config, args.replicates, jobs=args.jobs)
        for result in results:
            seed = result.summary.seed if multi else None
            rows.extend(_sim_rows(result.baseline, "baseline", seed))
            rows.extend(_sim_rows(result.app, "app", seed))
            s = result.summary
            summaries.append(
                f"seed {s.seed}: baseline {s.baseline_total}/{s.population} "
                f"(peak day {s.baseline_peak_day}), app {s.app_total}/{s.population} "
                f"(peak day {s.app_peak_day}), ratio {s.ratio:.3f}"
            )
    else:
        app_enabled = args.arm == "app"
        for k in range(args.replicates):
            seeded = dataclasses.replace(
                config, seed=config.seed + k, app_enabled=app_enabled
            )
            stats = run(seeded)
            rows.extend(_sim_rows(stats, args.arm, seeded.seed if multi else None))
            summaries.append(
                f"seed {seeded.seed}: {args.arm} {stats[-1].cumulative_infections}/{config.population}"
            )
    out = Path(args.out)
    with open(out, "w", newline="") as handle:
        writer = csv.writer(handle)
        header = list(SIM_CSV_HEADER) + (["seed"] if multi else [])
        writer.writerow(header)
        writer.writerows(rows)
    _write_manifest(
        "simulate",
        {
            "config": dataclasses.asdict(config), "arm": args.arm,
            "replicates": args.replicates,
        },
        config.seed,
        [out],
    )
    for line in summaries:
        print(line)
    return OK


def _cmd_replay(args: argparse.Namespace) -> int:
    events = read_event_log(args.log)
    registry = Registry.replay(events, staff_credentials=[args.credential])
    digest = registry.state_digest()
    print(digest)
    if args.out:
        out = Path(args.out)
        out.write_text(digest + "\n")
        _write_manifest("replay", {"log": args.log}, args.seed, [out])
    return OK


# =========================================================================
# Parser wiring
# =========================================================================

def _build_parser() -> _Parser:
    parser = _Parser(prog="proxtrace", description=__doc__)
    parser.add_argument("--version", action="version", version=f"proxtrace {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common_risk(p: _Parser) -> None:
        p.add_argument("--weights", default=",".join(str(w) for w in DEFAULT_WEIGHTS.weights),
                       help="comma-separated category weights, highest risk first")
        p.add_argument("--radius", type=float, default=DEFAULT_AREA_RADIUS_M)

    p_risk = sub.add_parser("risk", help="score one observation CSV (category,distance rows)")
    p_risk.add_argument("--observations", required=True)
    add_common_risk(p_risk)
    p_risk.set_defaults(func=_cmd_risk)

    for name, extra in (("curve", ("--n", "--k")), ("surface", ("--n-max",))):
        p = sub.add_parser(name, help=f"generate the risk {name} CSV")
        if name == "curve":
            p.add_argument("--n", type=int, default=20)
            p.add_argument("--k", type=int, default=4)
        else:
            p.add_argument("--n-max", dest="n_max", type=int, default=20)
        add_common_risk(p)
        p.add_argument("--placement", choices=("uniform", "equal"), default="uniform")
        p.add_argument("--repeats", type=int, default=DEFAULT_PLACEMENT_REPEATS)
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--jobs", type=int, default=1)
        p.add_argument("--out", required=True)
        p.set_defaults(func=_cmd_curve if name == "curve" else _cmd_surface)

    p_trace = sub.add_parser("trace", help="co-contact trace over a contact graph CSV")
    p_trace.add_argument("--graph", required=True)
    p_trace.add_argument("--case", required=True, help="index case digest (hex)")
    p_trace.add_argument("--day", type=int, required=True)
    p_trace.add_argument("--seed", type=int, default=0,
                         help="recorded in the manifest; tracing itself draws nothing")
    p_trace.add_argument("--out")
    p_trace.set_defaults(func=_cmd_trace)

    p_sim = sub.add_parser("simulate", help="run the epidemic engine")
    p_sim.add_argument("--config", help="key = value file of SimConfig fields")
    p_sim.add_argument("--seed", type=int)
    p_sim.add_argument("--population", type=int)
    p_sim.add_argument("--days", type=int, help="maximum simulated days")
    p_sim.add_argument("--arm", choices=("baseline", "app", "both"), default="both")
    p_sim.add_argument("--replicates", type=int, default=1)
    p_sim.add_argument("--jobs", type=int, default=1)
    p_sim.add_argument("--out", required=True)
    p_sim.set_defaults(func=_cmd_simulate)

    p_replay = sub.add_parser("replay", help="rebuild registry state from an event log")
    p_replay.add_argument("--log", required=True)
    p_replay.add_argument("--credential", default="replay")
    p_replay.add_argument("--seed", type=int, default=0,
                          help="recorded in the manifest; replay itself draws nothing")
    p_replay.add_argument("--out", help="also write the digest to this file, with a manifest")
    p_replay.set_defaults(func=_cmd_replay)

    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except NoObservationsError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return NO_DATA
    except (ProxTraceError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return FAILURE


if __name__ == "__main__":
    sys.exit(main())
