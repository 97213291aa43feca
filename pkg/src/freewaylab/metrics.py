"""Metric aggregation over per-step trajectory records.

A trajectory record is one dict per decision step (the JSONL schema):

    scenario, policy, t, action, shield_override, reward, v, lane,
    events: [[other_id, gap, overlap, ego_is_rear, caused], ...],
    vehicles: [[id, lane, x, v], ...]

Collisions are counted per scenario (a scenario ends at its first counted
collision, so 0/1); "caused" marks contact-level events attributable to the
ego.  pct_desired_speed is the share of steps with |v - v_d| <= tolerance,
and avg_speed averages per-scenario mean ego speeds.
"""

import csv
import io
import json
from dataclasses import dataclass, field, asdict

from .actions import Action, is_lane_change

METRICS_SCHEMA = "fwl-metrics-v1"


@dataclass
class ScenarioStats:
    scenario: int
    steps: int
    collided: int
    ego_caused: int
    lane_changes: int
    desired_steps: int
    avg_speed: float


@dataclass
class Metrics:
    n_scenarios: int
    collisions: int
    collision_rate: float
    ego_caused: int
    lane_changes: int
    pct_desired_speed: float
    avg_speed: float
    per_scenario: list = field(default_factory=list)


def scenario_stats(records, v_d: float, tolerance: float) -> ScenarioStats:
    steps = len(records)
    collided = 0
    caused = 0
    lane_changes = 0
    desired = 0
    speed_sum = 0.0
    scenario = records[0]["scenario"]
    for rec in records:
        if rec["events"]:
            collided = 1
            if any(ev[4] for ev in rec["events"]):
                caused = 1
        action = rec["action"]
        if action is not None and is_lane_change(Action(action)):
            lane_changes += 1
        if abs(rec["v"] - v_d) <= tolerance:
            desired += 1
        speed_sum += rec["v"]
    return ScenarioStats(scenario=scenario, steps=steps, collided=collided,
                         ego_caused=caused, lane_changes=lane_changes,
                         desired_steps=desired,
                         avg_speed=speed_sum / steps if steps else 0.0)


def aggregate(per_scenario) -> Metrics:
    n = len(per_scenario)
    total_steps = sum(s.steps for s in per_scenario)
    desired = sum(s.desired_steps for s in per_scenario)
    collisions = sum(s.collided for s in per_scenario)
    return Metrics(
        n_scenarios=n,
        collisions=collisions,
        collision_rate=collisions / n if n else 0.0,
        ego_caused=sum(s.ego_caused for s in per_scenario),
        lane_changes=sum(s.lane_changes for s in per_scenario),
        pct_desired_speed=100.0 * desired / total_steps if total_steps else 0.0,
        avg_speed=(sum(s.avg_speed for s in per_scenario) / n) if n else 0.0,
        per_scenario=list(per_scenario),
    )


def compute_metrics(records, reward_cfg, tolerance: float = 0.5) -> Metrics:
    """Deterministic aggregation of a flat record list (any scenario order)."""
    by_scenario = {}
    for rec in records:
        by_scenario.setdefault(rec["scenario"], []).append(rec)
    stats = [scenario_stats(sorted(recs, key=lambda r: r["t"]),
                            reward_cfg.v_d, tolerance)
             for _, recs in sorted(by_scenario.items())]
    return aggregate(stats)


def network_speed(records) -> float:
    """Mean speed of every vehicle over every step, averaged per scenario."""
    by_scenario = {}
    for rec in records:
        speeds = by_scenario.setdefault(rec["scenario"], [])
        speeds.extend(v for (_id, _lane, _x, v) in rec["vehicles"])
    per_scenario = [sum(s) / len(s) for _, s in sorted(by_scenario.items()) if s]
    return sum(per_scenario) / len(per_scenario) if per_scenario else 0.0


METRICS_COLUMNS = ["schema", "scenario", "steps", "collided", "ego_caused",
                   "lane_changes", "desired_steps", "avg_speed"]


def metrics_to_csv(metrics: Metrics) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(METRICS_COLUMNS)
    for s in metrics.per_scenario:
        writer.writerow([METRICS_SCHEMA, s.scenario, s.steps, s.collided,
                         s.ego_caused, s.lane_changes, s.desired_steps,
                         repr(s.avg_speed)])
    return buf.getvalue()


def metrics_from_csv(text: str) -> Metrics:
    reader = csv.DictReader(io.StringIO(text))
    stats = []
    for row in reader:
        if row["schema"] != METRICS_SCHEMA:
            raise ValueError(f"unknown metrics schema {row['schema']!r}")
        stats.append(ScenarioStats(
            scenario=int(row["scenario"]), steps=int(row["steps"]),
            collided=int(row["collided"]), ego_caused=int(row["ego_caused"]),
            lane_changes=int(row["lane_changes"]),
            desired_steps=int(row["desired_steps"]),
            avg_speed=float(row["avg_speed"])))
    return aggregate(stats)


def write_jsonl(path, records) -> None:
    with open(path, "w") as fh:
        for rec in records:
            fh.write(json.dumps(rec, sort_keys=True))
            fh.write("\n")


def read_jsonl(path) -> list:
    records = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if line:
                records.append(json.loads(line))
    return records
