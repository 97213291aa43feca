"""Experiment execution: seeded rollouts, metric tables, and file outputs.

Every run is a pure function of (config, master seed, checkpoint); output
files carry no timestamps and all floats are written via repr, so re-running
a subcommand reproduces them byte for byte.  Outputs per run directory:
``trajectories.jsonl`` (one record per decision step), ``metrics.csv`` (one
row per scenario) or the subcommand-specific CSV, and ``table.txt`` (human
summary).
"""

import csv
import hashlib
import io
import math
import os
from dataclasses import replace

import numpy as np

from . import mlp
from .actions import Action, N_ACTIONS, is_lane_change
from .agent import (build_view, greedy_policy, mask_actions, observe, train)
from .config_io import SLOW_ONLY_KIND_MIX, ExperimentConfig
from .dp import DpGrid, DpScenario, extract_trajectory, rollout_obstacles, solve
from .metrics import (Metrics, compute_metrics, metrics_to_csv, network_speed,
                      read_jsonl, write_jsonl)
from .reward import total_reward
from .seeding import stream_rng, stream_seed
from .shield import shield as shield_action
from .simulation import (SimMode, detect_collisions, generate_scenario,
                         obstacles_around, sense, step, warm_up)
from .state_codec import encode

TRAIN_LOG_COLUMNS = ["step", "episode", "return", "loss", "eps", "collisions"]


def config_fingerprint(cfg: ExperimentConfig) -> str:
    return hashlib.sha256(repr(cfg).encode()).hexdigest()[:16]


def _caused(event, action, caused_gap: float) -> bool:
    contact = event.gap <= caused_gap or event.overlap
    blame = event.ego_is_rear or (action is not None and is_lane_change(action))
    return contact and blame


def rollout_scenario(world, sim_cfg, reward_cfg, policy, rng, *, horizon,
                     shield_cfg=None, caused_gap=2.0, scenario_id=0,
                     policy_name="rl"):
    """Drive one warmed-up world for ``horizon`` ego decisions.

    The policy sees the estimated-speed view; with a shield config the rules
    filter every proposed action.  The first counted collision ends the
    scenario.  Returns the step records.
    """
    records = []
    prev_sensed = None
    sensed, view, state, mask = observe(world, sim_cfg, prev_sensed, rng)
    for t in range(horizon):
        proposed = policy(state, mask)
        final = Action(proposed)
        overridden = False
        if shield_cfg is not None:
            final = shield_action(view, final, shield_cfg)
            overridden = final != proposed
        v_prev, l_prev = world.ego.v, world.ego.lane
        step(world, final, sim_cfg)
        events = detect_collisions(world, reward_cfg)
        ego = world.ego
        br = total_reward(obstacles_around(world, ego.id), ego.v, v_prev,
                          ego.lane, l_prev, reward_cfg)
        records.append({
            "scenario": scenario_id,
            "policy": policy_name,
            "t": t,
            "action": int(final),
            "shield_override": overridden,
            "reward": br.total,
            "v": ego.v,
            "lane": ego.lane,
            "events": [[ev.other_id, ev.gap, ev.overlap, ev.ego_is_rear,
                        _caused(ev, final, caused_gap)] for ev in events],
            "vehicles": [[v.id, v.lane, v.x, v.v] for v in world.vehicles],
        })
        if events:
            break
        prev_sensed = sensed
        sensed, view, state, mask = observe(world, sim_cfg, prev_sensed, rng)
    return records


def replay_actions(world, sim_cfg, reward_cfg, actions, *, caused_gap=2.0,
                   scenario_id=0, policy_name="dp"):
    """Open-loop replay of a planned action sequence (the DP trajectory)."""
    records = []
    for t, action in enumerate(actions):
        action = Action(action)
        v_prev, l_prev = world.ego.v, world.ego.lane
        step(world, action, sim_cfg)
        events = detect_collisions(world, reward_cfg)
        ego = world.ego
        br = total_reward(obstacles_around(world, ego.id), ego.v, v_prev,
                          ego.lane, l_prev, reward_cfg)
        records.append({
            "scenario": scenario_id,
            "policy": policy_name,
            "t": t,
            "action": int(action),
            "shield_override": False,
            "reward": br.total,
            "v": ego.v,
            "lane": ego.lane,
            "events": [[ev.other_id, ev.gap, ev.overlap, ev.ego_is_rear,
                        _caused(ev, action, caused_gap)] for ev in events],
            "vehicles": [[v.id, v.lane, v.x, v.v] for v in world.vehicles],
        })
        if events:
            break
    return records


def _ensure_dir(path):
    os.makedirs(path, exist_ok=True)
    return path


def run_train(cfg: ExperimentConfig, out_dir: str,
              progress_cb=None) -> dict:
    """Train per the scenario recipe; write checkpoint + CSV log."""
    _ensure_dir(out_dir)
    rows = []

    def log_cb(rec):
        rows.append([rec.gradient_steps, rec.episode, repr(rec.ret),
                     repr(rec.loss), repr(rec.eps), rec.collisions])
        if progress_cb is not None:
            progress_cb(rec)

    result = train(cfg.sim, cfg.hyper, cfg.reward, cfg.master_seed, log_cb)
    ckpt_path = os.path.join(out_dir, "checkpoint.bin")
    metadata = {
        "gradient_steps": result.gradient_steps,
        "episodes": len(result.episodes),
        "config_sha": config_fingerprint(cfg),
        "master_seed": cfg.master_seed,
    }
    with open(ckpt_path, "wb") as fh:
        fh.write(mlp.save_checkpoint(result.params, result.opt, metadata))
    log_path = os.path.join(out_dir, "training_log.csv")
    with open(log_path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(TRAIN_LOG_COLUMNS)
        writer.writerows(rows)
    return {"checkpoint": ckpt_path, "log": log_path, "result": result}


def load_policy(checkpoint_path: str):
    with open(checkpoint_path, "rb") as fh:
        params, _opt, metadata = mlp.load_checkpoint(fh.read())
    return greedy_policy(params), metadata


def run_eval(cfg: ExperimentConfig, policy, out_dir=None,
             policy_name="rl") -> Metrics:
    """Greedy evaluation over n_scenarios seeded scenarios at one density."""
    shield_cfg = cfg.safety if cfg.shield else None
    all_records = []
    for i in range(cfg.n_scenarios):
        world = generate_scenario(
            cfg.sim, stream_seed(cfg.master_seed, "eval-world", i))
        warm_up(world, cfg.sim)
        rng = stream_rng(cfg.master_seed, "eval-rollout", i)
        all_records.extend(rollout_scenario(
            world, cfg.sim, cfg.reward, policy, rng,
            horizon=cfg.sim.episode_len, shield_cfg=shield_cfg,
            caused_gap=cfg.caused_gap, scenario_id=i, policy_name=policy_name))
    metrics = compute_metrics(all_records, cfg.reward, cfg.desired_speed_tol)
    if out_dir is not None:
        _ensure_dir(out_dir)
        write_jsonl(os.path.join(out_dir, "trajectories.jsonl"), all_records)
        with open(os.path.join(out_dir, "metrics.csv"), "w", newline="") as fh:
            fh.write(metrics_to_csv(metrics))
        with open(os.path.join(out_dir, "table.txt"), "w") as fh:
            fh.write(_eval_table(cfg, metrics, policy_name))
    return metrics


def _eval_table(cfg, metrics: Metrics, policy_name):
    lines = [
        f"policy={policy_name} shield={'on' if cfg.shield else 'off'} "
        f"density=1veh/{cfg.sim.entry_period_s:g}s noise={cfg.sim.noise_pct:g} "
        f"sigma={cfg.sim.sigma:g} mode={cfg.sim.mode.value} "
        f"scenarios={metrics.n_scenarios}",
        f"collisions            {metrics.collisions}",
        f"ego-caused collisions {metrics.ego_caused}",
        f"lane changes          {metrics.lane_changes}",
        f"desired speed (%)     {metrics.pct_desired_speed:.1f}",
        f"avg speed (m/s)       {metrics.avg_speed:.2f}",
    ]
    return "\n".join(lines) + "\n"


def run_dp_compare(cfg: ExperimentConfig, policy, out_dir=None) -> dict:
    """Matched-seed DP vs RL comparison per density (ConstantSpeed mode).

    The ego entry speed is rounded to the speed grid in the shared world so
    the DP plan replays through the simulator exactly on-grid; the RL policy
    faces the identical rounded world.
    """
    if cfg.sim.mode is not SimMode.CONSTANT_SPEED:
        raise ValueError("dp-compare requires sim.mode = constant_speed")
    horizon = cfg.sim.episode_len
    all_records = []
    results = {}
    for density in cfg.densities:
        sim_d = replace(cfg.sim, entry_period_s=density)
        for i in range(cfg.n_scenarios):
            world0 = generate_scenario(
                sim_d, stream_seed(cfg.master_seed, "dpcmp-world",
                                   int(round(density * 10)), i))
            warm_up(world0, sim_d)
            ego = world0.ego
            ego.v = float(int(round(ego.v)))
            scenario_id = i

            rl_world = world0.copy()
            rng = stream_rng(cfg.master_seed, "dpcmp-rollout",
                             int(round(density * 10)), i)
            rl_records = rollout_scenario(
                rl_world, sim_d, cfg.reward, policy, rng, horizon=horizon,
                shield_cfg=None, caused_gap=cfg.caused_gap,
                scenario_id=scenario_id, policy_name="rl")

            obstacles = rollout_obstacles(world0.copy(), horizon, sim_d)
            scen = DpScenario(ego_lane=ego.lane, ego_v=int(ego.v), ego_x=ego.x,
                              ego_length=ego.length, obstacles=obstacles)
            table = solve(scen, DpGrid(horizon=horizon), cfg.reward)
            points, _cost = extract_trajectory(table)
            dp_records = replay_actions(
                world0.copy(), sim_d, cfg.reward,
                [p.action for p in points[:-1]], caused_gap=cfg.caused_gap,
                scenario_id=scenario_id, policy_name="dp")

            for rec in rl_records + dp_records:
                rec["density"] = density
            all_records.extend(rl_records)
            all_records.extend(dp_records)
        for name in ("rl", "dp"):
            recs = [r for r in all_records
                    if r["density"] == density and r["policy"] == name]
            results[(density, name)] = compute_metrics(
                recs, cfg.reward, cfg.desired_speed_tol)

    if out_dir is not None:
        _ensure_dir(out_dir)
        write_jsonl(os.path.join(out_dir, "trajectories.jsonl"), all_records)
        with open(os.path.join(out_dir, "dp_compare.csv"), "w", newline="") as fh:
            fh.write(_dp_compare_csv(cfg, results))
        with open(os.path.join(out_dir, "table.txt"), "w") as fh:
            fh.write(_dp_compare_table(cfg, results))
    return results


def _dp_compare_csv(cfg, results) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["density_s", "policy", "scenarios", "collisions",
                     "lane_changes", "pct_desired_speed", "avg_speed"])
    for density in cfg.densities:
        for name in ("dp", "rl"):
            m = results[(density, name)]
            writer.writerow([repr(float(density)), name, m.n_scenarios,
                             m.collisions, m.lane_changes,
                             repr(m.pct_desired_speed), repr(m.avg_speed)])
    return buf.getvalue()


def _dp_compare_table(cfg, results) -> str:
    lines = []
    for density in cfg.densities:
        lines.append(f"1 veh./{density:g} sec.   collisions  lane-changes  "
                     f"desired-speed(%)")
        for name in ("dp", "rl"):
            m = results[(density, name)]
            lines.append(f"{name.upper():9s}{m.collisions:12d}"
                         f"{m.lane_changes:14d}{m.pct_desired_speed:15.1f}")
        lines.append("")
    return "\n".join(lines)


def _flow_sim_config(cfg: ExperimentConfig, penetration: float):
    return replace(cfg.sim, mode=SimMode.CAR_FOLLOWING,
                   episode_len=cfg.flow_episode_len,
                   kind_mix=dict(SLOW_ONLY_KIND_MIX),
                   ego_entry_index=None, penetration=penetration)


def rollout_flow(world, sim_cfg, policy, shield_cfg, rng, *, horizon,
                 scenario_id, penetration):
    """Multi-agent scenario: every controlled vehicle runs the shielded policy."""
    prev = {}
    records = []
    for t in range(horizon):
        actions = {}
        for veh in world.controlled_vehicles():
            sensed = sense(world, veh.id, sim_cfg.noise_pct, rng)
            view = build_view(prev.get(veh.id), sensed)
            a = policy(encode(view), mask_actions(view))
            if shield_cfg is not None:
                a = shield_action(view, a, shield_cfg)
            actions[veh.id] = a
            prev[veh.id] = sensed
        step(world, None, sim_cfg, actions=actions)
        records.append({
            "scenario": scenario_id,
            "penetration": penetration,
            "t": t,
            "vehicles": [[v.id, v.lane, v.x, v.v] for v in world.vehicles],
        })
    return records


def run_traffic_flow(cfg: ExperimentConfig, policy, out_dir=None) -> dict:
    """Average network speed per penetration of shielded policy vehicles."""
    results = {}
    all_records = []
    for pen in cfg.penetrations:
        sim_p = _flow_sim_config(cfg, pen)
        pen_records = []
        for i in range(cfg.n_scenarios):
            world = generate_scenario(
                sim_p, stream_seed(cfg.master_seed, "flow-world",
                                   int(round(pen * 1000)), i))
            rng = stream_rng(cfg.master_seed, "flow-rollout",
                             int(round(pen * 1000)), i)
            pen_records.extend(rollout_flow(
                world, sim_p, policy, cfg.safety, rng,
                horizon=cfg.flow_episode_len, scenario_id=i, penetration=pen))
        results[pen] = network_speed(pen_records)
        all_records.extend(pen_records)

    if out_dir is not None:
        _ensure_dir(out_dir)
        write_jsonl(os.path.join(out_dir, "trajectories.jsonl"), all_records)
        with open(os.path.join(out_dir, "traffic_flow.csv"), "w", newline="") as fh:
            fh.write(_flow_csv(cfg, results))
        with open(os.path.join(out_dir, "table.txt"), "w") as fh:
            fh.write(_flow_table(cfg, results))
    return results


def _flow_csv(cfg, results) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["penetration", "avg_network_speed", "improvement_pct"])
    base = results[cfg.penetrations[0]]
    for pen in cfg.penetrations:
        improvement = 100.0 * (results[pen] - base) / base if base else 0.0
        writer.writerow([repr(float(pen)), repr(results[pen]),
                         repr(improvement)])
    return buf.getvalue()


def _flow_table(cfg, results) -> str:
    base = results[cfg.penetrations[0]]
    lines = ["penetration   avg speed (m/s)   improvement over 0%"]
    for pen in cfg.penetrations:
        improvement = 100.0 * (results[pen] - base) / base if base else 0.0
        lines.append(f"{pen * 100:7.0f}%      {results[pen]:10.2f}"
                     f"{improvement:17.1f}%")
    return "\n".join(lines) + "\n"


def run_plot_data(trajectories_path: str, out_dir: str) -> str:
    """Tidy per-step speed profile (mean +- one std over scenarios)."""
    records = read_jsonl(trajectories_path)
    by_step = {}
    for rec in records:
        if "v" not in rec:
            continue
        by_step.setdefault((rec.get("policy", "rl"), rec["t"]), []).append(rec["v"])
    _ensure_dir(out_dir)
    path = os.path.join(out_dir, "speed_profile.csv")
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["policy", "t", "n", "mean_v", "std_v"])
        for (policy, t), speeds in sorted(by_step.items()):
            arr = np.array(speeds)
            writer.writerow([policy, t, len(speeds),
                             repr(float(arr.mean())), repr(float(arr.std()))])
    return path


def random_proposal_policy(rng: np.random.Generator):
    """Uniform proposals over the full action set (shield stress testing)."""
    def act(_state, _mask):
        return Action(int(rng.integers(0, N_ACTIONS)))
    return act


def run_random_shield_check(cfg: ExperimentConfig, n_scenarios: int) -> Metrics:
    """Shield-on rollouts driven by uniformly random proposals.

    Uses the contact-level counting threshold (see the safety-shield design
    notes): scenarios terminate only on 2 m-gap events, so the shield is
    exercised all the way to physical contact.
    """
    contact_reward = replace(cfg.reward, delta_0=cfg.caused_gap)
    records = []
    for i in range(n_scenarios):
        world = generate_scenario(
            cfg.sim, stream_seed(cfg.master_seed, "shield-world", i))
        warm_up(world, cfg.sim)
        rng = stream_rng(cfg.master_seed, "shield-rollout", i)
        policy = random_proposal_policy(rng)
        records.extend(rollout_scenario(
            world, cfg.sim, contact_reward, policy, rng,
            horizon=cfg.sim.episode_len, shield_cfg=cfg.safety,
            caused_gap=cfg.caused_gap, scenario_id=i, policy_name="random"))
    return compute_metrics(records, contact_reward, cfg.desired_speed_tol)
