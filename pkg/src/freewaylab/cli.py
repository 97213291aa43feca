"""Command-line entry point.

Subcommands: train, eval, dp-compare, traffic-flow, plot-data, print-schema.
Exit codes: 0 success, 1 configuration error, 2 runtime failure.  All
randomness is routed through --seed; re-running a subcommand with the same
config and seed reproduces its CSV outputs byte for byte.
"""

import argparse
import sys
from dataclasses import replace

from . import harness
from .config_io import ConfigError, ExperimentConfig, load_config, schema_doc

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_RUNTIME = 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="freeway-lab",
        description="Freeway driving-policy laboratory: train and evaluate "
                    "the DDQN policy, benchmark it against the DP planner, "
                    "and run the traffic-flow experiment.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, checkpoint=True):
        p.add_argument("--config", metavar="PATH", help="key=value config file")
        p.add_argument("--seed", type=int, metavar="N", help="master seed")
        p.add_argument("--out", metavar="DIR", default="out",
                       help="output directory (created if missing)")
        if checkpoint:
            p.add_argument("--checkpoint", metavar="PATH", required=True,
                           help="trained network checkpoint")

    p_train = sub.add_parser("train", help="train the policy, write checkpoint + log")
    common(p_train, checkpoint=False)
    p_train.add_argument("--steps", type=int, metavar="N",
                         help="override the gradient-step budget (annealing "
                              "rate is rescaled to terminate at N)")

    p_eval = sub.add_parser("eval", help="evaluate a checkpoint over seeded scenarios")
    common(p_eval)
    p_eval.add_argument("--shield", choices=["on", "off"],
                        help="apply the safety rules")
    p_eval.add_argument("--noise", type=float, metavar="P",
                        help="proportional sensing noise (0, 0.05, 0.10)")
    p_eval.add_argument("--density", type=float, metavar="S",
                        help="entry period in seconds (8, 4, 2, 1)")
    p_eval.add_argument("--scenarios", type=int, metavar="N",
                        help="number of scenarios")

    p_dp = sub.add_parser("dp-compare", help="matched-seed DP vs RL comparison")
    common(p_dp)
    p_dp.add_argument("--densities", metavar="LIST",
                      help="comma-separated entry periods (default 8,4,2,1)")
    p_dp.add_argument("--scenarios", type=int, metavar="N",
                      help="scenarios per density")

    p_flow = sub.add_parser("traffic-flow",
                            help="average network speed per penetration")
    common(p_flow)
    p_flow.add_argument("--penetration", metavar="LIST",
                        help="comma-separated fractions (default 0,0.05,0.10,0.20)")
    p_flow.add_argument("--scenarios", type=int, metavar="N",
                        help="scenarios per penetration")

    p_plot = sub.add_parser("plot-data",
                            help="emit tidy speed-profile CSV from a trajectory log")
    p_plot.add_argument("--trajectories", metavar="PATH", required=True)
    p_plot.add_argument("--out", metavar="DIR", default="out")

    sub.add_parser("print-schema", help="print the config file schema")
    return parser


def _load_experiment(args) -> ExperimentConfig:
    cfg = ExperimentConfig()
    if args.config:
        cfg = load_config(args.config, cfg)
    if args.seed is not None:
        cfg = replace(cfg, master_seed=args.seed)
    if getattr(args, "scenarios", None) is not None:
        cfg = replace(cfg, n_scenarios=args.scenarios)
    if getattr(args, "shield", None) is not None:
        cfg = replace(cfg, shield=args.shield == "on")
    if getattr(args, "noise", None) is not None:
        cfg = replace(cfg, sim=replace(cfg.sim, noise_pct=args.noise))
    if getattr(args, "density", None) is not None:
        cfg = replace(cfg, sim=replace(cfg.sim, entry_period_s=args.density))
    if getattr(args, "densities", None):
        cfg = replace(cfg, densities=tuple(
            float(tok) for tok in args.densities.split(",")))
    if getattr(args, "penetration", None):
        cfg = replace(cfg, penetrations=tuple(
            float(tok) for tok in args.penetration.split(",")))
    return cfg


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "print-schema":
        print(schema_doc())
        return EXIT_OK
    if args.command == "plot-data":
        try:
            path = harness.run_plot_data(args.trajectories, args.out)
        except OSError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_RUNTIME
        print(f"wrote {path}")
        return EXIT_OK

    try:
        cfg = _load_experiment(args)
    except (ConfigError, ValueError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    try:
        if args.command == "train":
            if args.steps is not None:
                from .agent import lambda_for_budget
                cfg = replace(cfg, hyper=replace(
                    cfg.hyper, max_steps=args.steps,
                    lam=lambda_for_budget(args.steps)))
            out = harness.run_train(cfg, args.out)
            result = out["result"]
            n_ep = len(result.episodes)
            last = result.episodes[-1]
            print(f"trained {result.gradient_steps} steps over {n_ep} episodes "
                  f"(final eps {last.eps:.4f}); checkpoint: {out['checkpoint']}")
            return EXIT_OK

        policy, _meta = harness.load_policy(args.checkpoint)
        if args.command == "eval":
            metrics = harness.run_eval(cfg, policy, args.out)
            print(f"{metrics.n_scenarios} scenarios: "
                  f"{metrics.collisions} collisions "
                  f"({metrics.ego_caused} ego-caused), "
                  f"{metrics.lane_changes} lane changes, "
                  f"{metrics.pct_desired_speed:.1f}% at desired speed, "
                  f"avg {metrics.avg_speed:.2f} m/s -> {args.out}")
        elif args.command == "dp-compare":
            results = harness.run_dp_compare(cfg, policy, args.out)
            for density in cfg.densities:
                dp_m = results[(density, "dp")]
                rl_m = results[(density, "rl")]
                print(f"1 veh/{density:g}s: DP {dp_m.collisions} collisions "
                      f"{dp_m.pct_desired_speed:.0f}% desired | "
                      f"RL {rl_m.collisions} collisions "
                      f"{rl_m.pct_desired_speed:.0f}% desired")
        elif args.command == "traffic-flow":
            results = harness.run_traffic_flow(cfg, policy, args.out)
            base = results[cfg.penetrations[0]]
            for pen in cfg.penetrations:
                improvement = 100.0 * (results[pen] - base) / base if base else 0.0
                print(f"penetration {pen * 100:.0f}%: "
                      f"{results[pen]:.2f} m/s ({improvement:+.1f}%)")
        return EXIT_OK
    except (ConfigError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:   # runtime failure contract
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
