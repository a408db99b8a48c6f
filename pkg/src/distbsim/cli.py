"""Command-line entry point.

Subcommands:
    run      <config.json>  run one scenario, write the report CSVs
    figures  <p1|p2>        run the canned sweeps, one CSV per figure
    serve    <config.json>  expose the gateway over a built scenario
    validate <chainfile>    check a persisted chain end to end

Exit codes: 0 ok, 1 validation failed (`validate`), 2 bad config or
flags, 3 runtime error. DISTB_SEED overrides the config seed; an explicit
--seed flag beats both.
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import replace

from . import __version__, ledger, scenarios
from .engine import MODE_DISTB, MODE_OPENFLOW_ONLY, ConfigError, load_config
from .gateway import GatewayService, make_server
from .metrics import emit_report
from .world import World, run_scenario

EXIT_OK = 0
EXIT_VALIDATION_FAILED = 1
EXIT_BAD_CONFIG = 2
EXIT_RUNTIME = 3


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="distbsim",
        description="Blockchain-verified SDN fabric simulator with an "
                    "energy-aware IoT clustering layer",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one scenario and emit report CSVs")
    run.add_argument("config", help="scenario config (JSON, schema 1)")
    run.add_argument("--seed", type=int, default=None, help="override the seed")
    run.add_argument("--out", default="out", help="output directory")
    run.add_argument("--mode", choices=[MODE_DISTB, MODE_OPENFLOW_ONLY],
                     default=None, help="override the fabric mode")

    figures = sub.add_parser("figures", help="run the canned figure sweeps")
    figures.add_argument("preset", choices=["p1", "p2"])
    figures.add_argument("--out", default="figures", help="output directory")
    figures.add_argument("--seed", type=int, default=None, help="override the seed")

    serve = sub.add_parser("serve", help="serve the gateway over a scenario")
    serve.add_argument("config", help="scenario config (JSON, schema 1)")
    serve.add_argument("--port", type=int, default=8080)
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--seed", type=int, default=None, help="override the seed")

    validate = sub.add_parser("validate", help="validate a persisted chain file")
    validate.add_argument("chainfile")
    return parser


def _resolve_seed(flag_seed, config_seed: int) -> int:
    if flag_seed is not None:
        return flag_seed
    env = os.environ.get("DISTB_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise ConfigError("DISTB_SEED", f"not an integer: {env!r}")
    return config_seed


def _load(path: str):
    if not os.path.exists(path):
        raise ConfigError("config", f"no such file: {path}")
    return load_config(path)


def _cmd_run(args) -> int:
    config = _load(args.config)
    config = replace(config, seed=_resolve_seed(args.seed, config.seed))
    if args.mode is not None:
        config = replace(config, mode=args.mode)
    report = run_scenario(config.validate())
    emit_report(report, args.out)
    print(f"wrote report to {args.out} "
          f"(throughput {report.throughput_bps / 1e6:.3f} Mb/s, "
          f"{report.summary['packets_delivered']} delivered)")
    return EXIT_OK


def _write_rows(path: str, columns, rows) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(columns) + "\n")
        for row in rows:
            fh.write(",".join(repr(row[c]) if isinstance(row[c], float) else str(row[c])
                              for c in columns) + "\n")


def _cmd_figures(args) -> int:
    from .engine import preset_config

    os.makedirs(args.out, exist_ok=True)
    seed = _resolve_seed(args.seed, 1)
    if args.preset == "p1":
        base = preset_config("p1", seed=seed, duration_s=15.0, node_count=10,
                             cbr_rate_pps=5.0, difficulty=10)
        sweep = scenarios.scenario_throughput_vs_nodes([10, 20, 30, 40, 50], base)
        _write_rows(os.path.join(args.out, "fig7_throughput_vs_nodes.csv"),
                    ["nodes", "distb_bps", "baseline_bps"], sweep)

        ddos = scenarios.scenario_ddos(replace(base, duration_s=25.0))
        rows = []
        for (t, distb_bps), (_, base_bps) in zip(ddos["distb"]["series"],
                                                 ddos["baseline"]["series"]):
            rows.append({"t_s": t, "attack_pps": ddos["attack"].rate_at(t),
                         "distb_bps": distb_bps, "baseline_bps": base_bps})
        _write_rows(os.path.join(args.out, "fig8_bandwidth_vs_rate.csv"),
                    ["t_s", "attack_pps", "distb_bps", "baseline_bps"], rows)

        sizes = [65536, 262144, 1048576, 4194304]
        rt_rows = []
        for mode, key in ((MODE_DISTB, "distb_s"), (MODE_OPENFLOW_ONLY, "baseline_s")):
            for size, seconds in scenarios.scenario_response_time(
                    replace(base, duration_s=60.0), sizes, mode=mode):
                match = next((r for r in rt_rows if r["file_bytes"] == size), None)
                if match is None:
                    match = {"file_bytes": size}
                    rt_rows.append(match)
                match[key] = seconds
        _write_rows(os.path.join(args.out, "fig9_response_time.csv"),
                    ["file_bytes", "distb_s", "baseline_s"], rt_rows)

        bw = scenarios.scenario_bandwidth_vs_packets([500, 1000, 1500, 2000, 2500],
                                                     base)
        _write_rows(os.path.join(args.out, "fig10_bandwidth_vs_packets.csv"),
                    ["packets", "distb_bps", "baseline_bps"], bw)

        lat = scenarios.scenario_latency_vs_size([128, 256, 512, 1024, 2048, 4096],
                                                 base)
        _write_rows(os.path.join(args.out, "fig11_latency_vs_size.csv"),
                    ["bytes", "distb_s", "baseline_s"], lat)

        cpu = scenarios.scenario_cpu_under_ddos(replace(base, duration_s=25.0))
        _write_rows(os.path.join(args.out, "fig12_cpu_ddos.csv"),
                    ["t_s", "work_units_per_s", "utilization_pct"],
                    [{"t_s": t, "work_units_per_s": u, "utilization_pct": pct}
                     for t, u, pct in cpu])
    else:
        base = preset_config("p2", seed=seed, duration_s=20.0, node_count=40,
                             cbr_rate_pps=5.0, difficulty=10)
        tvt = scenarios.scenario_throughput_vs_time(base)
        _write_rows(os.path.join(args.out, "p2_throughput_vs_time.csv"),
                    ["t_s", "distb_bps", "baseline_bps"], tvt)

        split = scenarios.scenario_energy_split(base)
        _write_rows(os.path.join(args.out, "p2_energy_split.csv"),
                    ["component", "distb_j", "baseline_j"], split)

        gas = scenarios.scenario_gas([100, 200, 400, 600, 800], base)
        _write_rows(os.path.join(args.out, "p2_gas.csv"),
                    ["tx", "gas", "mean_proc_time_s"], gas)

        ch = scenarios.scenario_ch_comparison(base, rounds=200)
        _write_rows(os.path.join(args.out, "p2_cluster_energy.csv"),
                    ["round", "alg_j", "baseline_j"],
                    [{"round": a["round"], "alg_j": a["energy_j"],
                      "baseline_j": b["energy_j"]}
                     for a, b in zip(ch["alg"]["rows"], ch["baseline"]["rows"])])
        _write_rows(os.path.join(args.out, "p2_cluster_delay.csv"),
                    ["round", "alg_s", "baseline_s"],
                    [{"round": a["round"], "alg_s": a["delay_s"],
                      "baseline_s": b["delay_s"]}
                     for a, b in zip(ch["alg"]["rows"], ch["baseline"]["rows"])])
    print(f"wrote figure CSVs to {args.out}")
    return EXIT_OK


def _cmd_serve(args) -> int:
    config = _load(args.config)
    config = replace(config, seed=_resolve_seed(args.seed, config.seed))
    world = World(config.validate())
    service = GatewayService(world.cluster, clock=lambda: world.loop.now)
    server = make_server(service, host=args.host, port=args.port)
    print(f"gateway listening on http://{args.host}:{args.port} "
          f"(chain length {len(world.cluster.control_chain)})")
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
    return EXIT_OK


def _cmd_validate(args) -> int:
    if not os.path.exists(args.chainfile):
        print(f"no such file: {args.chainfile}", file=sys.stderr)
        return EXIT_BAD_CONFIG
    try:
        chain = ledger.load_chain(args.chainfile)
    except ledger.LedgerError as exc:
        print(f"invalid chain file: {exc}", file=sys.stderr)
        return EXIT_VALIDATION_FAILED
    failure = ledger.validate_chain(chain)
    if failure is not None:
        index, error = failure
        print(f"chain invalid at block {index}: {error.value}", file=sys.stderr)
        return EXIT_VALIDATION_FAILED
    print(f"chain valid ({len(chain)} blocks, kind={chain.kind.value})")
    return EXIT_OK


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "run":
            return _cmd_run(args)
        if args.command == "figures":
            return _cmd_figures(args)
        if args.command == "serve":
            return _cmd_serve(args)
        if args.command == "validate":
            return _cmd_validate(args)
        parser.error(f"unknown command {args.command!r}")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_BAD_CONFIG
    except Exception as exc:  # surfaced with a stable exit code
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
