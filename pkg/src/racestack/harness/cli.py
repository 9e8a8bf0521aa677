"""Command-line entry point: run scenarios, build racelines, compute metrics
from exported logs, and replay logs over the telemetry protocol."""

from __future__ import annotations

import argparse
import json
import sys
import time

import numpy as np

from .dataset import export_dataset, import_dataset
from .loop import RunLog, SimulationRunner, build_raceline, build_track
from .metrics import compute_metrics
from .scenario import load_scenario
from .server import TelemetryServer, frame_message


def cmd_run(args) -> int:
    scenario = load_scenario(args.scenario)
    if args.seed is not None:
        scenario.seed = args.seed
    runner = SimulationRunner(scenario)

    server = None
    if args.serve:
        server = TelemetryServer(args.serve, runner=runner,
                                 tick_rate_hz=scenario.tick_rate_hz)
        server.set_static(runner.track, runner.raceline, scenario.name)
        server.start()
        print(f"telemetry on ws://127.0.0.1:{args.serve}")

    dt = scenario.dt
    next_wall = time.perf_counter()
    pace = args.serve and not args.fast
    for _ in range(scenario.n_ticks):
        frame = runner.step()
        if server is not None:
            server.on_frame(frame)
        if pace:
            next_wall += dt
            delay = next_wall - time.perf_counter()
            if delay > 0:
                time.sleep(delay)
    log = RunLog(scenario=scenario, frames=runner.frames,
                 command_events=runner.command_events,
                 raceline=runner.raceline, track=runner.track,
                 tick_wall_ms=runner.tick_wall_ms)

    if args.out:
        out = export_dataset(log, args.out)
        metrics = compute_metrics(log)
        with open(out / "metrics.json", "w") as f:
            json.dump(metrics.as_dict(), f, indent=1, sort_keys=True,
                      default=str)
        print(f"log written to {out}")
    m = compute_metrics(log)
    print(f"ticks={len(log.frames)} cte=[{m.cte_min:.3f}, {m.cte_max:.3f}] "
          f"max_est_dev={m.estimate_deviation_max:.3f} "
          f"spin_events={len(m.spin_events)} "
          f"tick_ms mean={m.lap_metrics['tick_wall_ms_mean']:.2f} "
          f"max={m.lap_metrics['tick_wall_ms_max']:.2f}")
    if server is not None:
        if args.linger:
            print("run finished; serving last frames (ctrl-c to exit)")
            try:
                while True:
                    time.sleep(1.0)
            except KeyboardInterrupt:
                pass
        server.stop()
    return 0


def cmd_raceline(args) -> int:
    track = build_track(args.track)

    class _Spec:
        margin = args.margin
        step = 1.0
        v_cap = args.v_cap
        a_lat_max = args.a_lat
        a_acc_max = args.a_acc
        a_brk_max = args.a_brk
        use_centerline = False

    line = build_raceline(track, _Spec)
    data = np.column_stack([line.s, line.x, line.y, line.heading,
                            line.curvature, line.v])
    np.savetxt(args.out, data, delimiter=",",
               header="s_m,x_m,y_m,heading_rad,curvature_1pm,v_mps",
               comments="", fmt="%.6f")
    print(f"raceline with {len(line.s)} samples written to {args.out}")
    return 0


def cmd_metrics(args) -> int:
    frames, events, manifest = import_dataset(args.log)

    class _Log:
        pass

    log = _Log()
    log.frames = frames
    log.command_events = events
    log.tick_wall_ms = []
    from .dataset import scenario_from_manifest
    log.scenario = scenario_from_manifest(manifest)
    metrics = compute_metrics(log)
    print(json.dumps(metrics.as_dict(), indent=1, sort_keys=True, default=str))
    return 0


def cmd_replay(args) -> int:
    frames, _, manifest = import_dataset(args.log)
    from .dataset import scenario_from_manifest
    scenario = scenario_from_manifest(manifest)
    runner = SimulationRunner(scenario)   # rebuild track/raceline for the map
    server = TelemetryServer(args.serve, runner=None,
                             tick_rate_hz=scenario.tick_rate_hz)
    server.set_static(runner.track, runner.raceline, scenario.name + " (replay)")
    server.start()
    print(f"replaying {len(frames)} frames on ws://127.0.0.1:{args.serve}")
    try:
        while True:
            start = time.perf_counter()
            for frame in frames:
                server.on_frame(frame)
                target = start + (frame.tick + 1) * scenario.dt
                delay = target - time.perf_counter()
                if delay > 0:
                    time.sleep(delay)
    except KeyboardInterrupt:
        pass
    server.stop()
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="ars", description="scenario runner and telemetry tools")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a scenario")
    p_run.add_argument("--scenario", required=True)
    p_run.add_argument("--out", default=None, help="dataset output directory")
    p_run.add_argument("--serve", type=int, default=None,
                       help="serve live telemetry on this port")
    p_run.add_argument("--seed", type=int, default=None)
    p_run.add_argument("--fast", action="store_true",
                       help="do not pace to real time while serving")
    p_run.add_argument("--linger", action="store_true",
                       help="keep serving after the run ends")
    p_run.set_defaults(func=cmd_run)

    p_line = sub.add_parser("raceline", help="generate a raceline CSV")
    p_line.add_argument("--track", required=True)
    p_line.add_argument("--out", required=True)
    p_line.add_argument("--margin", type=float, default=1.5)
    p_line.add_argument("--v-cap", type=float, default=45.0)
    p_line.add_argument("--a-lat", type=float, default=8.0)
    p_line.add_argument("--a-acc", type=float, default=5.0)
    p_line.add_argument("--a-brk", type=float, default=8.0)
    p_line.set_defaults(func=cmd_raceline)

    p_metrics = sub.add_parser("metrics", help="metrics from an exported log")
    p_metrics.add_argument("--log", required=True)
    p_metrics.set_defaults(func=cmd_metrics)

    p_replay = sub.add_parser("replay", help="stream an exported log")
    p_replay.add_argument("--log", required=True)
    p_replay.add_argument("--serve", type=int, required=True)
    p_replay.set_defaults(func=cmd_replay)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
