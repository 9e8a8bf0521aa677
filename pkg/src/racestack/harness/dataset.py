"""Dataset export: one CSV per signal group plus a manifest.

Floats are written with repr-fidelity so export -> import reproduces frames
exactly; the manifest carries the schema version, the scenario hash and the
full scenario so a log directory is self-describing and replayable.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .loop import SCHEMA_VERSION, CommandEvent, TelemetryFrame
from .scenario import Scenario, _build, scenario_hash


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def _parse_float(text: str):
    return None if text == "" else float(text)


FILES = {
    "ego_truth": ["tick", "t", "x", "y", "yaw", "v_x", "v_y", "r", "gear",
                  "rpm", "a_x", "a_y"],
    "estimate": ["tick", "t", "x", "y", "z", "v_x", "v_y", "yaw", "roll",
                 "pitch", "cov_trace", "active_gnss", "dead_reckoning"],
    "frenet": ["tick", "t", "s", "d", "heading_error", "s_truth", "d_truth",
               "v_target", "mode", "reason", "gap"],
    "commands": ["tick", "t", "steering", "throttle", "brake", "gear"],
    "wheels": ["tick", "t", "lambda_fl", "lambda_fr", "lambda_rl", "lambda_rr",
               "alpha_f", "alpha_r"],
    "opponent": ["tick", "t", "truth_x", "truth_y", "truth_v", "track_x",
                 "track_y", "track_v", "v_smoothed", "stopped",
                 "time_since_update"],
    "race_commands": ["tick", "name", "value_json"],
}


def _frame_rows(frame: TelemetryFrame) -> dict:
    opp = frame.opp or {}
    return {
        "ego_truth": [frame.tick, frame.t, frame.ego["x"], frame.ego["y"],
                      frame.ego["yaw"], frame.ego["v_x"], frame.ego["v_y"],
                      frame.ego["r"], frame.ego["gear"], frame.ego["rpm"],
                      frame.a_x, frame.a_y],
        "estimate": [frame.tick, frame.t, frame.est["x"], frame.est["y"],
                     frame.est["z"], frame.est["v_x"], frame.est["v_y"],
                     frame.est["yaw"], frame.est["roll"], frame.est["pitch"],
                     frame.est["cov_trace"], frame.active_gnss,
                     frame.dead_reckoning],
        "frenet": [frame.tick, frame.t, frame.frenet["s"], frame.frenet["d"],
                   frame.frenet["heading_error"], frame.frenet["s_truth"],
                   frame.frenet["d_truth"], frame.v_target, frame.mode,
                   frame.reason, frame.gap],
        "commands": [frame.tick, frame.t, frame.cmd["steering"],
                     frame.cmd["throttle"], frame.cmd["brake"],
                     frame.cmd["gear"]],
        "wheels": [frame.tick, frame.t, *frame.lambdas, frame.alpha_f,
                   frame.alpha_r],
        "opponent": [frame.tick, frame.t, opp.get("truth_x"),
                     opp.get("truth_y"), opp.get("truth_v"),
                     opp.get("track_x"), opp.get("track_y"),
                     opp.get("track_v"), opp.get("v_smoothed"),
                     opp.get("stopped"), opp.get("time_since_update")],
    }


def export_dataset(log, out_dir) -> Path:
    """Write the run log as per-signal CSVs plus manifest.json."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    writers = {}
    handles = {}
    for name, columns in FILES.items():
        handles[name] = open(out / f"{name}.csv", "w", newline="")
        writers[name] = csv.writer(handles[name])
        writers[name].writerow(columns)
    try:
        for frame in log.frames:
            rows = _frame_rows(frame)
            for name, row in rows.items():
                writers[name].writerow([_fmt(v) for v in row])
        for ev in log.command_events:
            writers["race_commands"].writerow(
                [ev.tick, ev.name, json.dumps(ev.value)])
    finally:
        for h in handles.values():
            h.close()

    manifest = {
        "schema_version": SCHEMA_VERSION,
        "scenario_hash": scenario_hash(log.scenario),
        "seed": log.scenario.seed,
        "n_ticks": len(log.frames),
        "files": {name: {"path": f"{name}.csv", "columns": cols}
                  for name, cols in FILES.items()},
        "scenario": log.scenario.canonical_dict(),
    }
    with open(out / "manifest.json", "w") as f:
        json.dump(manifest, f, indent=1, sort_keys=True)
    return out


def _read_rows(path: Path) -> list[dict]:
    with open(path, newline="") as f:
        return list(csv.DictReader(f))


def import_dataset(log_dir):
    """Rebuild (frames, command_events, manifest) from an exported dataset."""
    log_dir = Path(log_dir)
    with open(log_dir / "manifest.json") as f:
        manifest = json.load(f)
    if manifest["schema_version"] != SCHEMA_VERSION:
        raise ValueError(f"dataset schema {manifest['schema_version']!r} "
                         f"does not match {SCHEMA_VERSION!r}")

    tables = {name: _read_rows(log_dir / spec["path"])
              for name, spec in manifest["files"].items()}
    frames = []
    n = manifest["n_ticks"]
    for i in range(n):
        ego_r = tables["ego_truth"][i]
        est_r = tables["estimate"][i]
        fr_r = tables["frenet"][i]
        cmd_r = tables["commands"][i]
        wh_r = tables["wheels"][i]
        opp_r = tables["opponent"][i]
        opp = None
        if opp_r["truth_x"] != "":
            opp = {"truth_x": float(opp_r["truth_x"]),
                   "truth_y": float(opp_r["truth_y"]),
                   "truth_v": float(opp_r["truth_v"])}
            if opp_r["track_x"] != "":
                opp.update({
                    "track_x": float(opp_r["track_x"]),
                    "track_y": float(opp_r["track_y"]),
                    "track_v": float(opp_r["track_v"]),
                    "v_smoothed": float(opp_r["v_smoothed"]),
                    "stopped": opp_r["stopped"] == "1",
                    "time_since_update": float(opp_r["time_since_update"]),
                })
        frames.append(TelemetryFrame(
            tick=int(ego_r["tick"]), t=float(ego_r["t"]),
            ego={"x": float(ego_r["x"]), "y": float(ego_r["y"]),
                 "yaw": float(ego_r["yaw"]), "v_x": float(ego_r["v_x"]),
                 "v_y": float(ego_r["v_y"]), "r": float(ego_r["r"]),
                 "gear": int(ego_r["gear"]), "rpm": float(ego_r["rpm"])},
            est={"x": float(est_r["x"]), "y": float(est_r["y"]),
                 "z": float(est_r["z"]), "v_x": float(est_r["v_x"]),
                 "v_y": float(est_r["v_y"]), "yaw": float(est_r["yaw"]),
                 "roll": float(est_r["roll"]), "pitch": float(est_r["pitch"]),
                 "cov_trace": float(est_r["cov_trace"])},
            opp=opp,
            frenet={"s": float(fr_r["s"]), "d": float(fr_r["d"]),
                    "heading_error": float(fr_r["heading_error"]),
                    "s_truth": float(fr_r["s_truth"]),
                    "d_truth": float(fr_r["d_truth"])},
            cmd={"steering": float(cmd_r["steering"]),
                 "throttle": float(cmd_r["throttle"]),
                 "brake": float(cmd_r["brake"]), "gear": int(cmd_r["gear"])},
            lambdas=[float(wh_r["lambda_fl"]), float(wh_r["lambda_fr"]),
                     float(wh_r["lambda_rl"]), float(wh_r["lambda_rr"])],
            alpha_f=float(wh_r["alpha_f"]), alpha_r=float(wh_r["alpha_r"]),
            a_x=float(ego_r["a_x"]), a_y=float(ego_r["a_y"]),
            mode=fr_r["mode"], reason=fr_r["reason"],
            v_target=float(fr_r["v_target"]),
            gap=_parse_float(fr_r["gap"]),
            active_gnss=est_r["active_gnss"] or None,
            dead_reckoning=est_r["dead_reckoning"] == "1",
        ))
    events = [CommandEvent(int(r["tick"]), r["name"],
                           json.loads(r["value_json"]))
              for r in tables["race_commands"]]
    return frames, events, manifest


def scenario_from_manifest(manifest: dict) -> Scenario:
    return _build(Scenario, manifest["scenario"])
