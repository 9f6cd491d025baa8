"""Secondary-component gate: the cockpit session flow driven through the
WebSocket protocol by a scripted pilot, plus protocol conformance checks
(S1 and S2). The browser UI's own logic is tested by the vitest suite in
frontend/.

S1 uses the primary acceptance checkpoint, so it runs after (or reuses)
the artifacts of tests/test_acceptance.py.
"""

import json
import math
import subprocess
from pathlib import Path

import numpy as np
import pytest

from landassist.config import RunConfig
from landassist.episodelog import read_episode_log
from landassist.server import make_app

pytestmark = [pytest.mark.acceptance]

ROOT = Path(__file__).resolve().parent.parent
ART = ROOT / "artifacts" / "acceptance"
FRONTEND = ROOT / "frontend"


def _results_append(line: str) -> None:
    ART.mkdir(parents=True, exist_ok=True)
    with open(ART / "results.txt", "a") as f:
        f.write(line + "\n")


def report(name: str, ok: bool, detail: str) -> None:
    line = f"{name} {'PASS' if ok else 'FAIL'} - {detail}"
    print(line, flush=True)
    _results_append(line)
    assert ok, line


@pytest.fixture(scope="module")
def trained_assistant():
    from landassist.policy import TD3Assistant
    from landassist.vae import VaeEncoder

    vae_path = ART / "vae_complete" / "vae_final"
    runs = sorted(ART.glob("policy_seed*/policy_final.tnsr"))
    if not vae_path.with_suffix(".tnsr").exists() or not runs:
        pytest.skip("primary acceptance artifacts not built yet (run test_acceptance first)")
    encoder = VaeEncoder.from_checkpoint(vae_path)
    # pick the strongest seed on the validation sweep
    from landassist.evalharness import make_validation_sequence, run_validation, validation_summary

    cfg = RunConfig()
    seq = make_validation_sequence(cfg.eval.sequence_seed, cfg.eval.n_landings)
    best, best_rate = None, -1.0
    for ckpt in runs:
        a = TD3Assistant.from_checkpoint(ckpt.with_suffix(""), encoder)
        rows = run_validation(a, seq, [0.0, 0.5], cfg.dynamics, cfg.user, cfg.reward)
        rate = validation_summary(rows)["success_rate"]
        if rate > best_rate:
            best, best_rate = ckpt.with_suffix(""), rate
    return TD3Assistant.from_checkpoint(best, encoder)


class LazyPilot:
    """Approach-only scripted pilot: cruises toward the goal platform, then
    commands a plain descent with no fine XY correction."""

    def __init__(self, stop_radius: float = 0.35, speed: float = 0.6):
        self.stop_radius = stop_radius
        self.speed = speed

    def cmd(self, state_frame: dict) -> tuple[float, float, float]:
        pos = state_frame["pos"]
        goal = state_frame["platforms"][state_frame["goal"]]
        dx = goal["center"][0] - pos[0]
        dy = goal["center"][1] - pos[1]
        dist = math.hypot(dx, dy)
        if dist > self.stop_radius:
            return (self.speed * dx / dist, self.speed * dy / dist, 0.0)
        return (0.0, 0.0, -0.35)


def _fly_sessions(app, n_landings: int, assist: bool, seeds) -> list[dict]:
    from starlette.testclient import TestClient

    results = []
    with TestClient(app) as client:
        with client.websocket_connect("/session") as ws:
            frame = ws.receive_json()
            ws.send_text(json.dumps({"type": "assist", "on": assist}))
            pilot = LazyPilot()
            for k in range(n_landings):
                ws.send_text(json.dumps({"type": "reset", "seed": int(seeds[k]),
                                         "goal": int(seeds[k]) % 9}))
                landed = None
                guard = 0
                while landed is None and guard < 5000:
                    msg = ws.receive_json()
                    guard += 1
                    if msg["type"] == "state":
                        v = pilot.cmd(msg)
                        ws.send_text(json.dumps(
                            {"type": "cmd", "vx": v[0], "vy": v[1], "vz": v[2]}))
                    elif msg["type"] == "landed":
                        landed = msg
                assert landed is not None, "episode did not terminate"
                results.append(landed)
    return results


class TestS1CockpitSession:
    def test_s1(self, trained_assistant, tmp_path):
        cfg = RunConfig.from_dict({"server": {"tick_scale": 40.0}})
        seeds = list(range(300, 310))
        app_on = make_app(cfg, assistant=trained_assistant, log_dir=tmp_path / "on")
        on = _fly_sessions(app_on, 10, assist=True, seeds=seeds)
        app_off = make_app(cfg, assistant=trained_assistant, log_dir=tmp_path / "off")
        off = _fly_sessions(app_off, 10, assist=False, seeds=seeds)
        n_on = sum(r["success"] for r in on)
        n_off = sum(r["success"] for r in off)
        report(
            "S1", n_on >= 9 and n_off <= 5,
            f"lazy pilot with assist {n_on}/10 successes; without {n_off}/10",
        )


class TestS2ProtocolConformance:
    def test_s2(self, tmp_path):
        # ten sessions: the landed frame the UI displays must byte-match the
        # server episode log result record
        cfg = RunConfig.from_dict({"server": {"tick_scale": 60.0}})
        log_dir = tmp_path / "sessions"
        app = make_app(cfg, assistant=None, log_dir=log_dir)
        landed_frames = _fly_sessions(app, 10, assist=False, seeds=list(range(400, 410)))

        logs = sorted(log_dir.glob("*.jsonl"))
        landed_logs = []
        for p in logs:
            _, _, result = read_episode_log(p)
            if not result.get("aborted", False) and "landing_pos" in result:
                landed_logs.append(result)
        match = 0
        result_fields = ("landing_pos", "landing_vh", "landing_vv", "on_goal",
                         "all_legs_supported", "success")
        for frame in landed_frames:
            frame_view = {k: frame[k] for k in result_fields}
            if any({k: r[k] for k in result_fields} == frame_view for r in landed_logs):
                match += 1
        byte_match_ok = match == 10

        # the UI client constructs only documented message types
        vitest = subprocess.run(
            ["npx", "vitest", "run", "--silent"], cwd=FRONTEND,
            capture_output=True, text=True, timeout=600,
        )
        ui_ok = vitest.returncode == 0
        report(
            "S2", byte_match_ok and ui_ok,
            f"landed frames byte-match logs {match}/10; frontend protocol tests "
            f"{'pass' if ui_ok else 'FAIL'}",
        )
