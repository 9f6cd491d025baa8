import json
import math
from pathlib import Path

import numpy as np
import pytest

from landassist.cli import main as cli_main
from landassist.config import (
    ConfigError,
    RunConfig,
    config_hash,
    load_config,
    save_config,
)
from landassist.episodelog import read_episode_log, replay_episode_log
from landassist.server import Session, make_app


class TestConfig:
    def test_roundtrip_identity(self, tmp_path):
        cfg = RunConfig()
        save_config(cfg, tmp_path / "c.toml")
        cfg2 = load_config(tmp_path / "c.toml")
        assert cfg == cfg2
        save_config(cfg2, tmp_path / "c2.toml")
        assert load_config(tmp_path / "c2.toml") == cfg

    def test_hash_sensitive_to_fields(self, tmp_path):
        cfg = RunConfig()
        d = cfg.to_dict()
        d["td3"]["gamma"] = 0.98
        assert config_hash(RunConfig.from_dict(d)) != config_hash(cfg)

    def test_partial_config_fills_defaults(self, tmp_path):
        p = tmp_path / "p.toml"
        p.write_text("seed = 5\n[td3]\ngamma = 0.95\n")
        cfg = load_config(p)
        assert cfg.seed == 5
        assert cfg.td3.gamma == 0.95
        assert cfg.td3.tau == RunConfig().td3.tau

    def test_unknown_key_rejected_with_path(self, tmp_path):
        p = tmp_path / "bad.toml"
        p.write_text("[td3]\ngamma = 0.99\nbanana = 1\n")
        with pytest.raises(ConfigError, match=r"banana.*\[td3\]"):
            load_config(p)

    def test_malformed_toml_line_anchored(self, tmp_path):
        p = tmp_path / "broken.toml"
        p.write_text("[td3\ngamma = 0.99\n")
        with pytest.raises(ConfigError, match="line 1"):
            load_config(p)


class TestCli:
    def test_unknown_flag_exits_nonzero(self):
        assert cli_main(["validate", "--does-not-exist"]) == 2

    def test_malformed_config_diagnostic(self, tmp_path, capsys):
        p = tmp_path / "broken.toml"
        p.write_text("seed = [unclosed\n")
        rc = cli_main(["validate", "--config", str(p), "--out", str(tmp_path / "o")])
        assert rc == 2
        assert "line" in capsys.readouterr().err

    def test_validate_unassisted_and_replay(self, tmp_path, capsys):
        p = tmp_path / "c.toml"
        cfg = RunConfig.from_dict(
            {"eval": {"beta_sweep": [0.0, 1.0], "n_landings": 2}, "out_dir": str(tmp_path)}
        )
        save_config(cfg, p)
        out = tmp_path / "val"
        rc = cli_main(
            ["validate", "--config", str(p), "--assistant", "none", "--out", str(out), "--logs"]
        )
        assert rc == 0
        rows_csv = (out / "validation_rows.csv").read_text().splitlines()
        assert rows_csv[0].startswith("# config_hash=")
        assert len(rows_csv) == 2 + 4  # comment + header + 4 episodes
        assert (out / "validation_sweep.png").exists()
        logs = sorted((out / "episodes").glob("*.jsonl"))
        assert len(logs) == 4
        rc = cli_main(["replay", "--log", str(out / "episodes")])
        assert rc == 0

    def test_replay_detects_corruption(self, tmp_path):
        cfg_p = tmp_path / "c.toml"
        save_config(RunConfig.from_dict({"eval": {"beta_sweep": [0.5], "n_landings": 1}}), cfg_p)
        out = tmp_path / "v"
        assert cli_main(["validate", "--config", str(cfg_p), "--assistant", "none",
                         "--out", str(out), "--logs"]) == 0
        log = next((out / "episodes").glob("*.jsonl"))
        lines = log.read_text().splitlines()
        obj = json.loads(lines[2])
        obj["vel"][1] += 1e-12
        lines[2] = json.dumps(obj)
        log.write_text("\n".join(lines) + "\n")
        assert cli_main(["replay", "--log", str(log)]) == 1

    def test_show_config_hash(self, capsys):
        assert cli_main(["show-config"]) == 0
        assert "config_hash:" in capsys.readouterr().out


def scripted_session(session: Session, cmds) -> None:
    for cmd in cmds:
        session.cmd = np.array(cmd)
        session.tick()
        if session.engine.done:
            break


class TestSession:
    def _cfg(self, tmp_path):
        return RunConfig.from_dict({"out_dir": str(tmp_path), "server": {"tick_scale": 50.0}})

    def test_passthrough_when_assist_off(self, tmp_path):
        cfg = self._cfg(tmp_path)
        s = Session(cfg, assistant=None, log_dir=tmp_path, session_id=1)
        s.assist = False
        for _ in range(10):
            s.cmd = np.array([0.5, -0.3, 0.0])
            s.tick()
        for t in s.ticks:
            assert t["blended"] == t["a_u"]
            assert t["a_u"] == [0.5, -0.3, 0.0]

    def test_cmd_clamped(self, tmp_path):
        cfg = self._cfg(tmp_path)
        s = Session(cfg, assistant=None, log_dir=tmp_path, session_id=1)
        s.cmd = np.clip(np.array([5.0, 0.0, 0.0]), -1.2, 1.2)
        s.tick()
        assert s.ticks[0]["a_u"][0] == 1.2

    def test_same_seed_same_stream_identical_logs(self, tmp_path):
        cfg = self._cfg(tmp_path)
        rng = np.random.default_rng(0)
        cmds = [list(np.round(rng.uniform(-1, 1, 3), 2)) for _ in range(400)]
        ticks = []
        for sid in (1, 2):
            s = Session(cfg, assistant=None, log_dir=tmp_path, session_id=sid)
            s.assist = False
            scripted_session(s, cmds)
            ticks.append(s.ticks)
        assert ticks[0] == ticks[1]

    def test_session_log_replayable(self, tmp_path):
        cfg = self._cfg(tmp_path)
        s = Session(cfg, assistant=None, log_dir=tmp_path, session_id=3)
        s.assist = False
        # descend onto whatever is below until terminal
        scripted_session(s, [[0.0, 0.0, -0.6]] * 450)
        assert s.engine.done
        log = next(tmp_path.glob("session003_*.jsonl"))
        report = replay_episode_log(log)
        assert report.ok, report.mismatches[:3]


@pytest.fixture()
def ws_client(tmp_path):
    from starlette.testclient import TestClient

    cfg = RunConfig.from_dict({"server": {"tick_scale": 100.0}})
    app = make_app(cfg, assistant=None, log_dir=tmp_path / "sessions")
    with TestClient(app) as client:
        yield client, tmp_path / "sessions"


class TestWebSocket:
    def test_state_frames_and_unknown_type_warning(self, ws_client):
        client, _ = ws_client
        with client.websocket_connect("/session") as ws:
            first = ws.receive_json()
            assert first["type"] == "state"
            assert len(first["platforms"]) == 9
            ws.send_text(json.dumps({"type": "bogus"}))
            warned = False
            for _ in range(50):
                msg = ws.receive_json()
                if msg["type"] == "warning" and "unknown" in msg["message"]:
                    warned = True
                    break
            assert warned

    def test_cmd_drives_uav_and_landed_frame_matches_log(self, ws_client):
        client, log_dir = ws_client
        with client.websocket_connect("/session") as ws:
            first = ws.receive_json()
            ws.send_text(json.dumps({"type": "assist", "on": False}))
            ws.send_text(json.dumps({"type": "cmd", "vx": 0.0, "vy": 0.0, "vz": -1.0}))
            landed = None
            for _ in range(3000):
                msg = ws.receive_json()
                if msg["type"] == "landed":
                    landed = msg
                    break
            assert landed is not None
        logs = sorted(log_dir.glob("*.jsonl"))
        assert logs
        _, _, result = read_episode_log(logs[-1])
        for key in ("landing_pos", "landing_vh", "landing_vv", "on_goal",
                    "all_legs_supported", "success"):
            assert landed[key] == result[key]

    def test_nonfinite_cmd_warned(self, ws_client):
        client, _ = ws_client
        with client.websocket_connect("/session") as ws:
            ws.receive_json()
            ws.send_text('{"type": "cmd", "vx": NaN, "vy": 0, "vz": 0}')
            for _ in range(50):
                msg = ws.receive_json()
                if msg["type"] == "warning":
                    assert "finite" in msg["message"]
                    break
            else:
                pytest.fail("no warning for non-finite cmd")

    def test_reset_starts_new_episode(self, ws_client):
        client, _ = ws_client
        with client.websocket_connect("/session") as ws:
            ws.receive_json()
            ws.send_text(json.dumps({"type": "reset", "seed": 42, "goal": 3}))
            for _ in range(50):
                msg = ws.receive_json()
                if msg["type"] == "state" and msg["goal"] == 3 and msg["t"] == 0.0:
                    break
            else:
                pytest.fail("reset frame not observed")

    def test_health_reports_jitter(self, ws_client):
        client, _ = ws_client
        with client.websocket_connect("/session") as ws:
            for _ in range(20):
                ws.receive_json()
        health = client.get("/health").json()
        assert health["sessions"] >= 1
        assert health["ticks"] > 0
