"""Live piloting session server.

One WebSocket session drives one simulated UAV at the authoritative 0.2 s
control tick (optionally time-scaled for scripted clients). Pilot commands
land in a latest-wins mailbox; between messages the last commanded velocity
holds. The assistant toggle hot-switches between action averaging and
passthrough. Every episode is written as a replayable log.
"""

from __future__ import annotations

import asyncio
import json
import math
import time
from pathlib import Path

import numpy as np
from fastapi import FastAPI, WebSocket, WebSocketDisconnect

from .config import RunConfig, config_hash
from .episode import EpisodeEngine
from .episodelog import make_log_header, write_episode_log
from .rewards import blend, reward, terminal_contact
from .seeds import int_seed, rng_from
from .worldsim import Phase, V_CAP, Validation3x3, generate_world


def _finite_triple(msg: dict, keys=("vx", "vy", "vz")) -> np.ndarray | None:
    try:
        v = np.array([float(msg[k]) for k in keys])
    except (KeyError, TypeError, ValueError):
        return None
    if not np.all(np.isfinite(v)):
        return None
    return np.clip(v, -V_CAP, V_CAP)


class Session:
    """Authoritative state of one piloting connection."""

    def __init__(self, cfg: RunConfig, assistant, log_dir: Path, session_id: int):
        self.cfg = cfg
        self.assistant = assistant
        self.log_dir = log_dir
        self.session_id = session_id
        self.assist = cfg.server.assist_default and assistant is not None
        self.cmd = np.zeros(3)
        self.episode_index = 0
        self.jitters_ms: list[float] = []
        self._reset(cfg.seed, None)

    def _reset(self, seed: int, goal: int | None) -> None:
        self.seed = int(seed)
        world = generate_world(self.seed, Validation3x3())
        if goal is not None:
            world = world.with_goal(int(goal) % len(world.platforms))
        self.world = world
        r = rng_from(self.seed, "serve-start")
        non_goal = [p for p in world.platforms if p.id != world.goal_id]
        start_p = non_goal[int(r.integers(len(non_goal)))]
        alt = float(r.uniform(1.2, 1.6))
        self.start_pos = np.array([start_p.center[0], start_p.center[1], alt])
        self.engine = EpisodeEngine(
            world, self.cfg.dynamics, self.start_pos,
            noise_rng=rng_from(self.seed, "ge-noise"),
        )
        if self.assistant is not None:
            self.assistant.reset()
        self.a_a_prev = np.zeros(3)
        self.last_a_u = [0.0, 0.0, 0.0]
        self.last_a_a = [0.0, 0.0, 0.0]
        self.ticks: list[dict] = []
        self.cmd = np.zeros(3)

    def reset(self, seed: int, goal: int | None) -> None:
        if self.ticks and not self.engine.done:
            self._write_log(aborted=True)
        self.episode_index += 1
        self._reset(seed, goal)

    def tick(self) -> dict | None:
        """One control tick; returns the landed frame when the episode ends."""
        if self.engine.done:
            return None
        state = self.engine.state
        a_u = self.cmd.copy()
        if self.assistant is not None:
            a_a, mu = self.assistant.act(self.world, state, a_u)
        else:
            a_a, mu = a_u.copy(), None
        blended = blend(a_u, a_a) if self.assist else a_u.copy()
        new_state, _ = self.engine.tick(blended)
        touchdown = terminal_contact(new_state, self.engine.result)
        r, terms = reward(
            state, a_a, a_u, new_state, self.world, touchdown, self.cfg.reward
        )
        rec = {
            "t": new_state.t,
            "pos": [float(v) for v in new_state.pos],
            "vel": [float(v) for v in new_state.vel],
            "phase": new_state.phase.value,
            "a_u": [float(v) for v in a_u],
            "a_a": [float(v) for v in a_a],
            "blended": [float(v) for v in blended],
            "assist": bool(self.assist),
            "reward": r,
            "reward_terms": terms,
        }
        if mu is not None:
            rec["mu"] = [float(v) for v in mu]
        self.ticks.append(rec)
        self.last_a_u = rec["a_u"]
        self.last_a_a = rec["a_a"]
        if self.engine.done:
            self._write_log(aborted=False)
            return {"type": "landed", **self.engine.result.to_dict(),
                    "phase": self.engine.state.phase.value}
        return None

    def state_frame(self) -> dict:
        s = self.engine.state
        return {
            "type": "state",
            "t": float(s.t),
            "pos": [float(v) for v in s.pos],
            "vel": [float(v) for v in s.vel],
            "assist": bool(self.assist),
            "platforms": [p.to_dict() for p in self.world.platforms],
            "goal": int(self.world.goal_id),
            "a_u": self.last_a_u,
            "a_a": self.last_a_a,
        }

    def _write_log(self, aborted: bool) -> Path:
        header = make_log_header(
            self.world, self.cfg.dynamics, self.cfg.user, self.cfg.reward,
            user={"kind": "human"},
            assistant_id=getattr(self.assistant, "name", "none"),
            noise_seed=self.seed,
            start_pos=self.start_pos,
            config_hash=config_hash(self.cfg),
            extra={"aborted": aborted, "session": self.session_id,
                   "episode": self.episode_index},
        )
        result = (
            self.engine.result.to_dict()
            if self.engine.result is not None
            else {"aborted": True}
        )
        result = {**result, "aborted": aborted}
        path = self.log_dir / f"session{self.session_id:03d}_ep{self.episode_index:03d}.jsonl"
        return write_episode_log(path, header, self.ticks, result)


def make_app(cfg: RunConfig, assistant=None, log_dir: str | Path = "artifacts/sessions") -> FastAPI:
    app = FastAPI()
    log_dir = Path(log_dir)
    log_dir.mkdir(parents=True, exist_ok=True)
    app.state.jitters_ms = []
    app.state.session_count = 0

    @app.get("/health")
    def health():
        js = app.state.jitters_ms
        return {
            "sessions": app.state.session_count,
            "ticks": len(js),
            "p95_jitter_ms": float(np.percentile(js, 95)) if js else 0.0,
        }

    @app.websocket("/session")
    async def session_ws(ws: WebSocket):
        await ws.accept()
        app.state.session_count += 1
        session = Session(cfg, assistant, log_dir, app.state.session_count)
        stop = asyncio.Event()

        async def reader():
            while not stop.is_set():
                try:
                    text = await ws.receive_text()
                except WebSocketDisconnect:
                    stop.set()
                    return
                try:
                    msg = json.loads(text)
                except json.JSONDecodeError:
                    await ws.send_text(json.dumps(
                        {"type": "warning", "message": "malformed JSON ignored"}))
                    continue
                kind = msg.get("type")
                if kind == "cmd":
                    v = _finite_triple(msg)
                    if v is None:
                        await ws.send_text(json.dumps(
                            {"type": "warning", "message": "cmd requires finite vx, vy, vz"}))
                    else:
                        session.cmd = v
                elif kind == "assist":
                    on = bool(msg.get("on"))
                    if on and assistant is None:
                        await ws.send_text(json.dumps(
                            {"type": "warning", "message": "no assistant checkpoint loaded"}))
                    else:
                        session.assist = on
                elif kind == "reset":
                    session.reset(int(msg.get("seed", cfg.seed)), msg.get("goal"))
                    await ws.send_text(json.dumps(session.state_frame()))
                else:
                    await ws.send_text(json.dumps(
                        {"type": "warning", "message": f"unknown message type {kind!r}"}))

        reader_task = asyncio.create_task(reader())
        tick_wall = cfg.dynamics.dt / max(cfg.server.tick_scale, 1e-6)
        try:
            await ws.send_text(json.dumps(session.state_frame()))
            next_deadline = time.monotonic() + tick_wall
            while not stop.is_set():
                delay = next_deadline - time.monotonic()
                if delay > 0:
                    await asyncio.sleep(delay)
                jitter_ms = abs(time.monotonic() - next_deadline) * 1000.0
                app.state.jitters_ms.append(jitter_ms)
                session.jitters_ms.append(jitter_ms)
                next_deadline += tick_wall
                landed = session.tick()
                await ws.send_text(json.dumps(session.state_frame()))
                if landed is not None:
                    await ws.send_text(json.dumps(landed))
        except (WebSocketDisconnect, RuntimeError):
            pass
        finally:
            stop.set()
            reader_task.cancel()
            if session.ticks and not session.engine.done:
                session._write_log(aborted=True)

    return app


def serve(cfg: RunConfig, assistant=None, log_dir: str | Path = "artifacts/sessions") -> None:
    import uvicorn

    app = make_app(cfg, assistant, log_dir)
    uvicorn.run(app, host=cfg.server.host, port=cfg.server.port, log_level="warning")
