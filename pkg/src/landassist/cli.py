"""Command-line operator surface.

Every subcommand takes ``--config`` (TOML) plus targeted overrides; report
paths write CSV tables with rendered figures alongside. Artifacts embed the
hash of the exact configuration that produced them.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from .config import ConfigError, RunConfig, config_hash, load_config, save_config

ABLATION_FLAGS = {
    "no-lstm": {"no_lstm": True},
    "no-critic-goal": {"no_critic_goal": True},
    "oracle": {"oracle": True},
    "drop-landing-error": {"drop_landing_error": True},
    "drop-safe-pos": {"drop_safe_pos": True},
    "drop-h-vel-v-vel": {"drop_h_vel_v_vel": True},
}


def _load_cfg(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    if getattr(args, "seed", None) is not None:
        cfg = RunConfig.from_dict({**cfg.to_dict(), "seed": args.seed})
    return cfg


def _write_csv(path: Path, rows: list[dict], cfg_hash: str) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as f:
        f.write(f"# config_hash={cfg_hash}\n")
        if rows:
            writer = csv.DictWriter(f, fieldnames=list(rows[0].keys()))
            writer.writeheader()
            writer.writerows(rows)
    return path


def _apply_td3_overrides(cfg: RunConfig, **kw) -> RunConfig:
    d = cfg.to_dict()
    d["td3"] = {**d["td3"], **kw}
    return RunConfig.from_dict(d)


def _load_encoder(cfg: RunConfig, vae_path: str | None):
    from .camera import CameraRig
    from .vae import VaeEncoder

    path = vae_path or cfg.td3.vae_checkpoint
    if not path:
        raise SystemExit("a VAE checkpoint is required (--vae or td3.vae_checkpoint)")
    enc = VaeEncoder.from_checkpoint(path)
    if CameraRig.from_dict(enc.meta["rig"]) != cfg.rig:
        raise SystemExit(
            f"rig mismatch: checkpoint {enc.meta['rig']} != config {cfg.rig.to_dict()}"
        )
    return enc


def _make_assistant(cfg: RunConfig, name: str, checkpoint: str | None, vae: str | None):
    from .evalharness import GoalWeightedAssistant

    if name == "none":
        return None
    if name == "goal-weighted":
        ec = cfg.eval
        return GoalWeightedAssistant(temperature=ec.baseline_temperature, speed=ec.baseline_speed)
    if name == "td3":
        from .policy import TD3Assistant

        if not checkpoint:
            raise SystemExit("--checkpoint is required for the td3 assistant")
        return TD3Assistant.from_checkpoint(checkpoint, _load_encoder(cfg, vae))
    raise SystemExit(f"unknown assistant {name!r}")


def make_policy_eval_callback(cfg: RunConfig, encoder, seq=None):
    """Validation-sweep summary used during policy training."""
    from .evalharness import make_validation_sequence, run_validation, validation_summary
    from .policy import TD3Assistant

    if seq is None:
        seq = make_validation_sequence(cfg.eval.sequence_seed, cfg.eval.n_landings)

    def callback(iteration: int, nets) -> dict:
        assistant = TD3Assistant(nets.actor, encoder, oracle=nets.actor.oracle)
        rows = run_validation(
            assistant, seq, cfg.eval.beta_sweep, cfg.dynamics, cfg.user, cfg.reward
        )
        nets.actor.train(False)
        return validation_summary(rows)

    return callback


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def cmd_gen_data(args) -> int:
    from .vae import make_dataset

    cfg = _load_cfg(args)
    vae_cfg = cfg.vae
    if args.limited:
        d = cfg.to_dict()
        d["vae"] = {**d["vae"], "limited_randomization": True}
        cfg = RunConfig.from_dict(d)
        vae_cfg = cfg.vae
    out = Path(args.out)
    path = make_dataset(
        out, cfg.rig, vae_cfg, cfg.world, cfg.dynamics.leg_half_span,
        seed=cfg.seed if args.seed is None else args.seed,
        n_scenes=args.scenes,
        meta={"config_hash": config_hash(cfg)},
    )
    print(f"wrote {path}")
    return 0


def cmd_train_vae(args) -> int:
    from .camera import NoiseParams
    from .plots import plot_vae_log
    from .vae import train_vae

    cfg = _load_cfg(args)
    if args.no_noise:
        d = cfg.to_dict()
        d["vae"] = {**d["vae"], "noise_enabled": False}
        cfg = RunConfig.from_dict(d)
    out = Path(args.out)
    model, log_rows, ckpt = train_vae(
        args.dataset, cfg.vae, cfg.noise, out, seed=cfg.seed,
        meta={"config_hash": config_hash(cfg)},
        iterations=args.iterations, progress=True,
    )
    _write_csv(out / "vae_training_log.csv", log_rows, config_hash(cfg))
    plot_vae_log(log_rows, out / "vae_training_log.png")
    print(f"wrote {ckpt}")
    return 0


def cmd_eval_vae(args) -> int:
    from .vae import eval_reconstruction, load_dataset, load_vae_checkpoint

    cfg = _load_cfg(args)
    model, manifest = load_vae_checkpoint(args.checkpoint)
    data, _ = load_dataset(args.dataset)
    noise = None if args.clean else cfg.noise
    res = eval_reconstruction(model, data, noise, seed=cfg.seed, max_n=args.max_n)
    out = Path(args.out) if args.out else Path(args.checkpoint).parent / "eval_vae.csv"
    _write_csv(out, [res], config_hash(cfg))
    print(json.dumps(res))
    return 0


def cmd_train_policy(args) -> int:
    from .plots import plot_training_curves
    from .policy import train_policy

    cfg = _load_cfg(args)
    overrides = {}
    for name in args.ablation or []:
        if name not in ABLATION_FLAGS:
            raise SystemExit(f"unknown ablation {name!r}; choices: {sorted(ABLATION_FLAGS)}")
        overrides.update(ABLATION_FLAGS[name])
    if args.vae:
        overrides["vae_checkpoint"] = args.vae
    if overrides:
        cfg = _apply_td3_overrides(cfg, **overrides)
    encoder = _load_encoder(cfg, args.vae)
    out = Path(args.out)
    callback = make_policy_eval_callback(cfg, encoder) if not args.no_eval else None
    nets, log_rows, ckpt = train_policy(
        cfg, encoder, out, seed=cfg.seed, iterations=args.iterations,
        eval_callback=callback, progress=True,
    )
    plot_training_curves(log_rows, out / "training_curves.png")
    save_config(cfg, out / "config.toml")
    print(f"wrote {ckpt}")
    return 0


def cmd_validate(args) -> int:
    from .episodelog import make_log_header, write_episode_log
    from .evalharness import (
        aggregate_by_beta, make_validation_sequence, run_validation, validation_summary,
    )
    from .plots import plot_validation_sweep

    cfg = _load_cfg(args)
    assistant = _make_assistant(cfg, args.assistant, args.checkpoint, args.vae)
    seq = make_validation_sequence(cfg.eval.sequence_seed, cfg.eval.n_landings)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    h = config_hash(cfg)

    hook = None
    if args.logs:
        from .seeds import int_seed

        log_dir = out / "episodes"

        def hook(row, rec, world, pilot, start):
            header = make_log_header(
                world, cfg.dynamics, cfg.user, cfg.reward,
                user={"kind": "param", "seed": row["landing_seed"], "beta": row["beta"]},
                assistant_id=args.assistant,
                noise_seed=int_seed(seq.sequence_seed, "noise", row["landing"]),
                start_pos=start, config_hash=h,
            )
            write_episode_log(
                log_dir / f"beta{row['beta']:.2f}_landing{row['landing']:02d}.jsonl",
                header, rec.tick_records, rec.result_dict,
            )

    rows = run_validation(
        assistant, seq, cfg.eval.beta_sweep, cfg.dynamics, cfg.user, cfg.reward,
        collect_ticks=args.logs, episode_hook=hook,
    )
    agg = aggregate_by_beta(rows)
    summary = validation_summary(rows)
    summary["sequence_digest"] = seq.digest()
    _write_csv(out / "validation_rows.csv", rows, h)
    _write_csv(out / "validation_by_beta.csv", agg, h)
    _write_csv(out / "validation_summary.csv", [summary], h)
    plot_validation_sweep(agg, out / "validation_sweep.png", title=f"assistant={args.assistant}")
    print(json.dumps(summary))
    return 0


def cmd_compare(args) -> int:
    from .evalharness import (
        GoalWeightedAssistant, compare_strategies, comparison_summary, make_validation_sequence,
    )
    from .plots import plot_comparison

    cfg = _load_cfg(args)
    strategies = {"none": None, "goal_weighted": GoalWeightedAssistant(
        temperature=cfg.eval.baseline_temperature, speed=cfg.eval.baseline_speed)}
    if args.checkpoint:
        strategies["td3"] = _make_assistant(cfg, "td3", args.checkpoint, args.vae)
    seq = make_validation_sequence(cfg.eval.sequence_seed, cfg.eval.n_landings)
    rows = compare_strategies(strategies, seq, cfg.eval, cfg.dynamics, cfg.user, cfg.reward)
    summary = comparison_summary(rows)
    out = Path(args.out)
    h = config_hash(cfg)
    _write_csv(out / "comparison_rows.csv", rows, h)
    _write_csv(out / "comparison_summary.csv", summary, h)
    plot_comparison(summary, out / "comparison.png")
    print(json.dumps(summary))
    return 0


def cmd_ablate(args) -> int:
    from .evalharness import make_validation_sequence, run_validation, validation_summary
    from .plots import plot_training_curves
    from .policy import TD3Assistant, train_policy

    cfg = _load_cfg(args)
    encoder = _load_encoder(cfg, args.vae)
    arms = args.arms.split(",")
    out = Path(args.out)
    h = config_hash(cfg)
    seq = make_validation_sequence(cfg.eval.sequence_seed, cfg.eval.n_landings)
    report = []
    for arm in arms:
        arm_over = {}
        for flag in arm.split("+"):
            if flag == "full":
                continue
            if flag not in ABLATION_FLAGS:
                raise SystemExit(f"unknown arm flag {flag!r}")
            arm_over.update(ABLATION_FLAGS[flag])
        arm_cfg = _apply_td3_overrides(cfg, **arm_over) if arm_over else cfg
        arm_dir = out / arm.replace("+", "_")
        callback = make_policy_eval_callback(arm_cfg, encoder, seq)
        nets, log_rows, ckpt = train_policy(
            arm_cfg, encoder, arm_dir, seed=cfg.seed, iterations=args.iterations,
            eval_callback=callback, progress=True,
        )
        plot_training_curves(log_rows, arm_dir / "training_curves.png", title=arm)
        assistant = TD3Assistant(nets.actor, encoder, oracle=arm_cfg.td3.oracle)
        rows = run_validation(
            assistant, seq, cfg.eval.beta_sweep, cfg.dynamics, cfg.user, cfg.reward
        )
        _write_csv(arm_dir / "validation_rows.csv", rows, h)
        summary = validation_summary(rows)
        eval_curve = [
            {"iteration": r["iteration"], **r["eval"]} for r in log_rows if "eval" in r
        ]
        _write_csv(arm_dir / "eval_curve.csv", eval_curve, h)
        failures = {}
        for r in rows:
            if not r["success"]:
                failures[_failure_cause(r)] = failures.get(_failure_cause(r), 0) + 1
        report.append({"arm": arm, **summary, "failure_causes": json.dumps(failures)})
    _write_csv(out / "ablation_report.csv", report, h)
    print(json.dumps(report))
    return 0


def _failure_cause(row: dict) -> str:
    if row["phase"] == "out_of_bounds":
        return "out_of_bounds"
    if row["phase"] == "timed_out":
        return "timed_out"
    return "landing"


def cmd_replay(args) -> int:
    from .episodelog import replay_episode_log

    encoder = None
    if args.vae:
        from .vae import VaeEncoder

        encoder = VaeEncoder.from_checkpoint(args.vae)
    paths: list[Path] = []
    for p in args.logs:
        p = Path(p)
        paths.extend(sorted(p.glob("*.jsonl")) if p.is_dir() else [p])
    if not paths:
        raise SystemExit("no logs to replay")
    failures = 0
    for p in paths:
        report = replay_episode_log(p, encoder=encoder)
        status = "ok" if report.ok else f"MISMATCH ({report.mismatches[0]})"
        print(f"{p}: {status}")
        failures += 0 if report.ok else 1
    print(f"{len(paths) - failures}/{len(paths)} logs reproduced bit-exactly")
    return 0 if failures == 0 else 1


def cmd_serve(args) -> int:
    from .server import serve

    cfg = _load_cfg(args)
    assistant = None
    if args.checkpoint:
        assistant = _make_assistant(cfg, "td3", args.checkpoint, args.vae)
    d = cfg.to_dict()
    if args.port is not None:
        d["server"] = {**d["server"], "port": args.port}
    cfg = RunConfig.from_dict(d)
    serve(cfg, assistant, log_dir=args.logs_dir)
    return 0


def cmd_show_config(args) -> int:
    cfg = _load_cfg(args)
    save_config(cfg, args.out) if args.out else print(json.dumps(cfg.to_dict(), indent=2))
    print(f"config_hash: {config_hash(cfg)}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="landassist", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, fn, **kw):
        sp = sub.add_parser(name, **kw)
        sp.set_defaults(fn=fn)
        sp.add_argument("--config", help="TOML run configuration")
        sp.add_argument("--seed", type=int, help="override config seed")
        return sp

    sp = add("gen-data", cmd_gen_data, help="render a clean training dataset")
    sp.add_argument("--out", required=True)
    sp.add_argument("--scenes", type=int)
    sp.add_argument("--limited", action="store_true", help="limited-randomization arm")

    sp = add("train-vae", cmd_train_vae, help="train the perception encoder")
    sp.add_argument("--dataset", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--iterations", type=int)
    sp.add_argument("--no-noise", action="store_true", help="disable dynamic input noising")

    sp = add("eval-vae", cmd_eval_vae, help="reconstruction metrics on a dataset")
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--dataset", required=True)
    sp.add_argument("--out")
    sp.add_argument("--max-n", type=int)
    sp.add_argument("--clean", action="store_true", help="evaluate without input noise")

    sp = add("train-policy", cmd_train_policy, help="train the TD3 assistant")
    sp.add_argument("--out", required=True)
    sp.add_argument("--vae", help="VAE checkpoint for the latent observation")
    sp.add_argument("--iterations", type=int)
    sp.add_argument("--ablation", action="append", choices=sorted(ABLATION_FLAGS))
    sp.add_argument("--no-eval", action="store_true")

    sp = add("validate", cmd_validate, help="seeded beta-sweep validation")
    sp.add_argument("--assistant", default="none", choices=["none", "goal-weighted", "td3"])
    sp.add_argument("--checkpoint")
    sp.add_argument("--vae")
    sp.add_argument("--out", required=True)
    sp.add_argument("--logs", action="store_true", help="write replayable episode logs")

    sp = add("compare", cmd_compare, help="strategy comparison battery")
    sp.add_argument("--checkpoint")
    sp.add_argument("--vae")
    sp.add_argument("--out", required=True)

    sp = add("ablate", cmd_ablate, help="train and validate ablation arms")
    sp.add_argument("--arms", required=True,
                    help="comma-separated arms, e.g. full,no-critic-goal,no-lstm")
    sp.add_argument("--vae")
    sp.add_argument("--iterations", type=int)
    sp.add_argument("--out", required=True)

    sp = add("replay", cmd_replay, help="verify episode logs reproduce bit-exactly")
    sp.add_argument("--log", dest="logs", action="append", required=True,
                    help="log file or directory (repeatable)")
    sp.add_argument("--vae", help="verify latent vectors too")

    sp = add("serve", cmd_serve, help="run the live cockpit session server")
    sp.add_argument("--checkpoint")
    sp.add_argument("--vae")
    sp.add_argument("--port", type=int)
    sp.add_argument("--logs-dir", default="artifacts/sessions")

    sp = add("show-config", cmd_show_config, help="print or write the resolved config")
    sp.add_argument("--out")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return 2 if e.code not in (0, None) else 0
    try:
        return args.fn(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except SystemExit as e:
        if isinstance(e.code, str):
            print(e.code, file=sys.stderr)
            return 2
        return e.code or 0


if __name__ == "__main__":
    sys.exit(main())
