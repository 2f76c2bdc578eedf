"""Command-line driver: ``uiplace {train,eval,replay,gen-scene,inspect}``.

Exit codes: 0 success, 2 bad arguments/config/scene, 3 checkpoint problems.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
import time
from pathlib import Path

from .config import ConfigError, RunConfig, apply_preset, load_run_config, resolve_scene, split_seed
from .env import make_vec_env
from .evaluate import compare_conditions, format_table, read_trace, replay_trace, run_eval
from .ppo.checkpoint import CheckpointError, file_hash, load_checkpoint, read_metadata
from .ppo.train import TrainingError, train
from .scene import SceneError, SceneGenParams, generate_scene, save_scene

log = logging.getLogger("uiplace")


class CliError(Exception):
    def __init__(self, message: str, code: int = 2):
        super().__init__(message)
        self.code = code


def _run_config(args) -> RunConfig:
    cfg = load_run_config(args.config) if args.config else RunConfig()
    if getattr(args, "preset", None):
        apply_preset(cfg, args.preset)
    return cfg


def _env_kwargs(cfg: RunConfig, **env_overrides) -> dict:
    return dict(config=dataclasses.replace(cfg.env, **env_overrides), physics=cfg.physics, user_params=cfg.user,
                reward_params=cfg.reward, camera=cfg.camera)


def cmd_train(args) -> int:
    cfg = _run_config(args)
    master = args.seed if args.seed is not None else cfg.train.seed
    env_seed, train_seed, _ = split_seed(master, 3)
    overrides = {"seed": train_seed}
    if args.steps is not None:
        overrides["total_steps"] = args.steps
    tcfg = dataclasses.replace(cfg.train, **overrides)
    out = Path(args.out or cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    scenes = [cfg.scene(ref) for ref in cfg.train_scenes]
    venv = make_vec_env(scenes, tcfg.n_envs, env_seed, **_env_kwargs(cfg, obstacle_enabled=args.obstacles))
    snapshot = cfg.to_dict()
    snapshot["train"] = tcfg.to_dict()
    snapshot["master_seed"] = master
    (out / "config.json").write_text(json.dumps(snapshot, indent=2) + "\n")
    started = time.perf_counter()
    try:
        ckpt, records = train(venv, tcfg, out, progress=True)
    finally:
        venv.close()
    summary = {
        "steps": ckpt.step,
        "updates": len(records),
        "wall_time_s": round(time.perf_counter() - started, 1),
        "final_mean_return": records[-1]["mean_return"] if records else None,
        "checkpoint": str(out / "final.mrrl"),
        "checkpoint_sha256": file_hash(out / "final.mrrl"),
    }
    (out / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    print(json.dumps(summary, indent=2))
    return 0


def cmd_eval(args) -> int:
    cfg = _run_config(args)
    try:
        ckpt = load_checkpoint(args.checkpoint)
    except (OSError, CheckpointError) as exc:
        raise CliError(f"cannot load checkpoint {args.checkpoint}: {exc}", 3) from None
    digest = file_hash(args.checkpoint)
    refs = args.scenes or (cfg.train_scenes + cfg.validation_scenes)
    scenes = [resolve_scene(ref, cfg.base_dir) for ref in refs]
    ecfg = dataclasses.replace(cfg.eval)
    if args.steps is not None:
        ecfg = dataclasses.replace(ecfg, steps=args.steps)
    if args.seed is not None:
        ecfg = dataclasses.replace(ecfg, seed=args.seed)
    if args.stochastic:
        ecfg = dataclasses.replace(ecfg, deterministic_policy=False)
    out = Path(args.out or Path(cfg.out_dir) / "eval")
    out.mkdir(parents=True, exist_ok=True)
    kwargs = dict(physics=cfg.physics, user_params=cfg.user, reward_params=cfg.reward, camera=cfg.camera,
                  env_dt=cfg.env.dt, action_repeat=cfg.env.action_repeat, checkpoint_hash=digest)
    if args.matrix:
        matrix = compare_conditions(scenes, ckpt.policy, ecfg, **kwargs)
        matrix["checkpoint_hash"] = digest
        matrix["config"] = dataclasses.asdict(ecfg)
        (out / "matrix.json").write_text(json.dumps(matrix, indent=2) + "\n")
        print(format_table(matrix))
        return 0
    ecfg = dataclasses.replace(ecfg, obstacle_enabled=args.obstacles)
    reports = []
    for scene in scenes:
        trace_path = out / f"trace_{scene.name}_{'dynamic' if args.obstacles else 'static'}.jsonl" if args.trace else None
        rep = run_eval(scene, ckpt.policy, ecfg, trace_path=trace_path, **kwargs)
        reports.append(rep.to_dict())
    (out / "report.json").write_text(json.dumps({"checkpoint_hash": digest, "reports": reports}, indent=2) + "\n")
    print(json.dumps(reports, indent=2))
    return 0


def cmd_replay(args) -> int:
    scene = resolve_scene(args.scene)
    if not Path(args.trace).exists():
        raise CliError(f"trace file not found: {args.trace}")
    metrics = {"steps": 0, **replay_trace(scene, read_trace(args.trace))}
    metrics["steps"] = sum(1 for _ in open(args.trace))
    print(json.dumps(metrics, indent=2))
    if args.out:
        Path(args.out).write_text(json.dumps(metrics, indent=2) + "\n")
    return 0


def cmd_gen_scene(args) -> int:
    try:
        params = SceneGenParams(tuple(args.width), tuple(args.depth), tuple(args.height), tuple(args.furniture))
        scene = generate_scene(args.seed, params)
    except SceneError as exc:
        raise CliError(f"invalid scene parameters: {exc}") from None
    save_scene(scene, args.out)
    print(f"wrote {args.out} ({len(scene.objects)} objects)")
    return 0


def cmd_inspect(args) -> int:
    try:
        data = Path(args.checkpoint).read_bytes()
        meta, _ = read_metadata(data)
        load_checkpoint(args.checkpoint)
    except (OSError, CheckpointError) as exc:
        raise CliError(f"cannot read checkpoint {args.checkpoint}: {exc}", 3) from None
    print(json.dumps({
        "format_version": 1,
        "obs_length": meta["obs_length"],
        "obs_version": meta["obs_version"],
        "actor_dims": meta["actor_dims"],
        "critic_dims": meta["critic_dims"],
        "step": meta["step"],
        "config": meta["config"],
    }, indent=2))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="uiplace", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="train a placement policy")
    t.add_argument("--config", help="run-config JSON")
    t.add_argument("--preset", choices=["paper", "desk"], help="training scale preset")
    t.add_argument("--seed", type=int, help="master seed")
    t.add_argument("--steps", type=int, help="override total training decisions")
    t.add_argument("--obstacles", action="store_true", help="train with the moving obstacle")
    t.add_argument("--out", help="output directory")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="evaluate a checkpoint")
    e.add_argument("checkpoint")
    e.add_argument("--config", help="run-config JSON")
    e.add_argument("--scenes", nargs="+", help="scene refs (path, builtin:NAME, generated:SEED)")
    e.add_argument("--seed", type=int, help="evaluation seed")
    e.add_argument("--steps", type=int, help="decisions per run")
    e.add_argument("--obstacles", action="store_true", help="enable the moving obstacle")
    e.add_argument("--matrix", action="store_true", help="static and obstacle runs for every scene")
    e.add_argument("--trace", action="store_true", help="write per-step trace JSONL")
    e.add_argument("--stochastic", action="store_true", help="sample actions instead of the mean")
    e.add_argument("--out", help="output directory")
    e.set_defaults(func=cmd_eval)

    r = sub.add_parser("replay", help="recompute eval metrics from a trace")
    r.add_argument("trace")
    r.add_argument("--scene", required=True, help="scene ref the trace was recorded in")
    r.add_argument("--out", help="write metrics JSON here")
    r.set_defaults(func=cmd_replay)

    g = sub.add_parser("gen-scene", help="generate a random room")
    g.add_argument("--seed", type=int, required=True)
    g.add_argument("--out", required=True)
    g.add_argument("--width", type=float, nargs=2, default=[4.0, 8.0], metavar=("MIN", "MAX"))
    g.add_argument("--depth", type=float, nargs=2, default=[4.0, 8.0], metavar=("MIN", "MAX"))
    g.add_argument("--height", type=float, nargs=2, default=[2.5, 3.2], metavar=("MIN", "MAX"))
    g.add_argument("--furniture", type=int, nargs=2, default=[2, 6], metavar=("MIN", "MAX"))
    g.set_defaults(func=cmd_gen_scene)

    i = sub.add_parser("inspect", help="print checkpoint metadata")
    i.add_argument("checkpoint")
    i.set_defaults(func=cmd_inspect)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO, format="%(message)s")
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except (ConfigError, SceneError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except TrainingError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
