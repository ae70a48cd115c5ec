"""Operator command line.

Subcommands:
  train            train MAPPO or the centralized PPO baseline
  eval             evaluate a checkpoint, optionally under a disturbance,
                   a failed arm or a scaled base mass
  sweep-mass       evaluate one checkpoint across a grid of base masses
  disturb          disturbed vs undisturbed evaluation with a time series
  reassemble-eval  compose frozen single-task policies and evaluate them
                   on the mixed task
  export-trace     dump per-step state/error/reward/momentum series

Every run writes a fresh directory under $SPACEARM_OUTPUT_ROOT (default
./runs) containing manifest.json plus the files listed below per command.
Existing directories are never overwritten. Exit codes: 0 success, 2 bad
usage or configuration, 3 training divergence, 4 checkpoint/composition
error.

CSV schemas (columns only ever appended, never renamed):
  metrics.csv      iteration, steps, reward_agent_<id>.., pos_err, ori_err,
                   base_err, collision_rate, actor_objective, critic_loss
  eval_history.csv steps, pos/ori/base err final+steady, reward_total,
                   success_base, collision_rate, reward_agent_<id>..
  episodes.csv     episode, pos/ori/base err final+steady, reward_total,
                   success_base, collision_rate
  sweep.csv        mass_scale + the episodes.csv aggregate fields
  timeseries.csv   step, time, wrench_on, pos_err, ori_err, base_err,
                   baseline_pos_err, baseline_ori_err, baseline_base_err
  trace.csv        episode, step, time, q*, qdot*, per-arm errors,
                   base_err, per-agent rewards, linear/angular momentum
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
from pathlib import Path

import numpy as np

from .assembly import PolicySet, load_policies, reassemble, save_policies
from .env.environment import SpaceRobotEnv
from .env.tasks import DisturbanceSpec, TaskSpec
from .errors import (
    CheckpointError,
    CompositionError,
    ModelError,
    SimulationDivergenceError,
    SpacearmError,
    TrainingError,
)
from .manifest import (
    create_run_dir,
    finish_manifest,
    load_manifest,
    start_manifest,
)
from .marl.config import TrainConfig, default_train_config, with_overrides
from .marl.trainer import (
    STEADY_STEPS,
    Trainer,
    evaluate_policies,
    evaluate_policy_set,
)
from .metrics import read_csv, write_csv
from .robot import (
    PRESETS,
    load_preset,
    model_with_base_mass_scale,
    resolve_model,
)


class UsageError(Exception):
    pass


# ----------------------------------------------------------------- helpers


def _load_checkpoint(path) -> PolicySet:
    try:
        return load_policies(path)
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}")


def _resolve_for_checkpoint(pset: PolicySet, model_spec):
    """Return (model, spec string) matching the checkpoint's robot hash."""
    if model_spec:
        model = resolve_model(model_spec)
        if model.config_hash != pset.robot_hash:
            raise CompositionError(
                f"checkpoint was trained on robot {pset.robot_hash[:12]}.. "
                f"but {model_spec!r} hashes to {model.config_hash[:12]}..")
        return model, model_spec
    for name in PRESETS:
        model = load_preset(name)
        if model.config_hash == pset.robot_hash:
            return model, name
    raise CompositionError(
        "no built-in preset matches the checkpoint's robot hash; "
        "pass --model")


def _task_for(pset: PolicySet, episode_length: int) -> TaskSpec:
    if pset.task_kind == "mixed":
        return TaskSpec("mixed", episode_length=episode_length,
                        arm_tasks=tuple(pset.arm_tasks))
    return TaskSpec(pset.task_kind, episode_length=episode_length)


def _is_central(pset: PolicySet) -> bool:
    return any(e.role == "central" for e in pset.entries)


def _evaluate_checkpoint(env, pset: PolicySet, keep_series: bool = False):
    if not _is_central(pset):
        return evaluate_policy_set(env, pset, keep_series=keep_series)
    if pset.robot_hash != env.model.config_hash:
        raise CompositionError("checkpoint robot does not match this model")
    actor = pset.entries[0].actor
    if actor.obs_dim != env.global_state_dim or actor.act_dim != env.nq:
        raise CompositionError("central checkpoint sized for another robot")
    return evaluate_policies(env, [actor], central=True,
                             keep_series=keep_series)


def _evaluate_unchecked(env, pset: PolicySet, keep_series: bool = False):
    """Evaluation on a deliberately perturbed model (mass sweep), where the
    robot hash check must not apply."""
    if _is_central(pset):
        return evaluate_policies(env, [pset.entries[0].actor], central=True,
                                 keep_series=keep_series)
    actors = [pset.entry(a.agent_id).actor for a in env.agents]
    return evaluate_policies(env, actors, keep_series=keep_series)


def _episode_rows(summary) -> list:
    s = summary.series
    pos, ori, base = s["pos_err"], s["ori_err"], s["base_err"]
    rew, hit = s["reward"], s["collided"]
    tail = slice(-STEADY_STEPS, None)
    rows = []
    for e in range(pos.shape[1]):
        rows.append({
            "episode": e,
            "pos_err_final": float(pos[-1, e].mean()),
            "pos_err_steady": float(pos[tail, e].mean()),
            "ori_err_final": float(ori[-1, e].mean()),
            "ori_err_steady": float(ori[tail, e].mean()),
            "base_err_final": float(base[-1, e]),
            "base_err_steady": float(base[tail, e].mean()),
            "reward_total": float(rew[:, e].sum()),
            "success_base": int(base[tail, e].mean() < 0.05),
            "collision_rate": float(hit[:, e].mean()),
        })
    return rows


def _history_rows(eval_history) -> list:
    rows = []
    for steps, summary in eval_history:
        row = {"steps": int(steps)}
        row.update(summary.as_dict())
        per_agent = row.pop("reward_per_agent")
        for i, r in enumerate(per_agent):
            row[f"reward_agent_{i}"] = float(r)
        rows.append(row)
    return rows


def _parse_disturbance(args, default_torque=False) -> DisturbanceSpec:
    force = tuple(args.force) if args.force else (0.0, 0.0, 0.0)
    torque = tuple(args.torque) if args.torque else (0.0, 0.0, 0.0)
    if default_torque and not args.force and not args.torque:
        torque = (0.0, 0.0, 0.2)  # gentle attitude kick by default
    failed = args.failed_arm if args.failed_arm is not None else -1
    return DisturbanceSpec(onset_time=args.onset, duration=args.duration,
                           body=args.body, force=force, torque=torque,
                           failed_arm=failed)


def _has_wrench(d: DisturbanceSpec) -> bool:
    return any(v != 0.0 for v in d.force) or any(v != 0.0 for v in d.torque)


def _config_from_json(cfg: TrainConfig, path) -> TrainConfig:
    try:
        overrides = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read config {path}: {exc}")
    if not isinstance(overrides, dict):
        raise UsageError("config file must hold a JSON object")
    valid = {f.name for f in dataclasses.fields(TrainConfig)}
    for key in overrides:
        if key not in valid:
            raise UsageError(f"unknown config key {key!r}")
    if "hidden" in overrides:
        overrides["hidden"] = tuple(overrides["hidden"])
    return with_overrides(cfg, **overrides)


def _train_config_dict(cfg: TrainConfig) -> dict:
    d = dataclasses.asdict(cfg)
    d["hidden"] = list(d["hidden"])
    return d


def _atomic_savez(path: Path, state: dict) -> None:
    tmp = path.with_suffix(".tmp.npz")
    np.savez(tmp, **state)
    os.replace(tmp, path)


# ------------------------------------------------------------------- train


def cmd_train(args, argv) -> int:
    if args.resume:
        run_dir = Path(args.resume)
        man = load_manifest(run_dir)
        spec = man.config["preset"]
        task_kind = man.config["task"]
        algo = man.config["algo"]
        seed = man.seed
        tr_cfg = dict(man.config["train"])
        tr_cfg["hidden"] = tuple(tr_cfg["hidden"])
        if args.max_steps:
            tr_cfg["max_env_steps"] = args.max_steps
        cfg = TrainConfig(**tr_cfg)
        man.config["train"] = _train_config_dict(cfg)
    else:
        spec = args.preset
        task_kind = args.task
        algo = args.algo
        seed = args.seed
        model_probe = resolve_model(spec)
        desk = args.scale == "desk" if args.scale else \
            model_probe.name.startswith("desk")
        cfg = default_train_config(task_kind, desk_scale=desk)
        if args.config:
            cfg = _config_from_json(cfg, args.config)
        if args.max_steps:
            cfg = with_overrides(cfg, max_env_steps=args.max_steps)

    model = resolve_model(spec)
    task = TaskSpec(task_kind)

    def factory(n_envs, seed_, **kw):
        return SpaceRobotEnv(model, task, n_envs=n_envs, seed=seed_, **kw)

    trainer = Trainer(factory, cfg, seed, central=(algo == "ppo-central"))

    prior_rows = []
    if args.resume:
        state_path = run_dir / "resume.npz"
        if not state_path.exists():
            raise UsageError(f"{run_dir} has no resume.npz to continue from")
        with np.load(state_path) as st:
            trainer.load_state_dict(dict(st))
        metrics_path = run_dir / "metrics.csv"
        if metrics_path.exists():
            prior_rows = read_csv(metrics_path)
        man.extra["resumed_at_steps"] = trainer.env_steps
        print(f"resuming at iteration {trainer.iteration}, "
              f"{trainer.env_steps} env steps")
    else:
        if args.out:
            run_dir = Path(args.out)
            if run_dir.exists():
                raise UsageError(
                    f"{run_dir} already exists; runs never overwrite")
            run_dir.mkdir(parents=True)
        else:
            run_dir = create_run_dir(
                f"train-{Path(spec).stem}-{task_kind}-{algo}-seed{seed}")
        man = start_manifest(
            "train", argv,
            {"preset": spec, "task": task_kind, "algo": algo,
             "train": _train_config_dict(cfg)},
            seed, model.config_hash, run_dir)
        man.save(run_dir)

    print(f"run dir: {run_dir}")
    ckpt_path = run_dir / "checkpoint.policy"
    outputs = ["manifest.json", "metrics.csv", "eval_history.csv",
               "checkpoint.policy", "resume.npz"]

    def checkpoint_now(tr, rows):
        save_policies(tr.policy_set(), ckpt_path)
        _atomic_savez(run_dir / "resume.npz", tr.state_dict())
        write_csv(run_dir / "metrics.csv", prior_rows + rows)

    def callback(tr, rows):
        if tr.iteration % cfg.eval_every == 0:
            checkpoint_now(tr, rows)
            last = rows[-1]
            rews = "/".join(f"{v:.2f}" for k, v in sorted(last.items())
                            if k.startswith("reward_agent_"))
            print(f"  it {tr.iteration} steps {tr.env_steps} "
                  f"reward {rews} pos_err {last['pos_err']:.4f} "
                  f"base_err {last['base_err']:.4f}", flush=True)

    result = trainer.run(callback)
    rows = prior_rows + result.metrics
    write_csv(run_dir / "metrics.csv", rows)
    if result.eval_history:
        write_csv(run_dir / "eval_history.csv",
                  _history_rows(result.eval_history))
    _atomic_savez(run_dir / "resume.npz", trainer.state_dict())

    if result.diverged:
        save_policies(result.policies, run_dir / "checkpoint_diag.policy")
        man.extra["diverged"] = result.error
        finish_manifest(man, run_dir, outputs + ["checkpoint_diag.policy"])
        print(f"training diverged: {result.error}", file=sys.stderr)
        return 3

    save_policies(result.policies, ckpt_path)
    finish_manifest(man, run_dir, outputs)
    if result.eval_history:
        last = result.eval_history[-1][1]
        print(f"done: {result.env_steps} steps, "
              f"eval pos_err {last.pos_err_final:.4f} "
              f"base_err {last.base_err_final:.4f} "
              f"reward {last.reward_total:.2f}")
    return 0


# -------------------------------------------------------------------- eval


def cmd_eval(args, argv) -> int:
    if args.episodes < 1:
        raise UsageError("--episodes must be at least 1")
    pset = _load_checkpoint(args.checkpoint)
    model, spec = _resolve_for_checkpoint(pset, args.model)
    disturbance = _parse_disturbance(args)
    active = _has_wrench(disturbance) or disturbance.failed_arm >= 0
    horizon = args.horizon or (500 if _has_wrench(disturbance) else 50)
    if args.mass_scale != 1.0:
        model = model_with_base_mass_scale(spec, args.mass_scale)
    task = _task_for(pset, horizon)
    env = SpaceRobotEnv(model, task, n_envs=args.episodes, seed=args.seed,
                        disturbance=disturbance if active else None)
    if args.mass_scale != 1.0:
        summary = _evaluate_unchecked(env, pset, keep_series=True)
    else:
        summary = _evaluate_checkpoint(env, pset, keep_series=True)

    run_dir = create_run_dir(f"eval-{Path(args.checkpoint).stem}")
    man = start_manifest(
        "eval", argv,
        {"checkpoint": args.checkpoint, "model": spec,
         "episodes": args.episodes, "horizon": horizon,
         "mass_scale": args.mass_scale,
         "disturbance": dataclasses.asdict(disturbance) if active else None},
        args.seed, pset.robot_hash, run_dir)
    report = summary.as_dict()
    report["episodes"] = args.episodes
    report["task_kind"] = pset.task_kind
    (run_dir / "summary.json").write_text(
        json.dumps(report, indent=2, sort_keys=True) + "\n")
    write_csv(run_dir / "episodes.csv", _episode_rows(summary))
    finish_manifest(man, run_dir,
                    ["manifest.json", "summary.json", "episodes.csv"])
    print(f"run dir: {run_dir}")
    print(f"pos_err {summary.pos_err_final:.4f} "
          f"ori_err {summary.ori_err_final:.4f} "
          f"base_err {summary.base_err_final:.4f} "
          f"success_base {summary.success_base:.2f} "
          f"reward {summary.reward_total:.2f}")
    return 0


# -------------------------------------------------------------- sweep-mass


def cmd_sweep_mass(args, argv) -> int:
    if args.episodes < 1:
        raise UsageError("--episodes must be at least 1")
    try:
        grid = [float(x) for x in args.grid.split(",") if x.strip()]
    except ValueError:
        raise UsageError(f"bad --grid {args.grid!r}")
    if not grid or any(g <= 0.0 for g in grid):
        raise UsageError("--grid needs positive factors")
    pset = _load_checkpoint(args.checkpoint)
    _, spec = _resolve_for_checkpoint(pset, args.model)
    task = _task_for(pset, args.horizon or 50)

    rows = []
    for factor in grid:
        model = model_with_base_mass_scale(spec, factor)
        env = SpaceRobotEnv(model, task, n_envs=args.episodes,
                            seed=args.seed)
        s = _evaluate_unchecked(env, pset)
        rows.append({
            "mass_scale": factor,
            "pos_err_final": s.pos_err_final,
            "pos_err_steady": s.pos_err_steady,
            "ori_err_final": s.ori_err_final,
            "ori_err_steady": s.ori_err_steady,
            "base_err_final": s.base_err_final,
            "base_err_steady": s.base_err_steady,
            "reward_total": s.reward_total,
            "success_base": s.success_base,
            "collision_rate": s.collision_rate,
        })
        print(f"mass x{factor}: pos_err {s.pos_err_final:.4f} "
              f"base_err {s.base_err_final:.4f} "
              f"success_base {s.success_base:.2f}")

    run_dir = create_run_dir(f"sweep-mass-{Path(args.checkpoint).stem}")
    man = start_manifest(
        "sweep-mass", argv,
        {"checkpoint": args.checkpoint, "model": spec, "grid": grid,
         "episodes": args.episodes},
        args.seed, pset.robot_hash, run_dir)
    write_csv(run_dir / "sweep.csv", rows)
    (run_dir / "summary.json").write_text(
        json.dumps(rows, indent=2, sort_keys=True) + "\n")
    finish_manifest(man, run_dir,
                    ["manifest.json", "sweep.csv", "summary.json"])
    print(f"run dir: {run_dir}")
    return 0


# ----------------------------------------------------------------- disturb


def cmd_disturb(args, argv) -> int:
    if args.episodes < 1:
        raise UsageError("--episodes must be at least 1")
    pset = _load_checkpoint(args.checkpoint)
    model, spec = _resolve_for_checkpoint(pset, args.model)
    disturbance = _parse_disturbance(args, default_torque=True)
    horizon = args.horizon or 500
    task = _task_for(pset, horizon)

    env_kwargs = dict(n_envs=args.episodes, seed=args.seed)
    disturbed = _evaluate_checkpoint(
        SpaceRobotEnv(model, task, disturbance=disturbance, **env_kwargs),
        pset, keep_series=True)
    baseline = _evaluate_checkpoint(
        SpaceRobotEnv(model, task, **env_kwargs), pset, keep_series=True)

    primary = "base_err" if pset.task_kind == "reorientation" else "pos_err"
    dt_ctrl = 0.02
    onset_step = int(round(disturbance.onset_time / dt_ctrl))

    def series_mean(summary, key):
        s = summary.series[key]
        return s.reshape(s.shape[0], -1).mean(axis=1)

    dist_main = series_mean(disturbed, primary)
    base_main = series_mean(baseline, primary)
    pre = float(base_main[max(onset_step - 50, 0):onset_step].mean())
    spike = float(dist_main[onset_step:onset_step + 150].max())
    recon = float(dist_main[-25:].mean())
    ratio = recon / max(pre, 1e-12)

    rows = []
    keys = ("pos_err", "ori_err", "base_err")
    dist_series = {k: series_mean(disturbed, k) for k in keys}
    base_series = {k: series_mean(baseline, k) for k in keys}
    for t in range(horizon):
        row = {"step": t, "time": (t + 1) * dt_ctrl,
               "wrench_on": int(disturbed.series["wrench_on"][t])}
        for k in keys:
            row[k] = float(dist_series[k][t])
        for k in keys:
            row[f"baseline_{k}"] = float(base_series[k][t])
        rows.append(row)

    run_dir = create_run_dir(f"disturb-{Path(args.checkpoint).stem}")
    man = start_manifest(
        "disturb", argv,
        {"checkpoint": args.checkpoint, "model": spec,
         "episodes": args.episodes, "horizon": horizon,
         "disturbance": dataclasses.asdict(disturbance)},
        args.seed, pset.robot_hash, run_dir)
    report = {
        "primary_metric": primary,
        "pre_spike_steady": pre,
        "spike_peak": spike,
        "reconverged": recon,
        "reconverged_over_pre": ratio,
        "reconverged_within_2x": bool(recon <= 2.0 * pre),
        "disturbed": disturbed.as_dict(),
        "baseline": baseline.as_dict(),
    }
    (run_dir / "summary.json").write_text(
        json.dumps(report, indent=2, sort_keys=True) + "\n")
    write_csv(run_dir / "timeseries.csv", rows)
    finish_manifest(man, run_dir,
                    ["manifest.json", "summary.json", "timeseries.csv"])
    print(f"run dir: {run_dir}")
    print(f"{primary}: pre {pre:.4f} spike {spike:.4f} "
          f"reconverged {recon:.4f} (x{ratio:.2f})")
    return 0


# --------------------------------------------------------- reassemble-eval


def cmd_reassemble_eval(args, argv) -> int:
    if args.episodes < 1:
        raise UsageError("--episodes must be at least 1")
    donors = {"trajectory": _load_checkpoint(args.trajectory),
              "reorientation": _load_checkpoint(args.reorientation)}
    n_arms_hint = max(e.arm for e in donors["trajectory"].entries) + 1
    if args.assign:
        assignment = {}
        for part in args.assign.split(","):
            try:
                arm_s, kind = part.split("=")
                arm = int(arm_s)
            except ValueError:
                raise UsageError(f"bad --assign fragment {part!r}")
            if kind not in donors:
                raise UsageError(f"bad task kind {kind!r} in --assign")
            assignment[arm] = (donors[kind], kind)
    else:
        assignment = {0: (donors["trajectory"], "trajectory")}
        for arm in range(1, n_arms_hint):
            assignment[arm] = (donors["reorientation"], "reorientation")

    composite, task = reassemble(assignment)
    hashes_before = composite.param_hashes()
    model, spec = _resolve_for_checkpoint(composite, args.model)
    horizon = args.horizon or 50
    task = TaskSpec(task.kind, episode_length=horizon,
                    arm_tasks=task.arm_tasks)

    def eval_set(pset, kind):
        env = SpaceRobotEnv(model, TaskSpec(kind, episode_length=horizon),
                            n_envs=args.episodes, seed=args.seed)
        return evaluate_policy_set(env, pset, keep_series=True)

    env = SpaceRobotEnv(model, task, n_envs=args.episodes, seed=args.seed)
    mixed = evaluate_policy_set(env, composite, keep_series=True)
    donor_tp = eval_set(donors["trajectory"], "trajectory")
    donor_br = eval_set(donors["reorientation"], "reorientation")
    hashes_after = composite.param_hashes()
    frozen = hashes_before == hashes_after

    reaching = [arm for arm, k in enumerate(task.arm_tasks)
                if k == "trajectory"]
    mixed_pos = float(mixed.series["pos_err"][-1][:, reaching].mean()) \
        if reaching else float("nan")
    donor_pos = float(donor_tp.series["pos_err"][-1][:, reaching].mean()) \
        if reaching else float("nan")

    report = {
        "assignment": {arm: k for arm, (_, k) in assignment.items()},
        "reaching_arms": reaching,
        "mixed_reaching_pos_err": mixed_pos,
        "donor_reaching_pos_err": donor_pos,
        "mixed_base_err": mixed.base_err_steady,
        "donor_base_err": donor_br.base_err_steady,
        "params_frozen": frozen,
        "mixed": mixed.as_dict(),
        "donor_trajectory": donor_tp.as_dict(),
        "donor_reorientation": donor_br.as_dict(),
    }
    run_dir = create_run_dir("reassemble-eval")
    man = start_manifest(
        "reassemble-eval", argv,
        {"trajectory": args.trajectory, "reorientation": args.reorientation,
         "assignment": report["assignment"], "episodes": args.episodes,
         "horizon": horizon},
        args.seed, composite.robot_hash, run_dir)
    (run_dir / "report.json").write_text(
        json.dumps(report, indent=2, sort_keys=True) + "\n")
    write_csv(run_dir / "episodes.csv", _episode_rows(mixed))
    finish_manifest(man, run_dir,
                    ["manifest.json", "report.json", "episodes.csv"])
    print(f"run dir: {run_dir}")
    print(f"reaching pos_err {mixed_pos:.4f} (donor {donor_pos:.4f}) "
          f"base_err {mixed.base_err_steady:.4f} "
          f"(donor {donor_br.base_err_steady:.4f})")
    if not frozen:
        print("parameter hashes changed during evaluation", file=sys.stderr)
        return 4
    return 0


# ------------------------------------------------------------ export-trace


def cmd_export_trace(args, argv) -> int:
    if args.episodes < 1:
        raise UsageError("--episodes must be at least 1")
    pset = _load_checkpoint(args.checkpoint)
    model, spec = _resolve_for_checkpoint(pset, args.model)
    disturbance = _parse_disturbance(args)
    active = _has_wrench(disturbance) or disturbance.failed_arm >= 0
    horizon = args.horizon or (500 if _has_wrench(disturbance) else 50)
    task = _task_for(pset, horizon)
    env = SpaceRobotEnv(model, task, n_envs=args.episodes, seed=args.seed,
                        disturbance=disturbance if active else None,
                        info_momenta=True)
    if _is_central(pset):
        actors = [pset.entries[0].actor]
        central = True
    else:
        pset.check_matches_env(env)
        actors = [pset.entry(a.agent_id).actor for a in env.agents]
        central = False

    from .marl.trainer import _deterministic_actions

    nq = env.nq
    n_arms = model.n_arms
    agent_ids = [a.agent_id for a in env.agents]
    rows = []
    obs = env.reset()
    dt_ctrl = env.n_substeps * env.dt
    for t in range(horizon):
        u = _deterministic_actions(env, actors, central, obs)
        obs, r, done, info = env.step(u)
        for e in range(args.episodes):
            row = {"episode": e, "step": t, "time": (t + 1) * dt_ctrl}
            for j in range(nq):
                row[f"q{j}"] = float(env.bs.q[e, j])
            for j in range(nq):
                row[f"qdot{j}"] = float(env.bs.qdot[e, j])
            for a in range(n_arms):
                row[f"pos_err_arm{a}"] = float(info["pos_err"][e, a])
            for a in range(n_arms):
                row[f"ori_err_arm{a}"] = float(info["ori_err"][e, a])
            row["base_err"] = float(info["base_err"][e])
            for i, aid in enumerate(agent_ids):
                row[f"reward_agent_{aid}"] = float(r[e, i])
            mom = info["momenta"][e]
            for i, name in enumerate(("px", "py", "pz", "lx", "ly", "lz")):
                row[name] = float(mom[i])
            rows.append(row)

    run_dir = create_run_dir(f"trace-{Path(args.checkpoint).stem}")
    man = start_manifest(
        "export-trace", argv,
        {"checkpoint": args.checkpoint, "model": spec,
         "episodes": args.episodes, "horizon": horizon,
         "disturbance": dataclasses.asdict(disturbance) if active else None},
        args.seed, pset.robot_hash, run_dir)
    write_csv(run_dir / "trace.csv", rows)
    finish_manifest(man, run_dir, ["manifest.json", "trace.csv"])
    print(f"run dir: {run_dir}")
    print(f"wrote {len(rows)} rows")
    return 0


# ------------------------------------------------------------------ parser


def _add_disturb_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--onset", type=float, default=7.5,
                   help="disturbance onset time in seconds")
    p.add_argument("--duration", type=float, default=0.4,
                   help="disturbance duration in seconds")
    p.add_argument("--body", type=int, default=-1,
                   help="link index carrying the wrench, -1 for the base")
    p.add_argument("--force", type=float, nargs=3, metavar=("FX", "FY", "FZ"),
                   help="world-frame force in newtons")
    p.add_argument("--torque", type=float, nargs=3,
                   metavar=("TX", "TY", "TZ"),
                   help="world-frame torque in newton meters")
    p.add_argument("--failed-arm", type=int, default=None,
                   help="lock this arm's joints for the whole episode")


def _add_eval_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--checkpoint", required=True, help="policy file to load")
    p.add_argument("--model", default=None,
                   help="preset name or model file; default: match by hash")
    p.add_argument("--episodes", type=int, default=30)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--horizon", type=int, default=None,
                   help="episode length in control steps")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="spacearm",
        description=__doc__,
        formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train policies")
    p.add_argument("--preset", default="desk2",
                   help="robot preset name or model file path")
    p.add_argument("--task", default="trajectory",
                   choices=["trajectory", "reorientation"])
    p.add_argument("--algo", default="mappo",
                   choices=["mappo", "ppo-central"])
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--config", default=None,
                   help="JSON file overriding training hyperparameters")
    p.add_argument("--max-steps", type=int, default=None,
                   help="override the environment step budget")
    p.add_argument("--scale", choices=["desk", "full"], default=None,
                   help="hyperparameter scale; default follows the preset")
    p.add_argument("--out", default=None,
                   help="exact output directory (must not exist)")
    p.add_argument("--resume", default=None, metavar="RUN_DIR",
                   help="continue a previous run from its resume state")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint")
    _add_eval_common(p)
    _add_disturb_flags(p)
    p.add_argument("--mass-scale", type=float, default=1.0,
                   help="scale the base body mass and inertia")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep-mass",
                       help="evaluate across a base mass grid")
    _add_eval_common(p)
    p.add_argument("--grid", default="0.5,0.75,1.0,1.25,1.5",
                   help="comma separated mass factors")
    p.set_defaults(func=cmd_sweep_mass)

    p = sub.add_parser("disturb",
                       help="disturbed vs undisturbed time series")
    _add_eval_common(p)
    _add_disturb_flags(p)
    p.set_defaults(func=cmd_disturb)

    p = sub.add_parser("reassemble-eval",
                       help="compose single-task policies on the mixed task")
    p.add_argument("--trajectory", required=True,
                   help="reaching-task checkpoint")
    p.add_argument("--reorientation", required=True,
                   help="attitude-task checkpoint")
    p.add_argument("--assign", default=None,
                   help="per-arm tasks, e.g. 0=trajectory,1=reorientation")
    p.add_argument("--model", default=None)
    p.add_argument("--episodes", type=int, default=30)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--horizon", type=int, default=None)
    p.set_defaults(func=cmd_reassemble_eval)

    p = sub.add_parser("export-trace", help="dump per-step series")
    _add_eval_common(p)
    _add_disturb_flags(p)
    p.set_defaults(func=cmd_export_trace)

    return parser


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args, argv)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ModelError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except (CheckpointError, CompositionError) as exc:
        print(f"composition error: {exc}", file=sys.stderr)
        return 4
    except (TrainingError, SimulationDivergenceError) as exc:
        print(f"divergence: {exc}", file=sys.stderr)
        return 3
    except SpacearmError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
