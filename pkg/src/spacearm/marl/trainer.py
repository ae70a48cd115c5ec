"""Training loops: decentralized actors with centralized critics, plus a
single-actor centralized baseline, sharing one rollout/update engine.

Each decentralized actor sees only its own agent's observation while every
critic reads the full global state. The centralized baseline folds all
joints into one actor fed the global state directly and trains on the sum
of the per-agent rewards. Runs are deterministic for a fixed seed.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from ..assembly import PolicyEntry, PolicySet
from ..errors import ModelError, SimulationDivergenceError, TrainingError
from ..nn import Adam, GaussianPolicy, Mlp
from .config import TrainConfig
from .gae import compute_gae, normalize_advantages
from .updates import critic_update, ppo_actor_update

STEADY_STEPS = 10  # trailing steps that define an episode's settled error
BASE_SUCCESS_THRESHOLD = 0.05  # rad


def _seed_int(ss: np.random.SeedSequence) -> int:
    return int(ss.generate_state(1, np.uint64)[0])


@dataclass
class TrainResult:
    policies: PolicySet
    metrics: list
    eval_history: list
    env_steps: int
    iterations: int
    diverged: bool = False
    error: str = ""


@dataclass
class EvalSummary:
    pos_err_final: float
    pos_err_steady: float
    ori_err_final: float
    ori_err_steady: float
    base_err_final: float
    base_err_steady: float
    reward_total: float
    reward_per_agent: np.ndarray
    success_base: float
    collision_rate: float
    series: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        d = {k: getattr(self, k) for k in (
            "pos_err_final", "pos_err_steady", "ori_err_final",
            "ori_err_steady", "base_err_final", "base_err_steady",
            "reward_total", "success_base", "collision_rate")}
        d["reward_per_agent"] = [float(x) for x in self.reward_per_agent]
        return d


class Trainer:
    """Owns the envs, networks, optimizers and RNG streams of one run."""

    def __init__(self, env_factory, config: TrainConfig, seed: int,
                 central: bool = False):
        self.env_factory = env_factory
        self.config = config
        self.seed = int(seed)
        self.central = bool(central)
        ss = np.random.SeedSequence(self.seed)
        s_env, s_init, s_sample, s_shuffle, s_eval = ss.spawn(5)
        self.env = env_factory(config.n_envs, _seed_int(s_env))
        self.sample_rng = np.random.default_rng(s_sample)
        self.shuffle_rng = np.random.default_rng(s_shuffle)
        self.eval_seed = _seed_int(s_eval)

        env = self.env
        gs_dim = env.global_state_dim
        init_rng = np.random.default_rng(s_init)
        if central:
            self.head_obs_dims = [gs_dim]
            self.head_act_dims = [env.nq]
        else:
            self.head_obs_dims = [env.obs_dim] * env.n_agents
            self.head_act_dims = [3] * env.n_agents
        self.n_heads = len(self.head_obs_dims)
        self.actors = []
        self.critics = []
        self.targets = []
        self.actor_opts = []
        self.critic_opts = []
        for od, ad in zip(self.head_obs_dims, self.head_act_dims):
            actor = GaussianPolicy(od, ad, hidden=config.hidden,
                                   rng=init_rng,
                                   log_std_init=config.log_std_init)
            critic = Mlp((gs_dim,) + tuple(config.hidden) + (1,), init_rng)
            self.actors.append(actor)
            self.critics.append(critic)
            self.targets.append(critic.copy())
            self.actor_opts.append(Adam(actor.params, config.actor_lr))
            self.critic_opts.append(Adam(critic.params, config.critic_lr))
        self.iteration = 0
        self.env_steps = 0

    # ------------------------------------------------------------ rollout

    def _head_obs(self, obs, gs):
        if self.central:
            return gs[:, None, :]
        return obs

    def _env_actions(self, head_actions):
        ne = self.env.n_envs
        if self.central:
            return head_actions[0].reshape(ne, self.env.n_agents, 3)
        return np.stack(head_actions, axis=1)

    def collect_rollout(self):
        cfg = self.config
        env = self.env
        t_len, ne = cfg.rollout_length, env.n_envs
        obs = env.reset()
        gs = env.global_state()
        hobs = np.empty((t_len, ne, self.n_heads,
                         max(self.head_obs_dims)))
        z_buf = np.empty((t_len, ne, self.n_heads,
                          max(self.head_act_dims)))
        logp_buf = np.empty((t_len, ne, self.n_heads))
        rew_buf = np.empty((t_len, ne, self.n_heads))
        done_buf = np.zeros((t_len, ne), dtype=bool)
        gs_buf = np.empty((t_len + 1, ne, env.global_state_dim))
        # successor state of each step, before any reset; episodes here end
        # by time limit, so value targets bootstrap through the cut
        gs_boot_buf = np.empty((t_len, ne, env.global_state_dim))
        agent_rew = np.empty((t_len, ne, env.n_agents))
        err_sums = np.zeros(3)
        collisions = 0
        for t in range(t_len):
            gs_buf[t] = gs
            ho = self._head_obs(obs, gs)
            head_actions = []
            for h in range(self.n_heads):
                d_o, d_a = self.head_obs_dims[h], self.head_act_dims[h]
                hobs[t, :, h, :d_o] = ho[:, h, :d_o]
                a, z, logp = self.actors[h].sample(ho[:, h, :d_o],
                                                   self.sample_rng)
                z_buf[t, :, h, :d_a] = z
                logp_buf[t, :, h] = logp
                head_actions.append(a)
            obs, rewards, done, info = env.step(
                self._env_actions(head_actions))
            agent_rew[t] = rewards
            if self.central:
                rew_buf[t, :, 0] = rewards.sum(axis=1)
            else:
                rew_buf[t] = rewards
            done_buf[t] = done
            err_sums += (info["pos_err"].mean(), info["ori_err"].mean(),
                         info["base_err"].mean())
            collisions += int(info["collided"].sum())
            gs = env.global_state()
            gs_boot_buf[t] = gs
            if done and t < t_len - 1:
                obs = env.reset()
                gs = env.global_state()
        gs_buf[t_len] = gs
        self.env_steps += t_len * ne
        stats = {
            "reward_per_agent": agent_rew.mean(axis=(0, 1)),
            "pos_err": err_sums[0] / t_len,
            "ori_err": err_sums[1] / t_len,
            "base_err": err_sums[2] / t_len,
            "collision_rate": collisions / (t_len * ne),
        }
        return (hobs, z_buf, logp_buf, rew_buf, done_buf, gs_buf,
                gs_boot_buf), stats

    # ------------------------------------------------------------- update

    def update(self, rollout) -> dict:
        cfg = self.config
        hobs, z_buf, logp_buf, rew_buf, done_buf, gs_buf, gs_boot_buf = rollout
        t_len, ne = rew_buf.shape[:2]
        n = t_len * ne
        gs_flat_all = gs_buf.reshape((t_len + 1) * ne, -1)
        gs_flat = gs_buf[:t_len].reshape(n, -1)
        gs_boot_flat = gs_boot_buf.reshape(n, -1)
        losses = {"actor": 0.0, "critic": 0.0}
        n_updates = 0
        for h in range(self.n_heads):
            d_o, d_a = self.head_obs_dims[h], self.head_act_dims[h]
            v_all, _ = self.critics[h].forward(gs_flat_all)
            v_all = v_all[:, 0].reshape(t_len + 1, ne)
            v_boot, _ = self.critics[h].forward(gs_boot_flat)
            v_boot = v_boot[:, 0].reshape(t_len, ne)
            adv, _ = compute_gae(rew_buf[:, :, h], v_all[:t_len], v_all[-1],
                                 cfg.gamma, cfg.gae_lambda, done_buf,
                                 terminal_values=v_boot)
            adv = normalize_advantages(adv.reshape(n))
            vt_boot, _ = self.targets[h].forward(gs_boot_flat)
            vt_boot = vt_boot[:, 0].reshape(t_len, ne)
            y = (rew_buf[:, :, h] + cfg.gamma * vt_boot).reshape(n)
            obs_flat = hobs[:, :, h, :d_o].reshape(n, d_o)
            z_flat = z_buf[:, :, h, :d_a].reshape(n, d_a)
            logp_flat = logp_buf[:, :, h].reshape(n)
            for _ in range(cfg.ppo_epochs):
                perm = self.shuffle_rng.permutation(n)
                for k in range(0, n, cfg.minibatch_size):
                    mb = perm[k:k + cfg.minibatch_size]
                    losses["actor"] += ppo_actor_update(
                        self.actors[h], self.actor_opts[h], obs_flat[mb],
                        z_flat[mb], logp_flat[mb], adv[mb], cfg.clip_eps,
                        cfg.entropy_coef)
                    losses["critic"] += critic_update(
                        self.critics[h], self.critic_opts[h], gs_flat[mb],
                        y[mb])
                    n_updates += 1
        if self.iteration % cfg.target_sync_period == 0:
            for tgt, crit in zip(self.targets, self.critics):
                tgt.copy_from(crit)
        losses["actor"] /= max(n_updates, 1)
        losses["critic"] /= max(n_updates, 1)
        return losses

    def run_iteration(self) -> dict:
        self.iteration += 1
        rollout, stats = self.collect_rollout()
        losses = self.update(rollout)
        row = {"iteration": self.iteration, "steps": self.env_steps}
        if self.central:
            row["reward_agent_0"] = float(
                stats["reward_per_agent"].sum())
        else:
            for a, r in zip(self.env.agents, stats["reward_per_agent"]):
                row[f"reward_agent_{a.agent_id}"] = float(r)
        row["pos_err"] = float(stats["pos_err"])
        row["ori_err"] = float(stats["ori_err"])
        row["base_err"] = float(stats["base_err"])
        row["collision_rate"] = float(stats["collision_rate"])
        row["actor_objective"] = losses["actor"]
        row["critic_loss"] = losses["critic"]
        return row

    # --------------------------------------------------------- evaluation

    def evaluate(self, episodes: int = None, **env_kwargs) -> EvalSummary:
        episodes = episodes or self.config.eval_episodes
        env = self.env_factory(episodes, self.eval_seed, **env_kwargs)
        return evaluate_policies(env, self.actors, central=self.central)

    # ---------------------------------------------------------- main loop

    def run(self, callback=None) -> TrainResult:
        cfg = self.config
        metrics = []
        eval_history = []
        diverged = False
        error = ""
        try:
            while self.env_steps < cfg.max_env_steps:
                row = self.run_iteration()
                metrics.append(row)
                stop = False
                if (self.iteration % cfg.eval_every == 0
                        or self.env_steps >= cfg.max_env_steps):
                    summary = self.evaluate()
                    eval_history.append((self.env_steps, summary))
                    if cfg.stop_metric:
                        val = getattr(summary, cfg.stop_metric)
                        stop = val <= cfg.stop_value
                if callback is not None:
                    if callback(self, metrics) is False:
                        stop = True
                if stop:
                    break
        except (TrainingError, SimulationDivergenceError) as exc:
            diverged = True
            error = str(exc)
        return TrainResult(self.policy_set(), metrics, eval_history,
                           self.env_steps, self.iteration, diverged, error)

    # ----------------------------------------------------------- policies

    def policy_set(self) -> PolicySet:
        env = self.env
        entries = []
        if self.central:
            entries.append(PolicyEntry(0, -1, "central",
                                       tuple(range(env.nq)),
                                       self.actors[0], self.critics[0]))
        else:
            for h, a in enumerate(env.agents):
                entries.append(PolicyEntry(a.agent_id, a.arm, a.role,
                                           a.joints, self.actors[h],
                                           self.critics[h]))
        return PolicySet(env.model.config_hash, env.task.kind,
                         env.task.arm_tasks, self.seed, self.env_steps,
                         entries)

    # ------------------------------------------------------------- resume

    def state_dict(self) -> dict:
        out = {"iteration": np.int64(self.iteration),
               "env_steps": np.int64(self.env_steps)}
        for h in range(self.n_heads):
            for i, p in enumerate(self.actors[h].params):
                out[f"actor{h}_p{i}"] = p.copy()
            for i, p in enumerate(self.critics[h].params):
                out[f"critic{h}_p{i}"] = p.copy()
            for i, p in enumerate(self.targets[h].params):
                out[f"target{h}_p{i}"] = p.copy()
            for tag, opt in (("aopt", self.actor_opts[h]),
                             ("copt", self.critic_opts[h])):
                out[f"{tag}{h}_t"] = np.int64(opt.t)
                for i, (m, v) in enumerate(zip(opt.m, opt.v)):
                    out[f"{tag}{h}_m{i}"] = m.copy()
                    out[f"{tag}{h}_v{i}"] = v.copy()
        rngs = {"sample": self.sample_rng.bit_generator.state,
                "shuffle": self.shuffle_rng.bit_generator.state,
                "env": self.env._rng.bit_generator.state}
        out["rng_json"] = np.frombuffer(
            json.dumps(rngs).encode(), dtype=np.uint8)
        return out

    def load_state_dict(self, state: dict) -> None:
        self.iteration = int(state["iteration"])
        self.env_steps = int(state["env_steps"])
        for h in range(self.n_heads):
            for i, p in enumerate(self.actors[h].params):
                p[...] = state[f"actor{h}_p{i}"]
            for i, p in enumerate(self.critics[h].params):
                p[...] = state[f"critic{h}_p{i}"]
            for i, p in enumerate(self.targets[h].params):
                p[...] = state[f"target{h}_p{i}"]
            for tag, opt in (("aopt", self.actor_opts[h]),
                             ("copt", self.critic_opts[h])):
                opt.t = int(state[f"{tag}{h}_t"])
                for i in range(len(opt.m)):
                    opt.m[i][...] = state[f"{tag}{h}_m{i}"]
                    opt.v[i][...] = state[f"{tag}{h}_v{i}"]
        rngs = json.loads(bytes(np.asarray(state["rng_json"])).decode())
        self.sample_rng.bit_generator.state = rngs["sample"]
        self.shuffle_rng.bit_generator.state = rngs["shuffle"]
        self.env._rng.bit_generator.state = rngs["env"]


# -------------------------------------------------------------- functions


def mappo_train(env_factory, config: TrainConfig, seed: int,
                callback=None) -> TrainResult:
    """Decentralized actors, per-agent centralized critics."""
    return Trainer(env_factory, config, seed, central=False).run(callback)


def centralized_ppo_train(env_factory, config: TrainConfig, seed: int,
                          callback=None) -> TrainResult:
    """Single actor over all joints; the experimental baseline."""
    return Trainer(env_factory, config, seed, central=True).run(callback)


# -------------------------------------------------------------- execution


def _deterministic_actions(env, actors, central: bool, obs):
    ne = env.n_envs
    if central:
        a = actors[0].act_deterministic(env.global_state())
        return a.reshape(ne, env.n_agents, 3)
    acts = [actors[h].act_deterministic(obs[:, h])
            for h in range(env.n_agents)]
    return np.stack(acts, axis=1)


def actions_from_policy_set(env, pset: PolicySet):
    """Per-step action function for a loaded policy set."""
    pset.check_matches_env(env)
    actors = [pset.entry(a.agent_id).actor for a in env.agents]

    def act(obs):
        return np.stack([actors[h].act_deterministic(obs[:, h])
                         for h in range(env.n_agents)], axis=1)

    return act


def evaluate_policies(env, actors, central: bool = False,
                      keep_series: bool = False) -> EvalSummary:
    """Run one batched set of deterministic episodes and summarize.

    Each env instance carries one episode; actions are the squashed policy
    means, so results are reproducible bit for bit.
    """
    obs = env.reset()
    t_len = env.task.episode_length
    ne = env.n_envs
    pos = np.empty((t_len, ne, env.model.n_arms))
    ori = np.empty((t_len, ne, env.model.n_arms))
    base = np.empty((t_len, ne))
    rew = np.empty((t_len, ne, env.n_agents))
    hit = np.empty((t_len, ne), dtype=bool)
    wrench = np.zeros(t_len, dtype=bool)
    for t in range(t_len):
        u = _deterministic_actions(env, actors, central, obs)
        obs, r, done, info = env.step(u)
        pos[t] = info["pos_err"]
        ori[t] = info["ori_err"]
        base[t] = info["base_err"]
        rew[t] = r
        hit[t] = info["collided"]
        wrench[t] = info["wrench_on"]
        if done and t != t_len - 1:
            raise ModelError("episode ended before the evaluation horizon")
    tail = slice(-STEADY_STEPS, None)
    summary = EvalSummary(
        pos_err_final=float(pos[-1].mean()),
        pos_err_steady=float(pos[tail].mean()),
        ori_err_final=float(ori[-1].mean()),
        ori_err_steady=float(ori[tail].mean()),
        base_err_final=float(base[-1].mean()),
        base_err_steady=float(base[tail].mean()),
        reward_total=float(rew.sum(axis=(0, 2)).mean()),
        reward_per_agent=rew.sum(axis=0).mean(axis=0),
        success_base=float(
            (base[tail].mean(axis=0) < BASE_SUCCESS_THRESHOLD).mean()),
        collision_rate=float(hit.mean()),
    )
    if keep_series:
        summary.series = {"pos_err": pos, "ori_err": ori, "base_err": base,
                          "reward": rew, "collided": hit,
                          "wrench_on": wrench}
    return summary


def evaluate_policy_set(env, pset: PolicySet,
                        keep_series: bool = False) -> EvalSummary:
    pset.check_matches_env(env)
    actors = [pset.entry(a.agent_id).actor for a in env.agents]
    return evaluate_policies(env, actors, central=False,
                             keep_series=keep_series)
