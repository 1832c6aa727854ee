"""Two-level training loop, evaluation protocol and checkpoint I/O."""
from __future__ import annotations

import json
import logging
import os
import time
import zipfile
from pathlib import Path

import numpy as np

from . import __version__
from .config import RunConfig
from .diagnostics import FinalPositionLog, KlRecord, policy_kl_gaussian, record_final_position, write_kl_csv
from .env import make_env, scripted_waypoints
from .hrl import (
    HighLevelTransition,
    SubgoalScheduler,
    accumulate_abstracted_reward,
    buffer_push,
    high_level_buffer,
    intrinsic_reward,
    low_level_buffer,
    relabel_batch,
)
from .metrics import MetricsRecord, MetricsSink
from .nn import AdamState, polyak_update
from .policies import (
    SquashedGaussianPolicy,
    explore_action,
    make_deterministic_policy,
    make_squashed_policy,
    make_twin_critic,
    squashed_sample,
)
from .soft_rl import (
    AgentLevelConfig,
    Temperature,
    compute_critic_target,
    update_actor_sac,
    update_actor_td3,
    update_critics,
    update_temperature,
)

log = logging.getLogger(__name__)

CHECKPOINT_VERSION = 1


class NumericalAbort(RuntimeError):
    """A loss became non-finite; ``dump`` holds diagnostic context."""

    def __init__(self, message, dump):
        super().__init__(message)
        self.dump = dump


class CheckpointError(RuntimeError):
    pass


def _philox(*keys) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(list(keys))))


class LevelAgent:
    """Actor, twin critic, targets, optimizers and temperature for one hierarchy level."""

    def __init__(self, name, obs_dim, action_scale, cfg: AgentLevelConfig, hidden, seed,
                 exploration_sigma=None, target_entropy=None):
        self.name = name
        self.cfg = cfg
        action_scale = np.asarray(action_scale, dtype=np.float64)
        if cfg.policy_kind == "deterministic":
            sigma = None if exploration_sigma is None else np.full(action_scale.shape, exploration_sigma)
            self.policy = make_deterministic_policy(obs_dim, action_scale, hidden, sigma, seed=[seed, 1])
            self.target_policy = self.policy.copy()
            self.temperature = None
        else:
            self.policy = make_squashed_policy(obs_dim, action_scale, hidden, seed=[seed, 1])
            self.target_policy = None
            h_bar = -float(action_scale.size) if target_entropy is None else float(target_entropy)
            self.temperature = Temperature.from_alpha(cfg.alpha_init, h_bar, cfg.alpha_learnable, cfg.alpha_lr)
        self.critic = make_twin_critic(obs_dim + action_scale.size, hidden, seed=[seed, 2])
        self.target_critic = self.critic.copy()
        self.actor_opt = AdamState.zeros_like(self.policy.net.params, cfg.actor_lr)
        self.critic_opt = (AdamState.zeros_like(self.critic.q1.params, cfg.critic_lr),
                           AdamState.zeros_like(self.critic.q2.params, cfg.critic_lr))
        self.prev_policy = self.policy.copy()
        self.anchor_policy = self.policy.copy()
        self.updates = 0
        self.actor_updates = 0
        self.alpha_uses = 0
        self.reset_loss_stats()

    @property
    def stochastic(self) -> bool:
        return self.temperature is not None

    @property
    def alpha(self):
        return self.temperature.alpha if self.stochastic else None

    def reset_loss_stats(self):
        self.loss_sums = {"critic": 0.0, "actor": 0.0}
        self.loss_counts = {"critic": 0, "actor": 0}

    def mean_losses(self):
        return tuple(self.loss_sums[k] / self.loss_counts[k] if self.loss_counts[k] else None
                     for k in ("critic", "actor"))

    def act(self, s, g, rng, explore=True):
        if self.stochastic:
            if explore:
                return squashed_sample(self.policy, s, g, rng)[0]
            return self.policy.mean(s, g)
        return explore_action(self.policy, s, g, rng) if explore else self.policy.mean(s, g)

    def train_step(self, batch, rng, env_step):
        """Critic step, then (every ``actor_delay`` updates) actor, temperature and targets."""
        cfg = self.cfg
        if self.stochastic:
            self.alpha_uses += 1
            y = compute_critic_target(batch, self.target_critic, self.policy, self.alpha, cfg.gamma, rng)
        else:
            y = compute_critic_target(batch, self.target_critic, self.target_policy, 0.0, cfg.gamma, rng,
                                      cfg.target_noise, cfg.target_noise_clip)
        closs = update_critics(self.critic, self.critic_opt, batch, y)
        self._check(closs, "critic", env_step)
        self.updates += 1
        aloss = None
        if self.updates % cfg.actor_delay == 0:
            anchor = None
            if cfg.kl_penalty_coefficient > 0:
                np.copyto(self.anchor_policy.net.params, self.prev_policy.net.params)
                anchor = self.anchor_policy
            np.copyto(self.prev_policy.net.params, self.policy.net.params)
            if self.stochastic:
                self.alpha_uses += 1
                aloss, logp = update_actor_sac(self.policy, self.critic, self.actor_opt, batch, self.alpha,
                                               rng, anchor, cfg.kl_penalty_coefficient)
                if self.temperature.learnable:
                    update_temperature(self.temperature, logp)
            else:
                aloss = update_actor_td3(self.policy, self.critic, self.actor_opt, batch, anchor,
                                         cfg.kl_penalty_coefficient)
            self._check(aloss, "actor", env_step)
            self.actor_updates += 1
            if env_step % cfg.target_update_interval == 0:
                polyak_update(self.target_critic.q1, self.critic.q1, cfg.tau)
                polyak_update(self.target_critic.q2, self.critic.q2, cfg.tau)
                if self.target_policy is not None:
                    polyak_update(self.target_policy.net, self.policy.net, cfg.tau)
        self.loss_sums["critic"] += closs
        self.loss_counts["critic"] += 1
        if aloss is not None:
            self.loss_sums["actor"] += aloss
            self.loss_counts["actor"] += 1
        return closs, aloss

    def _check(self, loss, what, env_step):
        if not np.isfinite(loss):
            dump = {"level": self.name, "loss": what, "env_step": env_step, "updates": self.updates,
                    "alpha": self.alpha,
                    "param_norms": {"policy": float(np.linalg.norm(self.policy.net.params)),
                                    "q1": float(np.linalg.norm(self.critic.q1.params)),
                                    "q2": float(np.linalg.norm(self.critic.q2.params))}}
            raise NumericalAbort(f"non-finite {self.name} {what} loss at env step {env_step}", dump)

    # -- persistence --
    def arrays(self) -> dict:
        out = {"policy": self.policy.net.params, "q1": self.critic.q1.params, "q2": self.critic.q2.params,
               "target_q1": self.target_critic.q1.params, "target_q2": self.target_critic.q2.params,
               "prev_policy": self.prev_policy.net.params, "anchor_policy": self.anchor_policy.net.params}
        if self.target_policy is not None:
            out["target_policy"] = self.target_policy.net.params
        for key, opt in (("actor_opt", self.actor_opt), ("critic1_opt", self.critic_opt[0]),
                         ("critic2_opt", self.critic_opt[1])):
            out[f"{key}_m"] = opt.first_moment
            out[f"{key}_v"] = opt.second_moment
        if self.stochastic:
            out["temp_opt_m"] = self.temperature.opt.first_moment
            out["temp_opt_v"] = self.temperature.opt.second_moment
        return out

    def meta(self) -> dict:
        m = {"updates": self.updates, "actor_updates": self.actor_updates, "alpha_uses": self.alpha_uses,
             "opt_steps": [self.actor_opt.step_count, self.critic_opt[0].step_count,
                           self.critic_opt[1].step_count],
             "loss_sums": self.loss_sums, "loss_counts": self.loss_counts}
        if self.stochastic:
            m["log_alpha"] = self.temperature.log_alpha
            m["temp_steps"] = self.temperature.opt.step_count
        return m

    def load(self, arrays: dict, meta: dict):
        for k, dst in self.arrays().items():
            src = arrays[k]
            if src.shape != dst.shape:
                raise CheckpointError(f"{self.name}.{k}: shape {src.shape} != {dst.shape}")
            np.copyto(dst, src)
        self.updates = meta["updates"]
        self.actor_updates = meta["actor_updates"]
        self.alpha_uses = meta["alpha_uses"]
        (self.actor_opt.step_count, self.critic_opt[0].step_count,
         self.critic_opt[1].step_count) = meta["opt_steps"]
        self.loss_sums = dict(meta["loss_sums"])
        self.loss_counts = dict(meta["loss_counts"])
        if self.stochastic:
            self.temperature.log_alpha = float(meta["log_alpha"])
            self.temperature.opt.step_count = int(meta["temp_steps"])


# -- evaluation controllers -------------------------------------------------------

class HierarchicalController:
    """Exploration-free two-level controller: mean sub-goals every c steps, goal transition between."""

    def __init__(self, high_policy, low_policy, c):
        self.high, self.low, self.c = high_policy, low_policy, c

    def begin(self, state, goal):
        self.goal = goal
        self.sched = SubgoalScheduler(self.c)
        self.sched.emit(self.high.mean(state, goal))

    def act(self, state):
        return self.low.mean(state, self.sched.current_subgoal)

    def observe(self, state, next_state):
        if self.sched.advance(state, next_state):
            self.sched.emit(self.high.mean(next_state, self.goal))


class FlatController:
    def __init__(self, policy):
        self.policy = policy

    def begin(self, state, goal):
        self.goal = goal

    def act(self, state):
        return self.policy.mean(state, self.goal)

    def observe(self, state, next_state):
        pass


class ScriptedController:
    """Moves toward a fixed list of waypoints at full speed."""

    def __init__(self, waypoints, tol=0.5):
        self.waypoints = [np.asarray(w, dtype=np.float64) for w in waypoints]
        self.tol = tol

    def begin(self, state, goal):
        self.idx = 0

    def act(self, state):
        while self.idx < len(self.waypoints) - 1 and np.linalg.norm(self.waypoints[self.idx] - state) < self.tol:
            self.idx += 1
        return np.clip(self.waypoints[self.idx] - state, -1.0, 1.0)

    def observe(self, state, next_state):
        pass


def scripted_controller(env) -> ScriptedController:
    return ScriptedController(scripted_waypoints(env.layout))


def evaluate(controller, env, n_episodes: int, seed: int = 0):
    """Success rate and mean return over ``n_episodes`` exploration-free episodes."""
    if n_episodes < 1:
        raise ValueError("n_episodes must be at least 1")
    rng = _philox(seed, 99)
    successes, returns = 0, []
    for _ in range(n_episodes):
        state, goal = env.reset(rng)
        controller.begin(state, goal)
        total, done = 0.0, False
        while not done:
            nxt, r, done = env.step(controller.act(state))
            controller.observe(state, nxt)
            total += r
            state = nxt
        successes += env.is_success(state, goal)
        returns.append(total)
    return successes / n_episodes, float(np.mean(returns))


# -- training -----------------------------------------------------------------------

class Trainer:
    """Stateful training run; every piece of state needed for exact resumption is checkpointed."""

    def __init__(self, config: RunConfig):
        self.config = cfg = config.validate()
        self.env = make_env(cfg.env_name, episode_horizon=cfg.episode_horizon)
        self.eval_env = make_env(cfg.env_name, eval_mode=True, episode_horizon=cfg.episode_horizon)
        self.rng = _philox(cfg.seed)
        env = self.env
        high_kind, low_kind = cfg.policy_kinds
        hidden = tuple(cfg.hidden_sizes)
        obs_dim = env.state_dim + env.goal_dim
        common = dict(gamma=cfg.gamma, actor_lr=cfg.actor_lr, critic_lr=cfg.critic_lr, alpha_lr=cfg.alpha_lr,
                      tau=cfg.tau, batch_size=cfg.batch_size, target_noise=cfg.target_noise,
                      target_noise_clip=cfg.target_noise_clip)
        low_cfg = AgentLevelConfig(
            policy_kind=low_kind, alpha_init=cfg.alpha_low_init,
            alpha_learnable=cfg.temperature_mode_low == "learned", train_interval=cfg.train_interval_low,
            target_update_interval=cfg.target_update_interval_low, actor_delay=cfg.actor_delay_low,
            kl_penalty_coefficient=cfg.alpha_kl, **common)
        self.low = LevelAgent("low", obs_dim, env.action_limit, low_cfg, hidden, cfg.seed,
                              cfg.exploration_sigma_low, cfg.target_entropy_low)
        self.high = None
        if cfg.hierarchical:
            high_cfg = AgentLevelConfig(
                policy_kind=high_kind, alpha_init=cfg.alpha_high_init,
                alpha_learnable=cfg.temperature_mode_high == "learned", train_interval=cfg.train_interval_high,
                target_update_interval=cfg.target_update_interval_high, actor_delay=cfg.actor_delay_high,
                **common)
            self.high = LevelAgent("high", obs_dim, env.subgoal_limit, high_cfg, hidden, cfg.seed + 7919,
                                   cfg.exploration_sigma_high, cfg.target_entropy_high)
            self.high_buffer = high_level_buffer(cfg.buffer_capacity, cfg.c, env.state_dim, env.goal_dim,
                                                 env.goal_dim, env.action_dim)
        self.low_buffer = low_level_buffer(cfg.buffer_capacity, env.state_dim, env.goal_dim, env.action_dim)
        self.scheduler = SubgoalScheduler(cfg.c)
        self.env_step = 0
        self.episode = 0
        self.high_triggers = 0
        self.low_triggers = 0
        self.metrics: list[MetricsRecord] = []
        self.kl_records: list[KlRecord] = []
        self.final_positions = FinalPositionLog()
        self.wall_time = 0.0
        self.window = None
        self.state = None
        self.sink: MetricsSink | None = None
        self._begin_episode()

    # -- episode plumbing --
    def _random_in(self, limit):
        return self.rng.uniform(-limit, limit)

    def _choose_subgoal(self, state):
        if self.env_step < self.config.start_steps:
            return self._random_in(self.env.subgoal_limit)
        return self.high.act(state, self.goal, self.rng)

    def _emit(self, state):
        sg = self._choose_subgoal(state)
        self.scheduler.emit(sg)
        self.window = {"states": [state], "actions": [], "rewards": [], "subgoal": sg}

    def _begin_episode(self):
        self.state, self.goal = self.env.reset(self.rng)
        if self.high is not None:
            self.scheduler.reset()
            self._emit(self.state)

    def _close_window(self):
        w = self.window
        rewards = np.array(w["rewards"])
        buffer_push(self.high_buffer, HighLevelTransition(
            state_seq=np.array(w["states"]), action_seq=np.array(w["actions"]), subgoal=w["subgoal"],
            env_rewards=rewards, reward=accumulate_abstracted_reward(rewards, self.config.reward_scale_high),
            goal=self.goal, done=False))

    def step(self):
        """One environment step plus any updates scheduled at this step."""
        cfg, env = self.config, self.env
        s = self.state
        hierarchical = self.high is not None
        cond = self.scheduler.current_subgoal if hierarchical else self.goal
        if self.env_step < cfg.start_steps:
            a = self._random_in(env.action_limit)
        else:
            a = self.low.act(s, cond, self.rng)
        s2, r, done = env.step(a)
        self.env_step += 1
        if hierarchical:
            self.window["states"].append(s2)
            self.window["actions"].append(a)
            self.window["rewards"].append(r)
            closed = self.scheduler.advance(s, s2)
            if closed or done:
                self._close_window()
            if done:
                cond_next = s + cond - s2
            elif closed:
                self._emit(s2)
                cond_next = self.scheduler.current_subgoal
            else:
                cond_next = self.scheduler.current_subgoal
            r_low = float(intrinsic_reward(s, cond, s2, cfg.reward_scale_low))
        else:
            cond_next = self.goal
            r_low = cfg.reward_scale_low * r
        # time-limit truncation is not a terminal state: bootstrapping continues
        self.low_buffer.push(s=s, g=cond, a=a, r=r_low, s_next=s2, g_next=cond_next, done=0.0)
        self.state = s2
        if done:
            record_final_position(self.final_positions, s2, env.is_success(s2, self.goal), self.episode)
            self.episode += 1
            self._begin_episode()
        self._train()
        if self.env_step % cfg.eval_interval == 0:
            self._record()

    def _train(self):
        cfg = self.config
        if self.env_step % cfg.train_interval_low == 0:
            self.low_triggers += 1
            batch = self.low_buffer.sample(cfg.batch_size, self.rng)
            self.low.train_step(batch, self.rng, self.env_step)
        if self.high is not None and self.env_step % cfg.train_interval_high == 0:
            self.high_triggers += 1
            self.high.train_step(self._high_batch(), self.rng, self.env_step)

    def _high_batch(self):
        cfg = self.config
        raw = self.high_buffer.sample(cfg.batch_size, self.rng)
        lengths = raw["length"].astype(int)
        subgoals = raw["subgoal"]
        if cfg.relabel:
            subgoals = relabel_batch(self.low.policy, raw["state_seq"], raw["action_seq"], lengths, subgoals,
                                     self.env.subgoal_limit, self.rng, cfg.relabel_random_candidates,
                                     cfg.relabel_sigma_frac)
        idx = np.arange(len(lengths))
        return {"s": raw["state_seq"][:, 0], "g": raw["goal"], "a": subgoals, "r": raw["reward"],
                "s_next": raw["state_seq"][idx, lengths], "g_next": raw["goal"], "done": raw["done"]}

    def controller(self):
        if self.high is None:
            return FlatController(self.low.policy)
        return HierarchicalController(self.high.policy, self.low.policy, self.config.c)

    def measure_kl(self):
        """Low-level KL across its most recent actor update, on probe states from replay."""
        cfg = self.config
        if self.low.actor_updates == 0 or len(self.low_buffer) == 0:
            return KlRecord.from_kl(self.env_step, 0.0, 0.0, cfg.c)
        rng = _philox(cfg.seed, self.env_step, 31)
        idx = self.low_buffer.sample_indices(cfg.kl_probe_states, rng)
        states, goals = self.low_buffer.data["s"][idx], self.low_buffer.data["g"][idx]
        mean_kl, max_kl = policy_kl_gaussian(self.low.prev_policy, self.low.policy, states, goals)
        return KlRecord.from_kl(self.env_step, mean_kl, max_kl, cfg.c)

    def _record(self):
        cfg = self.config
        success, ret = evaluate(self.controller(), self.eval_env, cfg.eval_episodes, cfg.seed)
        kl = self.measure_kl()
        self.kl_records.append(kl)
        lc, la = self.low.mean_losses()
        hc, ha = self.high.mean_losses() if self.high is not None else (None, None)
        rec = MetricsRecord(step=self.env_step, success_rate=float(success), mean_return=ret,
                            kl_mean=kl.mean_kl, kl_max=kl.max_kl,
                            alpha_high=self.high.alpha if self.high is not None else None,
                            alpha_low=self.low.alpha, critic_loss_high=hc, critic_loss_low=lc,
                            actor_loss_high=ha, actor_loss_low=la,
                            wall_time_s=self.wall_time + (time.perf_counter() - self._t0))
        self.low.reset_loss_stats()
        if self.high is not None:
            self.high.reset_loss_stats()
        self.metrics.append(rec)
        if self.sink is not None:
            self.sink.write(rec)
        log.info("step %d success %.2f return %.1f kl %.3g", rec.step, rec.success_rate,
                 rec.mean_return, rec.kl_mean)

    def run(self, until_step: int | None = None):
        until = self.config.total_env_steps if until_step is None else until_step
        self._t0 = time.perf_counter()
        try:
            while self.env_step < until:
                self.step()
        finally:
            self.wall_time += time.perf_counter() - self._t0
        return self.metrics

    # -- output files --
    def attach_output(self, out_dir):
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "config.json").write_text(json.dumps(self.config.to_dict(), indent=2))
        fh = open(out / "metrics.jsonl", "w")
        sink = MetricsSink(fh)
        for rec in self.metrics:
            sink.write(rec)
        self.sink = sink
        self.out_dir = out
        return out

    def write_outputs(self):
        out = self.out_dir
        write_kl_csv(self.kl_records, out / "kl.csv")
        self.final_positions.to_csv(out / "final_positions.csv")

    def close(self):
        if self.sink is not None:
            self.sink.fh.close()
            self.sink = None

    # -- checkpointing --
    def _levels(self):
        return [("low", self.low)] + ([("high", self.high)] if self.high is not None else [])

    def state_dict(self):
        rng_state = self.rng.bit_generator.state
        meta = {
            "version": CHECKPOINT_VERSION, "package_version": __version__,
            "config": self.config.to_dict(), "env_step": self.env_step, "episode": self.episode,
            "high_triggers": self.high_triggers, "low_triggers": self.low_triggers,
            "wall_time": self.wall_time,
            "rng": _jsonable(rng_state),
            "env": self.env.get_state(), "scheduler": self.scheduler.get_state(),
            "state": self.state.tolist(), "goal": self.goal.tolist(),
            "window": None if self.window is None else _jsonable(self.window),
            "metrics": [m.to_dict() for m in self.metrics],
            "kl_records": [vars(k) for k in self.kl_records],
            "final_positions": self.final_positions.rows,
            "levels": {name: lvl.meta() for name, lvl in self._levels()},
        }
        arrays = {}
        for name, lvl in self._levels():
            for k, v in lvl.arrays().items():
                arrays[f"{name}/{k}"] = v
        for name, buf in (("low_buffer", self.low_buffer),) + (
                (("high_buffer", self.high_buffer),) if self.high is not None else ()):
            for k, v in buf.state_arrays().items():
                arrays[f"{name}/{k}"] = v
        return meta, arrays

    def load_state_dict(self, meta, arrays):
        self.env_step = meta["env_step"]
        self.episode = meta["episode"]
        self.high_triggers = meta["high_triggers"]
        self.low_triggers = meta["low_triggers"]
        self.wall_time = meta["wall_time"]
        self.rng.bit_generator.state = _from_jsonable(meta["rng"])
        self.env.set_state(meta["env"])
        self.scheduler.set_state(meta["scheduler"])
        self.state = np.array(meta["state"])
        self.goal = np.array(meta["goal"])
        w = meta["window"]
        self.window = None if w is None else {
            "states": [_from_jsonable(x) for x in w["states"]],
            "actions": [_from_jsonable(x) for x in w["actions"]],
            "rewards": list(w["rewards"]), "subgoal": _from_jsonable(w["subgoal"])}
        self.metrics = [MetricsRecord.from_dict(m) for m in meta["metrics"]]
        self.kl_records = [KlRecord(**k) for k in meta["kl_records"]]
        self.final_positions = FinalPositionLog([tuple(r) for r in meta["final_positions"]])
        for name, lvl in self._levels():
            lvl.load({k.split("/", 1)[1]: v for k, v in arrays.items() if k.startswith(name + "/")},
                     meta["levels"][name])
        for name, buf in (("low_buffer", self.low_buffer),) + (
                (("high_buffer", self.high_buffer),) if self.high is not None else ()):
            buf.load_arrays({k.split("/", 1)[1]: v for k, v in arrays.items() if k.startswith(name + "/")})


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return {"__ndarray__": obj.tolist(), "dtype": str(obj.dtype)}
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def _from_jsonable(obj):
    if isinstance(obj, dict):
        if "__ndarray__" in obj:
            return np.array(obj["__ndarray__"], dtype=obj["dtype"])
        return {k: _from_jsonable(v) for k, v in obj.items()}
    return obj


def save_checkpoint(trainer: Trainer, path):
    """Write atomically: a crash mid-write never leaves a half checkpoint at ``path``."""
    path = Path(path)
    meta, arrays = trainer.state_dict()
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        np.savez(fh, __meta__=np.array(json.dumps(meta)), **arrays)
    os.replace(tmp, path)
    return path


def read_checkpoint(path):
    try:
        with np.load(path, allow_pickle=False) as data:
            meta = json.loads(str(data["__meta__"]))
            arrays = {k: data[k] for k in data.files if k != "__meta__"}
    except (OSError, ValueError, KeyError, EOFError, zipfile.BadZipFile, json.JSONDecodeError) as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    if meta.get("version") != CHECKPOINT_VERSION:
        raise CheckpointError(f"checkpoint version {meta.get('version')!r} != {CHECKPOINT_VERSION}")
    return meta, arrays


def load_checkpoint(path) -> Trainer:
    meta, arrays = read_checkpoint(path)
    trainer = Trainer(RunConfig.from_dict(meta["config"]))
    try:
        trainer.load_state_dict(meta, arrays)
    except KeyError as exc:
        raise CheckpointError(f"checkpoint missing field {exc}") from exc
    return trainer


def train_run(config: RunConfig, out_dir=None, resume=None) -> Trainer:
    """Run (or resume) training to ``config.total_env_steps``; writes outputs when ``out_dir`` is set."""
    trainer = load_checkpoint(resume) if resume is not None else Trainer(config)
    if resume is not None and config.total_env_steps != trainer.config.total_env_steps:
        trainer.config.total_env_steps = config.total_env_steps
    if out_dir is not None:
        trainer.attach_output(out_dir)
    try:
        trainer.run()
    finally:
        if out_dir is not None:
            trainer.write_outputs()
            save_checkpoint(trainer, Path(out_dir) / "checkpoint.npz")
            trainer.close()
    return trainer
