"""Two-level machinery: sub-goal cadence, goal transition, rewards, replay, relabeling."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .nn import ShapeError
from .policies import (
    SquashedGaussianPolicy,
    log_one_minus_tanh_sq,
    HALF_LOG_2PI,
)


def _congruent(*arrays):
    arrays = [np.asarray(a, dtype=np.float64) for a in arrays]
    if any(a.shape[-1] != arrays[0].shape[-1] for a in arrays):
        raise ShapeError("state and goal dimensions must agree")
    return arrays


def goal_transition(s, g, s_next):
    """Advance a relative sub-goal so it keeps pointing at the same absolute target."""
    s, g, s_next = _congruent(s, g, s_next)
    return s + g - s_next


def intrinsic_reward(s, g, s_next, scale: float = 1.0):
    s, g, s_next = _congruent(s, g, s_next)
    return -scale * np.linalg.norm(s + g - s_next, axis=-1)


def accumulate_abstracted_reward(env_rewards, scale: float) -> float:
    rewards = np.asarray(env_rewards, dtype=np.float64)
    if rewards.size == 0:
        raise ValueError("no environment rewards to accumulate")
    return float(scale * rewards.sum())


@dataclass
class SubgoalScheduler:
    """Tracks when the high level must emit and the current relative sub-goal."""

    c: int
    current_subgoal: np.ndarray | None = None
    steps_since_emit: int = 0
    emissions: int = 0

    def __post_init__(self):
        if self.c < 1:
            raise ValueError("sub-goal interval c must be positive")

    @property
    def needs_subgoal(self) -> bool:
        return self.steps_since_emit == 0

    def emit(self, subgoal):
        if not self.needs_subgoal:
            raise RuntimeError("sub-goal emitted off-cadence")
        self.current_subgoal = np.asarray(subgoal, dtype=np.float64).copy()
        self.emissions += 1

    def advance(self, s, s_next) -> bool:
        """Step the clock after an env step; returns True when the window closed."""
        self.steps_since_emit += 1
        if self.steps_since_emit == self.c:
            self.steps_since_emit = 0
            return True
        self.current_subgoal = goal_transition(s, self.current_subgoal, s_next)
        return False

    def reset(self):
        self.current_subgoal = None
        self.steps_since_emit = 0

    def get_state(self) -> dict:
        return {"c": self.c, "steps_since_emit": self.steps_since_emit, "emissions": self.emissions,
                "current_subgoal": None if self.current_subgoal is None else self.current_subgoal.tolist()}

    def set_state(self, data: dict):
        self.c = int(data["c"])
        self.steps_since_emit = int(data["steps_since_emit"])
        self.emissions = int(data["emissions"])
        sg = data["current_subgoal"]
        self.current_subgoal = None if sg is None else np.array(sg, dtype=np.float64)


@dataclass
class GoalConditionedTransition:
    s: np.ndarray
    g: np.ndarray
    a: np.ndarray
    r: float
    s_next: np.ndarray
    g_next: np.ndarray
    done: bool


@dataclass
class HighLevelTransition:
    """One sub-goal window: ``state_seq`` has one more entry than ``action_seq``."""

    state_seq: np.ndarray
    action_seq: np.ndarray
    subgoal: np.ndarray
    env_rewards: np.ndarray
    reward: float
    goal: np.ndarray
    done: bool

    def __post_init__(self):
        self.state_seq = np.asarray(self.state_seq, dtype=np.float64)
        self.action_seq = np.asarray(self.action_seq, dtype=np.float64)
        self.env_rewards = np.asarray(self.env_rewards, dtype=np.float64)
        if len(self.state_seq) != len(self.action_seq) + 1:
            raise ValueError("state_seq must hold exactly one more state than action_seq")
        if len(self.env_rewards) != len(self.action_seq):
            raise ValueError("one environment reward per low-level action is required")

    @property
    def length(self) -> int:
        return len(self.action_seq)

    @property
    def final_state(self) -> np.ndarray:
        return self.state_seq[-1]


class ReplayBuffer:
    """Ring buffer of fixed-shape fields with uniform sampling (with replacement)."""

    def __init__(self, capacity: int, fields: dict):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = int(capacity)
        self.fields = {k: tuple(v) for k, v in fields.items()}
        self.data = {k: np.zeros((self.capacity, *shape)) for k, shape in self.fields.items()}
        self.size = 0
        self.ptr = 0

    def __len__(self) -> int:
        return self.size

    def push(self, **values):
        for k, arr in self.data.items():
            arr[self.ptr] = values[k]
        self.ptr = (self.ptr + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def sample_indices(self, n: int, rng: np.random.Generator) -> np.ndarray:
        if self.size == 0:
            raise ValueError("cannot sample from an empty buffer")
        return rng.integers(0, self.size, size=n)

    def sample(self, n: int, rng: np.random.Generator) -> dict:
        idx = self.sample_indices(n, rng)
        return {k: arr[idx] for k, arr in self.data.items()}

    def ordered(self) -> dict:
        """Contents oldest-first."""
        if self.size < self.capacity:
            return {k: arr[: self.size] for k, arr in self.data.items()}
        order = np.r_[self.ptr:self.capacity, 0:self.ptr]
        return {k: arr[order] for k, arr in self.data.items()}

    def state_arrays(self) -> dict:
        out = {f"{k}": arr[: self.size].copy() for k, arr in self.data.items()}
        out["_meta"] = np.array([self.size, self.ptr, self.capacity])
        return out

    def load_arrays(self, arrays: dict):
        size, ptr, capacity = (int(v) for v in arrays["_meta"])
        if capacity != self.capacity:
            raise ValueError("buffer capacity mismatch")
        for k, arr in self.data.items():
            arr[:size] = arrays[k]
        self.size, self.ptr = size, ptr


def low_level_buffer(capacity, state_dim, goal_dim, action_dim) -> ReplayBuffer:
    return ReplayBuffer(capacity, {"s": (state_dim,), "g": (goal_dim,), "a": (action_dim,), "r": (),
                                   "s_next": (state_dim,), "g_next": (goal_dim,), "done": ()})


def high_level_buffer(capacity, c, state_dim, goal_dim, subgoal_dim, action_dim) -> ReplayBuffer:
    return ReplayBuffer(capacity, {
        "state_seq": (c + 1, state_dim), "action_seq": (c, action_dim), "length": (),
        "subgoal": (subgoal_dim,), "env_rewards": (c,), "reward": (), "goal": (goal_dim,), "done": ()})


def buffer_push(buf: ReplayBuffer, transition):
    if isinstance(transition, GoalConditionedTransition):
        buf.push(s=transition.s, g=transition.g, a=transition.a, r=transition.r,
                 s_next=transition.s_next, g_next=transition.g_next, done=float(transition.done))
    elif isinstance(transition, HighLevelTransition):
        c = buf.fields["action_seq"][0]
        n = transition.length
        if n > c:
            raise ValueError(f"window of {n} steps exceeds c={c}")
        # partial windows are right-padded by repeating the final state
        states = np.empty((c + 1, transition.state_seq.shape[1]))
        states[: n + 1] = transition.state_seq
        states[n + 1:] = transition.state_seq[-1]
        actions = np.zeros((c, transition.action_seq.shape[1]))
        actions[:n] = transition.action_seq
        rewards = np.zeros(c)
        rewards[:n] = transition.env_rewards
        buf.push(state_seq=states, action_seq=actions, length=n, subgoal=transition.subgoal,
                 env_rewards=rewards, reward=transition.reward, goal=transition.goal,
                 done=float(transition.done))
    else:
        buf.push(**transition)


def buffer_sample(buf: ReplayBuffer, n: int, rng: np.random.Generator) -> dict:
    return buf.sample(n, rng)


# -- off-policy sub-goal correction ------------------------------------------------

def relabel_candidates(state_seq, lengths, stored_subgoal, subgoal_limit, rng,
                       n_random: int = 8, sigma_frac: float = 0.5):
    """Candidate sub-goals, shape (B, 2 + n_random, d): stored, displacement, perturbed displacements."""
    state_seq = np.asarray(state_seq, dtype=np.float64)
    lengths = np.asarray(lengths).astype(int)
    b = np.arange(state_seq.shape[0])
    disp = state_seq[b, lengths] - state_seq[:, 0]
    limit = np.asarray(subgoal_limit, dtype=np.float64)
    noise = rng.standard_normal((state_seq.shape[0], n_random, disp.shape[-1])) * (sigma_frac * limit)
    cands = np.concatenate([stored_subgoal[:, None], disp[:, None], disp[:, None] + noise], axis=1)
    return np.clip(cands, -limit, limit)


def _rolled_subgoals(state_seq, cands):
    # g_i = s_0 + g_0 - s_i along the stored states (telescoped goal transition)
    s0 = state_seq[:, None, :1, :]
    return s0 + cands[:, :, None, :] - state_seq[:, None, :-1, :]


def score_candidates(low_policy, state_seq, action_seq, lengths, cands):
    """Fit score of each candidate for the stored low-level actions; shape (B, K)."""
    state_seq = np.asarray(state_seq, dtype=np.float64)
    action_seq = np.asarray(action_seq, dtype=np.float64)
    bsz, k = cands.shape[:2]
    c = action_seq.shape[1]
    if state_seq.shape[1] != c + 1:
        raise ValueError("state sequence must be one longer than the action sequence")
    goals = _rolled_subgoals(state_seq, cands)                        # (B, K, c, d)
    states = np.broadcast_to(state_seq[:, None, :-1, :], goals.shape[:3] + state_seq.shape[-1:])
    actions = np.broadcast_to(action_seq[:, None], (bsz, k) + action_seq.shape[1:])
    flat_s = states.reshape(-1, states.shape[-1])
    flat_g = goals.reshape(-1, goals.shape[-1])
    flat_a = actions.reshape(-1, actions.shape[-1])
    if isinstance(low_policy, SquashedGaussianPolicy):
        per_step = _clipped_log_prob(low_policy, flat_s, flat_g, flat_a)
    else:
        # deterministic head (or anything exposing mean(states, goals))
        per_step = -np.sum((flat_a - low_policy.mean(flat_s, flat_g)) ** 2, axis=-1)
    per_step = per_step.reshape(bsz, k, c)
    mask = np.arange(c)[None, None, :] < np.asarray(lengths).astype(int)[:, None, None]
    return np.sum(np.where(mask, per_step, 0.0), axis=-1)


def _clipped_log_prob(p: SquashedGaussianPolicy, s, g, a):
    # stored actions can round onto the box edge; pull them just inside before inverting tanh
    y = np.clip(a / p.action_scale, -1.0 + 1e-6, 1.0 - 1e-6)
    mu, log_std = p.gaussian(s, g)
    u = np.arctanh(y)
    z = (u - mu) / np.exp(log_std)
    return np.sum(-0.5 * z ** 2 - log_std - HALF_LOG_2PI
                  - np.log(p.action_scale) - log_one_minus_tanh_sq(u), axis=-1)


def relabel_batch(low_policy, state_seq, action_seq, lengths, stored_subgoal, subgoal_limit, rng,
                  n_random: int = 8, sigma_frac: float = 0.5, return_scores: bool = False):
    """Best candidate per transition. Ties resolve to the lowest index (stored goal first)."""
    c = np.shape(action_seq)[1]
    if np.shape(state_seq)[1] != c + 1 or np.any(np.asarray(lengths) > c) or np.any(np.asarray(lengths) < 1):
        raise ValueError("state/action sequence lengths are inconsistent")
    cands = relabel_candidates(state_seq, lengths, np.asarray(stored_subgoal, float), subgoal_limit,
                               rng, n_random, sigma_frac)
    scores = score_candidates(low_policy, state_seq, action_seq, lengths, cands)
    best = np.argmax(scores, axis=1)
    chosen = cands[np.arange(len(best)), best]
    if return_scores:
        return chosen, cands, scores
    return chosen


def relabel_subgoal(hl: HighLevelTransition, low_policy, subgoal_limit, rng,
                    n_random: int = 8, sigma_frac: float = 0.5):
    """Corrected sub-goal for a single high-level transition."""
    chosen = relabel_batch(low_policy, hl.state_seq[None], hl.action_seq[None], np.array([hl.length]),
                           hl.subgoal[None], subgoal_limit, rng, n_random, sigma_frac)
    return chosen[0]
