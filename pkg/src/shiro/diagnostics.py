"""Policy-drift instrumentation.

KL between low-level policy snapshots, the Pinsker conversion to a total
variation bound, an empirical check of the abstracted-transition drift bound
``TV <= 2 * eps * c``, and final-position logs.
"""
from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .env import move
from .hrl import goal_transition
from .policies import DeterministicPolicy, SquashedGaussianPolicy


@dataclass
class KlRecord:
    env_step: int
    mean_kl: float
    max_kl: float
    pinsker_epsilon: float
    bound_2ec: float

    @classmethod
    def from_kl(cls, env_step, mean_kl, max_kl, c) -> "KlRecord":
        eps = pinsker_epsilon(max_kl)
        return cls(int(env_step), float(mean_kl), float(max_kl), eps, 2.0 * eps * c)

    def csv_row(self):
        return [self.env_step, self.mean_kl, self.max_kl, self.pinsker_epsilon, self.bound_2ec]


KL_CSV_HEADER = ["step", "mean_kl", "max_kl", "epsilon", "bound"]
FINAL_POSITION_HEADER = ["episode", "x", "y", "success"]


def diag_gaussian_kl(mu_p, std_p, mu_q, std_q) -> np.ndarray:
    """Closed-form KL(p || q) between diagonal Gaussians, summed over the last axis.

    ``0.5 * [log|S_q|/|S_p| - k + (mu_q - mu_p)^T S_q^-1 (mu_q - mu_p) + tr(S_q^-1 S_p)]``
    """
    var_p = np.asarray(std_p, dtype=np.float64) ** 2
    var_q = np.asarray(std_q, dtype=np.float64) ** 2
    diff = np.asarray(mu_q, dtype=np.float64) - np.asarray(mu_p, dtype=np.float64)
    var_p, var_q = np.broadcast_arrays(var_p, var_q)
    k = diff.shape[-1]
    return 0.5 * (np.sum(np.log(var_q) - np.log(var_p), axis=-1) - k
                  + np.sum(diff * diff / var_q, axis=-1) + np.sum(var_p / var_q, axis=-1))


def fixed_cov_kl(mu_old, mu_new, sigma) -> np.ndarray:
    """``0.5 * dmu^T S^-1 dmu`` for a shared covariance ``S = diag(sigma^2)``."""
    diff = np.asarray(mu_new, dtype=np.float64) - np.asarray(mu_old, dtype=np.float64)
    return 0.5 * np.sum(diff * diff / np.asarray(sigma, dtype=np.float64) ** 2, axis=-1)


def per_state_kl(old_policy, new_policy, states, goals) -> np.ndarray:
    """KL(old || new) at each probe state."""
    if type(old_policy) is not type(new_policy) or old_policy.action_dim != new_policy.action_dim:
        raise ValueError("policies must share family and action dimension")
    if isinstance(old_policy, DeterministicPolicy):
        if not np.array_equal(old_policy.exploration_sigma, new_policy.exploration_sigma):
            mu_o, mu_n = old_policy.mean(states, goals), new_policy.mean(states, goals)
            return diag_gaussian_kl(mu_o, old_policy.exploration_sigma, mu_n, new_policy.exploration_sigma)
        return fixed_cov_kl(old_policy.mean(states, goals), new_policy.mean(states, goals),
                            new_policy.exploration_sigma)
    if isinstance(old_policy, SquashedGaussianPolicy):
        mu_o, ls_o = old_policy.gaussian(states, goals)
        mu_n, ls_n = new_policy.gaussian(states, goals)
        # squashing is shared and invertible, so pre-squash KL equals post-squash KL
        return diag_gaussian_kl(mu_o, np.exp(ls_o), mu_n, np.exp(ls_n))
    raise TypeError(f"unsupported policy {type(old_policy).__name__}")


def policy_kl_gaussian(old_policy, new_policy, probe_states, probe_goals):
    """Mean and max over probe states of KL(old || new)."""
    probe_states = np.atleast_2d(np.asarray(probe_states, dtype=np.float64))
    if probe_states.shape[0] == 0:
        raise ValueError("need at least one probe state")
    kl = np.maximum(per_state_kl(old_policy, new_policy, probe_states, np.atleast_2d(probe_goals)), 0.0)
    return float(np.mean(kl)), float(np.max(kl))


def pinsker_epsilon(max_kl: float) -> float:
    if max_kl < 0:
        raise ValueError("KL must be non-negative")
    return math.sqrt(max_kl / 2.0)


# -- abstracted-transition drift ------------------------------------------------

class MistakePolicy:
    """Follows ``base`` except, with probability ``epsilon``, acts uniformly in the box.

    Its total variation from a deterministic ``base`` is exactly ``epsilon`` at every state.
    """

    def __init__(self, base, epsilon: float, action_limit):
        if not 0.0 <= epsilon <= 1.0:
            raise ValueError("epsilon must lie in [0, 1]")
        self.base = base
        self.epsilon = float(epsilon)
        self.action_limit = np.asarray(action_limit, dtype=np.float64)

    def sample(self, states, goals, rng):
        a = sample_actions(self.base, states, goals, rng)
        mistake = rng.random(a.shape[0]) < self.epsilon
        noise = rng.uniform(-self.action_limit, self.action_limit, size=a.shape)
        return np.where(mistake[:, None], noise, a)


class GreedyPolicy:
    """Deterministic ``a = clip(gain * subgoal)``; a handy reference low level."""

    def __init__(self, action_limit, gain: float = 1.0):
        self.action_limit = np.asarray(action_limit, dtype=np.float64)
        self.gain = gain

    def mean(self, states, goals):
        return np.clip(self.gain * np.asarray(goals, dtype=np.float64), -self.action_limit, self.action_limit)

    def sample(self, states, goals, rng):
        return self.mean(states, goals)


def sample_actions(policy, states, goals, rng) -> np.ndarray:
    """Draw one behaviour action per row from any supported low-level policy."""
    if hasattr(policy, "sample"):
        return policy.sample(states, goals, rng)
    if isinstance(policy, DeterministicPolicy):
        mu = policy.mean(states, goals)
        return np.clip(mu + rng.standard_normal(mu.shape) * policy.exploration_sigma,
                       -policy.action_scale, policy.action_scale)
    if isinstance(policy, SquashedGaussianPolicy):
        mu, ls = policy.gaussian(states, goals)
        u = mu + np.exp(ls) * rng.standard_normal(mu.shape)
        return policy.action_scale * np.tanh(u)
    raise TypeError(f"cannot sample from {type(policy).__name__}")


def rollout_endpoints(env, policy, start_state, subgoal, c, n_rollouts, rng, collect_states=False):
    """Run ``n_rollouts`` c-step low-level rollouts in parallel; returns final states."""
    pos = np.tile(np.asarray(start_state, dtype=np.float64), (n_rollouts, 1))
    g = np.tile(np.asarray(subgoal, dtype=np.float64), (n_rollouts, 1))
    visited = []
    for _ in range(c):
        if collect_states:
            visited.append((pos.copy(), g.copy()))
        a = sample_actions(policy, pos, g, rng)
        nxt = move(env.layout, pos, a, env.max_speed)
        g = goal_transition(pos, g, nxt)
        pos = nxt
    return (pos, visited) if collect_states else pos


def _histogram(points, cell):
    keys = np.floor(points / cell).astype(np.int64)
    uniq, counts = np.unique(keys, axis=0, return_counts=True)
    return {tuple(k): n for k, n in zip(uniq.tolist(), counts.tolist())}


def empirical_tv(points_a, points_b, cell) -> float:
    """Total variation between the grid histograms of two equally-sized point clouds."""
    ha, hb = _histogram(points_a, cell), _histogram(points_b, cell)
    na, nb = len(points_a), len(points_b)
    return 0.5 * sum(abs(ha.get(k, 0) / na - hb.get(k, 0) / nb) for k in set(ha) | set(hb))


def statistical_slack(n: int, delta: float = 0.01) -> float:
    return 3.0 * math.sqrt(math.log(2.0 / delta) / (2.0 * n))


@dataclass
class Theorem1Result:
    empirical_tv: float
    bound: float
    slack: float
    epsilon: float
    holds: bool
    caveat: str = field(default=("epsilon is a maximum over visited states, not a supremum over all "
                                 "states; this is a statistical check, not a proof"))

    def to_dict(self):
        return asdict(self)


def theorem1_check(env, old_low_policy, new_low_policy, subgoal, start_state, c: int, n_rollouts: int,
                   grid_cell: float = 0.5, rng: np.random.Generator | None = None,
                   epsilon: float | None = None, delta: float = 0.01) -> Theorem1Result:
    """Compare the c-step endpoint distributions induced by two low-level policies.

    When ``epsilon`` is not given it is derived by Pinsker from the maximum
    KL(old || new) over the states visited by the old policy's rollouts.
    """
    if n_rollouts < 1:
        raise ValueError("need at least one rollout")
    rng = rng if rng is not None else np.random.Generator(np.random.Philox(0))
    end_old, visited = rollout_endpoints(env, old_low_policy, start_state, subgoal, c, n_rollouts, rng,
                                         collect_states=True)
    end_new = rollout_endpoints(env, new_low_policy, start_state, subgoal, c, n_rollouts, rng)
    tv = empirical_tv(end_old, end_new, grid_cell)
    if epsilon is None:
        states = np.concatenate([v[0] for v in visited])
        goals = np.concatenate([v[1] for v in visited])
        epsilon = pinsker_epsilon(max(policy_kl_gaussian(old_low_policy, new_low_policy, states, goals)[1], 0.0))
    epsilon = min(float(epsilon), 1.0)
    bound = 2.0 * epsilon * c
    slack = statistical_slack(n_rollouts, delta)
    return Theorem1Result(tv, bound, slack, epsilon, tv <= bound + slack)


# -- final positions ------------------------------------------------------------

@dataclass
class FinalPositionLog:
    rows: list = field(default_factory=list)

    def __len__(self):
        return len(self.rows)

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(FINAL_POSITION_HEADER)
            for ep, x, y, ok in self.rows:
                w.writerow([ep, repr(x), repr(y), int(ok)])

    @classmethod
    def from_csv(cls, path) -> "FinalPositionLog":
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            if next(reader) != FINAL_POSITION_HEADER:
                raise ValueError("unexpected final-position CSV header")
            return cls([(int(ep), float(x), float(y), bool(int(ok))) for ep, x, y, ok in reader])


def record_final_position(log: FinalPositionLog, episode_terminal_state, success: bool, episode=None):
    episode = len(log.rows) if episode is None else int(episode)
    x, y = (float(v) for v in np.asarray(episode_terminal_state)[:2])
    log.rows.append((episode, x, y, bool(success)))


def write_kl_csv(records, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(KL_CSV_HEADER)
        for r in records:
            w.writerow([r.env_step, repr(r.mean_kl), repr(r.max_kl), repr(r.pinsker_epsilon), repr(r.bound_2ec)])


def read_kl_csv(path) -> list:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        if next(reader) != KL_CSV_HEADER:
            raise ValueError("unexpected KL CSV header")
        return [KlRecord(int(s), float(m), float(x), float(e), float(b)) for s, m, x, e, b in reader]
