"""Policy families and the twin critic.

Both policy kinds are conditioned on ``(state, goal)`` by concatenation and
act in a symmetric box ``[-action_scale, action_scale]``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .nn import MlpNetwork, ShapeError, backward_cache, forward_cache, init_mlp

LOG_STD_MIN = -20.0
LOG_STD_MAX = 2.0
HALF_LOG_2PI = 0.5 * np.log(2.0 * np.pi)
# squashed samples are kept strictly inside the open box
TANH_LIMIT = 1.0 - 1e-12


def _obs(state, goal):
    state = np.asarray(state, dtype=np.float64)
    goal = np.asarray(goal, dtype=np.float64)
    if state.ndim != goal.ndim:
        raise ShapeError("state and goal must both be vectors or both be batches")
    return np.concatenate([state, goal], axis=-1)


def log_one_minus_tanh_sq(u):
    """log(1 - tanh(u)^2) in a form that stays finite for large |u|."""
    return 2.0 * (np.log(2.0) - u - np.logaddexp(0.0, -2.0 * u))


@dataclass
class DeterministicPolicy:
    net: MlpNetwork
    action_scale: np.ndarray
    exploration_sigma: np.ndarray

    kind = "deterministic"

    def __post_init__(self):
        self.action_scale = np.asarray(self.action_scale, dtype=np.float64)
        self.exploration_sigma = np.asarray(self.exploration_sigma, dtype=np.float64)
        if self.net.output_activation != "tanh":
            raise ValueError("deterministic policy needs a tanh output layer")
        if self.net.output_dim != self.action_scale.size:
            raise ShapeError("action_scale length must equal the network output width")
        if np.any(self.action_scale <= 0) or np.any(self.exploration_sigma <= 0):
            raise ValueError("action_scale and exploration_sigma must be strictly positive")

    @property
    def action_dim(self) -> int:
        return self.action_scale.size

    def copy(self) -> "DeterministicPolicy":
        return DeterministicPolicy(self.net.copy(), self.action_scale.copy(),
                                   self.exploration_sigma.copy())

    def mean(self, state, goal):
        return self.action_scale * forward_cache(self.net, _obs(state, goal))[0]

    def to_dict(self) -> dict:
        return {"kind": self.kind, "net": self.net.to_dict(),
                "action_scale": self.action_scale.tolist(),
                "exploration_sigma": self.exploration_sigma.tolist()}


@dataclass
class SquashedGaussianPolicy:
    """Gaussian in pre-squash space, pushed through ``scale * tanh``.

    The network emits ``[mean, log_std]`` (width ``2 * action_dim``).
    """

    net: MlpNetwork
    action_scale: np.ndarray

    kind = "squashed_gaussian"
    log_std_bounds = (LOG_STD_MIN, LOG_STD_MAX)

    def __post_init__(self):
        self.action_scale = np.asarray(self.action_scale, dtype=np.float64)
        if self.net.output_activation != "identity":
            raise ValueError("squashed Gaussian policy needs an identity output layer")
        if self.net.output_dim != 2 * self.action_scale.size:
            raise ShapeError("network output width must be 2 * action_dim")
        if np.any(self.action_scale <= 0):
            raise ValueError("action_scale must be strictly positive")

    @property
    def action_dim(self) -> int:
        return self.action_scale.size

    def copy(self) -> "SquashedGaussianPolicy":
        return SquashedGaussianPolicy(self.net.copy(), self.action_scale.copy())

    def gaussian(self, state, goal):
        """Pre-squash ``(mean, clamped log_std)``."""
        out = forward_cache(self.net, _obs(state, goal))[0]
        k = self.action_dim
        return out[..., :k], np.clip(out[..., k:], LOG_STD_MIN, LOG_STD_MAX)

    def mean(self, state, goal):
        """Deterministic evaluation action: squash of the pre-squash mean."""
        mu, _ = self.gaussian(state, goal)
        return self.action_scale * np.tanh(mu)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "net": self.net.to_dict(),
                "action_scale": self.action_scale.tolist()}


def make_deterministic_policy(obs_dim, action_scale, hidden=(64, 64), sigma=None, seed=0):
    action_scale = np.asarray(action_scale, dtype=np.float64)
    sigma = 0.1 * action_scale if sigma is None else np.broadcast_to(sigma, action_scale.shape)
    net = init_mlp((obs_dim, *hidden, action_scale.size), "tanh", seed)
    return DeterministicPolicy(net, action_scale, np.array(sigma, dtype=np.float64))


def make_squashed_policy(obs_dim, action_scale, hidden=(64, 64), seed=0):
    action_scale = np.asarray(action_scale, dtype=np.float64)
    net = init_mlp((obs_dim, *hidden, 2 * action_scale.size), "identity", seed)
    return SquashedGaussianPolicy(net, action_scale)


def policy_from_dict(data: dict):
    net = MlpNetwork.from_dict(data["net"])
    if data["kind"] == DeterministicPolicy.kind:
        return DeterministicPolicy(net, data["action_scale"], data["exploration_sigma"])
    if data["kind"] == SquashedGaussianPolicy.kind:
        return SquashedGaussianPolicy(net, data["action_scale"])
    raise ValueError(f"unknown policy kind {data['kind']!r}")


# -- deterministic policy -------------------------------------------------------

def det_action(p: DeterministicPolicy, s, g) -> np.ndarray:
    return p.mean(s, g)


def explore_action(p: DeterministicPolicy, s, g, rng: np.random.Generator) -> np.ndarray:
    mu = p.mean(s, g)
    noisy = mu + rng.standard_normal(mu.shape) * p.exploration_sigma
    return np.clip(noisy, -p.action_scale, p.action_scale)


# -- squashed Gaussian policy ---------------------------------------------------

@dataclass
class SquashedSample:
    """Everything needed to push gradients back through a reparameterized sample."""

    action: np.ndarray
    log_prob: np.ndarray
    u: np.ndarray
    tanh_u: np.ndarray
    noise: np.ndarray
    std: np.ndarray
    clamp_mask: np.ndarray
    cache: tuple


def squashed_forward(p: SquashedGaussianPolicy, s, g, noise) -> SquashedSample:
    """Reparameterized sample ``a = scale * tanh(mean + std * noise)`` for given noise."""
    out, cache = forward_cache(p.net, _obs(s, g))
    k = p.action_dim
    mu, raw = out[..., :k], out[..., k:]
    log_std = np.clip(raw, LOG_STD_MIN, LOG_STD_MAX)
    clamp_mask = (raw >= LOG_STD_MIN) & (raw <= LOG_STD_MAX)
    std = np.exp(log_std)
    noise = np.asarray(noise, dtype=np.float64)
    u = mu + std * noise
    t = np.clip(np.tanh(u), -TANH_LIMIT, TANH_LIMIT)
    log_prob = np.sum(-0.5 * noise ** 2 - log_std - HALF_LOG_2PI
                      - np.log(p.action_scale) - log_one_minus_tanh_sq(u), axis=-1)
    return SquashedSample(p.action_scale * t, log_prob, u, t, noise, std, clamp_mask, cache)


def squashed_sample(p: SquashedGaussianPolicy, s, g, rng: np.random.Generator):
    """Returns ``(action, log_prob)``."""
    shape = np.shape(np.asarray(s))[:-1] + (p.action_dim,)
    smp = squashed_forward(p, s, g, rng.standard_normal(shape))
    return smp.action, smp.log_prob


def squashed_backward(p: SquashedGaussianPolicy, smp: SquashedSample, d_action, d_log_prob,
                      d_mean=None, d_log_std=None):
    """Parameter gradient of ``sum(d_action * a) + sum(d_log_prob * log_prob)``.

    ``d_mean`` / ``d_log_std`` optionally add gradients taken directly w.r.t. the
    pre-squash mean and (clamped) log-std heads.
    """
    d_action = np.asarray(d_action, dtype=np.float64)
    d_lp = np.asarray(d_log_prob, dtype=np.float64)[..., None]
    t = np.tanh(smp.u)
    # d log_prob / d u = 2 tanh(u); d a / d u = scale * (1 - tanh^2)
    d_u = d_action * p.action_scale * (1.0 - t * t) + d_lp * 2.0 * t
    d_mu = d_u if d_mean is None else d_u + d_mean
    d_ls = d_u * smp.std * smp.noise - d_lp
    if d_log_std is not None:
        d_ls = d_ls + d_log_std
    upstream = np.concatenate([d_mu, d_ls * smp.clamp_mask], axis=-1)
    grad, _ = backward_cache(p.net, smp.cache, upstream)
    return grad


def squashed_log_prob(p: SquashedGaussianPolicy, s, g, action) -> np.ndarray:
    """Log-density of ``action`` under the squashed policy; the action must lie in the open box."""
    action = np.asarray(action, dtype=np.float64)
    y = action / p.action_scale
    if np.any(~np.isfinite(y)) or np.any(np.abs(y) >= 1.0):
        raise ValueError("action must lie strictly inside the open action box")
    mu, log_std = p.gaussian(s, g)
    u = np.arctanh(y)
    z = (u - mu) / np.exp(log_std)
    return np.sum(-0.5 * z ** 2 - log_std - HALF_LOG_2PI
                  - np.log(p.action_scale) - log_one_minus_tanh_sq(u), axis=-1)


# -- critic --------------------------------------------------------------------

@dataclass
class TwinCritic:
    q1: MlpNetwork
    q2: MlpNetwork

    def __post_init__(self):
        if self.q1.input_dim != self.q2.input_dim:
            raise ShapeError("twin critic heads must share input dimensionality")

    def copy(self) -> "TwinCritic":
        return TwinCritic(self.q1.copy(), self.q2.copy())

    def values(self, s, g, a):
        x = np.concatenate([np.asarray(s, float), np.asarray(g, float), np.asarray(a, float)], axis=-1)
        return forward_cache(self.q1, x)[0][..., 0], forward_cache(self.q2, x)[0][..., 0]

    def to_dict(self) -> dict:
        return {"q1": self.q1.to_dict(), "q2": self.q2.to_dict()}

    @classmethod
    def from_dict(cls, data: dict) -> "TwinCritic":
        return cls(MlpNetwork.from_dict(data["q1"]), MlpNetwork.from_dict(data["q2"]))


def make_twin_critic(in_dim, hidden=(64, 64), seed=0) -> TwinCritic:
    rng = np.random.Generator(np.random.Philox(seed))
    return TwinCritic(init_mlp((in_dim, *hidden, 1), "identity", rng),
                      init_mlp((in_dim, *hidden, 1), "identity", rng))


def min_twin_q(c: TwinCritic, s, g, a):
    q1, q2 = c.values(s, g, a)
    return np.minimum(q1, q2)
