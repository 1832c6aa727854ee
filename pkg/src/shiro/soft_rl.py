"""Gradient update rules for critics, actors, temperature and the KL penalty.

Batches are dicts of arrays with keys ``s, g, a, r, s_next, g_next, done``.
Every update applies exactly one Adam step and returns the pre-step loss.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .nn import AdamState, adam_step, backward_cache, forward_cache
from .policies import (
    DeterministicPolicy,
    SquashedGaussianPolicy,
    TwinCritic,
    _obs,
    squashed_backward,
    squashed_forward,
    squashed_sample,
)


class PolicyKindError(TypeError):
    """An update rule was applied to the wrong policy family."""


@dataclass
class Temperature:
    """Entropy coefficient ``alpha = exp(log_alpha)``.

    Optimized by Adam with ``beta1 = 0`` so each step moves ``log_alpha`` in
    the sign of the current batch gradient only.
    """

    log_alpha: float
    target_entropy: float
    learnable: bool = True
    learning_rate: float = 3e-4
    opt: AdamState = field(default=None, repr=False)

    def __post_init__(self):
        if self.opt is None:
            self.opt = AdamState(np.zeros(1), np.zeros(1), learning_rate=self.learning_rate, beta1=0.0)

    @classmethod
    def from_alpha(cls, alpha: float, target_entropy: float, learnable: bool = True,
                   learning_rate: float = 3e-4) -> "Temperature":
        return cls(float(np.log(alpha)), float(target_entropy), learnable, learning_rate)

    @property
    def alpha(self) -> float:
        return float(np.exp(self.log_alpha))


@dataclass
class AgentLevelConfig:
    policy_kind: str = "deterministic"
    alpha_init: float = 1.0
    alpha_learnable: bool = False
    train_interval: int = 1
    target_update_interval: int = 1
    actor_delay: int = 2
    gamma: float = 0.99
    kl_penalty_coefficient: float = 0.0
    actor_lr: float = 1e-4
    critic_lr: float = 1e-3
    alpha_lr: float = 3e-4
    tau: float = 0.005
    batch_size: int = 128
    target_noise: float = 0.2
    target_noise_clip: float = 0.5

    def __post_init__(self):
        if self.policy_kind not in ("deterministic", "squashed_gaussian"):
            raise ValueError(f"unknown policy_kind {self.policy_kind!r}")
        if min(self.train_interval, self.target_update_interval, self.actor_delay) < 1:
            raise ValueError("intervals must be positive")
        if not 0.0 < self.gamma < 1.0:
            raise ValueError("gamma must lie in (0, 1)")
        if self.kl_penalty_coefficient < 0:
            raise ValueError("kl_penalty_coefficient must be non-negative")


def _critic_input(s, g, a):
    return np.concatenate([s, g, a], axis=-1)


def compute_critic_target(batch, target_critic: TwinCritic, policy, alpha: float, gamma: float,
                          rng: np.random.Generator, target_noise: float = 0.2,
                          noise_clip: float = 0.5):
    """Bootstrapped targets ``y``; no gradient flows through them.

    Squashed-Gaussian ``policy``: next action sampled from it, entropy term
    ``-alpha * log_prob`` inside the bootstrap. Deterministic ``policy``
    (normally the target actor): clipped smoothing noise, no entropy term.
    """
    s2, g2 = batch["s_next"], batch["g_next"]
    if isinstance(policy, SquashedGaussianPolicy):
        a2, logp = squashed_sample(policy, s2, g2, rng)
        q1, q2 = target_critic.values(s2, g2, a2)
        v = np.minimum(q1, q2) - alpha * logp
    elif isinstance(policy, DeterministicPolicy):
        scale = policy.action_scale
        mu = policy.mean(s2, g2)
        noise = np.clip(rng.standard_normal(mu.shape) * (target_noise * scale),
                        -noise_clip * scale, noise_clip * scale)
        a2 = np.clip(mu + noise, -scale, scale)
        q1, q2 = target_critic.values(s2, g2, a2)
        v = np.minimum(q1, q2)
    else:
        raise PolicyKindError(f"unsupported policy {type(policy).__name__}")
    return batch["r"] + gamma * (1.0 - batch["done"]) * v


def critic_loss_and_grads(critic: TwinCritic, batch, targets):
    x = _critic_input(batch["s"], batch["g"], batch["a"])
    n = x.shape[0]
    loss = 0.0
    grads = []
    for net in (critic.q1, critic.q2):
        q, cache = forward_cache(net, x)
        err = q[:, 0] - targets
        loss += float(np.mean(err * err))
        grad, _ = backward_cache(net, cache, (2.0 / n) * err[:, None])
        grads.append(grad)
    return loss, grads


def update_critics(critic: TwinCritic, opt: tuple, batch, targets) -> float:
    """One Adam step on ``MSE(q1, y) + MSE(q2, y)``; returns the pre-step loss."""
    loss, grads = critic_loss_and_grads(critic, batch, np.asarray(targets, dtype=np.float64))
    adam_step(critic.q1.params, grads[0], opt[0])
    adam_step(critic.q2.params, grads[1], opt[1])
    return loss


def _min_q_action_grad(critic: TwinCritic, s, g, a):
    """min(q1, q2) and its gradient w.r.t. the action, per sample."""
    x = _critic_input(s, g, a)
    q1, c1 = forward_cache(critic.q1, x)
    q2, c2 = forward_cache(critic.q2, x)
    use1 = (q1[:, 0] <= q2[:, 0]).astype(np.float64)[:, None]
    _, dx1 = backward_cache(critic.q1, c1, use1, need_params=False)
    _, dx2 = backward_cache(critic.q2, c2, 1.0 - use1, need_params=False)
    k = a.shape[-1]
    return np.minimum(q1, q2)[:, 0], (dx1 + dx2)[:, -k:]


def gaussian_kl_terms(mu_new, log_std_new, mu_old, log_std_old):
    """Per-state KL(new || old) between diagonal Gaussians and its gradients w.r.t. the new ones."""
    var_ratio = np.exp(2.0 * (log_std_new - log_std_old))
    diff = mu_new - mu_old
    inv_var_old = np.exp(-2.0 * log_std_old)
    kl = np.sum(log_std_old - log_std_new + 0.5 * var_ratio + 0.5 * diff * diff * inv_var_old - 0.5, axis=-1)
    return kl, diff * inv_var_old, var_ratio - 1.0


def fixed_cov_kl_terms(mu_new, mu_old, sigma):
    """Per-state KL for equal isotropic-per-dim covariances and its gradient w.r.t. ``mu_new``."""
    inv_var = 1.0 / (np.asarray(sigma, dtype=np.float64) ** 2)
    diff = mu_new - mu_old
    return 0.5 * np.sum(diff * diff * inv_var, axis=-1), diff * inv_var


def update_actor_sac(policy: SquashedGaussianPolicy, critic: TwinCritic, opt: AdamState, batch,
                     alpha: float, rng: np.random.Generator, kl_anchor=None, alpha_kl: float = 0.0):
    """Minimize ``E[alpha * log pi(a|s,g) - min Q(s,g,a)]`` with reparameterized ``a``.

    Returns ``(loss, log_probs)``; the log-probs feed the temperature update.
    """
    if not isinstance(policy, SquashedGaussianPolicy):
        raise PolicyKindError("update_actor_sac needs a squashed Gaussian policy")
    s, g = batch["s"], batch["g"]
    noise = rng.standard_normal((s.shape[0], policy.action_dim))
    loss, grad, logp = sac_actor_loss_and_grad(policy, critic, s, g, noise, alpha, kl_anchor, alpha_kl)
    adam_step(policy.net.params, grad, opt)
    return loss, logp


def sac_actor_loss_and_grad(policy, critic, s, g, noise, alpha, kl_anchor=None, alpha_kl=0.0):
    n = s.shape[0]
    smp = squashed_forward(policy, s, g, noise)
    min_q, dq_da = _min_q_action_grad(critic, s, g, smp.action)
    loss = float(np.mean(alpha * smp.log_prob - min_q))
    d_mean = d_log_std = None
    if kl_anchor is not None and alpha_kl > 0.0:
        k = policy.action_dim
        out = forward_cache(policy.net, _obs(s, g))[0]
        mu_old, ls_old = kl_anchor.gaussian(s, g)
        kl, d_m, d_ls = gaussian_kl_terms(out[:, :k], np.clip(out[:, k:], *policy.log_std_bounds),
                                          mu_old, ls_old)
        loss += alpha_kl * float(np.mean(kl))
        d_mean, d_log_std = (alpha_kl / n) * d_m, (alpha_kl / n) * d_ls
    grad = squashed_backward(policy, smp, -dq_da / n, np.full(n, alpha / n), d_mean, d_log_std)
    return loss, grad, smp.log_prob


def td3_actor_loss_and_grad(policy: DeterministicPolicy, critic: TwinCritic, s, g,
                            kl_anchor=None, alpha_kl: float = 0.0):
    n = s.shape[0]
    out, cache = forward_cache(policy.net, _obs(s, g))
    a = policy.action_scale * out
    q1, c1 = forward_cache(critic.q1, _critic_input(s, g, a))
    _, dx = backward_cache(critic.q1, c1, np.ones((n, 1)), need_params=False)
    d_a = -dx[:, -policy.action_dim:] / n
    loss = -float(np.mean(q1))
    if kl_anchor is not None and alpha_kl > 0.0:
        kl, d_mu = fixed_cov_kl_terms(a, kl_anchor.mean(s, g), policy.exploration_sigma)
        loss += alpha_kl * float(np.mean(kl))
        d_a = d_a + (alpha_kl / n) * d_mu
    grad, _ = backward_cache(policy.net, cache, d_a * policy.action_scale)
    return loss, grad


def update_actor_td3(policy: DeterministicPolicy, critic: TwinCritic, opt: AdamState, batch,
                     kl_anchor=None, alpha_kl: float = 0.0) -> float:
    """One Adam step maximizing ``E[q1(s, g, mu(s, g))]``."""
    if not isinstance(policy, DeterministicPolicy):
        raise PolicyKindError("update_actor_td3 needs a deterministic policy")
    loss, grad = td3_actor_loss_and_grad(policy, critic, batch["s"], batch["g"], kl_anchor, alpha_kl)
    adam_step(policy.net.params, grad, opt)
    return loss


def temperature_loss_and_grad(temp: Temperature, batch_log_probs):
    """``J = E[-alpha * (log pi + H_target)]`` and ``dJ/dlog_alpha``."""
    batch_entropy = -float(np.mean(np.asarray(batch_log_probs, dtype=np.float64)))
    # dJ/dlog_alpha = -alpha * (E[log pi] + H_target) = -alpha * (H_target - H_batch)
    loss = -temp.alpha * (temp.target_entropy - batch_entropy)
    return loss, loss


def update_temperature(temp: Temperature, batch_log_probs) -> Temperature:
    """One Adam step on ``J(alpha)`` w.r.t. ``log_alpha``; alpha falls when entropy exceeds the target."""
    if not temp.learnable:
        raise ValueError("temperature is not learnable")
    _, grad = temperature_loss_and_grad(temp, batch_log_probs)
    params = np.array([temp.log_alpha])
    adam_step(params, np.array([grad]), temp.opt)
    temp.log_alpha = float(params[0])
    return temp


def policy_kl(policy_p, policy_q, s, g) -> np.ndarray:
    """Per-state KL(p || q) for two snapshots of the same policy family."""
    if isinstance(policy_p, SquashedGaussianPolicy):
        mu_p, ls_p = policy_p.gaussian(s, g)
        mu_q, ls_q = policy_q.gaussian(s, g)
        return gaussian_kl_terms(mu_p, ls_p, mu_q, ls_q)[0]
    return fixed_cov_kl_terms(policy_p.mean(s, g), policy_q.mean(s, g), policy_p.exploration_sigma)[0]


def kl_penalized_actor_loss(base_loss: float, policy_before, policy_after, states, goals,
                            alpha_kl: float) -> float:
    """``L + alpha_kl * E_s[KL(pi_after || pi_before)]``."""
    if alpha_kl < 0:
        raise ValueError("alpha_kl must be non-negative")
    if alpha_kl == 0:
        return float(base_loss)
    return float(base_loss) + alpha_kl * float(np.mean(policy_kl(policy_after, policy_before, states, goals)))
