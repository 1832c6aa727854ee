"""Small hand-built policies and critics with known closed forms."""
import numpy as np

from shiro.nn import MlpNetwork
from shiro.policies import DeterministicPolicy, SquashedGaussianPolicy, TwinCritic

ONE = np.zeros((1, 1))  # dummy 1-D state/goal rows


def const_squashed(mu, log_std, scale=1.0, obs_dim=2):
    """Squashed Gaussian whose pre-squash parameters ignore the input."""
    mu = np.atleast_1d(np.asarray(mu, dtype=np.float64))
    log_std = np.broadcast_to(np.asarray(log_std, dtype=np.float64), mu.shape)
    net = MlpNetwork((obs_dim, 2 * mu.size))
    net.biases[0][:] = np.concatenate([mu, log_std])
    return SquashedGaussianPolicy(net, np.broadcast_to(np.asarray(scale, dtype=np.float64), mu.shape).copy())


def identity_goal_policy(dim, scale, sigma=1.0, gain=20.0):
    """Deterministic policy with mean ~ scale * tanh(gain * goal / scale).

    With a small gain it is close to ``mu(s, g) = g`` near the origin.
    """
    net = MlpNetwork((2 * dim, dim), "tanh")
    net.weights[0][:, dim:] = np.eye(dim) * gain / scale
    return DeterministicPolicy(net, np.full(dim, scale), np.full(dim, sigma))


def linear_critic(in_dim, w1, w2):
    """Twin critic of two affine heads ``q_i(x) = w_i . x``."""
    q1, q2 = MlpNetwork((in_dim, 1)), MlpNetwork((in_dim, 1))
    q1.weights[0][0] = w1
    q2.weights[0][0] = w2
    return TwinCritic(q1, q2)
