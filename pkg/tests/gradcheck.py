"""Finite-difference checks for every differentiable head.

Each ``check_*`` draws ``n`` random cases, skips draws that sit within 1e-3 of
a non-differentiable point (ReLU kink, min(q1, q2) tie, log-std clamp edge)
and returns the worst relative error seen.
"""
import numpy as np

from shiro.nn import MlpNetwork, backward, forward
from shiro.policies import (
    LOG_STD_MAX,
    LOG_STD_MIN,
    DeterministicPolicy,
    SquashedGaussianPolicy,
    TwinCritic,
    squashed_backward,
    squashed_forward,
)
from shiro.soft_rl import (
    Temperature,
    critic_loss_and_grads,
    sac_actor_loss_and_grad,
    td3_actor_loss_and_grad,
    temperature_loss_and_grad,
)

from oracles import central_diff, max_rel_err, relu_margin

MARGIN = 1e-3
DIM = 2          # state = goal = action dimension
OBS = 2 * DIM
HIDDEN = (8, 8)
BATCH = 3


def _net(sizes, act, rng, scale=0.5):
    net = MlpNetwork(sizes, act)
    net.params[:] = rng.normal(0.0, scale, net.n_params)
    return net


def _critic(rng):
    return TwinCritic(_net((OBS + DIM, *HIDDEN, 1), "identity", rng),
                      _net((OBS + DIM, *HIDDEN, 1), "identity", rng))


def _critic_ok(critic, s, g, a):
    x = np.concatenate([s, g, a], axis=-1)
    q1, q2 = critic.values(s, g, a)
    return (relu_margin(critic.q1, x) > MARGIN and relu_margin(critic.q2, x) > MARGIN
            and np.min(np.abs(q1 - q2)) > MARGIN)


def _cases(n, rng, draw):
    done = 0
    while done < n:
        case = draw(rng)
        if case is not None:
            done += 1
            yield case


def check_mlp(n, rng):
    worst = 0.0
    for act in ("identity", "tanh"):
        def draw(r):
            net = _net((3, 16, 16, 2), act, r)
            x = r.normal(size=(4, 3))
            return (net, x) if relu_margin(net, x) > MARGIN else None
        for net, x in _cases(n, rng, draw):
            up = rng.normal(size=(4, 2))
            grads, dx = backward(net, x, up)
            f = lambda: float(np.sum(up * forward(net, x)))
            worst = max(worst, max_rel_err(grads.flat, central_diff(f, net.params)),
                        max_rel_err(dx, central_diff(f, x)))
    return worst


def _squashed(rng, scale):
    net = _net((OBS, *HIDDEN, 2 * DIM), "identity", rng)
    return SquashedGaussianPolicy(net, np.full(DIM, scale))


def _squashed_ok(p, s, g):
    out = forward(p.net, np.concatenate([s, g], axis=-1))[:, DIM:]
    inside = np.all(out > LOG_STD_MIN + MARGIN) and np.all(out < LOG_STD_MAX - MARGIN)
    return inside and relu_margin(p.net, np.concatenate([s, g], axis=-1)) > MARGIN


def check_squashed(n, rng):
    """Reparameterized sample path: gradient of ``w_a . a + w_l . log_prob``."""
    def draw(r):
        p = _squashed(r, r.uniform(0.5, 3.0))
        s, g = r.normal(size=(BATCH, DIM)), r.normal(size=(BATCH, DIM))
        return (p, s, g, r.standard_normal((BATCH, DIM))) if _squashed_ok(p, s, g) else None
    worst = 0.0
    for p, s, g, noise in _cases(n, rng, draw):
        wa, wl = rng.normal(size=(BATCH, DIM)), rng.normal(size=BATCH)

        def f():
            smp = squashed_forward(p, s, g, noise)
            return float(np.sum(wa * smp.action) + np.sum(wl * smp.log_prob))
        grad = squashed_backward(p, squashed_forward(p, s, g, noise), wa, wl)
        worst = max(worst, max_rel_err(grad, central_diff(f, p.net.params)))
    return worst


def check_critic(n, rng):
    """TD loss ``MSE(q1, y) + MSE(q2, y)`` w.r.t. both heads; targets held fixed."""
    def draw(r):
        c = _critic(r)
        b = {"s": r.normal(size=(BATCH, DIM)), "g": r.normal(size=(BATCH, DIM)),
             "a": r.uniform(-1, 1, (BATCH, DIM))}
        ok = all(relu_margin(q, np.concatenate([b["s"], b["g"], b["a"]], axis=-1)) > MARGIN
                 for q in (c.q1, c.q2))
        return (c, b, r.normal(size=BATCH)) if ok else None
    worst = 0.0
    for c, b, y in _cases(n, rng, draw):
        _, grads = critic_loss_and_grads(c, b, y)
        f = lambda: critic_loss_and_grads(c, b, y)[0]
        worst = max(worst, max_rel_err(grads[0], central_diff(f, c.q1.params)),
                    max_rel_err(grads[1], central_diff(f, c.q2.params)))
    return worst


def check_sac_actor(n, rng):
    """``E[alpha log pi - min Q]`` (half the cases with a KL anchor) w.r.t. policy parameters."""
    def draw(r):
        p = _squashed(r, 1.0)
        c = _critic(r)
        s, g = r.normal(size=(BATCH, DIM)), r.normal(size=(BATCH, DIM))
        noise = r.standard_normal((BATCH, DIM))
        if not _squashed_ok(p, s, g) or not _critic_ok(c, s, g, squashed_forward(p, s, g, noise).action):
            return None
        anchor = None
        if r.random() < 0.5:
            anchor = p.copy()
            anchor.net.params += r.normal(0, 0.1, anchor.net.n_params)
        return p, c, s, g, noise, anchor
    worst = 0.0
    for p, c, s, g, noise, anchor in _cases(n, rng, draw):
        alpha, akl = rng.uniform(0.01, 2.0), rng.uniform(0.1, 2.0)
        _, grad, _ = sac_actor_loss_and_grad(p, c, s, g, noise, alpha, anchor, akl)
        f = lambda: sac_actor_loss_and_grad(p, c, s, g, noise, alpha, anchor, akl)[0]
        worst = max(worst, max_rel_err(grad, central_diff(f, p.net.params)))
    return worst


def check_td3_actor(n, rng):
    """``-E[q1(s, g, mu)]`` (half the cases with a fixed-covariance KL anchor)."""
    def draw(r):
        net = _net((OBS, *HIDDEN, DIM), "tanh", r)
        p = DeterministicPolicy(net, np.full(DIM, r.uniform(0.5, 3.0)), np.full(DIM, r.uniform(0.1, 1.0)))
        c = _critic(r)
        s, g = r.normal(size=(BATCH, DIM)), r.normal(size=(BATCH, DIM))
        x = np.concatenate([s, g, p.mean(s, g)], axis=-1)
        if relu_margin(net, np.concatenate([s, g], axis=-1)) < MARGIN or relu_margin(c.q1, x) < MARGIN:
            return None
        anchor = None
        if r.random() < 0.5:
            anchor = p.copy()
            anchor.net.params += r.normal(0, 0.1, anchor.net.n_params)
        return p, c, s, g, anchor
    worst = 0.0
    for p, c, s, g, anchor in _cases(n, rng, draw):
        akl = rng.uniform(0.1, 2.0)
        _, grad = td3_actor_loss_and_grad(p, c, s, g, anchor, akl)
        f = lambda: td3_actor_loss_and_grad(p, c, s, g, anchor, akl)[0]
        worst = max(worst, max_rel_err(grad, central_diff(f, p.net.params)))
    return worst


def check_temperature(n, rng):
    worst = 0.0
    for _ in range(n):
        temp = Temperature(rng.normal(), rng.normal(-2.0, 1.0))
        logp = rng.normal(size=16)
        _, grad = temperature_loss_and_grad(temp, logp)
        box = np.array([temp.log_alpha])

        def f():
            temp.log_alpha = float(box[0])
            return temperature_loss_and_grad(temp, logp)[0]
        num = central_diff(f, box)
        temp.log_alpha = float(box[0])
        worst = max(worst, max_rel_err(grad, num))
    return worst


HEADS = {
    "mlp": check_mlp,
    "squashed_log_prob_path": check_squashed,
    "critic_td_loss": check_critic,
    "sac_actor_loss": check_sac_actor,
    "td3_actor_loss": check_td3_actor,
    "temperature_loss": check_temperature,
}
