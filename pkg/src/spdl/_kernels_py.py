"""Pure-Python point-mass kernels.

Reference implementation of the compiled ``_kernels_ext`` module; both expose
the same two functions with identical semantics.
"""

import math

import numpy as np

GOAL_X = 0.0
GOAL_Y = -3.0
REWARD_SCALE = 0.6
POS_LIMIT = 4.0


def pointmass_step(state, action, gate_pos, gate_width, friction, dt, action_limit):
    """One explicit-Euler step of the point mass.

    Returns ``(next_state, reward, crash)``.
    """
    x, xd, y, yd = (float(v) for v in state)
    fx = min(max(float(action[0]), -action_limit), action_limit)
    fy = min(max(float(action[1]), -action_limit), action_limit)

    nx = x + dt * xd
    ny = y + dt * yd
    nxd = xd + dt * (fx - friction * xd)
    nyd = yd + dt * (fy - friction * yd)
    nx = min(max(nx, -POS_LIMIT), POS_LIMIT)
    ny = min(max(ny, -POS_LIMIT), POS_LIMIT)

    crash = False
    if (y > 0.0) != (ny > 0.0):
        t = y / (y - ny)
        xc = x + t * (nx - x)
        if abs(xc - gate_pos) > 0.5 * gate_width:
            crash = True

    reward = math.exp(-REWARD_SCALE * math.hypot(GOAL_X - nx, GOAL_Y - ny))
    return np.array([nx, nxd, ny, nyd]), reward, crash


def mlp_mean(weights, obs):
    h = obs
    n = len(weights) // 2
    for i in range(n):
        W, b = weights[2 * i], weights[2 * i + 1]
        h = W @ h + b
        if i < n - 1:
            h = np.tanh(h)
    return h


def pointmass_rollout(weights, log_std, obs_context, gate_pos, gate_width, friction, noise,
                      dt, action_limit, deterministic):
    """Roll out one episode of at most ``len(noise)`` steps.

    ``weights`` is the flat list ``[W1, b1, W2, b2, ..., Wout, bout]`` of the
    policy-mean network. Actions are ``mean + exp(log_std) * noise[t]``; the
    environment sees them clamped, the returned ``actions`` are unclamped.

    Returns ``(obs, actions, rewards, crashed, final_obs)`` truncated to the
    number of executed steps.
    """
    max_steps = noise.shape[0]
    ctx = np.asarray(obs_context, dtype=float)
    std = np.exp(np.asarray(log_std, dtype=float))
    obs_dim = 4 + ctx.size
    obs = np.empty((max_steps, obs_dim))
    actions = np.empty((max_steps, 2))
    rewards = np.empty(max_steps)

    state = np.array([0.0, 0.0, 3.0, 0.0])
    crashed = False
    n = 0
    while n < max_steps:
        o = obs[n]
        o[:4] = state
        o[4:] = ctx
        a = mlp_mean(weights, o)
        if not deterministic:
            a = a + std * noise[n]
        actions[n] = a
        state, r, crash = pointmass_step(state, a, gate_pos, gate_width, friction, dt, action_limit)
        rewards[n] = r
        n += 1
        if crash:
            crashed = True
            break

    final_obs = np.concatenate([state, ctx])
    return obs[:n].copy(), actions[:n].copy(), rewards[:n].copy(), crashed, final_obs
