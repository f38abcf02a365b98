# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled point-mass kernels; mirror of ``spdl._kernels_py``."""

import numpy as np

from libc.math cimport exp, fabs, sqrt, tanh

cdef double GOAL_X = 0.0
cdef double GOAL_Y = -3.0
cdef double REWARD_SCALE = 0.6
cdef double POS_LIMIT = 4.0


cdef inline double _clamp(double v, double lo, double hi) noexcept nogil:
    if v < lo:
        return lo
    if v > hi:
        return hi
    return v


cdef inline bint _step(double* s, double fx, double fy, double gate_pos, double gate_width,
                       double friction, double dt, double action_limit,
                       double* reward) noexcept nogil:
    cdef double x = s[0], xd = s[1], y = s[2], yd = s[3]
    cdef double nx, ny, t, xc, dx, dy
    cdef bint crash = False
    fx = _clamp(fx, -action_limit, action_limit)
    fy = _clamp(fy, -action_limit, action_limit)
    nx = _clamp(x + dt * xd, -POS_LIMIT, POS_LIMIT)
    ny = _clamp(y + dt * yd, -POS_LIMIT, POS_LIMIT)
    s[1] = xd + dt * (fx - friction * xd)
    s[3] = yd + dt * (fy - friction * yd)
    s[0] = nx
    s[2] = ny
    if (y > 0.0) != (ny > 0.0):
        t = y / (y - ny)
        xc = x + t * (nx - x)
        if fabs(xc - gate_pos) > 0.5 * gate_width:
            crash = True
    dx = GOAL_X - nx
    dy = GOAL_Y - ny
    reward[0] = exp(-REWARD_SCALE * sqrt(dx * dx + dy * dy))
    return crash


def pointmass_step(state, action, double gate_pos, double gate_width, double friction,
                   double dt, double action_limit):
    cdef double s[4]
    cdef double reward
    cdef int i
    for i in range(4):
        s[i] = state[i]
    crash = _step(s, float(action[0]), float(action[1]), gate_pos, gate_width, friction,
                  dt, action_limit, &reward)
    return np.array([s[0], s[1], s[2], s[3]]), reward, bool(crash)


cdef void _mlp(const double[::1] flat, const int[::1] sizes, int n_layers,
               double* inp, double* buf_a, double* buf_b, double* out) noexcept nogil:
    cdef int layer, i, j, n_in, n_out, off = 0
    cdef double acc
    cdef double* src = inp
    cdef double* dst
    for layer in range(n_layers):
        n_in = sizes[layer]
        n_out = sizes[layer + 1]
        if layer == n_layers - 1:
            dst = out
        elif layer % 2 == 0:
            dst = buf_a
        else:
            dst = buf_b
        for i in range(n_out):
            acc = 0.0
            for j in range(n_in):
                acc = acc + flat[off + i * n_in + j] * src[j]
            acc = acc + flat[off + n_out * n_in + i]
            if layer < n_layers - 1:
                acc = tanh(acc)
            dst[i] = acc
        off += n_out * n_in + n_out
        src = dst


def pointmass_rollout(weights, log_std, obs_context, double gate_pos, double gate_width,
                      double friction, noise, double dt, double action_limit, bint deterministic):
    cdef int n_layers = len(weights) // 2
    sizes_list = [weights[0].shape[1]] + [weights[2 * k].shape[0] for k in range(n_layers)]
    cdef int[::1] sizes = np.asarray(sizes_list, dtype=np.intc)
    cdef double[::1] flat = np.concatenate(
        [np.concatenate([np.ravel(weights[2 * k]), np.ravel(weights[2 * k + 1])]) for k in range(n_layers)]
    ).astype(np.float64)
    cdef const double[::1] ctx = np.ascontiguousarray(obs_context, dtype=np.float64)
    cdef const double[:, ::1] eps = np.ascontiguousarray(noise, dtype=np.float64)
    cdef double[::1] std = np.exp(np.ascontiguousarray(log_std, dtype=np.float64))
    cdef int max_steps = eps.shape[0]
    cdef int dc = ctx.shape[0]
    cdef int obs_dim = 4 + dc
    if sizes[0] != obs_dim or sizes[n_layers] != 2:
        raise ValueError("policy network does not match point-mass observation/action sizes")

    obs_arr = np.empty((max_steps, obs_dim))
    act_arr = np.empty((max_steps, 2))
    rew_arr = np.empty(max_steps)
    cdef double[:, ::1] obs = obs_arr
    cdef double[:, ::1] act = act_arr
    cdef double[::1] rew = rew_arr

    width = max(sizes_list)
    buf_a_arr = np.zeros(width)
    buf_b_arr = np.zeros(width)
    cdef double[::1] buf_a = buf_a_arr
    cdef double[::1] buf_b = buf_b_arr
    cdef double s[4]
    cdef double mean[2]
    cdef double reward
    cdef int n = 0, k
    cdef bint crashed = False
    s[0] = 0.0
    s[1] = 0.0
    s[2] = 3.0
    s[3] = 0.0

    with nogil:
        while n < max_steps:
            for k in range(4):
                obs[n, k] = s[k]
            for k in range(dc):
                obs[n, 4 + k] = ctx[k]
            _mlp(flat, sizes, n_layers, &obs[n, 0], &buf_a[0], &buf_b[0], mean)
            if not deterministic:
                mean[0] = mean[0] + std[0] * eps[n, 0]
                mean[1] = mean[1] + std[1] * eps[n, 1]
            act[n, 0] = mean[0]
            act[n, 1] = mean[1]
            crashed = _step(s, mean[0], mean[1], gate_pos, gate_width, friction, dt,
                            action_limit, &reward)
            rew[n] = reward
            n += 1
            if crashed:
                break

    final_obs = np.concatenate([np.array([s[0], s[1], s[2], s[3]]), np.asarray(ctx)])
    return obs_arr[:n].copy(), act_arr[:n].copy(), rew_arr[:n].copy(), bool(crashed), final_obs
