import math

import numpy as np
from numba import njit

SQEUCLID = 0
DOT = 1


@njit(cache=True)
def fourier_features(s, coeffs):
    k, d = coeffs.shape
    out = np.empty(k)
    for i in range(k):
        acc = 0.0
        for j in range(d):
            acc += coeffs[i, j] * s[j]
        out[i] = math.cos(math.pi * acc)
    return out


@njit(cache=True)
def similarity_logits(reps, e, metric):
    d, n = reps.shape
    z = np.empty(n)
    for a in range(n):
        acc = 0.0
        if metric == SQEUCLID:
            for k in range(d):
                diff = reps[k, a] - e[k]
                acc -= diff * diff
        else:
            for k in range(d):
                acc += reps[k, a] * e[k]
        z[a] = acc
    return z


@njit(cache=True)
def nearest_action(reps, e, metric):
    z = similarity_logits(reps, e, metric)
    best = 0
    for a in range(1, z.shape[0]):
        if z[a] > z[best]:
            best = a
    return best


@njit(cache=True)
def _sample_grad(U, tW, x, a_obs, tau, metric, gtW, gU, scale, z, e, ge):
    # Accumulates the gradient w.r.t. tanh(W) into gtW; the caller applies the
    # tanh Jacobian once per batch.
    d, n = tW.shape
    nin = x.shape[0]
    for k in range(d):
        acc = 0.0
        for j in range(nin):
            acc += U[k, j] * x[j]
        e[k] = math.tanh(acc)
    inv_tau = 1.0 / tau
    zmax = -np.inf
    for a in range(n):
        acc = 0.0
        if metric == SQEUCLID:
            for k in range(d):
                diff = tW[k, a] - e[k]
                acc -= diff * diff
        else:
            for k in range(d):
                acc += tW[k, a] * e[k]
        acc *= inv_tau
        z[a] = acc
        if acc > zmax:
            zmax = acc
    tot = 0.0
    for a in range(n):
        v = math.exp(z[a] - zmax)
        z[a] = v
        tot += v
    loss = -math.log(z[a_obs] / tot)
    for k in range(d):
        ge[k] = 0.0
    c = scale * inv_tau / tot
    z[a_obs] -= tot
    for a in range(n):
        g = z[a] * c
        if metric == SQEUCLID:
            for k in range(d):
                gd = 2.0 * g * (tW[k, a] - e[k])
                gtW[k, a] -= gd
                ge[k] += gd
        else:
            for k in range(d):
                gtW[k, a] += g * e[k]
                ge[k] += g * tW[k, a]
    for k in range(d):
        gh = ge[k] * (1.0 - e[k] * e[k])
        for j in range(nin):
            gU[k, j] += gh * x[j]
    return loss


@njit(cache=True)
def _batch_grad(U, tW, X, actions, rows, tau, metric, gW, gU):
    d, n = tW.shape
    z = np.empty(n)
    e = np.empty(d)
    ge = np.empty(d)
    scale = 1.0 / rows.shape[0]
    loss = 0.0
    for i in range(rows.shape[0]):
        r = rows[i]
        loss += _sample_grad(U, tW, X[r], actions[r], tau, metric, gW, gU, scale, z, e, ge)
    for k in range(d):
        for a in range(n):
            gW[k, a] *= 1.0 - tW[k, a] * tW[k, a]
    return loss


@njit(cache=True)
def supervised_grad(W, U, X, actions, tau, metric):
    m = X.shape[0]
    gW = np.zeros_like(W)
    gU = np.zeros_like(U)
    rows = np.arange(m)
    loss = _batch_grad(U, np.tanh(W), X, actions, rows, tau, metric, gW, gU)
    return loss / m, gW, gU


@njit(cache=True)
def sgd_epoch(W, U, X, actions, order, batch_size, lr, tau, metric):
    """In-place mini-batch SGD over ``order``; returns the mean pre-update batch loss."""
    m = order.shape[0]
    total = 0.0
    gW = np.empty_like(W)
    gU = np.empty_like(U)
    for start in range(0, m, batch_size):
        stop = min(start + batch_size, m)
        gW[:] = 0.0
        gU[:] = 0.0
        total += _batch_grad(U, np.tanh(W), X, actions, order[start:stop], tau, metric, gW, gU)
        W -= lr * gW
        U -= lr * gU
    return total / m


@njit(cache=True)
def segments_cross(x0, y0, x1, y1, walls):
    for i in range(walls.shape[0]):
        ax, ay, bx, by = walls[i, 0], walls[i, 1], walls[i, 2], walls[i, 3]
        d1 = (bx - ax) * (y0 - ay) - (by - ay) * (x0 - ax)
        d2 = (bx - ax) * (y1 - ay) - (by - ay) * (x1 - ax)
        d3 = (x1 - x0) * (ay - y0) - (y1 - y0) * (ax - x0)
        d4 = (x1 - x0) * (by - y0) - (y1 - y0) * (bx - x0)
        if d1 * d2 <= 0.0 and d3 * d4 <= 0.0:
            # collinear pairs need an extent overlap test
            if d1 == 0.0 and d2 == 0.0:
                if (max(x0, x1) < min(ax, bx) or max(ax, bx) < min(x0, x1)
                        or max(y0, y1) < min(ay, by) or max(ay, by) < min(y0, y1)):
                    continue
            return True
    return False


@njit(cache=True)
def markov_walk(starts, lengths, succ, succ_cdf, pop_cdf, u_jump, u_pick, jump_prob):
    """Roll out sessions of a sparse Markov chain; returns the flat item sequence."""
    total = 0
    for s in range(lengths.shape[0]):
        total += lengths[s]
    out = np.empty(total, dtype=np.int64)
    pos = 0
    for s in range(lengths.shape[0]):
        cur = starts[s]
        out[pos] = cur
        pos += 1
        for _ in range(1, lengths[s]):
            if u_jump[pos] < jump_prob:
                cur = min(np.searchsorted(pop_cdf, u_pick[pos], side="right"),
                          pop_cdf.shape[0] - 1)
            else:
                j = min(np.searchsorted(succ_cdf[cur], u_pick[pos], side="right"),
                        succ.shape[1] - 1)
                cur = succ[cur, j]
            out[pos] = cur
            pos += 1
    return out


@njit(cache=True)
def _rate(sched, i, t):
    return sched[i, 0] / (t + sched[i, 2]) ** sched[i, 1]


@njit(cache=True)
def _maze_move(x, y, a, coin, repl, noise_prob, disp, walls):
    if noise_prob > 0.0 and coin < noise_prob:
        a = repl
    x1 = x + disp[a, 0]
    y1 = y + disp[a, 1]
    if x1 < 0.0 or x1 > 1.0 or y1 < 0.0 or y1 > 1.0 or segments_cross(x, y, x1, y1, walls):
        return x, y
    return x1, y1


@njit(cache=True)
def _transition_loss(U, tW, phi, phi2, a, tau, metric):
    d, n = tW.shape
    f = phi.shape[0]
    e = np.empty(d)
    for k in range(d):
        acc = 0.0
        for j in range(f):
            acc += U[k, j] * phi[j] + U[k, f + j] * phi2[j]
        e[k] = math.tanh(acc)
    z = similarity_logits(tW, e, metric)
    zmax = -np.inf
    for i in range(n):
        z[i] /= tau
        if z[i] > zmax:
            zmax = z[i]
    tot = 0.0
    for i in range(n):
        tot += math.exp(z[i] - zmax)
    return -(z[a] - zmax - math.log(tot))


@njit(cache=True)
def maze_ra_episode(start, goal, geom, walls, disp, coeffs, tW, U, M, log_sigma, omega, trace,
                    hyper, sched, t0, coins, repl, xi, metric, track_loss):
    """One actor-critic episode with frozen representations on the maze.

    geom = (max_steps, goal_radius**2, goal_reward, step_penalty, noise_prob);
    hyper = (gamma, lambda, tau, learn_sigma, bound or 0, unbiased).
    Updates M, log_sigma, omega and trace in place. Returns
    (return, steps, summed transition loss, final global step, last rates).
    """
    max_steps = int(geom[0])
    goal_r2, goal_reward, penalty, noise_prob = geom[1], geom[2], geom[3], geom[4]
    gamma, lam, tau = hyper[0], hyper[1], hyper[2]
    learn_sigma = hyper[3] != 0.0
    bound = hyper[4]
    unbiased = hyper[5] != 0.0
    d, nf = M.shape
    trace[:] = 0.0
    x, y = start[0], start[1]
    s = np.empty(2)
    s[0] = x
    s[1] = y
    phi = fourier_features(s, coeffs)
    mu = np.empty(d)
    e = np.empty(d)
    noise = np.empty(d)
    rates = np.zeros(3)
    ret = 0.0
    loss_sum = 0.0
    disc = 1.0
    t = t0
    steps = 0
    while True:
        for k in range(d):
            acc = 0.0
            for j in range(nf):
                acc += M[k, j] * phi[j]
            mu[k] = math.tanh(acc)
            noise[k] = math.exp(log_sigma[k]) * xi[steps, k]
            e[k] = min(max(mu[k] + noise[k], -1.0), 1.0)
        a = nearest_action(tW, e, metric)
        x2, y2 = _maze_move(x, y, a, coins[steps], repl[steps], noise_prob, disp, walls)
        steps += 1
        dxg = x2 - goal[0]
        dyg = y2 - goal[1]
        if dxg * dxg + dyg * dyg <= goal_r2:
            r = goal_reward
            term = True
        else:
            r = penalty
            term = steps >= max_steps
        s[0] = x2
        s[1] = y2
        phi2 = fourier_features(s, coeffs)
        for i in range(3):
            rates[i] = _rate(sched, i, t)
        v1 = 0.0
        v2 = 0.0
        for j in range(nf):
            v1 += omega[j] * phi[j]
            v2 += omega[j] * phi2[j]
        if term:
            v2 = 0.0
        delta = r + gamma * v2 - v1
        w = delta * disc if unbiased else delta
        step = rates[2] * w
        if step != 0.0:
            for k in range(d):
                var = math.exp(2.0 * log_sigma[k])
                diff = noise[k]
                g = diff / var * (1.0 - mu[k] * mu[k]) * step
                for j in range(nf):
                    M[k, j] += g * phi[j]
                if learn_sigma:
                    log_sigma[k] += step * (diff * diff / var - 1.0)
                if bound > 0.0:
                    for j in range(nf):
                        M[k, j] = min(max(M[k, j], -bound), bound)
        cw = rates[0] * delta
        for j in range(nf):
            trace[j] = gamma * lam * trace[j] + phi[j]
            omega[j] += cw * trace[j]
        if track_loss:
            loss_sum += _transition_loss(U, tW, phi, phi2, a, tau, metric)
        ret += r
        disc *= gamma
        t += 1
        x, y = x2, y2
        phi = phi2
        if term:
            break
    return ret, steps, loss_sum, t, rates


@njit(cache=True)
def maze_flat_episode(start, goal, geom, walls, disp, coeffs, theta, omega, trace,
                      hyper, sched, t0, coins, repl, u):
    """One flat softmax actor-critic episode on the maze; updates theta, omega, trace in place."""
    max_steps = int(geom[0])
    goal_r2, goal_reward, penalty, noise_prob = geom[1], geom[2], geom[3], geom[4]
    gamma, lam = hyper[0], hyper[1]
    unbiased = hyper[5] != 0.0
    n, nf = theta.shape
    trace[:] = 0.0
    x, y = start[0], start[1]
    s = np.empty(2)
    s[0] = x
    s[1] = y
    phi = fourier_features(s, coeffs)
    p = np.empty(n)
    rates = np.zeros(3)
    ret = 0.0
    disc = 1.0
    t = t0
    steps = 0
    while True:
        hmax = -np.inf
        for i in range(n):
            acc = 0.0
            for j in range(nf):
                acc += theta[i, j] * phi[j]
            p[i] = acc
            if acc > hmax:
                hmax = acc
        tot = 0.0
        for i in range(n):
            p[i] = math.exp(p[i] - hmax)
            tot += p[i]
        cum = 0.0
        a = n - 1
        for i in range(n):
            p[i] /= tot
        for i in range(n):
            cum += p[i]
            if u[steps] < cum:
                a = i
                break
        x2, y2 = _maze_move(x, y, a, coins[steps], repl[steps], noise_prob, disp, walls)
        steps += 1
        dxg = x2 - goal[0]
        dyg = y2 - goal[1]
        if dxg * dxg + dyg * dyg <= goal_r2:
            r = goal_reward
            term = True
        else:
            r = penalty
            term = steps >= max_steps
        s[0] = x2
        s[1] = y2
        phi2 = fourier_features(s, coeffs)
        for i in range(3):
            rates[i] = _rate(sched, i, t)
        v1 = 0.0
        v2 = 0.0
        for j in range(nf):
            v1 += omega[j] * phi[j]
            v2 += omega[j] * phi2[j]
        if term:
            v2 = 0.0
        delta = r + gamma * v2 - v1
        w = delta * disc if unbiased else delta
        step = rates[2] * w
        if step != 0.0:
            for i in range(n):
                g = -p[i] * step
                if i == a:
                    g += step
                for j in range(nf):
                    theta[i, j] += g * phi[j]
        cw = rates[0] * delta
        for j in range(nf):
            trace[j] = gamma * lam * trace[j] + phi[j]
            omega[j] += cw * trace[j]
        ret += r
        disc *= gamma
        t += 1
        x, y = x2, y2
        phi = phi2
        if term:
            break
    return ret, steps, 0.0, t, rates
