import numpy as np

SQEUCLID = 0
DOT = 1


def fourier_features(s, coeffs):
    return np.cos(np.pi * (coeffs @ s))


def similarity_logits(reps, e, metric):
    if metric == SQEUCLID:
        diff = reps - e[:, None]
        return -np.einsum("ka,ka->a", diff, diff)
    return reps.T @ e


def nearest_action(reps, e, metric):
    # np.argmax returns the first maximum, which is the lowest-id tie-break
    return int(np.argmax(similarity_logits(reps, e, metric)))


def _batch(W, U, X, actions, tau, metric, scale):
    tW = np.tanh(W)
    E = np.tanh(U @ X.T)  # (d, B)
    if metric == SQEUCLID:
        diff = tW[:, :, None] - E[:, None, :]  # (d, A, B)
        z = -np.einsum("kab,kab->ab", diff, diff)
    else:
        z = tW.T @ E
    z = z / tau
    z -= z.max(axis=0, keepdims=True)
    ez = np.exp(z)
    tot = ez.sum(axis=0)
    cols = np.arange(X.shape[0])
    losses = -np.log(ez[actions, cols] / tot)
    G = ez / tot
    G[actions, cols] -= 1.0
    G *= scale / tau
    if metric == SQEUCLID:
        gtW = -2.0 * np.einsum("ab,kab->ka", G, diff)
        gE = 2.0 * np.einsum("ab,kab->kb", G, diff)
    else:
        gtW = E @ G.T
        gE = tW @ G
    gW = gtW * (1.0 - tW * tW)
    gU = (gE * (1.0 - E * E)) @ X
    return losses.sum(), gW, gU


def supervised_grad(W, U, X, actions, tau, metric):
    m = X.shape[0]
    loss, gW, gU = _batch(W, U, X, actions, tau, metric, 1.0 / m)
    return loss / m, gW, gU


def sgd_epoch(W, U, X, actions, order, batch_size, lr, tau, metric):
    m = order.shape[0]
    total = 0.0
    for start in range(0, m, batch_size):
        idx = order[start:start + batch_size]
        bl, gW, gU = _batch(W, U, X[idx], actions[idx], tau, metric, 1.0 / idx.shape[0])
        total += bl
        W -= lr * gW
        U -= lr * gU
    return total / m


def segments_cross(x0, y0, x1, y1, walls):
    if walls.shape[0] == 0:
        return False
    ax, ay, bx, by = walls.T
    d1 = (bx - ax) * (y0 - ay) - (by - ay) * (x0 - ax)
    d2 = (bx - ax) * (y1 - ay) - (by - ay) * (x1 - ax)
    d3 = (x1 - x0) * (ay - y0) - (y1 - y0) * (ax - x0)
    d4 = (x1 - x0) * (by - y0) - (y1 - y0) * (bx - x0)
    hit = (d1 * d2 <= 0.0) & (d3 * d4 <= 0.0)
    collinear = (d1 == 0.0) & (d2 == 0.0)
    apart = ((max(x0, x1) < np.minimum(ax, bx)) | (np.maximum(ax, bx) < min(x0, x1))
             | (max(y0, y1) < np.minimum(ay, by)) | (np.maximum(ay, by) < min(y0, y1)))
    return bool(np.any(hit & ~(collinear & apart)))


def markov_walk(starts, lengths, succ, succ_cdf, pop_cdf, u_jump, u_pick, jump_prob):
    offsets = np.concatenate(([0], np.cumsum(lengths)[:-1])).astype(np.int64)
    out = np.empty(int(lengths.sum()), dtype=np.int64)
    cur = starts.astype(np.int64).copy()
    out[offsets] = cur
    for t in range(1, int(lengths.max(initial=0))):
        live = np.nonzero(lengths > t)[0]
        pos = offsets[live] + t
        c = cur[live]
        jump = u_jump[pos] < jump_prob
        u = u_pick[pos]
        nxt = np.empty_like(c)
        nxt[jump] = np.minimum(np.searchsorted(pop_cdf, u[jump], side="right"),
                               pop_cdf.shape[0] - 1)
        stay = ~jump
        j = (succ_cdf[c[stay]] <= u[stay, None]).sum(axis=1)
        j = np.minimum(j, succ.shape[1] - 1)
        nxt[stay] = succ[c[stay], j]
        cur[live] = nxt
        out[pos] = nxt
    return out


def _rate(sched, i, t):
    return sched[i, 0] / (t + sched[i, 2]) ** sched[i, 1]


def _maze_move(x, y, a, coin, repl, noise_prob, disp, walls):
    if noise_prob > 0.0 and coin < noise_prob:
        a = repl
    x1 = x + disp[a, 0]
    y1 = y + disp[a, 1]
    if x1 < 0.0 or x1 > 1.0 or y1 < 0.0 or y1 > 1.0 or segments_cross(x, y, x1, y1, walls):
        return x, y
    return x1, y1


def _transition_loss(U, tW, phi, phi2, a, tau, metric):
    e = np.tanh(U @ np.concatenate([phi, phi2]))
    z = similarity_logits(tW, e, metric) / tau
    zmax = z.max()
    return -(z[a] - zmax - np.log(np.exp(z - zmax).sum()))


def maze_ra_episode(start, goal, geom, walls, disp, coeffs, tW, U, M, log_sigma, omega, trace,
                    hyper, sched, t0, coins, repl, xi, metric, track_loss):
    max_steps = int(geom[0])
    goal_r2, goal_reward, penalty, noise_prob = geom[1:5]
    gamma, lam, tau, learn_sigma, bound, unbiased = hyper
    trace[:] = 0.0
    x, y = start
    phi = fourier_features(np.array([x, y]), coeffs)
    rates = np.zeros(3)
    ret = loss_sum = 0.0
    disc = 1.0
    t = t0
    steps = 0
    while True:
        mu = np.tanh(M @ phi)
        noise = np.exp(log_sigma) * xi[steps]
        e = np.clip(mu + noise, -1.0, 1.0)
        a = nearest_action(tW, e, metric)
        x2, y2 = _maze_move(x, y, a, coins[steps], repl[steps], noise_prob, disp, walls)
        steps += 1
        if (x2 - goal[0]) ** 2 + (y2 - goal[1]) ** 2 <= goal_r2:
            r, term = goal_reward, True
        else:
            r, term = penalty, steps >= max_steps
        phi2 = fourier_features(np.array([x2, y2]), coeffs)
        rates = np.array([_rate(sched, i, t) for i in range(3)])
        v2 = 0.0 if term else omega @ phi2
        delta = r + gamma * v2 - omega @ phi
        step = rates[2] * (delta * disc if unbiased else delta)
        if step != 0.0:
            var = np.exp(2.0 * log_sigma)
            diff = noise
            M += np.outer(diff / var * (1.0 - mu * mu) * step, phi)
            if learn_sigma:
                log_sigma += step * (diff * diff / var - 1.0)
            if bound > 0.0:
                np.clip(M, -bound, bound, out=M)
        trace *= gamma * lam
        trace += phi
        omega += rates[0] * delta * trace
        if track_loss:
            loss_sum += _transition_loss(U, tW, phi, phi2, a, tau, metric)
        ret += r
        disc *= gamma
        t += 1
        x, y, phi = x2, y2, phi2
        if term:
            break
    return ret, steps, loss_sum, t, rates


def maze_flat_episode(start, goal, geom, walls, disp, coeffs, theta, omega, trace,
                      hyper, sched, t0, coins, repl, u):
    max_steps = int(geom[0])
    goal_r2, goal_reward, penalty, noise_prob = geom[1:5]
    gamma, lam = hyper[0], hyper[1]
    unbiased = hyper[5]
    trace[:] = 0.0
    x, y = start
    phi = fourier_features(np.array([x, y]), coeffs)
    rates = np.zeros(3)
    ret = 0.0
    disc = 1.0
    t = t0
    steps = 0
    n = theta.shape[0]
    while True:
        h = theta @ phi
        p = np.exp(h - h.max())
        p /= p.sum()
        a = min(int(np.searchsorted(np.cumsum(p), u[steps], side="right")), n - 1)
        x2, y2 = _maze_move(x, y, a, coins[steps], repl[steps], noise_prob, disp, walls)
        steps += 1
        if (x2 - goal[0]) ** 2 + (y2 - goal[1]) ** 2 <= goal_r2:
            r, term = goal_reward, True
        else:
            r, term = penalty, steps >= max_steps
        phi2 = fourier_features(np.array([x2, y2]), coeffs)
        rates = np.array([_rate(sched, i, t) for i in range(3)])
        v2 = 0.0 if term else omega @ phi2
        delta = r + gamma * v2 - omega @ phi
        step = rates[2] * (delta * disc if unbiased else delta)
        if step != 0.0:
            g = -p * step
            g[a] += step
            theta += np.outer(g, phi)
        trace *= gamma * lam
        trace += phi
        omega += rates[0] * delta * trace
        ret += r
        disc *= gamma
        t += 1
        x, y, phi = x2, y2, phi2
        if term:
            break
    return ret, steps, 0.0, t, rates
