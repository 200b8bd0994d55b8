"""Scalar reference implementations written with plain Python floats and loops.

They share no code with the package beyond reading parameter values, so an
agreement check exercises the vectorized paths against a direct reading of
each formula.
"""

import math


def _vec(a):
    return [float(v) for v in a]


def linear_ref(layer, x):
    w = layer.weight.data
    b = layer.bias.data
    out = []
    for o in range(w.shape[1]):
        s = 0.0
        for i, xi in enumerate(x):
            s += xi * float(w[i, o])
        out.append(s + float(b[o]))
    return out


def mlp_ref(mlp, x):
    x = _vec(x)
    n = len(mlp.layers)
    for k, layer in enumerate(mlp.layers):
        x = linear_ref(layer, x)
        if k < n - 1:
            x = [max(v, 0.0) for v in x]
    return x


def sigmoid_ref(x):
    return 1.0 / (1.0 + math.exp(-x)) if x >= 0 else math.exp(x) / (1.0 + math.exp(x))


def softmax_ref(xs):
    m = max(xs)
    e = [math.exp(x - m) for x in xs]
    s = sum(e)
    return [v / s for v in e]


def refine_ref(gi, h, c, positions, d_max, rounds):
    """Message passing on one scene, agent by agent and neighbor by neighbor."""
    n = len(h)
    h = [_vec(row) for row in h]
    c = [_vec(row) for row in c]
    pos = [_vec(p) for p in positions]
    nbrs = []
    for i in range(n):
        row = []
        for j in range(n):
            if i == j:
                continue
            dx, dy = pos[i][0] - pos[j][0], pos[i][1] - pos[j][1]
            if math.sqrt(dx * dx + dy * dy) <= d_max:
                row.append(j)
        nbrs.append(row)
    for _ in range(rounds):
        new_c, new_h = [], []
        for i in range(n):
            message = [0.0] * len(h[i])
            if nbrs[i]:
                gates, logits = [], []
                for j in nbrs[i]:
                    r = mlp_ref(gi.phi_r, [pos[i][0] - pos[j][0], pos[i][1] - pos[j][1]])
                    feat = r + h[j] + h[i]
                    gates.append([sigmoid_ref(v) for v in mlp_ref(gi.phi_m, feat)])
                    logits.append(mlp_ref(gi.phi_a, feat)[0])
                alpha = softmax_ref(logits)
                for a, g, j in zip(alpha, gates, nbrs[i]):
                    for d in range(len(message)):
                        message[d] += a * g[d] * h[j][d]
            upd = mlp_ref(gi.phi_mp, message)
            ci = [u + v for u, v in zip(upd, c[i])]
            new_c.append(ci)
            new_h.append([hv + math.tanh(cv) for hv, cv in zip(h[i], ci)])
        h, c = new_h, new_c
    return h, c


def laplace_nll_ref(mu, b, y):
    """mu, b, y: [N][T'][2] nested lists; mean over agents of the per-agent loss."""
    total = 0.0
    for mu_i, b_i, y_i in zip(mu, b, y):
        s = 0.0
        for mt, bt, yt in zip(mu_i, b_i, y_i):
            for d in range(2):
                s += math.log(2.0 * bt[d]) + abs(yt[d] - mt[d]) / bt[d]
        total += s / len(y_i)
    return total / len(y)


def cls_loss_ref(target, probs):
    total = 0.0
    for t_row, p_row in zip(target, probs):
        total += sum(-t * math.log(max(p, 1e-12)) for t, p in zip(t_row, p_row))
    return total / len(target)


def _dist(a, b):
    return math.sqrt((a[0] - b[0]) ** 2 + (a[1] - b[1]) ** 2)


def min_ade_ref(pred, truth):
    """pred: [N][K][T'][2], truth: [N][T'][2]."""
    total = 0.0
    for modes, y in zip(pred, truth):
        best = math.inf
        for m in modes:
            best = min(best, sum(_dist(p, q) for p, q in zip(m, y)) / len(y))
        total += best
    return total / len(truth)


def min_fde_ref(pred, truth):
    total = 0.0
    for modes, y in zip(pred, truth):
        total += min(_dist(m[-1], y[-1]) for m in modes)
    return total / len(truth)


def best_mode_ref(modes, y):
    best, best_k = math.inf, 0
    for k, m in enumerate(modes):
        d = sum((p[0] - q[0]) ** 2 + (p[1] - q[1]) ** 2 for p, q in zip(m, y))
        if d < best:
            best, best_k = d, k
    return best_k


def soft_target_ref(modes, y):
    ade = [sum(_dist(p, q) for p, q in zip(m, y)) / len(y) for m in modes]
    return softmax_ref([-a for a in ade])
