"""Independent reference computations used by the tests.

Nothing here imports the code paths under test beyond plain parameter
containers; everything is written with Python scalars and loops.
"""

import math

import numpy as np


def s_sigmoid(x):
    return 1.0 / (1.0 + math.exp(-x)) if x >= 0 else math.exp(x) / (1.0 + math.exp(x))


def s_act(kind, x):
    return s_sigmoid(x) if str(getattr(kind, "value", kind)) == "sigmoid" else math.tanh(x)


def s_affine(w, r, b, x, s, i):
    acc = b[i]
    for j in range(len(x)):
        acc += w[i][j] * x[j]
    for j in range(len(s)):
        acc += r[i][j] * s[j]
    return acc


def _lists(g):
    return g.input_weights.tolist(), g.recurrent_weights.tolist(), g.bias.tolist()


def scalar_lstm_step(p, x, h_prev, y_prev):
    f_g, u_g, c_g, o_g = (_lists(g) for g in (p.forget, p.input_gate, p.candidate, p.output_gate))
    x, h_prev, y_prev = list(x), list(h_prev), list(y_prev)
    h, y = [], []
    for i in range(len(h_prev)):
        f = s_sigmoid(s_affine(*f_g, x, y_prev, i))
        cand = s_act(p.g1, s_affine(*c_g, x, y_prev, i))
        u = s_sigmoid(s_affine(*u_g, x, y_prev, i))
        hi = u * cand + f * h_prev[i]
        o = s_sigmoid(s_affine(*o_g, x, y_prev, i))
        h.append(hi)
        y.append(o * s_act(p.g2, hi))
    return h, y


def scalar_gru_step(p, x, h_prev):
    r_g, u_g, z_g = (_lists(g) for g in (p.reset, p.update, p.candidate))
    x, h_prev = list(x), list(h_prev)
    n = len(h_prev)
    r = [s_sigmoid(s_affine(*r_g, x, h_prev, i)) for i in range(n)]
    h_reset = [h_prev[i] * r[i] for i in range(n)]
    z = [s_act(p.g, s_affine(*z_g, x, h_reset, i)) for i in range(n)]
    u = [s_sigmoid(s_affine(*u_g, x, h_prev, i)) for i in range(n)]
    return [(1 - u[i]) * h_prev[i] + u[i] * z[i] for i in range(n)]


def scalar_network(spec, params, seq):
    """Forward pass by chaining the scalar cells layer by layer."""
    signal = [list(v) for v in seq]
    for layer, width in zip(params.layers, spec.layer_widths):
        out = []
        if spec.cell_kind.value == "lstm":
            h, y = [0.0] * width, [0.0] * width
            for x in signal:
                h, y = scalar_lstm_step(layer, x, h, y)
                out.append(y)
        else:
            h = [0.0] * width
            for x in signal:
                h = scalar_gru_step(layer, x, h)
                out.append(h)
        signal = out
    w = params.head_weights[0].tolist()
    return s_sigmoid(sum(a * b for a, b in zip(w, signal[-1])) + params.head_bias)


def central_differences(loss, flat, step=1e-6):
    flat = np.array(flat, dtype=np.float64)
    out = np.empty_like(flat)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + step
        up = loss(flat)
        flat[i] = orig - step
        down = loss(flat)
        flat[i] = orig
        out[i] = (up - down) / (2 * step)
    return out


def mann_whitney_auc(scores, labels):
    pos = [s for s, y in zip(scores, labels) if y == 1]
    neg = [s for s, y in zip(scores, labels) if y == 0]
    total = 0.0
    for a in pos:
        for b in neg:
            total += 1.0 if a > b else 0.5 if a == b else 0.0
    return total / (len(pos) * len(neg))
