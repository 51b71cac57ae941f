"""Slow, independent reference implementations used only by the tests."""
import itertools
from fractions import Fraction

import numpy as np


def triple_loop_matmul(a, b):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    out = np.zeros((a.shape[0], b.shape[1]))
    for i in range(a.shape[0]):
        for j in range(b.shape[1]):
            s = 0.0
            for k in range(a.shape[1]):
                s += float(a[i, k]) * float(b[k, j])
            out[i, j] = s
    return out


def loop_forward(weights, biases, x):
    """Per-sample, per-unit MLP forward pass (ReLU hidden, linear output)."""
    out = []
    for row in np.asarray(x, dtype=float):
        h = list(row)
        for l, (W, b) in enumerate(zip(weights, biases)):
            z = [sum(h[i] * W[i, j] for i in range(len(h))) + b[j] for j in range(W.shape[1])]
            h = z if l == len(weights) - 1 else [max(v, 0.0) for v in z]
        out.append(h)
    return np.array(out)


def central_difference(f, x, step=1e-5):
    """Gradient of scalar ``f`` at array ``x`` by central differences."""
    x = np.array(x, dtype=float)
    grad = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        orig = x[idx]
        x[idx] = orig + step
        hi = f(x)
        x[idx] = orig - step
        lo = f(x)
        x[idx] = orig
        grad[idx] = (hi - lo) / (2 * step)
    return grad


def max_rel_error(analytic, numeric, floor=1e-8):
    analytic = np.asarray(analytic)
    numeric = np.asarray(numeric)
    scale = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return float(np.max(np.abs(analytic - numeric) / scale))


def loop_loss_P(U, V, W):
    total = 0.0
    for i in range(U.shape[0]):
        for j in range(V.shape[0]):
            total += W[i, j] * sum((U[i, t] - V[j, t]) ** 2 for t in range(U.shape[1]))
    return total


def loop_loss_Q(H, U, V, S):
    total = 0.0
    for i in range(H.shape[0]):
        for j in range(U.shape[0]):
            if S[i, j] == 0:
                continue
            gu = sum((H[i, t] - np.tanh(U[j, t])) ** 2 for t in range(H.shape[1]))
            gv = sum((H[i, t] - np.tanh(V[j, t])) ** 2 for t in range(H.shape[1]))
            total += S[i, j] * (gu + gv)
    return total


def loop_loss_R(H, Y, R, M1, M2, beta1, beta2):
    n, c = H.shape
    intra = inter = 0.0
    for i in range(n):
        for t in range(c):
            fit1 = sum(Y[i, j] * M1[j, t] for j in range(Y.shape[1]))
            fit2 = sum(R[i, j] * M2[j, t] for j in range(R.shape[1]))
            intra += (np.sqrt(beta1) * H[i, t] - fit1) ** 2
            inter += (np.sqrt(beta2) * H[i, t] - fit2) ** 2
    return intra, inter


def best_balanced_column(q):
    """Exhaustive max of h'q over columns with n/2 entries +1 and n/2 entries -1."""
    n = len(q)
    best = -np.inf
    for plus in itertools.combinations(range(n), n // 2):
        h = -np.ones(n)
        h[list(plus)] = 1
        best = max(best, float(h @ q))
    return best


def definition_ap(relevance, top_k=None):
    rel = list(relevance)[: top_k if top_k is not None else len(relevance)]
    hits = 0
    total = 0.0
    for i, r in enumerate(rel):
        if r:
            hits += 1
            total += hits / (i + 1)
    return total / hits if hits else 0.0


def exact_ap(relevance):
    hits = 0
    total = Fraction(0)
    for i, r in enumerate(relevance):
        if r:
            hits += 1
            total += Fraction(hits, i + 1)
    return total / hits if hits else Fraction(0)


def unpacked_hamming(a, b):
    return sum(1 for x, y in zip(a, b) if x != y)
