"""Numpy layer primitives with explicit backward passes.

Every ``*_forward`` returns its output and a cache; the matching
``*_backward`` takes the upstream gradient and the cache and returns input
and parameter gradients.
"""

import numpy as np


def sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def dropout_mask(rng, shape, rate):
    if rate <= 0.0:
        return np.ones(shape)
    keep = 1.0 - rate
    return (rng.random(shape) < keep) / keep


def glorot(rng, fan_in, fan_out, shape=None):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape or (fan_in, fan_out))


def log_softmax(x, axis=-1):
    m = np.max(x, axis=axis, keepdims=True)
    z = x - m
    return z - np.log(np.sum(np.exp(z), axis=axis, keepdims=True))


# --- dense + relu ---------------------------------------------------------

def relu_mlp_forward(X, W, b):
    Z = X @ W + b
    return np.maximum(Z, 0.0), (X, W, Z)


def relu_mlp_backward(dY, cache):
    X, W, Z = cache
    dZ = dY * (Z > 0)
    return dZ @ W.T, X.T @ dZ, dZ.sum(axis=0)


# --- character convolution -----------------------------------------------

def char_cnn_forward(E, lengths, W, b, window):
    """E: (n, L + window - 1, dc) padded char embeddings; max-pool then tanh.

    Positions past each word's length are excluded from the pool.
    """
    n, padded, dc = E.shape
    L = padded - window + 1
    win = np.concatenate([E[:, j:j + L, :] for j in range(window)], axis=2)  # (n, L, window*dc)
    conv = win @ W + b
    valid = np.arange(L)[None, :] < np.maximum(lengths, 1)[:, None]
    masked = np.where(valid[:, :, None], conv, -np.inf)
    idx = np.argmax(masked, axis=1)  # (n, F)
    pooled = np.take_along_axis(conv, idx[:, None, :], axis=1)[:, 0, :]
    out = np.tanh(pooled)
    return out, (win, idx, out, E.shape, W, window)


def char_cnn_backward(dY, cache):
    win, idx, out, eshape, W, window = cache
    n, L, _ = win.shape
    dpool = dY * (1.0 - out ** 2)  # (n, F)
    dconv = np.zeros((n, L, dpool.shape[1]))
    np.put_along_axis(dconv, idx[:, None, :], dpool[:, None, :], axis=1)
    dW = win.reshape(n * L, -1).T @ dconv.reshape(n * L, -1)
    db = dconv.sum(axis=(0, 1))
    dwin = dconv @ W.T  # (n, L, window*dc)
    dE = np.zeros(eshape)
    dc = eshape[2]
    for j in range(window):
        dE[:, j:j + L, :] += dwin[:, :, j * dc:(j + 1) * dc]
    return dE, dW, db


# --- LSTM ------------------------------------------------------------------

def lstm_forward(X, Wx, Wh, b, hmask=None):
    """Unidirectional LSTM over rows of X; gate blocks ordered i, f, o, g.

    ``hmask`` is a per-unit recurrent dropout mask shared over time steps.
    """
    T = X.shape[0]
    H = Wh.shape[0]
    Xp = X @ Wx + b
    hs = np.zeros((T + 1, H))
    cs = np.zeros((T + 1, H))
    gates = np.empty((T, 4 * H))
    tcs = np.empty((T, H))
    Whm = Wh if hmask is None else hmask[:, None] * Wh
    for t in range(T):
        a = Xp[t] + hs[t] @ Whm
        gt = gates[t]
        gt[:3 * H] = 0.5 * (1.0 + np.tanh(0.5 * a[:3 * H]))
        gt[3 * H:] = np.tanh(a[3 * H:])
        cs[t + 1] = gt[H:2 * H] * cs[t] + gt[:H] * gt[3 * H:]
        tcs[t] = np.tanh(cs[t + 1])
        hs[t + 1] = gt[2 * H:3 * H] * tcs[t]
    return hs[1:].copy(), (X, Wx, Wh, hmask, hs, cs, gates, tcs)


def lstm_backward(dHs, cache):
    X, Wx, Wh, hmask, hs, cs, gates, tcs = cache
    T = X.shape[0]
    H = Wh.shape[0]
    Whm = Wh if hmask is None else hmask[:, None] * Wh
    WhmT = Whm.T.copy()
    i, f, o, g = gates[:, :H], gates[:, H:2 * H], gates[:, 2 * H:3 * H], gates[:, 3 * H:]
    dtc = 1.0 - tcs ** 2
    dsig = gates[:, :3 * H] * (1.0 - gates[:, :3 * H])
    dtanh_g = 1.0 - g ** 2
    dXp = np.empty((T, 4 * H))
    dh_next = np.zeros(H)
    dc_next = np.zeros(H)
    for t in range(T - 1, -1, -1):
        dh = dHs[t] + dh_next
        dc = dc_next + dh * o[t] * dtc[t]
        da = dXp[t]
        da[:H] = dc * g[t]
        da[H:2 * H] = dc * cs[t]
        da[2 * H:3 * H] = dh * tcs[t]
        da[:3 * H] *= dsig[t]
        da[3 * H:] = dc * i[t] * dtanh_g[t]
        dc_next = dc * f[t]
        dh_next = da @ WhmT
    hp = hs[:-1] if hmask is None else hs[:-1] * hmask
    dWh = hp.T @ dXp
    return dXp @ Wx.T, X.T @ dXp, dWh, dXp.sum(axis=0)


# --- biaffine ----------------------------------------------------------------

def biaffine_arc_forward(Ah, Ad, W, U, V, b):
    """S[h, d] = Ah[h] W Ad[d] + U.Ah[h] + V.Ad[d] + b."""
    S = Ah @ W @ Ad.T + (Ah @ U)[:, None] + (Ad @ V)[None, :] + b[0]
    return S, (Ah, Ad, W, U, V)


def biaffine_arc_backward(dS, cache):
    Ah, Ad, W, U, V = cache
    du = dS.sum(axis=1)  # per head row
    dv = dS.sum(axis=0)  # per dependent column
    dAh = dS @ Ad @ W.T + np.outer(du, U)
    dAd = dS.T @ Ah @ W + np.outer(dv, V)
    dW = Ah.T @ dS @ Ad
    return dAh, dAd, dW, Ah.T @ du, Ad.T @ dv, np.array([dS.sum()])


def biaffine_label_full(Lh, Ld, W, U, V, b):
    """Label scores for every (head, dependent) pair: shape (heads, deps, labels)."""
    nl, dl, _ = W.shape
    T = (Lh @ W.transpose(1, 0, 2).reshape(dl, nl * dl)).reshape(-1, nl, dl)  # (H, L, dl)
    bil = np.einsum("hrj,dj->hdr", T, Ld)
    return bil + (Lh @ U.T)[:, None, :] + (Ld @ V.T)[None, :, :] + b


def biaffine_label_pairs_forward(G, D, W, U, V, b):
    """Label scores for aligned rows: Z[k, r] = G[k] W[r] D[k] + U[r].G[k] + V[r].D[k] + b[r]."""
    Z = np.einsum("ki,rij,kj->kr", G, W, D, optimize=True) + G @ U.T + D @ V.T + b
    return Z, (G, D, W, U, V)


def biaffine_label_pairs_backward(dZ, cache):
    G, D, W, U, V = cache
    dW = np.einsum("kr,ki,kj->rij", dZ, G, D, optimize=True)
    dG = np.einsum("kr,rij,kj->ki", dZ, W, D, optimize=True) + dZ @ U
    dD = np.einsum("kr,rij,ki->kj", dZ, W, G, optimize=True) + dZ @ V
    return dG, dD, dW, dZ.T @ G, dZ.T @ D, dZ.sum(axis=0)
