"""
Hot inner loops: LSTM recurrence, child-sum Tree-LSTM sweep, and the
generated-filter convolution with max pooling over windows.

Each kernel has a numba-compiled form and a pure-numpy form. Which one the
model uses is fixed at import time by ``ADACONV_SRL_NUMBA`` (see ``_accel``).
The ``*_py`` / ``*_np`` names are always the uncompiled originals so the
benchmark and the equivalence tests can run both paths side by side.

Gate layout for the LSTM is ``[input, forget, output, candidate]``; for the
Tree-LSTM the stacked projection blocks are ``[r, i, f, o, u]``.
"""

import numpy as np

from ._accel import NUMBA_ENABLED, maybe_njit


def _sig(x):
    e = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


_sig_k = maybe_njit(_sig)


# --------------------------------------------------------------------------
# LSTM recurrence. Z already holds x_t W^T + b for every step.
# --------------------------------------------------------------------------


def lstm_forward_py(Z, U):
    m, h4 = Z.shape
    h = h4 // 4
    H = np.zeros((m, h))
    C = np.zeros((m, h))
    G = np.zeros((m, h4))
    hp = np.zeros(h)
    cp = np.zeros(h)
    for t in range(m):
        z = Z[t] + np.dot(U, hp)
        i = _sig_k(z[0:h])
        f = _sig_k(z[h:2 * h])
        o = _sig_k(z[2 * h:3 * h])
        u = np.tanh(z[3 * h:4 * h])
        c = i * u + f * cp
        hn = o * np.tanh(c)
        G[t, 0:h] = i
        G[t, h:2 * h] = f
        G[t, 2 * h:3 * h] = o
        G[t, 3 * h:4 * h] = u
        C[t] = c
        H[t] = hn
        hp = hn
        cp = c
    return H, C, G


def lstm_backward_py(dH, U, UT, H, C, G):
    m, h = H.shape
    dZ = np.zeros((m, 4 * h))
    dU = np.zeros((4 * h, h))
    dh_next = np.zeros(h)
    dc_next = np.zeros(h)
    for t in range(m - 1, -1, -1):
        i = G[t, 0:h]
        f = G[t, h:2 * h]
        o = G[t, 2 * h:3 * h]
        u = G[t, 3 * h:4 * h]
        tc = np.tanh(C[t])
        dh = dH[t] + dh_next
        do = dh * tc
        dc = dc_next + dh * o * (1.0 - tc * tc)
        if t > 0:
            cprev = C[t - 1]
        else:
            cprev = np.zeros(h)
        dz = np.empty(4 * h)
        dz[0:h] = dc * u * i * (1.0 - i)
        dz[h:2 * h] = dc * cprev * f * (1.0 - f)
        dz[2 * h:3 * h] = do * o * (1.0 - o)
        dz[3 * h:4 * h] = dc * i * (1.0 - u * u)
        dZ[t] = dz
        if t > 0:
            dU += np.outer(dz, H[t - 1])
        dh_next = np.dot(UT, dz)
        dc_next = dc * f
    return dZ, dU


# --------------------------------------------------------------------------
# Child-sum Tree-LSTM with relation-aware child gates and one forget gate per
# child. Per-edge quantities are stored at the child index (each node has one
# parent). ``order`` lists nodes children-first; children of k are
# ``child_idx[child_ptr[k]:child_ptr[k+1]]``.
# --------------------------------------------------------------------------


def tree_forward_py(WV, Us, B, EB, order, child_ptr, child_idx):
    m = WV.shape[0]
    d = Us.shape[1]
    H = np.zeros((m, d))
    C = np.zeros((m, d))
    HT = np.zeros((m, d))
    I = np.zeros((m, d))
    O = np.zeros((m, d))
    Uc = np.zeros((m, d))
    R = np.zeros((m, d))
    Fg = np.zeros((m, d))
    for pos in range(order.shape[0]):
        k = order[pos]
        wr = WV[k, 0:d]
        wf = WV[k, 2 * d:3 * d]
        ht = np.zeros(d)
        fsum = np.zeros(d)
        for e in range(child_ptr[k], child_ptr[k + 1]):
            j = child_idx[e]
            r = _sig_k(wr + np.dot(Us[0], H[j]) + EB[j])
            f = _sig_k(wf + np.dot(Us[2], H[j]) + B[1])
            R[j] = r
            Fg[j] = f
            ht += r * H[j]
            fsum += f * C[j]
        i = _sig_k(WV[k, d:2 * d] + np.dot(Us[1], ht) + B[0])
        o = _sig_k(WV[k, 3 * d:4 * d] + np.dot(Us[3], ht) + B[2])
        u = np.tanh(WV[k, 4 * d:5 * d] + np.dot(Us[4], ht) + B[3])
        c = i * u + fsum
        C[k] = c
        H[k] = o * np.tanh(c)
        HT[k] = ht
        I[k] = i
        O[k] = o
        Uc[k] = u
    return H, C, HT, I, O, Uc, R, Fg


def tree_backward_py(dH_out, UsT, H, C, HT, I, O, Uc, R, Fg, order, child_ptr, child_idx):
    m, d = H.shape
    dH = dH_out.copy()
    dC = np.zeros((m, d))
    dWV = np.zeros((m, 5 * d))
    dUs = np.zeros((5, d, d))
    dB = np.zeros((4, d))
    dEB = np.zeros((m, d))
    for pos in range(order.shape[0] - 1, -1, -1):
        k = order[pos]
        tc = np.tanh(C[k])
        dh = dH[k]
        i = I[k]
        o = O[k]
        u = Uc[k]
        do = dh * tc
        dc = dC[k] + dh * o * (1.0 - tc * tc)
        dzi = dc * u * i * (1.0 - i)
        dzo = do * o * (1.0 - o)
        dzu = dc * i * (1.0 - u * u)
        dWV[k, d:2 * d] = dzi
        dWV[k, 3 * d:4 * d] = dzo
        dWV[k, 4 * d:5 * d] = dzu
        dB[0] += dzi
        dB[2] += dzo
        dB[3] += dzu
        ht = HT[k]
        dUs[1] += np.outer(dzi, ht)
        dUs[3] += np.outer(dzo, ht)
        dUs[4] += np.outer(dzu, ht)
        dht = np.dot(UsT[1], dzi) + np.dot(UsT[3], dzo) + np.dot(UsT[4], dzu)
        for e in range(child_ptr[k], child_ptr[k + 1]):
            j = child_idx[e]
            f = Fg[j]
            r = R[j]
            dC[j] += dc * f
            dzf = dc * C[j] * f * (1.0 - f)
            dzr = dht * H[j] * r * (1.0 - r)
            dWV[k, 2 * d:3 * d] += dzf
            dWV[k, 0:d] += dzr
            dB[1] += dzf
            dEB[j] = dzr
            dUs[2] += np.outer(dzf, H[j])
            dUs[0] += np.outer(dzr, H[j])
            dH[j] += dht * r + np.dot(UsT[2], dzf) + np.dot(UsT[0], dzr)
    return dWV, dUs, dB, dEB


# --------------------------------------------------------------------------
# Generated-filter convolution + max over windows.
# F: (P, n, q) one filter bank per position; W: (nw, q) unfolded windows.
# Returns the pre-activation maximum and the first window reaching it.
# --------------------------------------------------------------------------


def conv_pool_forward_loops(F, W):
    P, n, q = F.shape
    nw = W.shape[0]
    out = np.empty((P, n))
    arg = np.zeros((P, n), dtype=np.int64)
    for k in range(P):
        for i in range(n):
            best = -np.inf
            best_w = 0
            for w in range(nw):
                s = 0.0
                for t in range(q):
                    s += F[k, i, t] * W[w, t]
                if s > best:
                    best = s
                    best_w = w
            out[k, i] = best
            arg[k, i] = best_w
    return out, arg


def conv_pool_backward_loops(g, F, W, arg):
    P, n, q = F.shape
    dF = np.zeros((P, n, q))
    dW = np.zeros(W.shape)
    for k in range(P):
        for i in range(n):
            gi = g[k, i]
            if gi == 0.0:
                continue
            w = arg[k, i]
            for t in range(q):
                dF[k, i, t] = gi * W[w, t]
                dW[w, t] += gi * F[k, i, t]
    return dF, dW


def conv_pool_forward_np(F, W):
    P, n, q = F.shape
    S = (F.reshape(P * n, q) @ W.T).reshape(P, n, W.shape[0])
    arg = S.argmax(axis=-1)
    out = np.take_along_axis(S, arg[..., None], axis=-1)[..., 0]
    return out, arg


def conv_pool_backward_np(g, F, W, arg):
    dF = g[..., None] * W[arg]
    dW = np.zeros(W.shape)
    np.add.at(dW, arg.reshape(-1), (g[..., None] * F).reshape(-1, F.shape[-1]))
    return dF, dW


lstm_forward = maybe_njit(lstm_forward_py)
lstm_backward = maybe_njit(lstm_backward_py)
tree_forward = maybe_njit(tree_forward_py)
tree_backward = maybe_njit(tree_backward_py)

# the forward pass is one batched matmul, which BLAS does faster than a loop
# kernel (see benchmarks/bench_kernels.py); the scatter in backward is not
conv_pool_forward = conv_pool_forward_np
if NUMBA_ENABLED:
    conv_pool_backward = maybe_njit(conv_pool_backward_loops)
else:
    conv_pool_backward = conv_pool_backward_np
