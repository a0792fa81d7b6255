"""Pure-numpy implementations of the hot kernels.

Same call signatures as the compiled extension ``riscf._kernels``; the
active implementation is chosen in :mod:`riscf.backend`.
"""

from __future__ import annotations

import numpy as np


def effective_channels(direct, cascaded, phases):
    """End-to-end channels f[m, k] = h[m, k] + sum_c casc[m, c, k] e^{j phi_c}.

    direct : (M, K) complex, cascaded : (M, C, K) complex, phases : (C,).
    """
    if cascaded.shape[1] == 0:
        return np.array(direct, dtype=np.complex128, copy=True)
    w = np.exp(1j * phases)
    return direct + np.einsum("mck,c->mk", cascaded, w)


def uplink_sinr(assoc, p, f, fhat, noise_w):
    """Matched-filter combining SINR per user.

    assoc : (K, M) 0/1, p : (K,), f/fhat : (M, K) complex, noise_w scalar.
    alpha_k = p_k |sum_m l_km fhat*_mk f_mk|^2 /
              (noise sum_m l_km |fhat_mk|^2
               + sum_{k'!=k} p_k' |sum_m l_km fhat*_mk f_mk'|^2)
    """
    mask = np.asarray(assoc, dtype=np.float64)
    comb = mask * fhat.conj().T              # (K, M): l_km fhat*_mk
    t = comb @ f                             # t[k, k'] = sum_m l_km fhat*_mk f_mk'
    tt = np.abs(t) ** 2
    own = np.diagonal(tt).copy()
    sig = p * own
    interf = tt @ p - p * own
    noise = noise_w * (mask * (np.abs(fhat) ** 2).T).sum(axis=1)
    return sig / (noise + interf)


def mlp_forward(ws, bs, x, out_tanh):
    """Layered affine + activation; hidden layers ReLU, output linear or tanh.

    Returns the list of activations [x, h1, ..., y].
    """
    acts = [x]
    h = x
    last = len(ws) - 1
    for i in range(len(ws)):
        z = h @ ws[i] + bs[i]
        if i < last:
            h = np.maximum(z, 0.0)
        elif out_tanh:
            h = np.tanh(z)
        else:
            h = z
        acts.append(h)
    return acts


def mlp_backward(ws, acts, upstream, out_tanh):
    """Reverse-mode gradients of sum(output * upstream).

    acts is the list returned by mlp_forward.  Returns (dws, dbs, dx).
    """
    n = len(ws)
    dws = [None] * n
    dbs = [None] * n
    y = acts[-1]
    if out_tanh:
        delta = upstream * (1.0 - y * y)
    else:
        delta = np.array(upstream, dtype=np.float64, copy=True)
    dx = None
    for i in range(n - 1, -1, -1):
        dws[i] = acts[i].T @ delta
        dbs[i] = delta.sum(axis=0)
        back = delta @ ws[i].T
        if i > 0:
            delta = back * (acts[i] > 0.0)
        else:
            dx = back
    return dws, dbs, dx


def adam_update(param, grad, m, v, t, lr, beta1, beta2, eps):
    """One bias-corrected adaptive-moment step, in place on param/m/v."""
    m *= beta1
    m += (1.0 - beta1) * grad
    v *= beta2
    v += (1.0 - beta2) * (grad * grad)
    mhat = m / (1.0 - beta1 ** t)
    vhat = v / (1.0 - beta2 ** t)
    param -= lr * mhat / (np.sqrt(vhat) + eps)
