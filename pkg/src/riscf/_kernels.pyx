# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels: end-to-end channel assembly, combining SINR,
layered net forward/backward (BLAS-backed), and the optimizer step.

Signatures mirror riscf._kernels_py exactly; riscf.backend picks one.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport cos, exp, sin, sqrt, tanh
from scipy.linalg.cython_blas cimport dgemm

cnp.import_array()


def effective_channels(const double complex[:, ::1] direct,
                       const double complex[:, :, ::1] cascaded,
                       const double[::1] phases):
    cdef Py_ssize_t m = direct.shape[0], k = direct.shape[1]
    cdef Py_ssize_t c = cascaded.shape[1]
    out_arr = np.empty((m, k), dtype=np.complex128)
    cdef double complex[:, ::1] out = out_arr
    cdef double complex[::1] w = np.empty(c, dtype=np.complex128)
    cdef Py_ssize_t i, j, q
    cdef double complex acc
    for q in range(c):
        w[q] = cos(phases[q]) + 1j * sin(phases[q])
    for i in range(m):
        for j in range(k):
            acc = direct[i, j]
            for q in range(c):
                acc = acc + cascaded[i, q, j] * w[q]
            out[i, j] = acc
    return out_arr


def uplink_sinr(const double[:, ::1] assoc, const double[::1] p,
                const double complex[:, ::1] f,
                const double complex[:, ::1] fhat, double noise_w):
    cdef Py_ssize_t k = assoc.shape[0], m = assoc.shape[1]
    out_arr = np.empty(k, dtype=np.float64)
    cdef double[::1] out = out_arr
    cdef Py_ssize_t ki, kp, mi
    cdef double complex cross, conj_fhat
    cdef double sig, noise, interf, mag
    for ki in range(k):
        noise = 0.0
        sig = 0.0
        interf = 0.0
        for kp in range(k):
            cross = 0.0
            for mi in range(m):
                if assoc[ki, mi] != 0.0:
                    conj_fhat = fhat[mi, ki].conjugate()
                    cross = cross + conj_fhat * f[mi, kp]
            mag = cross.real * cross.real + cross.imag * cross.imag
            if kp == ki:
                sig = p[ki] * mag
            else:
                interf += p[kp] * mag
        for mi in range(m):
            if assoc[ki, mi] != 0.0:
                noise += (fhat[mi, ki].real * fhat[mi, ki].real
                          + fhat[mi, ki].imag * fhat[mi, ki].imag)
        out[ki] = sig / (noise_w * noise + interf)
    return out_arr


cdef void _gemm_rowmajor(const double[:, ::1] a, const double[:, ::1] b,
                         double[:, ::1] c_out) noexcept nogil:
    # row-major C = A @ B  <=>  column-major C^T = B^T @ A^T
    cdef int m = <int> a.shape[0], k = <int> a.shape[1], n = <int> b.shape[1]
    cdef double alpha = 1.0, beta = 0.0
    dgemm(b'N', b'N', &n, &m, &k, &alpha, <double*> &b[0, 0], &n,
          <double*> &a[0, 0], &k, &beta, &c_out[0, 0], &n)


cdef void _gemm_at_b(const double[:, ::1] a, const double[:, ::1] b,
                     double[:, ::1] c_out) noexcept nogil:
    # row-major C = A^T @ B, a: (batch, in), b: (batch, out), c: (in, out)
    cdef int bt = <int> a.shape[0], din = <int> a.shape[1], dout = <int> b.shape[1]
    cdef double alpha = 1.0, beta = 0.0
    dgemm(b'N', b'T', &dout, &din, &bt, &alpha, <double*> &b[0, 0], &dout,
          <double*> &a[0, 0], &din, &beta, &c_out[0, 0], &dout)


cdef void _gemm_a_bt(const double[:, ::1] a, const double[:, ::1] b,
                     double[:, ::1] c_out) noexcept nogil:
    # row-major C = A @ B^T, a: (batch, out), b: (in, out), c: (batch, in)
    cdef int bt = <int> a.shape[0], dout = <int> a.shape[1], din = <int> b.shape[0]
    cdef double alpha = 1.0, beta = 0.0
    dgemm(b'T', b'N', &din, &bt, &dout, &alpha, <double*> &b[0, 0], &dout,
          <double*> &a[0, 0], &dout, &beta, &c_out[0, 0], &din)


def mlp_forward(list ws, list bs, const double[:, ::1] x, bint out_tanh):
    cdef Py_ssize_t n_layers = len(ws)
    cdef Py_ssize_t batch = x.shape[0]
    acts = [np.asarray(x)]
    cdef const double[:, ::1] h = x
    cdef double[:, ::1] z
    cdef const double[:, ::1] w
    cdef const double[::1] b
    cdef Py_ssize_t li, i, j
    cdef double val
    for li in range(n_layers):
        w = ws[li]
        b = bs[li]
        z_arr = np.empty((batch, w.shape[1]), dtype=np.float64)
        z = z_arr
        _gemm_rowmajor(h, w, z)
        if li < n_layers - 1:
            for i in range(batch):
                for j in range(w.shape[1]):
                    val = z[i, j] + b[j]
                    z[i, j] = val if val > 0.0 else 0.0
        elif out_tanh:
            for i in range(batch):
                for j in range(w.shape[1]):
                    z[i, j] = tanh(z[i, j] + b[j])
        else:
            for i in range(batch):
                for j in range(w.shape[1]):
                    z[i, j] = z[i, j] + b[j]
        acts.append(z_arr)
        h = z
    return acts


def mlp_backward(list ws, list acts, const double[:, ::1] upstream,
                 bint out_tanh):
    cdef Py_ssize_t n_layers = len(ws)
    cdef Py_ssize_t batch = upstream.shape[0]
    cdef Py_ssize_t li, i, j
    dws = [None] * n_layers
    dbs = [None] * n_layers

    cdef const double[:, ::1] y = acts[n_layers]
    delta_arr = np.empty((batch, upstream.shape[1]), dtype=np.float64)
    cdef double[:, ::1] delta = delta_arr
    if out_tanh:
        for i in range(batch):
            for j in range(upstream.shape[1]):
                delta[i, j] = upstream[i, j] * (1.0 - y[i, j] * y[i, j])
    else:
        for i in range(batch):
            for j in range(upstream.shape[1]):
                delta[i, j] = upstream[i, j]

    cdef const double[:, ::1] h_prev, w, mask
    cdef double[:, ::1] dw, back
    cdef double[::1] db
    cdef double s
    dx_arr = None
    for li in range(n_layers - 1, -1, -1):
        h_prev = acts[li]
        w = ws[li]
        dw_arr = np.empty((w.shape[0], w.shape[1]), dtype=np.float64)
        dw = dw_arr
        _gemm_at_b(h_prev, delta, dw)
        db_arr = np.empty(w.shape[1], dtype=np.float64)
        db = db_arr
        for j in range(w.shape[1]):
            s = 0.0
            for i in range(batch):
                s += delta[i, j]
            db[j] = s
        dws[li] = dw_arr
        dbs[li] = db_arr
        back_arr = np.empty((batch, w.shape[0]), dtype=np.float64)
        back = back_arr
        _gemm_a_bt(delta, w, back)
        if li > 0:
            mask = acts[li]
            for i in range(batch):
                for j in range(w.shape[0]):
                    if mask[i, j] <= 0.0:
                        back[i, j] = 0.0
            delta_arr = back_arr
            delta = back
        else:
            dx_arr = back_arr
    return dws, dbs, dx_arr


def adam_update(double[::1] param, const double[::1] grad, double[::1] m,
                double[::1] v, long t, double lr, double beta1, double beta2,
                double eps):
    cdef Py_ssize_t n = param.shape[0]
    cdef double bc1 = 1.0 - beta1 ** t
    cdef double bc2 = 1.0 - beta2 ** t
    cdef Py_ssize_t i
    cdef double g, mhat, vhat
    for i in range(n):
        g = grad[i]
        m[i] = beta1 * m[i] + (1.0 - beta1) * g
        v[i] = beta2 * v[i] + (1.0 - beta2) * g * g
        mhat = m[i] / bc1
        vhat = v[i] / bc2
        param[i] -= lr * mhat / (sqrt(vhat) + eps)
