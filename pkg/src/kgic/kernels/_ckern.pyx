# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled twin of the numpy reference kernels (see _pykern.py).

Same contract: scoring of all rows against one target, and one SGD step on
the self-adversarial negative-sampling loss with gradients taken against
the parameters at batch start and applied once at the end.
"""

import numpy as np

from libc.math cimport cos, exp, fabs, log1p, sin, sqrt

BACKEND = "compiled"

cdef double _EPS = 1e-12


cdef inline double _softplus(double x) nogil:
    if x > 0:
        return x + log1p(exp(-x))
    return log1p(exp(x))


cdef inline double _sigmoid(double x) nogil:
    if x >= 0:
        return 1.0 / (1.0 + exp(-x))
    cdef double ex = exp(x)
    return ex / (1.0 + ex)


def neg_dist_to_rows(double[:, ::1] matrix, double[::1] target, int p):
    """-||target - row||_p for every row; p in {1, 2}."""
    cdef Py_ssize_t n = matrix.shape[0]
    cdef Py_ssize_t dim = matrix.shape[1]
    out_arr = np.empty(n, dtype=np.float64)
    cdef double[::1] out = out_arr
    cdef Py_ssize_t i, j
    cdef double acc, diff
    with nogil:
        for i in range(n):
            acc = 0.0
            if p == 1:
                for j in range(dim):
                    acc += fabs(target[j] - matrix[i, j])
                out[i] = -acc
            else:
                for j in range(dim):
                    diff = target[j] - matrix[i, j]
                    acc += diff * diff
                out[i] = -sqrt(acc)
    return out_arr


cdef void _neg_weights(double[:, ::1] d_neg, double alpha, double[:, ::1] w) nogil:
    """Softmax over each row of alpha * (-d_neg)."""
    cdef Py_ssize_t b = d_neg.shape[0]
    cdef Py_ssize_t n = d_neg.shape[1]
    cdef Py_ssize_t i, j
    cdef double m, s
    for i in range(b):
        m = -alpha * d_neg[i, 0]
        for j in range(1, n):
            if -alpha * d_neg[i, j] > m:
                m = -alpha * d_neg[i, j]
        s = 0.0
        for j in range(n):
            w[i, j] = exp(-alpha * d_neg[i, j] - m)
            s += w[i, j]
        for j in range(n):
            w[i, j] /= s


def transe_train_batch(
    double[:, ::1] ent,
    double[:, ::1] rel,
    long[:, ::1] pos,
    long[:, :, ::1] neg,
    double gamma,
    double alpha,
    double lr,
    int p,
):
    """One translation-model SGD step over positives (B,3) and negatives (B,N,3)."""
    cdef Py_ssize_t b = pos.shape[0]
    cdef Py_ssize_t n = neg.shape[1]
    cdef Py_ssize_t dim = ent.shape[1]
    cdef Py_ssize_t i, j, k

    d_pos_arr = np.empty(b, dtype=np.float64)
    d_neg_arr = np.empty((b, n), dtype=np.float64)
    g_pos_arr = np.empty((b, dim), dtype=np.float64)
    g_neg_arr = np.empty((b, n, dim), dtype=np.float64)
    w_arr = np.empty((b, n), dtype=np.float64)
    cdef double[::1] d_pos = d_pos_arr
    cdef double[:, ::1] d_neg = d_neg_arr
    cdef double[:, ::1] g_pos = g_pos_arr
    cdef double[:, :, ::1] g_neg = g_neg_arr
    cdef double[:, ::1] w = w_arr

    cdef double u, acc, inv, loss, c, coef
    cdef long h, r, t

    with nogil:
        # distances and unit gradients from the batch-start parameters
        for i in range(b):
            h = pos[i, 0]; r = pos[i, 1]; t = pos[i, 2]
            acc = 0.0
            for k in range(dim):
                u = ent[h, k] + rel[r, k] - ent[t, k]
                g_pos[i, k] = u
                acc += fabs(u) if p == 1 else u * u
            d_pos[i] = acc if p == 1 else sqrt(acc)
            if p == 1:
                for k in range(dim):
                    g_pos[i, k] = 1.0 if g_pos[i, k] > 0 else (-1.0 if g_pos[i, k] < 0 else 0.0)
            else:
                inv = 1.0 / (d_pos[i] if d_pos[i] > _EPS else _EPS)
                for k in range(dim):
                    g_pos[i, k] *= inv
        for i in range(b):
            for j in range(n):
                h = neg[i, j, 0]; r = neg[i, j, 1]; t = neg[i, j, 2]
                acc = 0.0
                for k in range(dim):
                    u = ent[h, k] + rel[r, k] - ent[t, k]
                    g_neg[i, j, k] = u
                    acc += fabs(u) if p == 1 else u * u
                d_neg[i, j] = acc if p == 1 else sqrt(acc)
                if p == 1:
                    for k in range(dim):
                        g_neg[i, j, k] = 1.0 if g_neg[i, j, k] > 0 else (-1.0 if g_neg[i, j, k] < 0 else 0.0)
                else:
                    inv = 1.0 / (d_neg[i, j] if d_neg[i, j] > _EPS else _EPS)
                    for k in range(dim):
                        g_neg[i, j, k] *= inv

        _neg_weights(d_neg, alpha, w)

        loss = 0.0
        for i in range(b):
            loss += _softplus(d_pos[i] - gamma)
            for j in range(n):
                loss += w[i, j] * _softplus(gamma - d_neg[i, j])
        loss /= b

        # apply accumulated updates
        for i in range(b):
            h = pos[i, 0]; r = pos[i, 1]; t = pos[i, 2]
            c = _sigmoid(d_pos[i] - gamma) / b
            coef = lr * c
            for k in range(dim):
                ent[h, k] -= coef * g_pos[i, k]
                rel[r, k] -= coef * g_pos[i, k]
                ent[t, k] += coef * g_pos[i, k]
        for i in range(b):
            for j in range(n):
                h = neg[i, j, 0]; r = neg[i, j, 1]; t = neg[i, j, 2]
                c = -w[i, j] * _sigmoid(gamma - d_neg[i, j]) / b
                coef = lr * c
                for k in range(dim):
                    ent[h, k] -= coef * g_neg[i, j, k]
                    rel[r, k] -= coef * g_neg[i, j, k]
                    ent[t, k] += coef * g_neg[i, j, k]
    return loss


def rotate_train_batch(
    double[:, ::1] ent,
    double[:, ::1] phases,
    long[:, ::1] pos,
    long[:, :, ::1] neg,
    double gamma,
    double alpha,
    double lr,
):
    """One rotation-model SGD step; entity rows are [real half | imag half]."""
    cdef Py_ssize_t b = pos.shape[0]
    cdef Py_ssize_t n = neg.shape[1]
    cdef Py_ssize_t half = ent.shape[1] // 2
    cdef Py_ssize_t i, j, k
    cdef Py_ssize_t m = b * (n + 1)

    # flat layout: slot i*(n+1) is the positive, then its n corruptions
    d_arr = np.empty(m, dtype=np.float64)
    gh_arr = np.empty((m, 2 * half), dtype=np.float64)   # d(dist)/d(head re|im)
    gt_arr = np.empty((m, 2 * half), dtype=np.float64)   # d(dist)/d(tail re|im)
    gth_arr = np.empty((m, half), dtype=np.float64)      # d(dist)/d(theta)
    w_arr = np.empty((b, n), dtype=np.float64)
    d_neg_arr = np.empty((b, n), dtype=np.float64)
    cdef double[::1] d = d_arr
    cdef double[:, ::1] gh = gh_arr
    cdef double[:, ::1] gt = gt_arr
    cdef double[:, ::1] gth = gth_arr
    cdef double[:, ::1] w = w_arr
    cdef double[:, ::1] d_neg = d_neg_arr

    cdef double a, bb, c, s, tre, tim, hr_re, hr_im, vre, vim, acc, inv, loss, coef
    cdef long h, r, t
    cdef Py_ssize_t slot

    with nogil:
        for i in range(b):
            for j in range(n + 1):
                slot = i * (n + 1) + j
                if j == 0:
                    h = pos[i, 0]; r = pos[i, 1]; t = pos[i, 2]
                else:
                    h = neg[i, j - 1, 0]; r = neg[i, j - 1, 1]; t = neg[i, j - 1, 2]
                acc = 0.0
                for k in range(half):
                    a = ent[h, k]; bb = ent[h, half + k]
                    c = cos(phases[r, k]); s = sin(phases[r, k])
                    tre = ent[t, k]; tim = ent[t, half + k]
                    hr_re = a * c - bb * s
                    hr_im = a * s + bb * c
                    vre = hr_re - tre
                    vim = hr_im - tim
                    acc += vre * vre + vim * vim
                    # unscaled gradients; divided by the distance below
                    gh[slot, k] = vre * c + vim * s
                    gh[slot, half + k] = -vre * s + vim * c
                    gt[slot, k] = -vre
                    gt[slot, half + k] = -vim
                    gth[slot, k] = -vre * hr_im + vim * hr_re
                d[slot] = sqrt(acc)
                inv = 1.0 / (d[slot] if d[slot] > _EPS else _EPS)
                if d[slot] <= 0:
                    inv = 0.0
                for k in range(half):
                    gh[slot, k] *= inv
                    gh[slot, half + k] *= inv
                    gt[slot, k] *= inv
                    gt[slot, half + k] *= inv
                    gth[slot, k] *= inv
                if j > 0:
                    d_neg[i, j - 1] = d[slot]

        _neg_weights(d_neg, alpha, w)

        loss = 0.0
        for i in range(b):
            loss += _softplus(d[i * (n + 1)] - gamma)
            for j in range(n):
                loss += w[i, j] * _softplus(gamma - d_neg[i, j])
        loss /= b

        for i in range(b):
            for j in range(n + 1):
                slot = i * (n + 1) + j
                if j == 0:
                    h = pos[i, 0]; r = pos[i, 1]; t = pos[i, 2]
                    coef = lr * _sigmoid(d[slot] - gamma) / b
                else:
                    h = neg[i, j - 1, 0]; r = neg[i, j - 1, 1]; t = neg[i, j - 1, 2]
                    coef = -lr * w[i, j - 1] * _sigmoid(gamma - d[slot]) / b
                for k in range(half):
                    ent[h, k] -= coef * gh[slot, k]
                    ent[h, half + k] -= coef * gh[slot, half + k]
                    ent[t, k] -= coef * gt[slot, k]
                    ent[t, half + k] -= coef * gt[slot, half + k]
                    phases[r, k] -= coef * gth[slot, k]
    return loss
