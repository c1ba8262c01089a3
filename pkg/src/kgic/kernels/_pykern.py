"""Pure-numpy reference implementation of the embedding kernels.

Semantics shared with the compiled twin in ``_ckern.pyx``:

* ``neg_dist_to_rows``: scores every row of a matrix against one target
  vector, score = -||target - row||_p.
* ``*_train_batch``: one SGD step on the self-adversarial negative-sampling
  loss.  Gradients are evaluated against the parameters as of batch start
  and applied once at the end (accumulating over repeated entities), so a
  batch is deterministic regardless of internal vectorization.

Negative weights use the softmax of alpha * score(negative) and are treated
as constants during differentiation.
"""

from __future__ import annotations

import numpy as np

BACKEND = "python"

_EPS = 1e-12


def _softplus(x: np.ndarray) -> np.ndarray:
    return np.logaddexp(0.0, x)


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x, dtype=np.float64)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def neg_dist_to_rows(matrix: np.ndarray, target: np.ndarray, p: int) -> np.ndarray:
    """-||target - row||_p for every row; p in {1, 2}."""
    diff = target[np.newaxis, :] - matrix
    if p == 1:
        return -np.abs(diff).sum(axis=1)
    return -np.sqrt((diff * diff).sum(axis=1))


def _adversarial_coefs(
    d_pos: np.ndarray, d_neg: np.ndarray, gamma: float, alpha: float
) -> tuple[np.ndarray, np.ndarray, float]:
    """Loss value and d-space gradient coefficients for one batch.

    Returns (c_pos (B,), c_neg (B, N), mean loss).  Positive coefficients
    push positive distances down, negative ones push corruption distances
    up.
    """
    b = d_pos.shape[0]
    logits = -alpha * d_neg
    logits = logits - logits.max(axis=1, keepdims=True)
    w = np.exp(logits)
    w /= w.sum(axis=1, keepdims=True)
    loss = _softplus(d_pos - gamma) + (w * _softplus(gamma - d_neg)).sum(axis=1)
    c_pos = _sigmoid(d_pos - gamma) / b
    c_neg = -w * _sigmoid(gamma - d_neg) / b
    return c_pos, c_neg, float(loss.mean())


def transe_train_batch(
    ent: np.ndarray,
    rel: np.ndarray,
    pos: np.ndarray,
    neg: np.ndarray,
    gamma: float,
    alpha: float,
    lr: float,
    p: int,
) -> float:
    """One translation-model SGD step over positives (B,3) and negatives (B,N,3)."""
    b, n = neg.shape[0], neg.shape[1]
    flat_neg = neg.reshape(b * n, 3)

    u_pos = ent[pos[:, 0]] + rel[pos[:, 1]] - ent[pos[:, 2]]
    u_neg = ent[flat_neg[:, 0]] + rel[flat_neg[:, 1]] - ent[flat_neg[:, 2]]
    if p == 1:
        d_pos = np.abs(u_pos).sum(axis=1)
        d_neg = np.abs(u_neg).sum(axis=1).reshape(b, n)
        g_pos = np.sign(u_pos)
        g_neg = np.sign(u_neg)
    else:
        d_pos = np.sqrt((u_pos * u_pos).sum(axis=1))
        d_neg_flat = np.sqrt((u_neg * u_neg).sum(axis=1))
        d_neg = d_neg_flat.reshape(b, n)
        g_pos = u_pos / np.maximum(d_pos, _EPS)[:, np.newaxis]
        g_neg = u_neg / np.maximum(d_neg_flat, _EPS)[:, np.newaxis]

    c_pos, c_neg, loss = _adversarial_coefs(d_pos, d_neg, gamma, alpha)
    gv_pos = c_pos[:, np.newaxis] * g_pos
    gv_neg = c_neg.reshape(b * n, 1) * g_neg

    np.add.at(ent, pos[:, 0], -lr * gv_pos)
    np.add.at(rel, pos[:, 1], -lr * gv_pos)
    np.add.at(ent, pos[:, 2], lr * gv_pos)
    np.add.at(ent, flat_neg[:, 0], -lr * gv_neg)
    np.add.at(rel, flat_neg[:, 1], -lr * gv_neg)
    np.add.at(ent, flat_neg[:, 2], lr * gv_neg)
    return loss


def _rotate_distance_grads(
    ent: np.ndarray, phases: np.ndarray, triples: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Distances plus complex-form gradients for a flat (M, 3) triple array.

    Entity rows store [real half | imaginary half]; relations are phase
    vectors applied as unit-modulus complex factors.
    """
    half = ent.shape[1] // 2
    hc = ent[triples[:, 0], :half] + 1j * ent[triples[:, 0], half:]
    tc = ent[triples[:, 2], :half] + 1j * ent[triples[:, 2], half:]
    theta = phases[triples[:, 1]]
    rc = np.cos(theta) + 1j * np.sin(theta)
    hr = hc * rc
    v = hr - tc
    d = np.sqrt((v.real * v.real + v.imag * v.imag).sum(axis=1))
    inv = np.where(d > 0, 1.0 / np.maximum(d, _EPS), 0.0)[:, np.newaxis]
    grad_h = inv * np.conj(rc) * v
    grad_t = -inv * v
    grad_theta = inv * (np.conj(hr) * v).imag
    return d, grad_h, grad_t, grad_theta


def rotate_train_batch(
    ent: np.ndarray,
    phases: np.ndarray,
    pos: np.ndarray,
    neg: np.ndarray,
    gamma: float,
    alpha: float,
    lr: float,
) -> float:
    """One rotation-model SGD step; phases stay the parameters, so relation
    factors keep unit modulus by construction."""
    b, n = neg.shape[0], neg.shape[1]
    half = ent.shape[1] // 2
    flat_neg = neg.reshape(b * n, 3)

    d_pos, gh_pos, gt_pos, gth_pos = _rotate_distance_grads(ent, phases, pos)
    d_neg_flat, gh_neg, gt_neg, gth_neg = _rotate_distance_grads(ent, phases, flat_neg)
    d_neg = d_neg_flat.reshape(b, n)

    c_pos, c_neg, loss = _adversarial_coefs(d_pos, d_neg, gamma, alpha)
    cp = c_pos[:, np.newaxis]
    cn = c_neg.reshape(b * n, 1)

    ent_re = ent[:, :half]
    ent_im = ent[:, half:]

    def apply(e_idx, grad_c, coef):
        step = lr * coef
        np.add.at(ent_re, e_idx, -step * grad_c.real)
        np.add.at(ent_im, e_idx, -step * grad_c.imag)

    apply(pos[:, 0], gh_pos, cp)
    apply(pos[:, 2], gt_pos, cp)
    apply(flat_neg[:, 0], gh_neg, cn)
    apply(flat_neg[:, 2], gt_neg, cn)
    np.add.at(phases, pos[:, 1], -lr * cp * gth_pos)
    np.add.at(phases, flat_neg[:, 1], -lr * cn * gth_neg)
    return loss
