"""Pure numpy implementations of the per-round kernels.

Signatures and results match the compiled ``_core`` module; the test-suite
checks the two against each other.
"""

import numpy as np


def project_simplex_rows(y):
    """Euclidean projection of every row of ``y`` onto the probability simplex.

    Sort-and-threshold: the threshold is taken at the largest index ``j``
    with ``u_j - (cumsum(u)_j - 1) / j > 0`` on the descending sort ``u``.
    """
    y = np.asarray(y, dtype=np.float64)
    if y.ndim != 2:
        raise ValueError("project_simplex_rows expects a 2-d array")
    n = y.shape[1]
    u = -np.sort(-y, axis=1)
    css = np.cumsum(u, axis=1) - 1.0
    ind = np.arange(1, n + 1, dtype=np.float64)
    cond = u - css / ind > 0
    # cond is True on a prefix, so the last True index is (count - 1)
    rho = cond.sum(axis=1) - 1
    theta = css[np.arange(y.shape[0]), rho] / (rho + 1.0)
    return np.maximum(y - theta[:, None], 0.0)


def queue_step(q, mu, lam, src, dst):
    """One application of the queue recursion.

    ``q`` and ``lam`` are (N, N) with rows = servers, columns = commodities;
    ``mu`` is (L, N) with one row per link; ``src``/``dst`` give the link
    endpoints as 0-based server indices.
    """
    n = q.shape[0]
    out_flow = np.zeros_like(q)
    in_flow = np.zeros_like(q)
    np.add.at(out_flow, src, mu)
    np.add.at(in_flow, dst, mu)
    nxt = np.maximum(q - out_flow, 0.0) + in_flow + lam
    nxt[np.arange(n), np.arange(n)] = 0.0
    return nxt


def grid_act(points, weights):
    """Weighted combination of expert points: (B, E, N), (B, E) -> (B, N)."""
    return np.einsum("be,ben->bn", weights, points)


def grid_feed(points, weights, sq_sum, losses, etas, mix):
    """In-place update of B independent fixed-share OGD-grid learners.

    Rows whose loss vector is identically zero are left untouched.
    """
    n_exp = points.shape[1]
    mags = np.max(np.abs(losses), axis=1)
    active = np.nonzero(mags > 0.0)[0]
    if active.size == 0:
        return
    g = losses[active]
    sq_sum[active] += mags[active] ** 2
    x = points[active]
    expert_loss = np.einsum("ben,bn->be", x, g)
    expert_loss -= expert_loss.min(axis=1, keepdims=True)
    beta = np.sqrt(8.0 * np.log(n_exp) / (1.0 + sq_sum[active]))
    w = weights[active] * np.exp(-beta[:, None] * expert_loss)
    w /= w.sum(axis=1, keepdims=True)
    w = (1.0 - mix) * w + mix / n_exp
    weights[active] = w
    stepped = x - etas[None, :, None] * g[:, None, :]
    b, e, n = stepped.shape
    points[active] = project_simplex_rows(stepped.reshape(b * e, n)).reshape(b, e, n)
