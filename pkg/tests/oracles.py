"""Brute-force dense reimplementations used as test oracles.

Nothing here imports the package's numerical code; every quantity is
recomputed from plain numpy arrays.
"""
from itertools import combinations

import numpy as np


def softmax(z, axis=-1):
    z = np.asarray(z, dtype=np.float64)
    e = np.exp(z - z.max(axis=axis, keepdims=True))
    return e / e.sum(axis=axis, keepdims=True)


def undirected(m):
    return m + m.T - np.diag(np.diag(m))


def renormalize(m):
    mi = m + np.eye(m.shape[0])
    d = mi.sum(axis=1)
    return mi / np.sqrt(np.outer(d, d))


def first_order(relations, chain):
    """``relations`` maps id -> dense array; ``chain`` is [(id, transpose), ...]."""
    out = None
    for rid, flip in chain:
        r = relations[rid].T if flip else relations[rid]
        out = r if out is None else out @ r
    return renormalize(undirected(out))


def subsets(L):
    return [s for l in range(1, L + 1) for s in combinations(range(L), l)]


def high_order(mats, alpha):
    prod = np.eye(mats[0].shape[0])
    for row in alpha:
        prod = prod @ sum(a * m for a, m in zip(row, mats))
    return renormalize(undirected(prod))


def multi_order(firsts, alpha_logits, beta_logits):
    subs = subsets(len(firsts))
    beta = softmax(beta_logits)
    branches = [high_order([firsts[j] for j in s], softmax(a, axis=1)) for s, a in zip(subs, alpha_logits)]
    return sum(b * m for b, m in zip(beta, branches)), branches


def loss(firsts, alpha_logits, beta_logits, W, X, labels, train_idx, support, gamma):
    A, _ = multi_order(firsts, alpha_logits, beta_logits)
    logp = np.log(softmax(A @ X @ W, axis=1))
    ce = -logp[train_idx, labels[train_idx]].sum()
    rows, cols = np.nonzero(support)
    rec = -np.log(np.maximum(A[rows, cols], 1e-12)).mean() if len(rows) else 0.0
    return ce + gamma * rec


def topk_union(x, k):
    n = len(x)
    norms = np.linalg.norm(x, axis=1)
    sim = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            if norms[i] > 0 and norms[j] > 0:
                sim[i, j] = x[i] @ x[j] / (norms[i] * norms[j])
    adj = np.zeros((n, n))
    for i in range(n):
        cand = sorted((j for j in range(n) if j != i), key=lambda j: (-sim[i, j], j))
        for j in cand[:k]:
            adj[i, j] = adj[j, i] = 1.0
    return adj


def f1(y_true, y_pred, c):
    scores = []
    for k in range(c):
        tp = np.sum((y_pred == k) & (y_true == k))
        fp = np.sum((y_pred == k) & (y_true != k))
        fn = np.sum((y_pred != k) & (y_true == k))
        scores.append(0.0 if tp == 0 else 2 * tp / (2 * tp + fp + fn))
    return float(np.mean(scores)), float(np.mean(y_true == y_pred))
