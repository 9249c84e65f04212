"""Reference implementations used only by the tests.

They share no code with the package beyond plain numpy.
"""
import math

import numpy as np


def gram_gamma(x, gamma):
    x = np.asarray(x, dtype=float)
    n = x.shape[0]
    k = np.empty((n, n))
    for i in range(n):
        for j in range(n):
            d = x[i] - x[j]
            k[i, j] = math.exp(-gamma * float(d @ d))
    return k


def _project(z, s, c):
    """Euclidean projection onto {0 <= b <= c, s.b = 0}, s in {-1, +1}^n.

    g(mu) = s.clip(z - mu s, 0, c) is piecewise linear and non-increasing in mu, so the root
    is found exactly by scanning its breakpoints.
    """
    bps = np.unique(np.concatenate([z * s, (z - c) * s]))
    g = np.clip(z[None, :] - bps[:, None] * s[None, :], 0.0, c) @ s
    if g[0] <= 0:
        mu = bps[0]
    elif g[-1] >= 0:
        mu = bps[-1]
    else:
        j = int(np.flatnonzero(g <= 0)[0])
        g0, g1 = g[j - 1], g[j]
        mu = bps[j - 1] + (bps[j] - bps[j - 1]) * g0 / (g0 - g1)
    return np.clip(z - mu * s, 0.0, c)


def svr_dual_pg(k, y, c, eps, iters=30000):
    """Accelerated projected gradient on the epsilon-SVR dual.

    Returns (coef, dual objective in maximisation form).
    """
    y = np.asarray(y, dtype=float)
    n = y.size
    s = np.concatenate([np.ones(n), -np.ones(n)])
    q = np.outer(s, s) * np.block([[k, k], [k, k]])
    p = np.concatenate([eps - y, eps + y])
    lip = max(np.linalg.eigvalsh(q).max(), 1e-12)
    f = lambda b: 0.5 * b @ q @ b + p @ b
    b = np.zeros(2 * n)
    v = b.copy()
    t = 1.0
    for _ in range(iters):
        b_new = _project(v - (q @ v + p) / lip, s, c)
        if f(b_new) > f(b):  # adaptive restart; a plain step that fails to descend means converged
            if t == 1.0:
                break
            t = 1.0
            v = b.copy()
            continue
        if np.max(np.abs(b_new - b)) <= 1e-15 * c:
            b = b_new
            break
        t_new = 0.5 * (1 + math.sqrt(1 + 4 * t * t))
        v = b_new + (t - 1) / t_new * (b_new - b)
        b, t = b_new, t_new
    coef = b[:n] - b[n:]
    return coef, -f(b)


def brute_ranks(a):
    """Average ranks (1-based) by counting, O(n^2)."""
    a = list(map(float, a))
    out = []
    for x in a:
        less = sum(1 for z in a if z < x)
        equal = sum(1 for z in a if z == x)
        out.append(less + (equal + 1) / 2.0)
    return out


def brute_pearson(a, b):
    n = len(a)
    ma = sum(a) / n
    mb = sum(b) / n
    cov = sum((x - ma) * (y - mb) for x, y in zip(a, b))
    va = sum((x - ma) ** 2 for x in a)
    vb = sum((y - mb) ** 2 for y in b)
    return cov / math.sqrt(va * vb)


def brute_spearman(a, b):
    return brute_pearson(brute_ranks(a), brute_ranks(b))


def student_t_sf(t, df):
    """Upper tail of Student's t by adaptive quadrature of the density (mpmath)."""
    import mpmath as mp
    mp.mp.dps = 50
    nu = mp.mpf(df)
    const = mp.gamma((nu + 1) / 2) / (mp.sqrt(nu * mp.pi) * mp.gamma(nu / 2))
    pdf = lambda x: const * (1 + x * x / nu) ** (-(nu + 1) / 2)
    return mp.quad(pdf, [mp.mpf(t), mp.inf])
