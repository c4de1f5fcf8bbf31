"""Independent reference implementations used as test oracles.

Written from textbook formulas with dense inverses and loops, deliberately
avoiding the package's own helpers.
"""

import numpy as np


def kalman_filter_dense(F, V, G, W, m0, C0, y):
    """Textbook Kalman filter with explicit inverses.

    F: (J, p, n), V: (J, n, n), G: (p, p), W: (p, p) or callable(C_prev) -> W.
    Returns lists a, R, f, Q, m, C (m and C include time 0).
    """
    J = len(y)
    m, C = [np.array(m0, float)], [np.array(C0, float)]
    a_l, R_l, f_l, Q_l = [], [], [], []
    for t in range(J):
        a = G.dot(m[-1])
        Wt = W(C[-1]) if callable(W) else W
        R = G.dot(C[-1]).dot(G.T) + Wt
        f = F[t].T.dot(a)
        Q = F[t].T.dot(R).dot(F[t]) + V[t]
        Qi = np.linalg.inv(Q)
        A = R.dot(F[t]).dot(Qi)
        m.append(a + A.dot(y[t] - f))
        C.append(R - A.dot(Q).dot(A.T))
        a_l.append(a), R_l.append(R), f_l.append(f), Q_l.append(Q)
    return a_l, R_l, f_l, Q_l, m, C


def rts_dense(G, a, R, m, C):
    """Rauch-Tung-Striebel smoother with explicit inverses."""
    J = len(a)
    s, S = [None] * (J + 1), [None] * (J + 1)
    s[J], S[J] = m[J], C[J]
    for t in range(J - 1, -1, -1):
        B = C[t].dot(G.T).dot(np.linalg.inv(R[t]))
        s[t] = m[t] + B.dot(s[t + 1] - a[t])
        S[t] = C[t] + B.dot(S[t + 1] - R[t]).dot(B.T)
    return s, S


def gaussian_condition(mean, cov, obs_idx, obs_val):
    """Conditional moments of the unobserved block of a joint Gaussian."""
    mean, cov = np.asarray(mean, float), np.asarray(cov, float)
    idx = np.arange(len(mean))
    o = np.asarray(obs_idx)
    u = np.setdiff1d(idx, o)
    Koo_inv = np.linalg.inv(cov[np.ix_(o, o)])
    cm = mean[u] + cov[np.ix_(u, o)].dot(Koo_inv).dot(np.asarray(obs_val) - mean[o])
    cc = cov[np.ix_(u, u)] - cov[np.ix_(u, o)].dot(Koo_inv).dot(cov[np.ix_(o, u)])
    return cm, cc


def normal_logpdf_dense(x, mean, cov):
    x, mean, cov = (np.atleast_1d(np.asarray(v, float)) for v in (x, mean, cov))
    cov = np.atleast_2d(cov)
    r = x - mean
    k = len(x)
    return float(-0.5 * (k * np.log(2 * np.pi) + np.log(np.linalg.det(cov)) + r.dot(np.linalg.inv(cov)).dot(r)))
