"""Brute-force reference computations shared by the unit and acceptance tests."""
import numpy as np


def joint_gaussian_oracle(model, x):
    """Mean and variance of f(x) by explicit sequential conditioning on X_J + {x}.

    Stage j: Z_j = B_j'(y - sum_{i<j} Z_i)|X_j + e_j with e_j ~ N(0, s_j S_j),
    so every Z_j is affine in the independent e_k.
    """
    XJ = model.points
    Xt = np.vstack([XJ, x[None, :]])
    N = Xt.shape[0]
    means, coefs, covs = [], [], []
    for j, stage in enumerate(model.stages):
        G = stage.kernel.gram(Xt)
        n = stage.n
        B = np.linalg.solve(G[:n, :n], G[:n, :])
        covs.append(stage.sigma2 * (G - G[:, :n] @ B))
        prev_mean = sum((m[:n] for m in means), np.zeros(n))
        means.append(B.T @ (model.y[:n] - prev_mean))
        row = []
        for k in range(j):
            prev = sum(coefs[i][k][:n, :] for i in range(k, j))
            row.append(-B.T @ prev)
        row.append(np.eye(N))
        for i in range(j):
            coefs[i].append(None)
        coefs.append(row)
    mean = sum(m[-1] for m in means)
    var = 0.0
    for k in range(model.J):
        tot = sum(coefs[j][k][-1] for j in range(k, model.J))
        var += tot @ covs[k] @ tot
    return mean, var


def brute_force_loo(X, y, k):
    out = np.empty(len(y))
    for i in range(len(y)):
        keep = np.arange(len(y)) != i
        a = np.linalg.solve(k.gram(X[keep]), y[keep])
        out[i] = y[i] - (k.cross(X[i:i + 1], X[keep]) @ a)[0]
    return out
