"""Rank statistics and goodness-of-fit measures on pseudo-observations."""

import numpy as np
from scipy import stats as sps

from .errors import ContractError


def empirical_copula(data, points):
    """C_N(u) = (1/N) sum_i 1{data_i <= u componentwise}.

    Parameters
    ----------
    data : (N, d) array
        Pseudo-observations.
    points : (M, d) array
        Evaluation points (often ``data`` itself).
    """
    data = np.asarray(data, dtype=float)
    points = np.atleast_2d(np.asarray(points, dtype=float))
    if data.ndim != 2 or data.shape[0] < 1:
        raise ContractError("data must be a non-empty N x d matrix")
    if points.shape[-1] != data.shape[1]:
        raise ContractError("points and data dimension mismatch")
    # (M, N, d) comparison done in N-blocks to bound memory for large inputs
    out = np.zeros(points.shape[0])
    step = max(1, int(2e7) // (data.shape[0] * data.shape[1] + 1))
    for a in range(0, points.shape[0], step):
        chunk = points[a : a + step]
        le = np.all(data[None, :, :] <= chunk[:, None, :], axis=2)
        out[a : a + step] = le.mean(axis=1)
    return out


def cvm_statistic(model, data):
    """Cramer-von Mises distance between the model CDF and the data.

    S_N = (1/N) sum_i (C_model(u_i) - C_N(u_i))^2 with C_N the empirical
    copula evaluated at the observations themselves.
    """
    data = np.asarray(data, dtype=float)
    c_model = np.atleast_1d(model.cdf(data))
    c_emp = empirical_copula(data, data)
    return float(np.mean((c_model - c_emp) ** 2))


def kendall_tau(x, y):
    """Kendall's tau-b between two samples."""
    return float(sps.kendalltau(x, y).statistic)


def pairwise_kendall(data):
    """Symmetric d x d matrix of pairwise Kendall taus."""
    data = np.asarray(data, dtype=float)
    d = data.shape[1]
    out = np.eye(d)
    for i in range(d):
        for j in range(i + 1, d):
            out[i, j] = out[j, i] = kendall_tau(data[:, i], data[:, j])
    return out


def ks_uniform(column):
    """Kolmogorov-Smirnov statistic and p-value of a sample against U(0,1)."""
    res = sps.kstest(np.asarray(column, dtype=float), "uniform")
    return float(res.statistic), float(res.pvalue)
