import numpy as np
from scipy.stats import norm


def family_z(count: int, alpha: float = 0.0027) -> float:
    """Per-comparison z such that ``count`` comparisons jointly keep a 3-sigma false alarm rate."""
    return float(norm.isf(alpha / (2 * max(count, 1))))


def one_two_point(X):
    X = np.asarray(X, dtype=np.float64)
    iu = np.triu_indices(X.shape[1], 1)
    return np.concatenate([X, X[:, iu[0]] * X[:, iu[1]]], axis=1)


def exact_one_two(enum):
    n = enum["sigma"].shape[0]
    iu = np.triu_indices(n, 1)
    return np.concatenate([enum["sigma"], enum["sigma_sigma"][iu]])
