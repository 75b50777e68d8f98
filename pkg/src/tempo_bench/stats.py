'''
Linear and rank correlation coefficients with approximate p-values.

p-values are large-sample approximations: Student-t with ``n - 2`` degrees
of freedom for Pearson and Spearman, and a normal approximation with the
untied variance ``n(n-1)(2n+5)/18`` of the pair score for Kendall's tau.

@author: tempo-bench developers
'''
import math
from dataclasses import dataclass

import numpy as np
from scipy import stats

from tempo_bench.exceptions import StatisticsException

@dataclass(frozen=True)
class CorrelationResult(object):
    coefficient: float
    p_value: float
    n: int

    def to_dict(self):
        return {"coefficient": self.coefficient, "p_value": self.p_value, "n": self.n}

def _check_samples(x, y):
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.ndim != 1 or x.shape != y.shape:
        raise StatisticsException("samples must be equal-length lists, got %r and %r" % (x.shape, y.shape))
    if x.size < 3:
        raise StatisticsException("correlation needs at least 3 samples, got %d" % x.size)
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise StatisticsException("samples contain non-finite values")
    if np.ptp(x) == 0 or np.ptp(y) == 0:
        raise StatisticsException("correlation is undefined for constant input")
    return x, y

def _t_test(r, n):
    if abs(r) >= 1.0:
        return 0.0
    t = r * math.sqrt((n - 2) / (1.0 - r * r))
    return float(min(1.0, 2.0 * stats.t.sf(abs(t), n - 2)))

def _pearson(x, y):
    r = float(np.clip(np.corrcoef(x, y)[0, 1], -1.0, 1.0))
    return CorrelationResult(r, _t_test(r, x.size), int(x.size))

def pearson(x, y) -> CorrelationResult:
    return _pearson(*_check_samples(x, y))

def spearman(x, y) -> CorrelationResult:
    """Pearson on average ranks."""
    x, y = _check_samples(x, y)
    return _pearson(stats.rankdata(x), stats.rankdata(y))

def pair_score(x, y):
    """Concordant minus discordant pairs."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    upper = np.triu_indices(x.size, k=1)
    return int((np.sign(np.subtract.outer(x, x)) * np.sign(np.subtract.outer(y, y)))[upper].sum())

def kendall_tau(x, y) -> CorrelationResult:
    x, y = _check_samples(x, y)
    tau = float(np.clip(stats.kendalltau(x, y, variant="b")[0], -1.0, 1.0))
    n = x.size
    z = pair_score(x, y) / math.sqrt(n * (n - 1) * (2 * n + 5) / 18.0)
    return CorrelationResult(tau, float(min(1.0, 2.0 * stats.norm.sf(abs(z)))), int(n))
