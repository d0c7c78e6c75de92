"""Parity test between two sets of run-level scores."""

from __future__ import annotations

import math

import numpy as np
from scipy.stats import norm


def two_sample_ztest(a, b) -> tuple[float, float]:
    """Two-sided z-test for equal means with a pooled standard error.

    Returns ``(z, p_value)``. Identical constant samples give ``(0.0, 1.0)``.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    na, nb = a.size, b.size
    if na < 2 or nb < 2:
        raise ValueError("each sample needs at least two observations")
    pooled = ((na - 1) * a.var(ddof=1) + (nb - 1) * b.var(ddof=1)) / (na + nb - 2)
    se = math.sqrt(pooled * (1.0 / na + 1.0 / nb))
    diff = a.mean() - b.mean()
    if se == 0.0:
        return (0.0, 1.0) if diff == 0.0 else (math.copysign(math.inf, diff), 0.0)
    z = diff / se
    return float(z), float(2.0 * norm.sf(abs(z)))
