import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from statsmodels.stats.weightstats import ztest

from fedforest.stats import two_sample_ztest

samples = st.lists(st.floats(0, 1, allow_nan=False), min_size=2, max_size=50)


@settings(max_examples=200, deadline=None)
@given(samples, samples)
def test_matches_statsmodels(a, b):
    if np.var(a) == 0 and np.var(b) == 0:
        return
    z, p = two_sample_ztest(a, b)
    z_ref, p_ref = ztest(a, b, usevar="pooled")
    assert z == pytest.approx(z_ref, rel=1e-9, abs=1e-9)
    assert p == pytest.approx(p_ref, rel=1e-9, abs=1e-12)


def test_degenerate_cases():
    assert two_sample_ztest([0.5, 0.5], [0.5, 0.5]) == (0.0, 1.0)
    assert two_sample_ztest([1.0, 1.0], [0.0, 0.0])[1] == 0.0
    with pytest.raises(ValueError):
        two_sample_ztest([1.0], [1.0, 2.0])
