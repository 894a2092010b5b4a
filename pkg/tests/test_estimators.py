import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from nvquench.lifetime import StretchedExpRegressor
from nvquench.spectra import NNMFUnmixer
from nvquench.tunnelling import TunnellingRateRegressor

ESTIMATORS = [StretchedExpRegressor(max_iter=50), NNMFUnmixer(tol=1e-6), TunnellingRateRegressor()]


@pytest.mark.parametrize("est", ESTIMATORS, ids=lambda e: type(e).__name__)
def test_clone_keeps_params(est):
    twin = clone(est)
    assert twin is not est
    assert twin.get_params() == est.get_params()


@pytest.mark.parametrize("est", ESTIMATORS, ids=lambda e: type(e).__name__)
def test_set_params(est):
    params = est.get_params()
    if params:
        name = sorted(params)[0]
        twin = clone(est).set_params(**{name: params[name]})
        assert twin.get_params() == params


def test_unfitted():
    with pytest.raises(NotFittedError):
        StretchedExpRegressor().predict(np.arange(10.0))
    with pytest.raises(NotFittedError):
        NNMFUnmixer().transform(np.ones((1, 5)))
    with pytest.raises(NotFittedError):
        TunnellingRateRegressor().predict(np.arange(3.0))


def test_stretched_defaults():
    p = StretchedExpRegressor().get_params()
    assert p == {"fit_background": True, "min_peak": 100, "max_iter": 200, "k0": 72.0}
