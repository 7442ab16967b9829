import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from cdmbd.engine import canonical_key
from cdmbd.estimator import BlanketDetector
from cdmbd.exceptions import ValidationError
from cdmbd.simulator import SimConfig, generate_cup_data

from conftest import ESPRESSO, blobs


def test_fit_unconstrained_blobs():
    Y, labels = blobs()
    det = BlanketDetector(n_chains=3, n_iter=20).fit(Y)
    assert canonical_key(det.labels_) == canonical_key(labels)
    assert det.lambda_.size == 0
    assert det.trace_.shape == (20, 5)
    assert 0.30 <= det.rho_ <= 0.96


def test_fit_with_profile_records_certificate():
    Y = generate_cup_data(SimConfig("TravelMug", "Double", seed=1))[0]
    det = BlanketDetector(profile=ESPRESSO, n_chains=2).fit(Y)
    assert det.rho_ == 0.30
    assert det.lambda_[0] > 0
    assert det.certificate_.fixed_point
    assert det.n_blanket_ >= 1
    det2 = BlanketDetector(profile=ESPRESSO.to_dict(), n_chains=2).fit(Y)
    np.testing.assert_array_equal(det.labels_, det2.labels_)


def test_predict_transform_score():
    Y, labels = blobs()
    det = BlanketDetector(n_chains=2, n_iter=20).fit(Y)
    np.testing.assert_array_equal(det.predict(Y), det.labels_)
    D = det.transform(Y)
    assert D.shape == (Y.shape[1], 3) and np.all(D >= 0)
    assert det.score(Y) <= 0
    Y2, _ = blobs(seed=5)
    assert det.predict(Y2).shape == (Y2.shape[1],)


def test_fit_predict_and_clone():
    Y, _ = blobs()
    det = BlanketDetector(n_chains=2, n_iter=10, random_state=4)
    lab = det.fit_predict(Y)
    np.testing.assert_array_equal(lab, det.labels_)
    c = clone(det)
    assert c.get_params() == det.get_params()
    assert not hasattr(c, "labels_")


def test_unfitted_and_bad_input():
    Y, _ = blobs()
    with pytest.raises(NotFittedError):
        BlanketDetector().predict(Y)
    with pytest.raises(ValidationError):
        BlanketDetector().fit(Y[:, :, :5])
