"""scikit-learn style wrapper: nodes are the samples, roles are the clusters."""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClusterMixin
from sklearn.utils.validation import check_is_fitted

from .engine import ChainConfig, role_centroids, run_multichain, summarize
from .requirements import RequirementProfile
from .validation import check_tensor


class BlanketDetector(ClusterMixin, BaseEstimator):
    """Multi-chain constrained blanket detection on a T x N x 7 tensor.

    After `fit`, `labels_` holds one role per node (0 = S, 1 = B, 2 = Z),
    `rho_` the blanket spectral radius, `lambda_` the multiplier
    certificate and `trace_` the per-iteration trace of the best chain.
    """

    def __init__(self, profile=None, n_chains=6, n_iter=50, alpha_lambda=0.12,
                 lambda_max=15.0, alpha_rho=0.025, random_state=0):
        self.profile = profile
        self.n_chains = n_chains
        self.n_iter = n_iter
        self.alpha_lambda = alpha_lambda
        self.lambda_max = lambda_max
        self.alpha_rho = alpha_rho
        self.random_state = random_state

    def _chain_config(self) -> ChainConfig:
        return ChainConfig(n_iter=int(self.n_iter), alpha_rho=float(self.alpha_rho),
                           alpha_lambda=float(self.alpha_lambda), lambda_max=float(self.lambda_max),
                           seed=int(self.random_state or 0))

    def fit(self, X, y=None):
        Y = check_tensor(X)
        prof = self.profile
        if prof is None:
            prof = RequirementProfile.empty()
        elif isinstance(prof, dict):
            prof = RequirementProfile.from_dict(prof)
        st = summarize(Y)
        res = run_multichain(st, prof, self._chain_config(), int(self.n_chains))
        flat = Y.reshape(-1, Y.shape[2])
        sd = flat.std(axis=0)
        sd[sd <= 0] = 1.0
        self.channel_mean_ = flat.mean(axis=0)
        self.channel_scale_ = sd
        self.sigma_ = st.sigma
        self.profile_ = prof
        self.result_ = res
        self.labels_ = res.best.partition.labels.astype(int)
        self.n_blanket_ = int(res.modal_B)
        self.rho_ = float(res.best.rho_star)
        self.lambda_ = np.array(res.best.lambda_star)
        self.certificate_ = res.best.multipliers
        self.trace_ = np.array(res.best.trace)
        self.cluster_centers_ = role_centroids(st, res.best.partition)
        self.n_features_in_ = Y.shape[2]
        return self

    def _z_means(self, X) -> np.ndarray:
        Y = check_tensor(X)
        return (Y.mean(axis=0) - self.channel_mean_) / self.channel_scale_

    def transform(self, X):
        """Squared normalized distance of every node to each role centroid (N x 3)."""
        check_is_fitted(self, "labels_")
        Z = self._z_means(X)
        C = (self.cluster_centers_ - self.channel_mean_) / self.channel_scale_
        return ((Z[:, None, :] - C[None]) ** 2).sum(axis=2)

    def predict(self, X):
        """Nearest fitted role for each node of X, without requirement pressure."""
        return np.argmin(self.transform(X), axis=1)

    def score(self, X, y=None):
        """Mean node log-score under the fitted centroids (higher is better)."""
        d2 = self.transform(X).min(axis=1)
        return float(-np.mean(d2) / (2.0 * self.sigma_ ** 2))
