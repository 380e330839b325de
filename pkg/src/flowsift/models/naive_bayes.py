import numpy as np

from ..errors import NegativeFeature


def _softmax_rows(log_joint: np.ndarray) -> np.ndarray:
    z = log_joint - log_joint.max(axis=1, keepdims=True)
    p = np.exp(z)
    return p / p.sum(axis=1, keepdims=True)


class GaussianNB:
    """Gaussian naive Bayes with variance floor ``var_smoothing * max feature variance``."""

    def __init__(self, var_smoothing=1e-9):
        self.var_smoothing = var_smoothing

    def fit(self, X, y, n_classes, seed=0):
        d = X.shape[1]
        eps = self.var_smoothing * (X.var(axis=0).max() if d else 0.0)
        self.theta_ = np.zeros((n_classes, d))
        self.var_ = np.ones((n_classes, d))
        counts = np.bincount(y, minlength=n_classes).astype(np.float64)
        for c in range(n_classes):
            Xc = X[y == c]
            if len(Xc):
                self.theta_[c] = Xc.mean(axis=0)
                self.var_[c] = Xc.var(axis=0)
        self.var_ = self.var_ + eps
        if eps == 0.0:
            # all features constant: keep likelihoods finite
            self.var_ = np.where(self.var_ > 0, self.var_, 1.0)
        self.class_prior_ = counts / counts.sum()
        return self

    def _log_joint(self, X):
        with np.errstate(divide="ignore"):
            log_prior = np.log(self.class_prior_)
        ll = -0.5 * (np.log(2.0 * np.pi * self.var_).sum(axis=1)[None, :]
                     + (((X[:, None, :] - self.theta_[None]) ** 2) / self.var_[None]).sum(axis=2))
        return log_prior[None, :] + ll

    def predict_proba(self, X):
        return _softmax_rows(self._log_joint(X))

    def to_payload(self):
        return {"theta": self.theta_.tolist(), "var": self.var_.tolist(),
                "class_prior": self.class_prior_.tolist()}

    def load_payload(self, p):
        self.theta_ = np.asarray(p["theta"], dtype=np.float64)
        self.var_ = np.asarray(p["var"], dtype=np.float64)
        self.class_prior_ = np.asarray(p["class_prior"], dtype=np.float64)
        return self


class MultinomialNB:
    """Multinomial naive Bayes with additive (Laplace/Lidstone) smoothing ``alpha``."""

    def __init__(self, alpha=1.0):
        self.alpha = alpha

    def fit(self, X, y, n_classes, seed=0):
        if (X < 0).any():
            col = int(np.flatnonzero((X < 0).any(axis=0))[0])
            raise NegativeFeature(f"multinomial_nb needs non-negative features; column {col} "
                                  f"has negative values")
        d = X.shape[1]
        counts = np.bincount(y, minlength=n_classes).astype(np.float64)
        fc = np.zeros((n_classes, d))
        for c in range(n_classes):
            fc[c] = X[y == c].sum(axis=0)
        smoothed = fc + self.alpha
        self.feature_log_prob_ = np.log(smoothed) - np.log(smoothed.sum(axis=1, keepdims=True))
        self.class_prior_ = counts / counts.sum()
        return self

    def predict_proba(self, X):
        with np.errstate(divide="ignore"):
            log_prior = np.log(self.class_prior_)
        return _softmax_rows(log_prior[None, :] + X @ self.feature_log_prob_.T)

    def to_payload(self):
        return {"feature_log_prob": self.feature_log_prob_.tolist(),
                "class_prior": self.class_prior_.tolist()}

    def load_payload(self, p):
        self.feature_log_prob_ = np.asarray(p["feature_log_prob"], dtype=np.float64)
        self.class_prior_ = np.asarray(p["class_prior"], dtype=np.float64)
        return self
