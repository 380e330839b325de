"""Fully connected ReLU network with a softmax head, trained by mini-batch SGD."""
import numpy as np

from ..errors import NonFiniteLoss


def init_params(sizes, rng):
    """He-normal weights, zero biases."""
    params = []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        W = rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(fan_in, fan_out))
        params.append((W, np.zeros(fan_out)))
    return params


def forward(params, X):
    """Returns (logits, activations); activations[0] is X."""
    acts = [X]
    h = X
    for i, (W, b) in enumerate(params):
        z = h @ W + b
        h = z if i == len(params) - 1 else np.maximum(z, 0.0)
        acts.append(h)
    return h, acts


def loss_and_grads(params, X, Y):
    """Mean cross-entropy and its gradients for one-hot targets ``Y``."""
    logits, acts = forward(params, X)
    z = logits - logits.max(axis=1, keepdims=True)
    log_p = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    n = len(X)
    loss = float(-(Y * log_p).sum() / n)
    delta = (np.exp(log_p) - Y) / n
    grads = [None] * len(params)
    for i in range(len(params) - 1, -1, -1):
        W, _ = params[i]
        grads[i] = (acts[i].T @ delta, delta.sum(axis=0))
        if i:
            delta = (delta @ W.T) * (acts[i] > 0)
    return loss, grads


class MLP:
    def __init__(self, hidden_layers=(64, 64), learning_rate=1e-2, epochs=50, batch_size=32):
        self.hidden_layers = tuple(hidden_layers)
        self.learning_rate = learning_rate
        self.epochs = epochs
        self.batch_size = batch_size

    def fit(self, X, y, n_classes, seed=0):
        rng = np.random.default_rng(seed)
        sizes = [X.shape[1], *self.hidden_layers, n_classes]
        params = [(W.copy(), b.copy()) for W, b in init_params(sizes, rng)]
        Y = np.eye(n_classes)[y]
        n = len(X)
        bs = max(1, int(self.batch_size))
        lr = self.learning_rate
        self.loss_curve_ = []
        for epoch in range(int(self.epochs)):
            order = rng.permutation(n)
            total = 0.0
            for start in range(0, n, bs):
                rows = order[start:start + bs]
                # overflow surfaces as a non-finite loss, reported below
                with np.errstate(over="ignore", invalid="ignore"):
                    loss, grads = loss_and_grads(params, X[rows], Y[rows])
                if not np.isfinite(loss):
                    raise NonFiniteLoss(f"mlp loss became {loss} in epoch {epoch}; "
                                        f"lower learning_rate (now {lr})")
                total += loss * len(rows)
                params = [(W - lr * gW, b - lr * gb) for (W, b), (gW, gb) in zip(params, grads)]
            self.loss_curve_.append(total / n)
        self.params_ = params
        return self

    def predict_proba(self, X):
        logits, _ = forward(self.params_, X)
        z = logits - logits.max(axis=1, keepdims=True)
        e = np.exp(z)
        return e / e.sum(axis=1, keepdims=True)

    def to_payload(self):
        return {"layers": [{"W": W.tolist(), "b": b.tolist()} for W, b in self.params_]}

    def load_payload(self, p):
        self.params_ = [(np.asarray(l["W"], dtype=np.float64).reshape(len(l["W"]), -1),
                         np.asarray(l["b"], dtype=np.float64)) for l in p["layers"]]
        return self
