"""Confidence estimation from partially labeled demonstrations (2IWIL)."""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from ..diffcore import MLP, AdamState, Tape, adam_step, ops
from ..diffcore.tape import DiffError


def beta_ratio(n_labeled: int, n_unlabeled: int) -> Fraction:
    """``beta = N_U / (N_L + N_U)`` as an exact rational."""
    if n_labeled + n_unlabeled == 0:
        raise ValueError("no demonstrations")
    return Fraction(n_unlabeled, n_labeled + n_unlabeled)


def epsilon_ratio(labels) -> Fraction:
    """Mean labeled confidence; exact for 0/1 labels, float-exact otherwise."""
    labels = np.asarray(labels, dtype=np.float64)
    if labels.size == 0:
        raise ValueError("empty labeled set")
    total = sum(Fraction(float(y)) for y in labels)
    eps = total / labels.size
    if eps <= 0:
        raise ValueError("mean labeled confidence must be positive to weight the discriminator")
    return eps


def logistic_loss(m):
    """``l(m) = ln(1 + exp(-m))``."""
    return ops.softplus(-m)


def iwil_risk(g_labeled, y, g_unlabeled, beta: float):
    """Empirical classification risk on classifier outputs (logits).

    ``mean_L[y (l(g) - l(-g)) + (1 - beta) l(-g)] + mean_U[beta l(-g)]``
    """
    y = np.asarray(y, dtype=np.float64)
    if np.size(y) == 0:
        raise DiffError("2IWIL risk needs at least one labeled sample")
    lab = y * (logistic_loss(g_labeled) - logistic_loss(-g_labeled)) + (1.0 - beta) * logistic_loss(-g_labeled)
    risk = ops.mean(lab)
    n_u = (g_unlabeled.value if hasattr(g_unlabeled, "value") else np.asarray(g_unlabeled)).shape[0]
    if n_u:
        risk = risk + ops.mean(beta * logistic_loss(-g_unlabeled))
    return risk


@dataclass(frozen=True)
class ConfidenceClassifier:
    in_dim: int
    hidden: tuple[int, ...] = (100, 100)

    @property
    def net(self) -> MLP:
        return MLP(self.in_dim, self.hidden, 1, "tanh", prefix="g.")

    def init(self, rng):
        return self.net.init(rng)

    def logit(self, params, x):
        n = (x.value if hasattr(x, "value") else np.asarray(x)).shape[0]
        return ops.reshape(self.net(params, x), (n,))

    def predict(self, params, x) -> np.ndarray:
        logit = np.asarray(self.logit(params, np.asarray(x, dtype=np.float64)))
        return 0.5 * (1.0 + np.tanh(0.5 * logit))


def train_classifier(x_labeled, y, x_unlabeled, rng: np.random.Generator, steps: int = 500,
                     lr: float = 1e-3, hidden=(100, 100)):
    """Fit ``g`` by full-batch Adam on the 2IWIL risk.

    Inputs are standardized with the statistics of all demonstrations.
    Returns ``(predict_fn, params, risk_history)``.
    """
    x_labeled = np.asarray(x_labeled, dtype=np.float64)
    x_unlabeled = np.asarray(x_unlabeled, dtype=np.float64).reshape(-1, x_labeled.shape[1])
    allx = np.concatenate([x_labeled, x_unlabeled])
    mu, sd = allx.mean(axis=0), allx.std(axis=0)
    sd = np.where(sd > 0, sd, 1.0)
    xl, xu = (x_labeled - mu) / sd, (x_unlabeled - mu) / sd
    beta = float(beta_ratio(len(xl), len(xu)))
    clf = ConfidenceClassifier(x_labeled.shape[1], tuple(hidden))
    params = clf.init(rng)
    state = AdamState(lr=lr)
    history = []
    for _ in range(steps):
        tape = Tape()
        pv = tape.watch(params)
        risk = iwil_risk(clf.logit(pv, xl), y, clf.logit(pv, xu), beta)
        history.append(float(risk.value))
        params = adam_step(params, tape.gradient(risk, pv), state)

    def predict(x):
        return clf.predict(params, (np.asarray(x, dtype=np.float64) - mu) / sd)

    return predict, params, history


def auc(scores, labels) -> float:
    """Area under the ROC curve via the rank-sum statistic (ties count half)."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels).astype(bool)
    pos, neg = scores[labels], scores[~labels]
    if len(pos) == 0 or len(neg) == 0:
        raise ValueError("AUC needs both classes")
    greater = (pos[:, None] > neg[None, :]).sum()
    ties = (pos[:, None] == neg[None, :]).sum()
    return float((greater + 0.5 * ties) / (len(pos) * len(neg)))
