"""Truth inference from crowd labels without ground truth.

All functions take a label matrix ``X`` of shape ``(n_tasks, n_workers)`` with
``-1`` for "no response".  Two methods are provided, majority vote and
Dawid-Skene EM with full per-worker confusion matrices, both as plain
functions and as scikit-learn style estimators.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .validation import check_label_matrix

__all__ = [
    "InferenceResult",
    "majority_vote",
    "ds_em",
    "ds_objective",
    "ds_e_step",
    "ds_m_step",
    "update_state",
    "MajorityVote",
    "DawidSkene",
    "INFERENCE_METHODS",
]


@dataclass(frozen=True)
class InferenceResult:
    """Output of a truth-inference pass over one batch.

    ``worker_accuracy`` is NaN for workers with no response in the batch.
    Tasks without responses keep a uniform posterior and are flagged in
    ``excluded``; they contribute ``1/K`` to ``batch_confidence``.
    """

    posteriors: np.ndarray
    labels: np.ndarray
    worker_accuracy: np.ndarray
    batch_confidence: float
    excluded: np.ndarray
    converged: bool = True
    n_iter: int = 0
    confusion: np.ndarray | None = None
    class_prior: np.ndarray | None = None

    @property
    def responded(self) -> np.ndarray:
        return ~np.isnan(self.worker_accuracy)


def _one_hot(X: np.ndarray, K: int) -> np.ndarray:
    # (n_tasks, n_workers, K); all-zero rows where the response is missing
    return (X[:, :, None] == np.arange(K)).astype(float)


def _agreement(X: np.ndarray, labels: np.ndarray) -> np.ndarray:
    observed = X >= 0
    n = observed.sum(axis=0)
    hits = ((X == labels[:, None]) & observed).sum(axis=0)
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(n > 0, hits / np.maximum(n, 1), np.nan)


def majority_vote(X, K: int) -> InferenceResult:
    """Normalised vote histogram per task; ties go to the lowest label."""
    X = check_label_matrix(X, K)
    votes = _one_hot(X, K).sum(axis=1)
    totals = votes.sum(axis=1)
    excluded = totals == 0
    if excluded.any():
        warnings.warn(f"{int(excluded.sum())} task(s) have no responses", RuntimeWarning, stacklevel=2)
    post = np.where(excluded[:, None], 1.0 / K, votes / np.maximum(totals, 1)[:, None])
    labels = np.argmax(post, axis=1)
    acc = _agreement(X, labels)
    return InferenceResult(
        posteriors=post,
        labels=labels,
        worker_accuracy=acc,
        batch_confidence=float(np.mean(post.max(axis=1))) if len(post) else 0.0,
        excluded=excluded,
    )


def ds_m_step(R: np.ndarray, T: np.ndarray, smoothing: float):
    """Class prior and confusion matrices maximising the smoothed objective.

    ``confusion[i, k, l]`` is the probability that worker ``i`` answers ``l``
    when the truth is ``k``.
    """
    K = T.shape[1]
    counts = np.einsum("jk,jil->ikl", T, R) + smoothing
    confusion = counts / counts.sum(axis=2, keepdims=True)
    prior = (T.sum(axis=0) + smoothing) / (T.shape[0] + K * smoothing)
    return prior, confusion


def ds_e_step(R: np.ndarray, prior: np.ndarray, confusion: np.ndarray):
    """Task posteriors and the per-task log marginal likelihood."""
    log_joint = np.log(prior)[None, :] + np.einsum("jil,ikl->jk", R, np.log(confusion))
    shift = log_joint.max(axis=1, keepdims=True)
    w = np.exp(log_joint - shift)
    z = w.sum(axis=1, keepdims=True)
    return w / z, (shift + np.log(z))[:, 0]


def ds_objective(X, prior, confusion, smoothing: float = 0.0) -> float:
    """Log likelihood of ``X`` plus the Dirichlet log prior implied by ``smoothing``.

    This is the quantity EM with additive smoothing ascends; with
    ``smoothing=0`` it is the plain Dawid-Skene marginal log likelihood.
    """
    X = check_label_matrix(X)
    K = len(prior)
    R = _one_hot(X, K)
    _, ll = ds_e_step(R, np.asarray(prior), np.asarray(confusion))
    total = float(ll.sum())
    if smoothing:
        total += smoothing * float(np.log(confusion).sum() + np.log(prior).sum())
    return total


def ds_em(
    X,
    K: int,
    max_iters: int = 100,
    tol: float = 1e-6,
    smoothing: float = 1e-3,
    return_trace: bool = False,
):
    """Dawid-Skene EM initialised from majority vote.

    Iterates M-step then E-step until the largest change of any task posterior
    drops below ``tol``.  The returned posteriors are exactly the E-step of the
    returned parameters.  ``worker_accuracy`` is the prior-weighted diagonal
    of each worker's confusion matrix.
    """
    if max_iters < 1:
        raise ValueError("max_iters must be >= 1")
    X = check_label_matrix(X, K)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        mv = majority_vote(X, K)
    R = _one_hot(X, K)
    included = ~mv.excluded
    Ri = R[included]
    T = mv.posteriors[included]
    trace = []
    converged = False
    n_iter = 0
    prior = confusion = None
    if Ri.shape[0] == 0:
        prior = np.full(K, 1.0 / K)
        confusion = np.full((X.shape[1], K, K), 1.0 / K)
        converged = True
    for n_iter in range(1, max_iters + 1 if Ri.shape[0] else 1):
        prior, confusion = ds_m_step(Ri, T, smoothing)
        T_new, ll = ds_e_step(Ri, prior, confusion)
        if return_trace:
            trace.append(float(ll.sum()) + smoothing * float(np.log(confusion).sum() + np.log(prior).sum()))
        delta = float(np.max(np.abs(T_new - T)))
        T = T_new
        if delta < tol:
            converged = True
            break

    post = np.full((X.shape[0], K), 1.0 / K)
    post[included] = T
    labels = np.argmax(post, axis=1)
    diag = np.einsum("ikk->ik", confusion)
    acc = diag @ prior
    acc = np.where((X >= 0).any(axis=0), acc, np.nan)
    result = InferenceResult(
        posteriors=post,
        labels=labels,
        worker_accuracy=acc,
        batch_confidence=float(np.mean(post.max(axis=1))) if len(post) else 0.0,
        excluded=mv.excluded,
        converged=converged,
        n_iter=n_iter,
        confusion=confusion,
        class_prior=prior,
    )
    if return_trace:
        return result, trace
    return result


INFERENCE_METHODS = {
    "majority": lambda X, K: majority_vote(X, K),
    "ds_em": lambda X, K: ds_em(X, K),
}


def update_state(prev, result: InferenceResult, participated) -> np.ndarray:
    """Overwrite the accuracy estimate of participating workers.

    ``prev`` is the current per-worker estimate; everyone else carries over.
    """
    prev = np.asarray(prev, dtype=float)
    participated = np.asarray(participated, dtype=bool)
    if prev.shape != participated.shape or prev.shape != result.worker_accuracy.shape:
        raise ValueError("state, participation mask and inference result disagree on N")
    new = np.where(participated, result.worker_accuracy, prev)
    if np.any(np.isnan(new)):
        raise ValueError("a participating worker has no accuracy estimate")
    return np.clip(new, 0.0, 1.0)


class MajorityVote(BaseEstimator):
    """Majority vote as an estimator over ``(n_tasks, n_workers)`` label matrices."""

    def __init__(self, n_classes=None):
        self.n_classes = n_classes

    def fit(self, X, y=None):
        X = check_label_matrix(X, self.n_classes)
        self.n_classes_ = self.n_classes or int(X.max()) + 1
        self.result_ = majority_vote(X, self.n_classes_)
        self.worker_accuracy_ = self.result_.worker_accuracy
        return self

    def predict_proba(self, X):
        check_is_fitted(self)
        return majority_vote(X, self.n_classes_).posteriors

    def predict(self, X):
        return np.argmax(self.predict_proba(X), axis=1)

    def fit_predict(self, X, y=None):
        return self.fit(X).result_.labels


class DawidSkene(BaseEstimator):
    """Dawid-Skene EM over ``(n_tasks, n_workers)`` label matrices.

    After ``fit`` the estimator exposes ``confusion_`` (workers x K x K),
    ``class_prior_``, ``worker_accuracy_``, ``n_iter_`` and ``converged_``.
    ``predict_proba`` applies the fitted workers to a new matrix whose columns
    are the same workers.
    """

    def __init__(self, n_classes=None, max_iter=100, tol=1e-6, smoothing=1e-3):
        self.n_classes = n_classes
        self.max_iter = max_iter
        self.tol = tol
        self.smoothing = smoothing

    def fit(self, X, y=None):
        X = check_label_matrix(X, self.n_classes)
        self.n_classes_ = self.n_classes or int(X.max()) + 1
        res = ds_em(X, self.n_classes_, self.max_iter, self.tol, self.smoothing)
        self.result_ = res
        self.confusion_ = res.confusion
        self.class_prior_ = res.class_prior
        self.worker_accuracy_ = res.worker_accuracy
        self.n_iter_ = res.n_iter
        self.converged_ = res.converged
        self.n_features_in_ = X.shape[1]
        return self

    def predict_proba(self, X):
        check_is_fitted(self)
        X = check_label_matrix(X, self.n_classes_)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"expected {self.n_features_in_} workers, got {X.shape[1]}")
        post, _ = ds_e_step(_one_hot(X, self.n_classes_), self.class_prior_, self.confusion_)
        return post

    def predict(self, X):
        return np.argmax(self.predict_proba(X), axis=1)

    def fit_predict(self, X, y=None):
        return self.fit(X).result_.labels

    def score(self, X, y):
        """Fraction of tasks whose predicted label equals ``y`` (-1 ignored)."""
        y = np.asarray(y)
        keep = y >= 0
        return float(np.mean(self.predict(X)[keep] == y[keep]))
