"""The crowdsourcing MDP.

Observation: per-worker estimated accuracy in ``[0, 1]^N``.
Action: per-worker payment *rate* per task in ``[P_min, P_max]^N``.  A worker
handed ``m_i`` tasks is offered ``P_i = rate_i * m_i`` in total and is paid
only if it submits labels.
Reward: running mean of the platform utility over the last ``window`` steps.

If the oracle is enabled and more than a ``theta`` fraction of the crowd is
posted the lowest payment, the step is verified: the platform observes the
true per-worker accuracies and the true label accuracy, and pays ``(1 + alpha)``
times the step's payments.
"""

from __future__ import annotations

import warnings
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .crowd import PAYMENT_TOL, Crowd, agreed_label, best_efforts, collusion_tick, init_crowd
from .dataset import GoldLabels, ResponseTable, sample_batch
from .inference import INFERENCE_METHODS, InferenceResult, update_state
from .validation import check_fraction, check_positive_int, check_random_state

__all__ = [
    "EnvConfig",
    "EnvState",
    "PaymentAction",
    "StepInfo",
    "ConfigError",
    "CrowdsourcingEnv",
    "oracle_trigger",
    "platform_utility",
    "true_accuracy",
]


class ConfigError(ValueError):
    pass


@dataclass
class EnvConfig:
    """Environment parameters; defaults follow the reference experiments.

    ``eta=None`` resolves to ``1 / (N * p_max)`` at reset.  ``accuracy_term``
    chooses whether utility credits the accuracy *fraction* of a batch or the
    *count* of correctly labeled tasks (fraction times batch size).
    ``task_sampling`` is ``"without"``, ``"with"`` or ``"auto"`` (with
    replacement only when a batch is larger than the dataset).
    """

    eta: float | None = None
    alpha: float = 0.2
    theta: float = 0.5
    p_min: float = 0.0
    p_max: float = 11.0
    tasks_per_step: int = 10
    window: int = 200
    horizon: int = 600
    inference: str = "ds_em"
    oracle: bool = False
    accuracy_term: str = "count"
    task_sampling: str = "auto"
    initial_accuracy: float = 0.5
    # crowd
    h: float = 10.0
    epsilon: float = 0.1
    collusion: bool = True
    collusion_rate: int = 50
    group_fraction: float = 1.0
    deviant_strategy: str = "none"
    deviant_fraction: float = 0.0

    def validate(self) -> None:
        if self.eta is not None and self.eta < 0:
            raise ConfigError("eta must be non-negative")
        if self.alpha < 0:
            raise ConfigError("alpha must be non-negative")
        check_fraction(self.theta, "theta")
        if not self.p_min < self.p_max:
            raise ConfigError("p_min must be below p_max")
        if self.p_min < 0:
            raise ConfigError("payments cannot be negative")
        check_positive_int(self.tasks_per_step, "tasks_per_step")
        check_positive_int(self.window, "window")
        check_positive_int(self.horizon, "horizon")
        check_positive_int(self.collusion_rate, "collusion_rate")
        if self.inference not in INFERENCE_METHODS:
            raise ConfigError(f"unknown inference {self.inference!r}")
        if self.accuracy_term not in ("count", "fraction"):
            raise ConfigError("accuracy_term must be 'count' or 'fraction'")
        if self.task_sampling not in ("without", "with", "auto"):
            raise ConfigError("task_sampling must be 'without', 'with' or 'auto'")
        if self.deviant_strategy not in ("none", "shirk"):
            raise ConfigError("deviant_strategy must be 'none' or 'shirk'")
        check_fraction(self.initial_accuracy, "initial_accuracy")
        check_fraction(self.group_fraction, "group_fraction")
        check_fraction(self.deviant_fraction, "deviant_fraction")
        if self.h < 1 or self.epsilon < 0:
            raise ConfigError("need h >= 1 and epsilon >= 0")


@dataclass(frozen=True)
class EnvState:
    accuracy: np.ndarray
    t: int = 0

    def __post_init__(self):
        acc = np.asarray(self.accuracy, dtype=float)
        if acc.ndim != 1 or np.any(acc < 0) or np.any(acc > 1):
            raise ValueError("state entries must lie in [0, 1]")
        object.__setattr__(self, "accuracy", acc)

    @property
    def n(self) -> int:
        return len(self.accuracy)


@dataclass(frozen=True)
class PaymentAction:
    payments: np.ndarray
    oracle_call: bool = False

    @classmethod
    def from_rates(cls, rates, p_min: float, p_max: float, theta: float = 0.5, oracle: bool = False):
        payments = np.clip(np.asarray(rates, dtype=float), p_min, p_max)
        call = bool(oracle and oracle_trigger(payments, theta, p_min))
        return cls(payments, call)


@dataclass
class StepInfo:
    t: int
    reward: float
    utility: float
    est_accuracy: float
    true_accuracy: float
    signal_accuracy: float
    tasks: int
    total_payment: float
    payment_cost: float
    oracle_called: bool
    collusion_active: bool
    n_participants: int
    mean_state: float
    true_utility: float
    true_reward: float
    payments: np.ndarray = field(repr=False)
    efforts: np.ndarray = field(repr=False)
    counts: np.ndarray = field(repr=False)
    worker_utilities: np.ndarray = field(repr=False)

    LOG_FIELDS = (
        "t", "reward", "utility", "est_accuracy", "true_accuracy", "signal_accuracy", "tasks",
        "total_payment", "payment_cost", "oracle_called", "collusion_active", "n_participants",
        "mean_state", "true_utility", "true_reward",
    )

    def row(self) -> dict:
        return {k: getattr(self, k) for k in self.LOG_FIELDS}


def platform_utility(accuracy, total_payment, eta, alpha=0.0, oracle=False, scale=1.0):
    """``(u, cost)`` with ``cost = P * (1 + alpha * oracle)`` and ``u = scale * accuracy - eta * cost``.

    >>> round(platform_utility(0.8, 10.0, 0.01, 0.2, True)[0], 12)
    0.68
    """
    cost = total_payment * (1.0 + alpha * bool(oracle))
    return scale * accuracy - eta * cost, cost


def oracle_trigger(payments, theta: float, p_min: float = 0.0, tol: float = PAYMENT_TOL) -> bool:
    """True iff strictly more than ``theta`` of the crowd is posted the minimum."""
    payments = np.asarray(payments, dtype=float)
    if payments.size == 0:
        return False
    return bool(np.count_nonzero(payments <= p_min + tol) / payments.size > theta)


def true_accuracy(X, gold, labels=None, K: int | None = None):
    """Accuracy of the aggregated labels and of each worker against gold.

    ``X`` is the ``(n_tasks, n_workers)`` batch matrix and ``gold`` an array of
    per-task gold labels (``-1`` when unknown; such tasks are skipped with a
    warning).  ``labels`` defaults to majority vote.  A task nobody answered
    counts as a blind guess worth ``1/K``.  Workers without a gold-covered
    response get NaN.
    """
    X = np.asarray(X)
    gold = np.asarray(gold)
    if K is None:
        K = int(max(X.max(initial=0), gold.max(initial=0))) + 1
    answered = (X >= 0).any(axis=1)
    if labels is None:
        from .inference import majority_vote

        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            labels = majority_vote(X, K).labels
    known = gold >= 0
    if not known.all():
        warnings.warn(f"{int((~known).sum())} batch task(s) lack gold labels", RuntimeWarning, stacklevel=2)
    if not known.any():
        return float("nan"), np.full(X.shape[1], np.nan)
    credit = np.where(answered, (np.asarray(labels) == gold).astype(float), 1.0 / K)
    A = float(np.mean(credit[known]))
    observed = (X >= 0) & known[:, None]
    n = observed.sum(axis=0)
    hits = ((X == gold[:, None]) & observed).sum(axis=0)
    with np.errstate(invalid="ignore", divide="ignore"):
        per_worker = np.where(n > 0, hits / np.maximum(n, 1), np.nan)
    return A, per_worker


class CrowdsourcingEnv:
    """Gym-style environment: ``reset(seed) -> state``, ``step(rates) -> (state, reward, info)``."""

    def __init__(self, table: ResponseTable, gold: GoldLabels | None = None, config: EnvConfig | None = None):
        self.table = table
        self.gold = gold if gold is not None else GoldLabels({}, table.num_classes)
        self.config = config or EnvConfig()
        self.config.validate()
        self._gold_array = self.gold.as_array(table)
        self.crowd: Crowd | None = None
        self.state: EnvState | None = None

    @property
    def n_workers(self) -> int:
        return self.table.n_workers

    @property
    def eta(self) -> float:
        cfg = self.config
        return cfg.eta if cfg.eta is not None else 1.0 / (self.n_workers * cfg.p_max)

    @property
    def replace_tasks(self) -> bool:
        mode = self.config.task_sampling
        return mode == "with" or (mode == "auto" and self.config.tasks_per_step > self.table.n_tasks)

    def reset(self, seed=None) -> EnvState:
        cfg = self.config
        cfg.validate()
        if cfg.oracle and not (self._gold_array >= 0).any():
            raise ConfigError("the oracle needs gold labels but none were loaded")
        if not self.replace_tasks and cfg.tasks_per_step > self.table.n_tasks:
            raise ConfigError(f"tasks_per_step={cfg.tasks_per_step} exceeds {self.table.n_tasks} tasks")
        ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
        crowd_ss, step_ss = ss.spawn(2)
        self.rng = np.random.default_rng(step_ss)
        crowd_rng = np.random.default_rng(crowd_ss)
        self.crowd = init_crowd(
            self.n_workers,
            h=cfg.h,
            epsilon=cfg.epsilon,
            collusion_rate=cfg.collusion_rate if cfg.collusion else None,
            group_fraction=cfg.group_fraction,
            rng=crowd_rng,
            worker_ids=self.table.workers,
        )
        n_dev = int(np.ceil(cfg.deviant_fraction * self.n_workers - 1e-12)) if cfg.deviant_strategy != "none" else 0
        self.deviants = np.zeros(self.n_workers, dtype=bool)
        self.deviants[crowd_rng.permutation(self.n_workers)[:n_dev]] = True
        self.controller = self.crowd.controller
        self.state = EnvState(np.full(self.n_workers, cfg.initial_accuracy), 0)
        self._utilities: deque = deque(maxlen=cfg.window)
        self._true_utilities: deque = deque(maxlen=cfg.window)
        self.cumulative_platform_utility = 0.0
        self.cumulative_worker_utility = np.zeros(self.n_workers)
        return self.state

    def observation(self) -> np.ndarray:
        return self.state.accuracy.copy()

    def _responses(self, batch, rates, colluding):
        cfg = self.config
        K = self.table.num_classes
        crowd = self.crowd
        rng = self.rng
        counts = batch.counts
        offered = rates * counts
        efforts = best_efforts(crowd.costs, crowd.epsilons, offered, counts, cfg.h, rng)
        shirking = self.deviants & (rates > cfg.p_min + PAYMENT_TOL) & (counts > 0)
        efforts = np.where(colluding | shirking, 0.0, efforts)
        submit = (counts > 0) & ((efforts > 0) | colluding | shirking)

        dataset_labels = self.table.matrix[batch.task_indices]
        m, n = dataset_labels.shape
        keep = rng.random((m, n)) < (efforts / cfg.h)[None, :]
        noise = rng.integers(K, size=(m, n))
        X = np.where(keep, dataset_labels, noise)
        if colluding.any():
            gold = self._gold_array[batch.task_indices]
            agreed = np.array(
                [agreed_label(tid, K, int(g) if g >= 0 else None) for tid, g in zip(batch.task_ids, gold)]
            )
            X = np.where(colluding[None, :], agreed[:, None], X)
        X = np.where(batch.mask & submit[None, :], X, -1)
        return X, efforts, submit

    def step(self, action) -> tuple[EnvState, float, StepInfo]:
        if self.state is None:
            raise RuntimeError("call reset() before step()")
        cfg = self.config
        t = self.state.t
        if isinstance(action, PaymentAction):
            rates = np.clip(action.payments, cfg.p_min, cfg.p_max)
        else:
            rates = np.clip(np.asarray(action, dtype=float), cfg.p_min, cfg.p_max)
        if rates.shape != (self.n_workers,):
            raise ValueError(f"action must have shape ({self.n_workers},), got {rates.shape}")

        # (1) collusion schedule reacts to the posted payments
        self.controller = collusion_tick(self.controller, t, rates, cfg.p_min)
        colluding = self.crowd.colluders & self.controller.active

        # (2)-(3) tasks, effort, labels
        batch = sample_batch(self.table, cfg.tasks_per_step, t, self.rng, replace=self.replace_tasks)
        X, efforts, submit = self._responses(batch, rates, colluding)
        K = self.table.num_classes

        # (4) inference, and the oracle path when triggered
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            result: InferenceResult = INFERENCE_METHODS[cfg.inference](X, K)
            gold = self._gold_array[batch.task_indices]
            A_true, worker_true = (
                true_accuracy(X, gold, result.labels, K) if (gold >= 0).any() else (float("nan"), None)
            )
        oracle = bool(cfg.oracle and oracle_trigger(rates, cfg.theta, cfg.p_min))
        if oracle and not np.isnan(A_true):
            signal = A_true
            observed = submit & ~np.isnan(worker_true)
            accuracy = np.where(observed, worker_true, self.state.accuracy)
        else:
            signal = result.batch_confidence
            accuracy = update_state(self.state.accuracy, result, submit)

        # (5) utility; realised payments go only to workers who submitted
        paid = np.where(submit, rates * batch.counts, 0.0)
        total_payment = float(paid.sum())
        scale = float(batch.size) if cfg.accuracy_term == "count" else 1.0
        utility, payment_cost = platform_utility(signal, total_payment, self.eta, cfg.alpha, oracle, scale)
        true_utility, _ = platform_utility(A_true, total_payment, self.eta, cfg.alpha, oracle, scale)

        # (6) rolling reward
        self._utilities.append(utility)
        reward = float(np.mean(np.asarray(self._utilities)))
        self._true_utilities.append(true_utility)
        true_reward = float(np.mean(np.asarray(self._true_utilities)))

        # (7) worker ledger
        counts_done = np.where(submit, batch.counts, 0)
        worker_utilities = paid - efforts * counts_done
        self.cumulative_platform_utility += utility
        self.cumulative_worker_utility += worker_utilities

        self.state = EnvState(np.clip(accuracy, 0.0, 1.0), t + 1)
        info = StepInfo(
            t=t,
            reward=reward,
            utility=utility,
            est_accuracy=result.batch_confidence,
            true_accuracy=A_true,
            signal_accuracy=signal,
            tasks=batch.size,
            total_payment=total_payment,
            payment_cost=payment_cost,
            oracle_called=oracle,
            collusion_active=bool(self.controller.active),
            n_participants=int(submit.sum()),
            mean_state=float(self.state.accuracy.mean()),
            true_utility=true_utility,
            true_reward=true_reward,
            payments=paid,
            efforts=np.where(submit, efforts, 0.0),
            counts=counts_done,
            worker_utilities=worker_utilities,
        )
        return self.state, reward, info
