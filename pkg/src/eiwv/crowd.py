"""Worker behaviour: private costs, greedy effort choice, labeling, collusion.

Each worker has a private base effort cost ``c`` drawn uniformly from
``[1, h]``.  Facing a posted payment ``P`` for ``m`` tasks a greedy worker
compares working at its base effort (utility ``P - c*m``) with staying out
(utility 0, nothing submitted, nothing paid).  Effort converts to quality
linearly: a worker at effort ``e`` reproduces its dataset label with
probability ``e / h`` and answers uniformly at random otherwise.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass, field, replace

import numpy as np

from .validation import check_fraction, check_positive_int, check_random_state

__all__ = [
    "Worker",
    "Crowd",
    "CollusionController",
    "EffortDecision",
    "PAYMENT_TOL",
    "init_crowd",
    "best_effort",
    "best_efforts",
    "respond",
    "collusion_tick",
    "agreed_label",
]

# a payment within this distance of P_min counts as "the lowest possible payment"
PAYMENT_TOL = 1e-6


@dataclass(frozen=True)
class Worker:
    id: str
    base_cost: float
    epsilon: float = 0.0
    colluder: bool = False
    h: float = 10.0

    def __post_init__(self):
        if not 1.0 <= self.base_cost <= self.h:
            raise ValueError(f"base_cost {self.base_cost} outside [1, {self.h}]")
        if self.epsilon < 0:
            raise ValueError("epsilon must be non-negative")


@dataclass(frozen=True)
class EffortDecision:
    worker_id: str
    effort: float
    tasks: int

    @property
    def cost(self) -> float:
        return self.effort * self.tasks

    @property
    def participates(self) -> bool:
        return self.effort > 0 and self.tasks > 0


def agreed_label(task_id: str, K: int, gold: int | None = None) -> int:
    """Label a colluding group settles on for ``task_id``.

    With a known gold label the group answers ``(gold + 1) mod K``; otherwise a
    fixed pseudorandom label derived from the task id.
    """
    if gold is not None and gold >= 0:
        return (int(gold) + 1) % K
    return zlib.crc32(task_id.encode()) % K


@dataclass(frozen=True)
class CollusionController:
    """Periodic collusion of a fixed worker group.

    The group starts colluding at every positive multiple of ``rate`` steps
    and keeps colluding until every member is posted the lowest payment.
    """

    rate: int | None
    group: frozenset = field(default_factory=frozenset)
    active: bool = False

    def __post_init__(self):
        if self.rate is not None:
            check_positive_int(self.rate, "collusion rate")

    @property
    def enabled(self) -> bool:
        return self.rate is not None and len(self.group) > 0

    def member_mask(self, n: int) -> np.ndarray:
        mask = np.zeros(n, dtype=bool)
        if self.group:
            mask[list(self.group)] = True
        return mask

    def agreed_label(self, task_id: str, K: int, gold: int | None = None) -> int:
        return agreed_label(task_id, K, gold)


def collusion_tick(
    controller: CollusionController,
    t: int,
    payments,
    p_min: float,
    tol: float = PAYMENT_TOL,
) -> CollusionController:
    """Advance the collusion schedule by one step.

    ``payments`` are the per-worker rates posted for step ``t``.  Onset is
    checked before the stop rule, so posting the lowest payment to the whole
    group at an onset step cancels it immediately.
    """
    if not controller.enabled:
        return controller
    active = controller.active
    if t > 0 and t % controller.rate == 0:
        active = True
    if active and payments is not None:
        payments = np.asarray(payments, dtype=float)
        members = sorted(controller.group)
        if np.all(payments[members] <= p_min + tol):
            active = False
    if active == controller.active:
        return controller
    return replace(controller, active=active)


@dataclass
class Crowd:
    workers: list[Worker]
    h: float
    controller: CollusionController
    costs: np.ndarray = field(init=False, repr=False)
    epsilons: np.ndarray = field(init=False, repr=False)
    colluders: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.costs = np.array([w.base_cost for w in self.workers], dtype=float)
        self.epsilons = np.array([w.epsilon for w in self.workers], dtype=float)
        self.colluders = np.array([w.colluder for w in self.workers], dtype=bool)

    def __len__(self) -> int:
        return len(self.workers)


def init_crowd(
    n: int,
    h: float = 10.0,
    epsilon: float = 0.0,
    collusion_rate: int | None = None,
    group_fraction: float = 1.0,
    rng=None,
    worker_ids=None,
) -> Crowd:
    """Draw ``n`` workers with base costs uniform on ``[1, h]``.

    ``group_fraction`` of the workers (rounded up) form the collusion group
    when ``collusion_rate`` is given.
    """
    n = check_positive_int(n, "n")
    if h < 1:
        raise ValueError(f"h must be >= 1, got {h}")
    if epsilon < 0:
        raise ValueError("epsilon must be non-negative")
    check_fraction(group_fraction, "group_fraction")
    rng = check_random_state(rng)
    ids = list(worker_ids) if worker_ids is not None else [f"w{i}" for i in range(n)]
    if len(ids) != n:
        raise ValueError("worker_ids length must equal n")

    costs = rng.uniform(1.0, h, size=n) if h > 1 else np.ones(n)
    group: frozenset = frozenset()
    if collusion_rate is not None:
        size = int(np.ceil(group_fraction * n - 1e-12))
        group = frozenset(int(i) for i in rng.permutation(n)[:size])
    workers = [
        Worker(id=ids[i], base_cost=float(costs[i]), epsilon=float(epsilon), colluder=i in group, h=float(h))
        for i in range(n)
    ]
    return Crowd(workers, float(h), CollusionController(collusion_rate, group))


def _project_effort(raw, cost, h):
    """Nearest point of ``{0} U [cost, h]``."""
    raw = np.asarray(raw, dtype=float)
    inside = np.clip(raw, cost, h)
    return np.where(raw <= 0.5 * cost, 0.0, inside)


def best_efforts(costs, epsilons, payments, counts, h: float, rng=None) -> np.ndarray:
    """Vectorised :func:`best_effort` over a crowd.

    ``payments`` are total offered payments ``P_i`` (not per-task rates).
    """
    costs = np.asarray(costs, dtype=float)
    payments = np.asarray(payments, dtype=float)
    counts = np.asarray(counts)
    work = (counts > 0) & (payments >= costs * counts)
    target = np.where(work, costs, 0.0)
    epsilons = np.broadcast_to(np.asarray(epsilons, dtype=float), costs.shape)
    if np.any(epsilons > 0):
        rng = check_random_state(rng)
        noise = rng.uniform(-1.0, 1.0, size=costs.shape) * epsilons
        effort = _project_effort(target + noise, costs, h)
    else:
        effort = target
    return np.where(counts > 0, effort, 0.0)


def best_effort(worker: Worker, payment: float, m_i: int, rng=None) -> EffortDecision:
    """Greedy one-step effort of ``worker`` offered ``payment`` for ``m_i`` tasks."""
    if payment < 0 or m_i < 0:
        raise ValueError("payment and task count must be non-negative")
    eps = np.array([worker.epsilon])
    effort = best_efforts(np.array([worker.base_cost]), eps, np.array([payment]), np.array([m_i]), worker.h, rng)
    return EffortDecision(worker.id, float(effort[0]), int(m_i))


def respond(
    worker: Worker,
    task_id: str,
    effort: float,
    dataset_label: int,
    K: int,
    gold: int | None = None,
    rng=None,
    colluding: bool = False,
) -> int:
    """One label from ``worker`` on ``task_id``.

    Active colluders return the group's agreed label regardless of effort.
    """
    if colluding and worker.colluder:
        return agreed_label(task_id, K, gold)
    rng = check_random_state(rng)
    if rng.random() < effort / worker.h:
        return int(dataset_label)
    return int(rng.integers(K))
