"""Crowd label datasets: loading, synthesis and per-step task sampling.

Responses are stored as header-less ``worker_id,task_id,label`` CSV triples and
gold labels as ``task_id,label`` pairs.  Internally a table is also kept as a
dense ``(n_tasks, n_workers)`` integer matrix with ``-1`` marking "this worker
never labeled this task", which is the layout every other module consumes.
"""

from __future__ import annotations

import csv
import os
from collections.abc import Mapping
from dataclasses import dataclass, field
from typing import Iterator

import numpy as np

from .validation import check_fraction, check_positive_int, check_random_state

__all__ = [
    "DatasetError",
    "ParseError",
    "EmptyDatasetError",
    "ResponseTable",
    "GoldLabels",
    "TaskBatch",
    "load_responses",
    "write_responses",
    "load_gold",
    "write_gold",
    "sample_batch",
    "synth_generate",
    "STANDIN_PRESETS",
    "standin_dataset",
    "convert_labeled_csv",
]


class DatasetError(ValueError):
    pass


class ParseError(DatasetError):
    def __init__(self, path, lineno: int, message: str):
        super().__init__(f"{path}:{lineno}: {message}")
        self.path = path
        self.lineno = lineno


class EmptyDatasetError(DatasetError):
    pass


@dataclass(frozen=True)
class ResponseTable:
    """Sparse worker x task labels with a global number of classes."""

    workers: tuple[str, ...]
    tasks: tuple[str, ...]
    responses: Mapping[tuple[str, str], int]
    num_classes: int
    matrix: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "workers", tuple(self.workers))
        object.__setattr__(self, "tasks", tuple(self.tasks))
        object.__setattr__(self, "responses", dict(self.responses))
        if self.num_classes < 1:
            raise DatasetError("num_classes must be positive")
        if len(set(self.workers)) != len(self.workers) or len(set(self.tasks)) != len(self.tasks):
            raise DatasetError("duplicate worker or task identifiers")
        w_index = {w: i for i, w in enumerate(self.workers)}
        t_index = {t: j for j, t in enumerate(self.tasks)}
        mat = np.full((len(self.tasks), len(self.workers)), -1, dtype=np.int64)
        for (w, t), label in self.responses.items():
            if w not in w_index or t not in t_index:
                raise DatasetError(f"response ({w!r}, {t!r}) references an undeclared id")
            if not 0 <= label < self.num_classes:
                raise DatasetError(f"label {label} for ({w!r}, {t!r}) outside [0, {self.num_classes})")
            mat[t_index[t], w_index[w]] = label
        observed = mat >= 0
        if len(self.workers) and not observed.any(axis=0).all():
            raise DatasetError("every worker needs at least one response")
        if len(self.tasks) and not observed.any(axis=1).all():
            raise DatasetError("every task needs at least one response")
        mat.setflags(write=False)
        object.__setattr__(self, "matrix", mat)

    def __eq__(self, other):
        # id order only fixes matrix layout; two tables with the same ids and
        # responses describe the same data
        if not isinstance(other, ResponseTable):
            return NotImplemented
        return (
            set(self.workers) == set(other.workers)
            and set(self.tasks) == set(other.tasks)
            and self.num_classes == other.num_classes
            and self.responses == other.responses
        )

    __hash__ = None

    @property
    def n_workers(self) -> int:
        return len(self.workers)

    @property
    def n_tasks(self) -> int:
        return len(self.tasks)

    def __len__(self) -> int:
        return len(self.responses)

    @property
    def density(self) -> float:
        return len(self.responses) / (self.n_workers * self.n_tasks)

    @classmethod
    def from_matrix(cls, matrix, num_classes: int, workers=None, tasks=None) -> "ResponseTable":
        matrix = np.asarray(matrix)
        n_tasks, n_workers = matrix.shape
        workers = tuple(workers) if workers is not None else tuple(f"w{i}" for i in range(n_workers))
        tasks = tuple(tasks) if tasks is not None else tuple(f"t{j}" for j in range(n_tasks))
        rows, cols = np.nonzero(matrix >= 0)
        # worker-major insertion order keeps CSV round trips stable
        order = np.lexsort((rows, cols))
        responses = {(workers[cols[k]], tasks[rows[k]]): int(matrix[rows[k], cols[k]]) for k in order}
        return cls(workers, tasks, responses, num_classes)


class GoldLabels(Mapping):
    """Immutable ``task_id -> label`` map."""

    def __init__(self, labels: Mapping[str, int] | None = None, num_classes: int | None = None):
        self._labels = dict(labels or {})
        self.num_classes = num_classes
        for task, label in self._labels.items():
            if label < 0 or (num_classes is not None and label >= num_classes):
                raise DatasetError(f"gold label {label} for task {task!r} is out of range")

    def __getitem__(self, key: str) -> int:
        return self._labels[key]

    def __iter__(self) -> Iterator[str]:
        return iter(self._labels)

    def __len__(self) -> int:
        return len(self._labels)

    def __repr__(self) -> str:
        return f"GoldLabels({len(self)} tasks)"

    def as_array(self, table: ResponseTable) -> np.ndarray:
        """Gold labels aligned to ``table.tasks``; ``-1`` where unknown."""
        return np.array([self._labels.get(t, -1) for t in table.tasks], dtype=np.int64)

    def check_against(self, table: ResponseTable) -> None:
        known = set(table.tasks)
        extra = [t for t in self._labels if t not in known]
        if extra:
            raise DatasetError(f"{len(extra)} gold task ids are not in the response table, e.g. {extra[0]!r}")
        bad = [t for t, y in self._labels.items() if y >= table.num_classes]
        if bad:
            raise DatasetError(f"gold label for {bad[0]!r} exceeds num_classes={table.num_classes}")


@dataclass(frozen=True)
class TaskBatch:
    """Tasks drawn at one timestep and who was assigned to each of them.

    ``mask[k, i]`` is True when worker ``i`` labeled the ``k``-th drawn task in
    the dataset.  ``counts[i]`` is the number of tasks handed to worker ``i``.
    """

    t: int
    task_indices: np.ndarray
    task_ids: tuple[str, ...]
    mask: np.ndarray
    counts: np.ndarray

    @property
    def size(self) -> int:
        return len(self.task_indices)

    @property
    def assignment(self) -> dict[int, list[str]]:
        out = {}
        for i in np.nonzero(self.counts)[0]:
            out[int(i)] = [self.task_ids[k] for k in np.nonzero(self.mask[:, i])[0]]
        return out


def _parse_label(raw: str, path, lineno: int) -> int:
    try:
        label = int(raw)
    except ValueError:
        raise ParseError(path, lineno, f"label {raw!r} is not an integer") from None
    if label < 0:
        raise ParseError(path, lineno, f"negative label {label}")
    return label


def load_responses(path, format: str = "triples_csv", num_classes: int | None = None) -> ResponseTable:
    """Read a header-less ``worker_id,task_id,label`` file.

    ``num_classes`` defaults to one plus the largest label seen.
    """
    if format != "triples_csv":
        raise ValueError(f"unsupported response format {format!r}")
    workers: dict[str, None] = {}
    tasks: dict[str, None] = {}
    responses: dict[tuple[str, str], int] = {}
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 3:
                raise ParseError(path, lineno, f"expected 3 fields, got {len(row)}")
            w, t, raw = (c.strip() for c in row)
            if not w or not t:
                raise ParseError(path, lineno, "empty worker or task id")
            label = _parse_label(raw, path, lineno)
            if (w, t) in responses:
                raise ParseError(path, lineno, f"duplicate response for ({w}, {t})")
            workers.setdefault(w)
            tasks.setdefault(t)
            responses[(w, t)] = label
    if not responses:
        raise EmptyDatasetError(f"{path} contains no responses")
    inferred = 1 + max(responses.values())
    if num_classes is None:
        num_classes = inferred
    elif inferred > num_classes:
        raise DatasetError(f"label {inferred - 1} exceeds num_classes={num_classes}")
    return ResponseTable(tuple(workers), tuple(tasks), responses, num_classes)


def write_responses(table: ResponseTable, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        for (w, t), label in table.responses.items():
            writer.writerow([w, t, label])


def load_gold(path, num_classes: int | None = None, table: ResponseTable | None = None) -> GoldLabels:
    """Read ``task_id,label`` pairs.  An empty file yields an empty map."""
    if table is not None and num_classes is None:
        num_classes = table.num_classes
    labels: dict[str, int] = {}
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 2:
                raise ParseError(path, lineno, f"expected 2 fields, got {len(row)}")
            t, raw = (c.strip() for c in row)
            label = _parse_label(raw, path, lineno)
            if t in labels:
                raise ParseError(path, lineno, f"duplicate gold label for task {t!r}")
            if num_classes is not None and label >= num_classes:
                raise ParseError(path, lineno, f"gold label {label} >= num_classes={num_classes}")
            labels[t] = label
    gold = GoldLabels(labels, num_classes)
    if table is not None:
        gold.check_against(table)
    return gold


def write_gold(gold: Mapping[str, int], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        for t, label in gold.items():
            writer.writerow([t, label])


def sample_batch(table: ResponseTable, m: int, t: int, rng, replace: bool = False) -> TaskBatch:
    """Draw ``m`` tasks uniformly and assign each to the workers who labeled it.

    Without replacement ``m`` may not exceed the number of tasks.  With
    ``replace=True`` a task can appear more than once in the batch; each copy
    is handed out again as a separate item.
    """
    m = check_positive_int(m, "m")
    if not replace and m > table.n_tasks:
        raise ValueError(f"cannot draw {m} distinct tasks from {table.n_tasks}")
    rng = check_random_state(rng)
    idx = rng.choice(table.n_tasks, size=m, replace=replace)
    mask = table.matrix[idx] >= 0
    return TaskBatch(
        t=int(t),
        task_indices=idx,
        task_ids=tuple(table.tasks[j] for j in idx),
        mask=mask,
        counts=mask.sum(axis=0),
    )


def synth_generate(
    n_workers: int,
    n_tasks: int,
    K: int,
    accuracy_range=(0.5, 0.9),
    density: float = 1.0,
    rng=None,
) -> tuple[ResponseTable, GoldLabels]:
    """Random crowd with per-worker accuracies drawn uniformly from a range.

    A wrong response is uniform over the ``K - 1`` other labels.  When
    ``density < 1`` any worker or task left without responses gets one extra
    random pair so the table invariants hold.
    """
    n_workers = check_positive_int(n_workers, "n_workers")
    n_tasks = check_positive_int(n_tasks, "n_tasks")
    K = check_positive_int(K, "K", minimum=2)
    lo, hi = (float(v) for v in accuracy_range)
    if not 0.0 <= lo <= hi <= 1.0:
        raise ValueError(f"accuracy_range must satisfy 0 <= lo <= hi <= 1, got {accuracy_range}")
    check_fraction(density, "density", closed_low=False)
    rng = check_random_state(rng)

    gold = rng.integers(K, size=n_tasks)
    acc = rng.uniform(lo, hi, size=n_workers)
    present = rng.random((n_tasks, n_workers)) < density
    for i in np.nonzero(~present.any(axis=0))[0]:
        present[rng.integers(n_tasks), i] = True
    for j in np.nonzero(~present.any(axis=1))[0]:
        present[j, rng.integers(n_workers)] = True

    correct = rng.random((n_tasks, n_workers)) < acc[None, :]
    offset = rng.integers(1, K, size=(n_tasks, n_workers))
    labels = np.where(correct, gold[:, None], (gold[:, None] + offset) % K)
    matrix = np.where(present, labels, -1)

    table = ResponseTable.from_matrix(matrix, K)
    return table, GoldLabels(dict(zip(table.tasks, gold.tolist())), K)


# Shape-matched synthetic stand-ins for the four public datasets used in the
# experiments.  Worker/task counts and label spaces follow the published
# descriptions; density is answers / (workers * tasks).
STANDIN_PRESETS: dict[str, dict] = {
    "bluebirds": dict(n_workers=108, n_tasks=38, K=2, accuracy_range=(0.45, 0.95), density=1.0),
    "amazon_sentiment": dict(n_workers=284, n_tasks=1011, K=2, accuracy_range=(0.5, 0.95), density=7803 / (284 * 1011)),
    "sentiment_popularity": dict(n_workers=143, n_tasks=500, K=2, accuracy_range=(0.5, 0.95), density=10000 / (143 * 500)),
    "weather_sentiment": dict(n_workers=110, n_tasks=330, K=5, accuracy_range=(0.3, 0.9), density=6000 / (110 * 330)),
}


def standin_dataset(name: str, seed: int = 0) -> tuple[ResponseTable, GoldLabels]:
    try:
        params = STANDIN_PRESETS[name]
    except KeyError:
        raise ValueError(f"unknown stand-in dataset {name!r}; choose from {sorted(STANDIN_PRESETS)}") from None
    return synth_generate(rng=np.random.default_rng(seed), **params)


def convert_labeled_csv(
    src,
    dest_dir,
    worker_col: str,
    task_col: str,
    label_col: str,
    gold_col: str | None = None,
    label_order: list[str] | None = None,
) -> tuple[str, str | None]:
    """Convert a headed CSV export into triples (and optional gold pairs).

    String labels are mapped to indices in ``label_order`` if given, else in
    sorted order of appearance.  Returns the written paths.
    """
    with open(src, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise EmptyDatasetError(f"{src} has no data rows")
    values = label_order or sorted({r[label_col].strip() for r in rows})
    index = {v: k for k, v in enumerate(values)}
    os.makedirs(dest_dir, exist_ok=True)
    resp_path = os.path.join(dest_dir, "responses.csv")
    seen = set()
    gold: dict[str, int] = {}
    with open(resp_path, "w", newline="") as out:
        writer = csv.writer(out, lineterminator="\n")
        for r in rows:
            key = (r[worker_col].strip(), r[task_col].strip())
            if key in seen:
                continue
            seen.add(key)
            writer.writerow([key[0], key[1], index[r[label_col].strip()]])
            if gold_col and r.get(gold_col, "").strip():
                gold[key[1]] = index[r[gold_col].strip()]
    gold_path = None
    if gold_col:
        gold_path = os.path.join(dest_dir, "gold.csv")
        write_gold(gold, gold_path)
    return resp_path, gold_path
