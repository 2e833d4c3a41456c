"""Payment-setting agents: A2C with state-change prioritised replay, plus baselines.

Every agent follows the same scikit-learn flavoured surface: hyperparameters
are constructor arguments (so ``get_params``/``set_params``/``clone`` work),
``fit(env, seed)`` runs one training episode and stores its log in ``log_``,
and ``predict(state)`` returns payment rates for an observation.
"""

from __future__ import annotations

import json
import math
import os
from collections import deque
from dataclasses import asdict, dataclass, field, is_dataclass

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .env import PaymentAction, StepInfo
from .metrics import write_step_csv, write_worker_csv
from .nn import Adam, DenseNet, GaussianHead, clip_grad_norm, load_checkpoint, save_checkpoint, squash_to_range
from .validation import check_random_state, check_state_vector

__all__ = [
    "Transition",
    "ReplayBuffer",
    "TrainLog",
    "A2CAgent",
    "FixedPolicy",
    "RandomPolicy",
    "DQNUniformAgent",
    "train",
    "baseline_policy",
    "make_agent",
    "AGENT_MODES",
]


@dataclass
class Transition:
    state: np.ndarray
    action: np.ndarray
    log_prob: float
    reward: float
    next_state: np.ndarray
    done: bool = False
    delta: float = field(init=False)

    def __post_init__(self):
        self.delta = float(np.abs(np.asarray(self.next_state) - np.asarray(self.state)).sum())


class ReplayBuffer:
    """Ring buffer sampled with probability proportional to state change.

    A transition's priority is ``max(delta / diameter, p_floor)`` where
    ``delta`` is the L1 distance between consecutive observations and
    ``diameter`` the largest possible such distance (``N`` for ``[0, 1]^N``).
    """

    def __init__(self, capacity: int = 10_000, diameter: float = 1.0, p_floor: float = 1e-3):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        if diameter <= 0 or p_floor <= 0:
            raise ValueError("diameter and p_floor must be positive")
        self.capacity = capacity
        self.diameter = float(diameter)
        self.p_floor = float(p_floor)
        self._items: deque[Transition] = deque(maxlen=capacity)
        self._prio: deque[float] = deque(maxlen=capacity)

    def __len__(self) -> int:
        return len(self._items)

    def __getitem__(self, k) -> Transition:
        return self._items[k]

    @property
    def priorities(self) -> np.ndarray:
        return np.fromiter(self._prio, dtype=float, count=len(self._prio))

    def push(self, transition: Transition) -> float:
        if transition.delta > self.diameter * (1 + 1e-9):
            raise ValueError(f"state change {transition.delta} exceeds the diameter {self.diameter}")
        priority = max(transition.delta / self.diameter, self.p_floor)
        self._items.append(transition)
        self._prio.append(priority)
        return priority

    def probabilities(self) -> np.ndarray:
        p = self.priorities
        return p / p.sum()

    def sample_indices(self, k: int, rng) -> np.ndarray:
        if not self._items:
            raise IndexError("cannot sample from an empty replay buffer")
        rng = check_random_state(rng)
        return rng.choice(len(self._items), size=k, replace=True, p=self.probabilities())

    def sample(self, k: int, rng) -> list[Transition]:
        return [self._items[i] for i in self.sample_indices(k, rng)]


class TrainLog:
    """Per-step records of one episode plus per-worker arrays.

    ``rows`` hold the scalar step fields of :class:`StepInfo`; ``workers``
    maps ``rate``, ``payment``, ``effort``, ``tasks`` and ``utility`` to
    ``(T, N)`` arrays.
    """

    WORKER_FIELDS = ("rate", "payment", "effort", "tasks", "utility")

    def __init__(self, meta: dict | None = None):
        self.meta = dict(meta or {})
        self.rows: list[dict] = []
        self._workers: dict[str, list] = {k: [] for k in self.WORKER_FIELDS}
        self.cumulative_platform_utility = 0.0
        self.cumulative_worker_utility: np.ndarray | None = None
        self.policy_entropy: list[float] = []
        self.losses: list[dict] = []

    def __len__(self) -> int:
        return len(self.rows)

    def record(self, rates, info: StepInfo) -> None:
        self.rows.append(info.row())
        self._workers["rate"].append(np.asarray(rates, dtype=float))
        self._workers["payment"].append(info.payments)
        self._workers["effort"].append(info.efforts)
        self._workers["tasks"].append(info.counts)
        self._workers["utility"].append(info.worker_utilities)

    @property
    def workers(self) -> dict[str, np.ndarray]:
        return {k: np.array(v) for k, v in self._workers.items()}

    def column(self, name: str) -> np.ndarray:
        return np.array([r[name] for r in self.rows])

    def final(self, name: str = "true_reward") -> float:
        return float(self.rows[-1][name])

    def to_csv(self, directory) -> tuple[str, str, str]:
        """Write ``steps.csv``, ``workers.csv`` and ``meta.json`` into ``directory``."""
        os.makedirs(directory, exist_ok=True)
        steps = os.path.join(directory, "steps.csv")
        workers = os.path.join(directory, "workers.csv")
        meta = os.path.join(directory, "meta.json")
        write_step_csv(self.rows, steps)
        write_worker_csv(self.workers, workers)
        info = dict(self.meta)
        info["cumulative_platform_utility"] = self.cumulative_platform_utility
        if self.cumulative_worker_utility is not None:
            info["cumulative_worker_utility"] = [float(x) for x in self.cumulative_worker_utility]
        with open(meta, "w") as fh:
            json.dump(info, fh, indent=1, sort_keys=True)
        return steps, workers, meta


class _Agent(BaseEstimator):
    """Shared episode driver; subclasses implement ``_setup``, ``_act``, ``_learn``."""

    use_oracle = False

    def _setup(self, env, rng):
        pass

    def _act(self, obs, rng):
        raise NotImplementedError

    def _learn(self, transition: Transition, rng):
        pass

    def fit(self, env, seed=None):
        """Run one training episode of ``env.config.horizon`` steps."""
        self.log_ = train(env, self, seed)
        return self

    def predict(self, state):
        raise NotImplementedError


def train(env, agent: _Agent, seed=None) -> TrainLog:
    """Interact with ``env`` for one horizon, learning online.

    Environment and agent randomness are independent streams spawned from
    ``seed``, so a fixed seed reproduces the whole log.
    """
    cfg = env.config
    if bool(getattr(agent, "use_oracle", False)) != bool(cfg.oracle):
        raise ValueError("agent.use_oracle and env.config.oracle must agree")
    env_ss, agent_ss = np.random.SeedSequence(seed).spawn(2)
    rng = np.random.default_rng(agent_ss)
    obs = np.asarray(env.reset(env_ss).accuracy, dtype=float)
    agent.n_workers_ = env.n_workers
    agent.p_min_, agent.p_max_ = cfg.p_min, cfg.p_max
    agent._setup(env, rng)
    meta = {"agent": type(agent).__name__, "eta": env.eta, "seed": seed}
    if is_dataclass(cfg):
        for k in ("alpha", "window", "accuracy_term"):
            if hasattr(cfg, k):
                meta[k] = getattr(cfg, k)
        meta["config"] = asdict(cfg)
    log = TrainLog(meta=meta)
    T = cfg.horizon
    for t in range(T):
        rates, raw, logp = agent._act(obs, rng)
        action = PaymentAction.from_rates(rates, cfg.p_min, cfg.p_max, cfg.theta, cfg.oracle)
        state, reward, info = env.step(action)
        nxt = np.asarray(state.accuracy, dtype=float)
        if isinstance(info, StepInfo):
            log.record(action.payments, info)
        tr = Transition(obs, np.asarray(raw, dtype=float), float(logp), float(reward), nxt, done=t == T - 1)
        agent._learn(tr, rng)
        if hasattr(agent, "head_"):
            log.policy_entropy.append(agent.head_.entropy())
        obs = nxt
    log.cumulative_platform_utility = getattr(env, "cumulative_platform_utility", float("nan"))
    cw = getattr(env, "cumulative_worker_utility", None)
    log.cumulative_worker_utility = None if cw is None else np.array(cw)
    return log


class A2CAgent(_Agent):
    """Advantage actor-critic with a diagonal Gaussian policy over payment rates.

    With ``use_buffer`` each step's update draws ``batch_size`` transitions
    from a :class:`ReplayBuffer`; otherwise it uses the latest transition
    only.  Log-probabilities of replayed actions are recomputed under the
    current policy; there is no off-policy correction.
    """

    def __init__(
        self,
        use_buffer=True,
        use_oracle=True,
        gamma=0.99,
        lr_actor=3e-4,
        lr_critic=3e-4,
        entropy_coef=1e-2,
        batch_size=32,
        updates_per_step=1,
        buffer_capacity=10_000,
        p_floor=1e-3,
        hidden_sizes=(64, 64),
        init_sigma=0.5,
        sigma_min=1e-3,
        sigma_max=None,
        grad_clip=5.0,
        squash="clip",
    ):
        self.use_buffer = use_buffer
        self.use_oracle = use_oracle
        self.gamma = gamma
        self.lr_actor = lr_actor
        self.lr_critic = lr_critic
        self.entropy_coef = entropy_coef
        self.batch_size = batch_size
        self.updates_per_step = updates_per_step
        self.buffer_capacity = buffer_capacity
        self.p_floor = p_floor
        self.hidden_sizes = hidden_sizes
        self.init_sigma = init_sigma
        self.sigma_min = sigma_min
        self.sigma_max = sigma_max
        self.grad_clip = grad_clip
        self.squash = squash

    def _setup(self, env, rng):
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError("gamma must lie in [0, 1)")
        if self.lr_actor <= 0 or self.lr_critic <= 0:
            raise ValueError("learning rates must be positive")
        n = env.n_workers
        sizes = [n, *self.hidden_sizes]
        self.actor_ = DenseNet.from_sizes([*sizes, n], rng=rng, out_scale=0.01)
        self.critic_ = DenseNet.from_sizes([*sizes, 1], rng=rng)
        sigma_max = self.sigma_max if self.sigma_max is not None else env.config.p_max / 2
        self.head_ = GaussianHead.constant(n, self.init_sigma, self.sigma_min, sigma_max)
        self.actor_opt_ = Adam(self.actor_.params() + [self.head_.log_std], lr=self.lr_actor)
        self.critic_opt_ = Adam(self.critic_.params(), lr=self.lr_critic)
        self.buffer_ = ReplayBuffer(self.buffer_capacity, diameter=float(n), p_floor=self.p_floor)
        self.n_updates_ = 0

    def _act(self, obs, rng):
        mean = self.actor_(obs)
        raw, logp = self.head_.sample(mean, rng)
        return squash_to_range(raw, self.p_min_, self.p_max_, self.squash), raw, logp

    def predict(self, state):
        """Deterministic payment rates (the policy mean) for one observation."""
        check_is_fitted(self, "actor_")
        s = check_state_vector(state, self.actor_.n_in)
        return squash_to_range(self.actor_(s), self.p_min_, self.p_max_, self.squash)

    def _learn(self, transition, rng):
        self.buffer_.push(transition)
        for _ in range(self.updates_per_step):
            if self.use_buffer:
                batch = self.buffer_.sample(self.batch_size, rng)
            else:
                batch = [transition]
            self.update(batch)

    def update(self, batch: list[Transition]) -> dict:
        """One actor and one critic Adam step on ``batch``; returns loss stats."""
        if not batch:
            raise ValueError("empty batch")
        S = np.stack([b.state for b in batch])
        S2 = np.stack([b.next_state for b in batch])
        RAW = np.stack([b.action for b in batch])
        R = np.array([b.reward for b in batch])
        D = np.array([b.done for b in batch], dtype=float)
        B = len(batch)

        V, c_cache = self.critic_.forward(S)
        V2 = self.critic_(S2)[:, 0]
        target = R + self.gamma * (1.0 - D) * V2
        adv = target - V[:, 0]
        critic_loss = float(np.mean(adv**2))

        mu, a_cache = self.actor_.forward(S)
        logp = self.head_.log_prob(RAW, mu)
        entropy = self.head_.entropy()
        actor_loss = float(-np.mean(logp * adv) - self.entropy_coef * entropy)
        if not (math.isfinite(critic_loss) and math.isfinite(actor_loss)):
            raise FloatingPointError(
                f"non-finite loss after {self.n_updates_} updates (critic={critic_loss}, actor={actor_loss})"
            )

        c_grads = self.critic_.backward(c_cache, (-2.0 * adv / B)[:, None])
        clip_grad_norm(c_grads, self.grad_clip)
        self.critic_opt_.step(c_grads)

        g_mu, g_logstd = self.head_.log_prob_grads(RAW, mu)
        a_grads = self.actor_.backward(a_cache, -(adv[:, None] * g_mu) / B)
        a_grads.append(-(adv[:, None] * g_logstd).mean(axis=0) - self.entropy_coef)
        clip_grad_norm(a_grads, self.grad_clip)
        self.actor_opt_.step(a_grads)
        self.head_.clamp()
        self.n_updates_ += 1
        return {"critic_loss": critic_loss, "actor_loss": actor_loss, "entropy": entropy}

    def save(self, path) -> None:
        check_is_fitted(self, "actor_")
        tensors = {}
        for name, net in (("actor", self.actor_), ("critic", self.critic_)):
            for k, p in enumerate(net.params()):
                tensors[f"{name}.{k}"] = p
        tensors["log_std"] = self.head_.log_std
        save_checkpoint(path, tensors)

    def load(self, path, env) -> "A2CAgent":
        """Restore networks saved by :meth:`save` for an env of the same size."""
        rng = np.random.default_rng(0)
        self.n_workers_ = env.n_workers
        self.p_min_, self.p_max_ = env.config.p_min, env.config.p_max
        self._setup(env, rng)
        tensors = load_checkpoint(path)
        for name, net in (("actor", self.actor_), ("critic", self.critic_)):
            for k, p in enumerate(net.params()):
                p[...] = tensors[f"{name}.{k}"]
        self.head_.log_std[...] = tensors["log_std"]
        return self


class FixedPolicy(_Agent):
    """Pays every worker the same fixed rate."""

    def __init__(self, payment=11.0):
        self.payment = payment

    def _setup(self, env, rng):
        self.fitted_ = True

    def _act(self, obs, rng):
        rates = np.full(len(obs), float(self.payment))
        return rates, rates, 0.0

    def predict(self, state):
        return np.full(len(state), float(self.payment))


class RandomPolicy(_Agent):
    """Pays each worker an independent uniform rate in ``[P_min, P_max]``."""

    def _setup(self, env, rng):
        self.fitted_ = True

    def _act(self, obs, rng):
        rates = rng.uniform(self.p_min_, self.p_max_, size=len(obs))
        return rates, rates, 0.0

    def predict(self, state):
        check_is_fitted(self, "fitted_")
        return np.full(len(state), 0.5 * (self.p_min_ + self.p_max_))


class DQNUniformAgent(_Agent):
    """Epsilon-greedy Q-learning over one payment level shared by all workers.

    Levels are the integers ``0 .. floor(P_max)`` (clipped up to ``P_min``).
    This is a structural stand-in for a discretised uniform-payment baseline,
    trained with the same replay machinery as :class:`A2CAgent`.
    """

    def __init__(
        self,
        use_buffer=True,
        gamma=0.99,
        lr=1e-3,
        batch_size=32,
        updates_per_step=1,
        buffer_capacity=10_000,
        p_floor=1e-3,
        hidden_sizes=(64, 64),
        epsilon_start=1.0,
        epsilon_end=0.05,
        explore_steps=200,
        target_sync=50,
        grad_clip=5.0,
    ):
        self.use_buffer = use_buffer
        self.gamma = gamma
        self.lr = lr
        self.batch_size = batch_size
        self.updates_per_step = updates_per_step
        self.buffer_capacity = buffer_capacity
        self.p_floor = p_floor
        self.hidden_sizes = hidden_sizes
        self.epsilon_start = epsilon_start
        self.epsilon_end = epsilon_end
        self.explore_steps = explore_steps
        self.target_sync = target_sync
        self.grad_clip = grad_clip

    def levels(self, p_max=None, p_min=0.0) -> np.ndarray:
        p_max = self.p_max_ if p_max is None else p_max
        return np.maximum(np.arange(0, int(math.floor(p_max)) + 1, dtype=float), p_min)

    def _setup(self, env, rng):
        n = env.n_workers
        self.levels_ = self.levels(env.config.p_max, env.config.p_min)
        self.q_ = DenseNet.from_sizes([n, *self.hidden_sizes, len(self.levels_)], rng=rng)
        self.q_target_ = self.q_.copy()
        self.opt_ = Adam(self.q_.params(), lr=self.lr)
        self.buffer_ = ReplayBuffer(self.buffer_capacity, diameter=float(n), p_floor=self.p_floor)
        self.steps_ = 0

    def epsilon(self, step: int) -> float:
        frac = min(1.0, step / max(1, self.explore_steps))
        return self.epsilon_start + frac * (self.epsilon_end - self.epsilon_start)

    def _act(self, obs, rng):
        if rng.random() < self.epsilon(self.steps_):
            k = int(rng.integers(len(self.levels_)))
        else:
            k = int(np.argmax(self.q_(obs)))
        return np.full(len(obs), self.levels_[k]), np.array([k], dtype=float), 0.0

    def predict(self, state):
        check_is_fitted(self, "q_")
        k = int(np.argmax(self.q_(np.asarray(state, dtype=float))))
        return np.full(len(state), self.levels_[k])

    def _learn(self, transition, rng):
        self.buffer_.push(transition)
        self.steps_ += 1
        for _ in range(self.updates_per_step):
            batch = self.buffer_.sample(self.batch_size, rng) if self.use_buffer else [transition]
            S = np.stack([b.state for b in batch])
            S2 = np.stack([b.next_state for b in batch])
            A = np.array([int(b.action[0]) for b in batch])
            R = np.array([b.reward for b in batch])
            D = np.array([b.done for b in batch], dtype=float)
            Q, cache = self.q_.forward(S)
            target = R + self.gamma * (1.0 - D) * self.q_target_(S2).max(axis=1)
            rows = np.arange(len(batch))
            err = Q[rows, A] - target
            grad = np.zeros_like(Q)
            grad[rows, A] = 2.0 * err / len(batch)
            grads = self.q_.backward(cache, grad)
            clip_grad_norm(grads, self.grad_clip)
            self.opt_.step(grads)
        if self.steps_ % self.target_sync == 0:
            self.q_target_ = self.q_.copy()


AGENT_MODES = ("a2c_is_oracle", "a2c_is", "a2c_oracle", "a2c_plain", "fixed", "random", "dqn_uniform")


def baseline_policy(kind: str, **params) -> _Agent:
    if kind == "fixed":
        return FixedPolicy(**params)
    if kind == "random":
        return RandomPolicy(**params)
    if kind == "dqn_uniform":
        return DQNUniformAgent(**params)
    raise ValueError(f"unknown baseline {kind!r}")


def make_agent(mode: str, **params) -> _Agent:
    """Agent for one of :data:`AGENT_MODES`; ``params`` go to its constructor."""
    if mode not in AGENT_MODES:
        raise ValueError(f"unknown agent mode {mode!r}; choose from {AGENT_MODES}")
    if mode.startswith("a2c"):
        return A2CAgent(use_buffer="_is" in mode, use_oracle=mode.endswith("oracle"), **params)
    return baseline_policy(mode, **params)


def mode_uses_oracle(mode: str) -> bool:
    return mode in ("a2c_is_oracle", "a2c_oracle")
