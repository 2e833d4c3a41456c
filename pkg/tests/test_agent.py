import numpy as np
import pytest
from sklearn.base import clone

from eiwv.agent import (
    A2CAgent,
    DQNUniformAgent,
    FixedPolicy,
    RandomPolicy,
    ReplayBuffer,
    Transition,
    make_agent,
    train,
)
from eiwv.env import CrowdsourcingEnv, EnvConfig


def tr(delta, n=1):
    """Transition whose L1 state change is ``delta`` spread over ``n`` coordinates."""
    s = np.zeros(n)
    return Transition(s, np.zeros(n), 0.0, 0.0, s + delta / n)


def test_priority_example():
    buf = ReplayBuffer(diameter=10.0)
    # full collusion onset: every estimate jumps from 0.5 to 1
    onset = Transition(np.full(10, 0.5), np.zeros(10), 0.0, 0.0, np.ones(10))
    assert onset.delta == 5.0
    assert buf.push(onset) == 0.5
    assert buf.push(tr(0.0, 10)) == 1e-3


def test_equal_priorities_uniform():
    buf = ReplayBuffer(diameter=1.0)
    for _ in range(4):
        buf.push(tr(0.3))
    assert np.allclose(buf.probabilities(), 0.25)


def test_sampling_probabilities():
    buf = ReplayBuffer(diameter=1.0)
    buf.push(tr(0.2))
    buf.push(tr(0.4))
    assert np.allclose(buf.probabilities(), [1 / 3, 2 / 3])


def test_sampling_frequencies():
    buf = ReplayBuffer(diameter=1.0)
    deltas = [0.1, 0.3, 0.0, 0.6]
    for d in deltas:
        buf.push(tr(d))
    p = buf.probabilities()
    idx = buf.sample_indices(100_000, np.random.default_rng(0))
    freq = np.bincount(idx, minlength=4) / len(idx)
    big = p > 0.05
    # within 2% relative where counts are large, 5 standard errors for the floored one
    assert np.all(np.abs(freq[big] - p[big]) / p[big] < 0.02)
    assert np.all(np.abs(freq[~big] - p[~big]) < 5 * np.sqrt(p[~big] / len(idx)))


def test_capacity_two_evicts_first():
    buf = ReplayBuffer(capacity=2)
    first = tr(0.1)
    for t in (first, tr(0.2), tr(0.3)):
        buf.push(t)
    assert all(buf[k] is not first for k in range(len(buf)))


def test_buffer_fifo_eviction():
    buf = ReplayBuffer(capacity=3)
    for d in [0.1, 0.2, 0.3, 0.4]:
        buf.push(tr(d))
    assert len(buf) == 3
    assert np.allclose(buf.priorities, [0.2, 0.3, 0.4])


def test_buffer_errors():
    with pytest.raises(IndexError):
        ReplayBuffer().sample(1, 0)
    with pytest.raises(ValueError):
        ReplayBuffer(capacity=0)
    with pytest.raises(ValueError):
        ReplayBuffer(diameter=1.0).push(tr(2.0))


def setup_agent(agent, n=3, p_max=11.0):
    class Env:
        n_workers = n
        config = EnvConfig(p_max=p_max)

    agent.n_workers_ = n
    agent.p_min_, agent.p_max_ = 0.0, p_max
    agent._setup(Env(), np.random.default_rng(0))
    return agent


def test_zero_advantage_is_entropy_only():
    agent = setup_agent(A2CAgent(gamma=0.0, lr_critic=1e-9))
    s = np.full(3, 0.5)
    v = float(agent.critic_(s)[0])
    before = [p.copy() for p in agent.actor_.params()]
    ls = agent.head_.log_std.copy()
    agent.update([Transition(s, np.ones(3), 0.0, v, s)])
    # actor weights barely move (the critic shifted by ~lr); log std rises
    assert all(np.allclose(a, b, atol=1e-6) for a, b in zip(before, agent.actor_.params()))
    assert np.all(agent.head_.log_std > ls)


def test_gamma_zero_critic_target_is_reward():
    agent = setup_agent(A2CAgent(gamma=0.0, lr_critic=1e-2))
    s = np.full(3, 0.5)
    s2 = np.full(3, 0.9)
    for _ in range(800):
        agent.update([Transition(s, np.zeros(3), 0.0, 2.0, s2)])
    assert float(agent.critic_(s)[0]) == pytest.approx(2.0, abs=1e-2)


def test_nan_reward_raises():
    agent = setup_agent(A2CAgent())
    s = np.full(3, 0.5)
    with pytest.raises(FloatingPointError):
        agent.update([Transition(s, np.zeros(3), 0.0, float("nan"), s)])


def test_bandit_convergence(bandit):
    target = np.array([2.0, 5.0, 8.0, 3.0])
    env = bandit(target, horizon=5000)
    agent = A2CAgent(use_buffer=False, use_oracle=False, lr_actor=1e-3, lr_critic=1e-3, gamma=0.0)
    log = agent.fit(env, seed=0).log_
    assert np.all(np.abs(agent.predict(np.full(4, 0.5)) - target) < 0.5)
    ent = np.array(log.policy_entropy)
    assert ent[-500:].mean() < ent[:500].mean()


def test_oracle_flag_must_match(bluebirds):
    env = CrowdsourcingEnv(*bluebirds, EnvConfig(oracle=False, horizon=2))
    with pytest.raises(ValueError):
        train(env, A2CAgent(use_oracle=True), 0)


def small_env(bluebirds, **kw):
    kw.setdefault("horizon", 40)
    return CrowdsourcingEnv(*bluebirds, EnvConfig(**kw))


def test_same_seed_same_log(bluebirds):
    a = A2CAgent(use_oracle=True, hidden_sizes=(16,)).fit(small_env(bluebirds, oracle=True), 3).log_
    b = A2CAgent(use_oracle=True, hidden_sizes=(16,)).fit(small_env(bluebirds, oracle=True), 3).log_
    assert a.rows == b.rows
    c = A2CAgent(use_oracle=True, hidden_sizes=(16,)).fit(small_env(bluebirds, oracle=True), 4).log_
    assert a.rows != c.rows


def test_full_horizon_log(bluebirds):
    log = RandomPolicy().fit(small_env(bluebirds, horizon=600), 0).log_
    assert len(log) == 600
    w = log.workers
    assert w["payment"].shape == (600, 108)
    assert np.all((w["rate"] >= 0) & (w["rate"] <= 11))


def test_fixed_zero_nobody_participates(bluebirds):
    log = FixedPolicy(0.0).fit(small_env(bluebirds, collusion=False), 0).log_
    assert np.all(log.column("n_participants") == 0)
    assert np.allclose(log.column("est_accuracy"), 0.5)


def test_fixed_max_everyone_participates(bluebirds):
    log = FixedPolicy(11.0).fit(small_env(bluebirds, collusion=False, epsilon=0.0), 0).log_
    assert np.all(log.column("n_participants") == 108)


def test_dqn_levels(bluebirds):
    agent = DQNUniformAgent()
    assert agent.levels(11.0).tolist() == list(range(12))
    log = agent.fit(small_env(bluebirds, horizon=30), 1).log_
    pays = log.workers["rate"]
    assert np.all(pays == pays[:, :1])  # one level for everyone
    assert set(np.unique(pays)) <= set(range(12))
    assert agent.predict(np.full(108, 0.5)).shape == (108,)


def test_checkpoint_roundtrip(tmp_path, bluebirds):
    env = small_env(bluebirds, horizon=10)
    agent = A2CAgent(use_oracle=False, hidden_sizes=(8,)).fit(env, 0)
    path = tmp_path / "agent.ckpt"
    agent.save(path)
    back = A2CAgent(use_oracle=False, hidden_sizes=(8,)).load(path, env)
    s = np.random.default_rng(0).random(108)
    assert np.array_equal(agent.predict(s), back.predict(s))


def test_sklearn_surface():
    a = A2CAgent(lr_actor=1e-3)
    assert a.get_params()["lr_actor"] == 1e-3
    b = clone(a).set_params(gamma=0.5)
    assert b.gamma == 0.5 and a.gamma == 0.99
    with pytest.raises(Exception):
        a.predict(np.zeros(3))


def test_make_agent():
    a = make_agent("a2c_is_oracle")
    assert a.use_buffer and a.use_oracle
    p = make_agent("a2c_plain")
    assert not p.use_buffer and not p.use_oracle
    assert isinstance(make_agent("fixed", payment=3.0), FixedPolicy)
    with pytest.raises(ValueError):
        make_agent("ppo")


def test_bad_gamma(bluebirds):
    with pytest.raises(ValueError):
        A2CAgent(gamma=1.0, use_oracle=False).fit(small_env(bluebirds, horizon=2), 0)


def test_no_gold_without_oracle(bluebirds):
    from eiwv.dataset import GoldLabels

    table, _ = bluebirds
    env = CrowdsourcingEnv(table, GoldLabels({}, 2), EnvConfig(horizon=15))
    log = A2CAgent(use_oracle=False, hidden_sizes=(8,)).fit(env, 0).log_
    assert len(log) == 15 and not log.column("oracle_called").any()


@pytest.mark.slow
def test_beats_random_on_honest_crowd(bluebirds):
    finals = {"a2c": [], "random": []}
    for seed in (1, 2, 3, 4, 5):
        for name, agent in (("a2c", A2CAgent(use_oracle=True)), ("random", RandomPolicy())):
            env = CrowdsourcingEnv(*bluebirds, EnvConfig(collusion=False, oracle=name == "a2c"))
            agent.use_oracle = name == "a2c"
            finals[name].append(agent.fit(env, seed).log_.final("true_reward"))
    assert np.median(finals["a2c"]) > np.median(finals["random"])
