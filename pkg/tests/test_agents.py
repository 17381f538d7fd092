import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vcltsc.agents import (
    DqnAgent,
    DqnConfig,
    PpoAgent,
    PpoConfig,
    ReplayBuffer,
    SignalEnv,
    Transition,
    advantages_and_returns,
    bellman_target,
    clipped_objective,
    clipped_objective_grad,
    dqn_train_step,
    epsilon,
    gae,
    load_policy,
    make_encoder,
    ppo_update,
    q_learning_update,
    ratio,
    save_result,
    select_action_dqn,
    train_dqn,
    train_ppo,
)
from vcltsc.errors import NonFiniteGradient, TransferIncompatible
from vcltsc.network import DemandSpec
from vcltsc.nn import Dense, Linear, Sequential, Softmax, load_checkpoint

# ---------------------------------------------------------------- primitives


def test_epsilon_schedule():
    assert epsilon(0, 100) == 1.0
    assert epsilon(100, 100) == 0.0
    assert epsilon(50, 100) == 0.5
    with pytest.raises(ValueError):
        epsilon(101, 100)


def test_greedy_and_ties():
    rng = np.random.default_rng(0)
    assert select_action_dqn([0] * 7 + [1], 0.0, rng) == 8
    assert select_action_dqn([1, 1, 0, 0, 0, 0, 0, 0], 0.0, rng) == 1


def test_uniform_exploration_within_3_sigma():
    rng = np.random.default_rng(123)
    draws = np.array([select_action_dqn(np.arange(8), 1.0, rng) for _ in range(10_000)])
    counts = np.bincount(draws, minlength=9)[1:]
    sigma = math.sqrt(10_000 * (1 / 8) * (7 / 8))
    assert np.all(np.abs(counts - 1250) < 3 * sigma)


def test_bellman_target():
    q = np.array([0.0, 2.0, -1.0])
    assert bellman_target(0.3, 0.0, q, False) == 0.3
    assert bellman_target(1.0, 0.5, q, False) == 2.0
    assert bellman_target(0.7, 0.9, q * 100, True) == 0.7


def test_ratio_and_clip():
    assert ratio(-1.2, -1.2) == 1.0
    assert ratio(math.log(2.0), 0.0) == pytest.approx(2.0, abs=1e-15)
    assert clipped_objective(1.5, 1.0, 0.2) == pytest.approx(1.2)
    assert clipped_objective(1.5, -1.0, 0.2) == -1.5
    for c in (0.05, 0.2, 0.9):
        assert clipped_objective(1.0, 0.37, c) == 0.37


@settings(max_examples=300, deadline=None)
@given(st.floats(1e-3, 10), st.floats(-10, 10), st.floats(0.01, 0.99))
def test_clipped_objective_is_lower_bound(r, a, c):
    assert ratio(-50, 50) > 0
    assert clipped_objective(r, a, c) <= r * a + 1e-12


def test_gae_examples():
    assert gae([0.4], 0.99, 0.95)[0] == 0.4
    assert not gae(np.zeros(7), 0.9, 0.9).any()
    np.testing.assert_allclose(gae([1.0, 1.0], 0.5, 1.0), [1.5, 1.0])


def test_gae_matches_explicit_sum():
    rng = np.random.default_rng(5)
    for _ in range(100):
        n = int(rng.integers(1, 65))
        d = rng.standard_normal(n)
        g, lam = rng.uniform(0.5, 1.0), rng.uniform(0.0, 1.0)
        brute = [sum((g * lam) ** k * d[t + k] for k in range(n - t)) for t in range(n)]
        assert np.max(np.abs(gae(d, g, lam) - brute)) < 1e-12


def test_gae_resets_at_terminal():
    np.testing.assert_allclose(gae([1.0, 1.0, 1.0], 1.0, 1.0, dones=[False, True, False]), [2.0, 1.0, 1.0])


def test_tabular_update():
    q = np.zeros((2, 2))
    q[1] = [3.0, 1.0]
    assert q_learning_update(q, 0, 1, 1.0, 1, alpha=0.5, gamma=0.5, terminal=False) == pytest.approx(1.25)


def test_replay_fifo_and_sampling():
    buf = ReplayBuffer(10000)
    for i in range(10_050):
        buf.add(Transition(np.array([i]), 1, 0.0, np.array([i]), False))
    assert len(buf) == 10000
    assert buf[0].state[0] == 50
    batch = buf.sample(64, np.random.default_rng(0))
    assert len({int(t.state[0]) for t in batch}) == 64
    with pytest.raises(ValueError):
        ReplayBuffer(3).sample(4, np.random.default_rng(0))


# ---------------------------------------------------------------- DQN


def _linear_q(n_states, seed=0, bias=True):
    net = Sequential([Dense(8), Linear()], (n_states,), seed=seed, dtype=np.float64)
    return net


CHAIN_GOAL = 3
GAMMA = 0.9


def _chain_step(s, a):
    s2 = min(s + 1, CHAIN_GOAL) if a % 2 == 1 else max(s - 1, 0)
    r = 0.2 if s2 == CHAIN_GOAL else -0.05
    return s2, r, s2 == CHAIN_GOAL


def _value_iteration():
    q = np.zeros((4, 8))
    for _ in range(200):
        new = np.zeros_like(q)
        for s in range(3):
            for a in range(1, 9):
                s2, r, term = _chain_step(s, a)
                new[s, a - 1] = r + (0.0 if term else GAMMA * q[s2].max())
        q = new
    return q


def test_chain_tabular_oracle():
    q_star = _value_iteration()
    q = np.zeros((4, 8))
    for _ in range(300):
        for s in range(3):
            for a in range(1, 9):
                s2, r, term = _chain_step(s, a)
                q_learning_update(q, s, a - 1, r, s2, 0.5, GAMMA, term)
    assert np.max(np.abs(q[:3] - q_star[:3])) < 1e-6


def test_chain_dqn_reaches_value_iteration():
    q_star = _value_iteration()
    eye = np.eye(4)
    agent = DqnAgent(_linear_q(4), DqnConfig(lr=1.0, gamma=GAMMA, target_sync_interval=100, optimizer="sgd",
                                             max_grad_norm=None), seed=0)
    for _ in range(4):
        for s in range(3):
            for a in range(1, 9):
                s2, r, term = _chain_step(s, a)
                agent.buffer.add(Transition(eye[s], a, r, eye[s2], term))
    for _ in range(5000):
        dqn_train_step(agent, agent.buffer.sample(64, agent.rng))
    q = agent.online(eye[:3])
    assert np.max(np.abs(q - q_star[:3])) < 1e-3


def test_dqn_zero_td_error_keeps_params():
    net = _linear_q(4, seed=2)
    agent = DqnAgent(net, DqnConfig(lr=0.5, optimizer="sgd", max_grad_norm=None), seed=0)
    eye = np.eye(4)
    q = net(eye)
    batch = [Transition(eye[i % 4], a, float(q[i % 4, a - 1]), eye[0], True) for i, a in enumerate(range(1, 9))]
    before = [p.copy() for p in net.param_arrays()]
    assert dqn_train_step(agent, batch) == pytest.approx(0.0, abs=1e-24)
    assert all(np.array_equal(b, p) for b, p in zip(before, net.param_arrays()))


def test_target_changes_only_at_sync():
    rng = np.random.default_rng(1)
    agent = DqnAgent(_linear_q(4), DqnConfig(lr=0.1, target_sync_interval=3), seed=0)
    for _ in range(80):
        agent.buffer.add(Transition(rng.random(4), int(rng.integers(1, 9)), float(rng.uniform(-0.8, 0.2)),
                                    rng.random(4), bool(rng.random() < 0.1)))
    snap = [p.copy() for p in agent.target.param_arrays()]
    for k in range(1, 10):
        loss = dqn_train_step(agent, agent.buffer.sample(16, agent.rng))
        assert np.isfinite(loss) and loss >= 0
        same = all(np.array_equal(a, b) for a, b in zip(snap, agent.target.param_arrays()))
        if k % 3 == 0:
            assert not same
            assert all(np.array_equal(a, b) for a, b in zip(agent.online.param_arrays(),
                                                            agent.target.param_arrays()))
            snap = [p.copy() for p in agent.target.param_arrays()]
        else:
            assert same


def test_dqn_nonfinite():
    agent = DqnAgent(_linear_q(4), DqnConfig(optimizer="sgd"), seed=0)
    t = Transition(np.array([np.nan, 0, 0, 0]), 1, 0.0, np.zeros(4), True)
    with pytest.raises(NonFiniteGradient):
        dqn_train_step(agent, [t])


# ---------------------------------------------------------------- PPO


def _toy_ppo(cfg, n_in=3, n_actions=2, seed=0):
    actor = Sequential([Dense(n_actions), Softmax()], (n_in,), seed=seed, dtype=np.float64)
    critic = Sequential([Dense(1), Linear()], (n_in,), seed=seed + 1, dtype=np.float64)
    return PpoAgent(actor, critic, cfg, seed)


def _fill(agent, n, rng, logp_fn=None):
    for _ in range(n):
        s = rng.random(agent.actor.input_shape)
        a, logp, v = agent.act(s)
        if logp_fn:
            logp = logp_fn(logp)
        agent.rollout.add(s, a, float(rng.uniform(-0.8, 0.2)), bool(rng.random() < 0.2), logp, v)


def test_ppo_first_pass_equals_minus_mean_advantage():
    cfg = PpoConfig(lr=0.0, optimizer="sgd", normalize_advantages=False, epochs_per_update=1, batch_size=8)
    agent = _toy_ppo(cfg)
    _fill(agent, 32, np.random.default_rng(0))
    adv, _ = advantages_and_returns(agent.rollout, cfg.gamma, cfg.gae_lambda)
    actor_loss, critic_loss = ppo_update(agent)
    assert actor_loss == pytest.approx(-adv.mean(), abs=1e-12)
    assert critic_loss >= 0
    assert len(agent.rollout) == 0


def test_ppo_zero_advantage_leaves_actor():
    cfg = PpoConfig(lr=0.3, optimizer="sgd", normalize_advantages=False, max_grad_norm=None)
    agent = _toy_ppo(cfg)
    rng = np.random.default_rng(1)
    states = [rng.random(3) for _ in range(10)]
    values = [agent.value(s) for s in states]
    ro = agent.rollout
    for t, s in enumerate(states):
        v_next = values[t + 1] if t + 1 < len(states) else 0.0
        ro.add(s, 1 + t % 2, values[t] - cfg.gamma * v_next, t == len(states) - 1, math.log(0.5), values[t])
    before = [p.copy() for p in agent.actor.param_arrays()]
    ppo_update(agent)
    for b, p in zip(before, agent.actor.param_arrays()):
        np.testing.assert_allclose(p, b, atol=1e-15)


def test_clipped_branch_has_zero_gradient_toy_policy():
    """Two-action softmax policy; ratio pushed beyond 1+clip with A > 0."""
    clip, adv, a = 0.2, 1.0, 0
    theta = np.array([1.0, -1.0])
    p_old = 0.3

    def objective(th):
        p = np.exp(th) / np.exp(th).sum()
        return float(clipped_objective(p[a] / p_old, adv, clip))

    p = np.exp(theta) / np.exp(theta).sum()
    rho = p[a] / p_old
    assert rho > 1 + clip
    eps = 1e-6
    fd = [(objective(theta + eps * e) - objective(theta - eps * e)) / (2 * eps) for e in np.eye(2)]
    dp_dtheta = p[a] * (np.eye(2)[a] - p)
    analytic = clipped_objective_grad(rho, adv, clip) * (rho / p[a]) * dp_dtheta
    assert np.all(analytic == 0.0)
    np.testing.assert_allclose(fd, 0.0, atol=1e-12)
    # inside the trust region the gradient is live and matches finite differences
    theta_in = np.array([0.0, 0.2])
    p = np.exp(theta_in) / np.exp(theta_in).sum()
    rho = p[a] / p_old * 0.0 + 1.0
    p_old_in = p[a]

    def objective_in(th):
        q = np.exp(th) / np.exp(th).sum()
        return float(clipped_objective(q[a] / p_old_in, adv, clip))

    fd = [(objective_in(theta_in + eps * e) - objective_in(theta_in - eps * e)) / (2 * eps) for e in np.eye(2)]
    analytic = clipped_objective_grad(rho, adv, clip) * (rho / p[a]) * p[a] * (np.eye(2)[a] - p)
    np.testing.assert_allclose(analytic, fd, atol=1e-8)


def test_ppo_update_ignores_clipped_samples():
    cfg = PpoConfig(lr=1.0, optimizer="sgd", normalize_advantages=False, max_grad_norm=None, epochs_per_update=1)
    agent = _toy_ppo(cfg)
    s = np.array([0.2, 0.5, 0.1])
    p = agent.probs(s)
    # stored old probability far below the current one: ratio > 1 + clip, positive advantage
    agent.rollout.add(s, 1, 1.0, True, math.log(p[0] / 2), 0.0)
    before = [x.copy() for x in agent.actor.param_arrays()]
    ppo_update(agent)
    assert all(np.array_equal(b, x) for b, x in zip(before, agent.actor.param_arrays()))


def test_ppo_config_checks():
    with pytest.raises(ValueError):
        PpoConfig(clip=1.0).check()
    with pytest.raises(ValueError):
        PpoConfig(gae_lambda=1.5).check()


# ---------------------------------------------------------------- training loops


def _tiny_env(kind="vcl", seed=0, d=500):
    return SignalEnv(make_encoder(kind, d), demand=DemandSpec.fixed_flow(400), horizon_s=240.0, seed=seed)


def test_train_dqn_smoke(tmp_path):
    cfg = DqnConfig(episodes=10, batch_size=16, target_sync_interval=20)
    res = train_dqn(_tiny_env(), cfg, seed=3)
    assert len(res.log) == 10
    eps = [r["epsilon"] for r in res.log]
    assert eps[0] == 1.0 and all(b < a for a, b in zip(eps, eps[1:])) and eps[-1] > 0
    assert len(res.agent.buffer) > 0
    assert all(-0.8 <= res.agent.buffer[i].reward <= 0.2 for i in range(len(res.agent.buffer)))
    save_result(res, tmp_path / "q.ckpt", tmp_path / "q.csv")
    ck = load_checkpoint(tmp_path / "q.ckpt")
    assert ck.partition == (500.0, 7.0, 10) and ck.meta["agent"] == "dqn"
    assert (tmp_path / "q.csv").read_text().count("\n") == 11


def test_train_ppo_smoke_and_determinism(tmp_path):
    cfg = PpoConfig(episodes=10, rollout_steps=24, batch_size=8, epochs_per_update=2)
    a = train_ppo(_tiny_env(seed=4), cfg, seed=4)
    b = train_ppo(_tiny_env(seed=4), cfg, seed=4)
    assert a.log == b.log
    assert len(a.log) == 10
    assert all(np.isfinite(r["critic_loss"]) for r in a.log if r["episode"] > 2)
    save_result(a, tmp_path / "p.ckpt")
    pol = load_policy(tmp_path / "p.ckpt")
    x = np.random.default_rng(0).random((2, 12, 10, 3))
    assert np.array_equal(pol.agent.actor(x), a.agent.actor(x))


def test_dqn_determinism():
    cfg = DqnConfig(episodes=3, batch_size=8)
    assert train_dqn(_tiny_env(seed=9), cfg, seed=9).log == train_dqn(_tiny_env(seed=9), cfg, seed=9).log


@pytest.mark.parametrize("kind", ["fcl", "agg"])
def test_ablation_encoders_train(kind, tmp_path):
    res = train_ppo(_tiny_env(kind), PpoConfig(episodes=2, rollout_steps=16, batch_size=8), seed=0)
    save_result(res, tmp_path / "m.ckpt")
    pol = load_policy(tmp_path / "m.ckpt")
    assert pol.encoder.kind == kind


def test_transfer_cell_count_guard(tmp_path):
    res = train_ppo(_tiny_env(d=300), PpoConfig(episodes=1, rollout_steps=8, batch_size=8), seed=0)
    save_result(res, tmp_path / "m.ckpt")
    pol = load_policy(tmp_path / "m.ckpt", detection_range_m=500, num_cells=10)
    assert list(pol.encoder.layout.lengths_m) == [7, 16, 25, 34, 44, 54, 64, 75, 85, 96]
    with pytest.raises(TransferIncompatible):
        load_policy(tmp_path / "m.ckpt", detection_range_m=500, num_cells=8)


def test_running_moments_match_numpy():
    from vcltsc.agents.core import RunningMoments
    rng = np.random.default_rng(0)
    chunks = [rng.normal(3, 2, size=int(rng.integers(1, 50))) for _ in range(20)]
    rm = RunningMoments()
    for c in chunks:
        rm.update(c)
    allx = np.concatenate(chunks)
    assert rm.mean == pytest.approx(allx.mean(), rel=1e-12)
    assert rm.std == pytest.approx(allx.std(), rel=1e-10)


def test_time_limit_bootstrap_vs_terminal():
    from vcltsc.agents import RolloutBuffer
    ro = RolloutBuffer()
    ro.add(np.zeros(1), 1, -0.5, True, 0.0, -10.0, boot_value=-10.0)
    adv, _ = advantages_and_returns(ro, 0.9, 0.95)
    assert adv[0] == pytest.approx(-0.5 + 0.9 * -10.0 + 10.0)
    ro = RolloutBuffer()
    ro.add(np.zeros(1), 1, -0.5, True, 0.0, -10.0)
    adv, _ = advantages_and_returns(ro, 0.9, 0.95)
    assert adv[0] == pytest.approx(9.5)
