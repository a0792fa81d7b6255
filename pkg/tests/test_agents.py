import numpy as np
import pytest

from riscf.agents import (AgentHyper, StateNormalizer, Td3Agent, map_actions,
                          normalize_state)
from riscf.twin import AgentState


def _hyper(**kw):
    base = dict(learning_rate=1e-3, gamma=0.99, soft_update=0.001,
                actor_delay=5, smooth_sigma=0.5, smooth_clip=1.0,
                explore_prob=0.9, explore_sigma=0.1, explore_decay=0.999,
                hidden=(8, 8), variant="td3")
    base.update(kw)
    return AgentHyper(**base)


def _agent(state_dim=6, action_dim=2, seed=0, **kw):
    return Td3Agent(state_dim, action_dim, _hyper(**kw),
                    np.random.default_rng(seed))


def _batch(agent, n=16, seed=1):
    rng = np.random.default_rng(seed)
    s = rng.normal(size=(n, agent.state_dim))
    a = rng.uniform(-1, 1, size=(n, agent.action_dim))
    r = rng.normal(size=n)
    s2 = rng.normal(size=(n, agent.state_dim))
    return s, a, r, s2


def _params_snapshot(net):
    return [p.copy() for p in net.parameters()]


def _params_equal(net, snap):
    return all(np.array_equal(p, s) for p, s in zip(net.parameters(), snap))


# ---------------------------------------------------------------------------
# state normalization

def test_power_block_static_bound():
    raw = AgentState(alpha=np.zeros(3), p=np.array([0.0, 0.2, 0.4]),
                     phi=np.zeros(0))
    vec, _ = normalize_state(raw, running_max_alpha=1.0, p_max=0.4)
    assert np.allclose(vec[3:6], [0.0, 0.5, 1.0])


def test_alpha_block_max_abs():
    raw = AgentState(alpha=np.array([0.0, -3.0, 6.0]), p=np.zeros(3),
                     phi=np.zeros(0))
    vec, new_max = normalize_state(raw, running_max_alpha=1.0, p_max=0.4)
    assert new_max == 6.0
    assert np.allclose(vec[:3], [0.0, -0.5, 1.0])


def test_phase_block_divided_by_two_pi():
    raw = AgentState(alpha=np.zeros(1), p=np.zeros(1),
                     phi=np.array([0.0, np.pi, 1.5 * np.pi]))
    vec, _ = normalize_state(raw, 1.0, 1.0)
    assert np.allclose(vec[2:], [0.0, 0.5, 0.75])


def test_running_max_keeps_magnitudes_bounded():
    rng = np.random.default_rng(0)
    norm = StateNormalizer(p_max=0.4)
    for _ in range(200):
        raw = AgentState(alpha=rng.uniform(0, 1000, 3),
                         p=rng.uniform(0, 0.4, 3),
                         phi=rng.uniform(0, 2 * np.pi, 4))
        vec = norm(raw)
        assert np.all(np.abs(vec) <= 1.0 + 1e-12)
    # the divisor never decreases
    assert norm.running_max_alpha >= 1.0


def test_normalizer_disabled_passes_raw_state():
    norm = StateNormalizer(p_max=0.4, enabled=False)
    raw = AgentState(alpha=np.array([7.0]), p=np.array([0.3]),
                     phi=np.array([4.0]))
    assert np.array_equal(norm(raw), [7.0, 0.3, 4.0])


def test_nonpositive_running_max_rejected():
    raw = AgentState(alpha=np.zeros(1), p=np.zeros(1), phi=np.zeros(0))
    with pytest.raises(ValueError):
        normalize_state(raw, 0.0, 1.0)


# ---------------------------------------------------------------------------
# acting and action maps

def test_deterministic_act_repeats():
    agent = _agent()
    s = np.random.default_rng(2).normal(size=6)
    a1 = agent.act(s, explore=False, rng=np.random.default_rng(0))
    a2 = agent.act(s, explore=False, rng=np.random.default_rng(99))
    assert np.array_equal(a1, a2)


def test_zero_actor_maps_to_midrange_decisions():
    agent = _agent()
    for w in agent.actor.ws:
        w[:] = 0.0
    for b in agent.actor.bs:
        b[:] = 0.0
    a = agent.act(np.ones(6), explore=False, rng=np.random.default_rng(0))
    assert np.array_equal(a, np.zeros(2))
    p, phi = map_actions(a[:1], a[1:], p_max=0.4)
    assert p[0] == pytest.approx(0.2)
    assert phi[0] == pytest.approx(np.pi)


def test_exploration_noise_statistics():
    agent = _agent(action_dim=1)
    for w in agent.actor.ws:
        w[:] = 0.0  # clean action 0, far from the clamp
    for b in agent.actor.bs:
        b[:] = 0.0
    agent.hyper.explore_prob = 1.0
    rng = np.random.default_rng(3)
    s = np.zeros(6)
    draws = np.array([agent.act(s, True, rng)[0] for _ in range(10_000)])
    assert abs(draws.std() - agent.explore_sigma) / agent.explore_sigma < 0.05


def test_exploration_gate_probability():
    agent = _agent(action_dim=1)
    agent.hyper.explore_prob = 0.0
    s = np.random.default_rng(1).normal(size=6)
    clean = agent.act(s, explore=False, rng=np.random.default_rng(0))
    noisy = agent.act(s, explore=True, rng=np.random.default_rng(0))
    assert np.array_equal(clean, noisy)


def test_actions_always_in_bounds():
    agent = _agent(action_dim=3)
    agent.explore_sigma = 5.0  # huge noise still clamps
    rng = np.random.default_rng(4)
    for _ in range(200):
        a = agent.act(rng.normal(size=6), True, rng)
        assert np.all(a >= -1.0) and np.all(a <= 1.0)


def test_map_action_endpoints_and_wrap():
    p, phi = map_actions(np.array([-1.0, 1.0]), np.array([-1.0, 0.0, 1.0]), 0.4)
    assert np.allclose(p, [0.0, 0.4])
    assert phi[0] == pytest.approx(0.0)
    assert phi[1] == pytest.approx(np.pi)
    assert phi[2] == pytest.approx(0.0)  # 2*pi wraps onto 0
    assert np.all(phi >= 0.0) and np.all(phi < 2 * np.pi)


def test_exploration_decay_per_episode():
    agent = _agent()
    s0 = agent.explore_sigma
    agent.decay_exploration()
    assert agent.explore_sigma == pytest.approx(s0 * 0.999)


# ---------------------------------------------------------------------------
# targets

def test_zero_discount_targets_equal_rewards():
    agent = _agent(gamma=0.0)
    batch = _batch(agent)
    y = agent.target_q(batch, np.random.default_rng(0))
    assert np.allclose(y, batch[2])


def test_identical_twin_critics_match_single_critic_target():
    agent = _agent(smooth_sigma=0.0)
    agent.critic2_target.copy_from(agent.critic1_target)
    batch = _batch(agent)
    y = agent.target_q(batch, np.random.default_rng(0))
    s2 = batch[3]
    a2 = agent.actor_target.forward(s2)
    q = agent.critic1_target.forward(np.concatenate([s2, a2], axis=1))[:, 0]
    assert np.allclose(y, batch[2] + agent.hyper.gamma * q)


def test_target_matches_scalar_composition():
    agent = _agent(seed=7)
    batch = _batch(agent, n=8, seed=8)
    y = agent.target_q(batch, np.random.default_rng(21))
    # replicate the single noise draw, then compose the formula by hand
    rng = np.random.default_rng(21)
    s2 = batch[3]
    a2 = agent.actor_target.forward(s2)
    eps = np.clip(rng.normal(0.0, 0.5, size=a2.shape), -1.0, 1.0)
    a2 = np.clip(a2 + eps, -1.0, 1.0)
    x2 = np.concatenate([s2, a2], axis=1)
    q1 = agent.critic1_target.forward(x2)[:, 0]
    q2 = agent.critic2_target.forward(x2)[:, 0]
    want = batch[2] + agent.hyper.gamma * np.minimum(q1, q2)
    assert np.allclose(y, want, rtol=1e-12)


def test_clipped_double_q_never_exceeds_single_critic_targets():
    agent = _agent(seed=9)
    rng = np.random.default_rng(10)
    for _ in range(50):
        batch = _batch(agent, n=8, seed=int(rng.integers(1 << 30)))
        noise_seed = int(rng.integers(1 << 30))
        y = agent.target_q(batch, np.random.default_rng(noise_seed))
        nrng = np.random.default_rng(noise_seed)
        s2 = batch[3]
        a2 = agent.actor_target.forward(s2)
        eps = np.clip(nrng.normal(0.0, 0.5, size=a2.shape), -1.0, 1.0)
        a2 = np.clip(a2 + eps, -1.0, 1.0)
        x2 = np.concatenate([s2, a2], axis=1)
        y1 = batch[2] + agent.hyper.gamma * agent.critic1_target.forward(x2)[:, 0]
        y2 = batch[2] + agent.hyper.gamma * agent.critic2_target.forward(x2)[:, 0]
        assert np.all(y <= y1 + 1e-12) and np.all(y <= y2 + 1e-12)


def test_target_noise_is_clipped():
    agent = _agent(smooth_sigma=50.0, smooth_clip=0.25, gamma=0.0, seed=3)
    batch = _batch(agent)
    # gamma 0 hides the critics; check the clipping through the smoothed
    # action instead
    rng = np.random.default_rng(5)
    a2 = agent.actor_target.forward(batch[3])
    eps = np.clip(rng.normal(0.0, 50.0, size=a2.shape), -0.25, 0.25)
    assert np.all(np.abs(eps) <= 0.25)


# ---------------------------------------------------------------------------
# critic updates

def test_zero_error_leaves_critic_unchanged():
    agent = _agent()
    for net in (agent.critic1, agent.critic2):
        for w in net.ws:
            w[:] = 0.0
        for b in net.bs:
            b[:] = 0.0
    batch = _batch(agent)
    snap1 = _params_snapshot(agent.critic1)
    loss = agent.critic_update(batch, np.zeros(16))
    assert loss == 0.0
    assert _params_equal(agent.critic1, snap1)


def test_critic_step_descends_on_scalar_problem():
    agent = _agent(seed=5)
    batch = _batch(agent, n=1, seed=6)
    y = np.array([3.0])
    s, a, _, _ = batch
    x = np.concatenate([s, a], axis=1)
    before = float((agent.critic1.forward(x)[:, 0] - y) ** 2)
    for _ in range(50):
        agent.critic_update(batch, y)
    after = float((agent.critic1.forward(x)[:, 0] - y) ** 2)
    assert after < before


def test_critic_gradient_matches_batch_loss_finite_differences():
    agent = _agent(seed=11)
    batch = _batch(agent, n=4, seed=12)
    s, a, _, _ = batch
    x = np.concatenate([s, a], axis=1)
    y = np.random.default_rng(13).normal(size=4)
    net = agent.critic1

    acts = net.forward_cached(x)
    err = acts[-1][:, 0] - y
    upstream = (2.0 / 4) * err[:, None]
    dws, dbs, _ = net.backward(acts, upstream)

    def loss():
        return float(np.mean((net.forward(x)[:, 0] - y) ** 2))

    h = 1e-5
    params = [net.ws[0], net.bs[0], net.ws[1], net.bs[1], net.ws[2], net.bs[2]]
    grads = [dws[0], dbs[0], dws[1], dbs[1], dws[2], dbs[2]]
    for p, g in zip(params, grads):
        flat, gflat = p.reshape(-1), np.asarray(g).reshape(-1)
        idx = np.random.default_rng(14).choice(flat.size,
                                               size=min(10, flat.size),
                                               replace=False)
        for i in idx:
            keep = flat[i]
            flat[i] = keep + h
            up = loss()
            flat[i] = keep - h
            dn = loss()
            flat[i] = keep
            fd = (up - dn) / (2 * h)
            assert gflat[i] == pytest.approx(fd, rel=1e-4, abs=1e-9)


# ---------------------------------------------------------------------------
# actor and target updates

def test_full_rate_soft_update_copies():
    agent = _agent(soft_update=1.0)
    batch = _batch(agent)
    agent.critic_update(batch, np.zeros(16))  # desync evaluated nets
    agent.soft_update_targets()
    for tgt, net in ((agent.actor_target, agent.actor),
                     (agent.critic1_target, agent.critic1),
                     (agent.critic2_target, agent.critic2)):
        for pt, p in zip(tgt.parameters(), net.parameters()):
            assert np.allclose(pt, p)


def test_zero_rate_soft_update_freezes_targets():
    agent = _agent(soft_update=0.0)
    snap = _params_snapshot(agent.critic1_target)
    agent.critic_update(_batch(agent), np.zeros(16))
    agent.soft_update_targets()
    assert _params_equal(agent.critic1_target, snap)


def test_soft_update_contraction_identity():
    agent = _agent(soft_update=0.001)
    agent.critic_update(_batch(agent), np.ones(16))  # move evaluated critics
    chi = agent.hyper.soft_update
    for tgt, net in ((agent.critic1_target, agent.critic1),
                     (agent.critic2_target, agent.critic2)):
        before = [np.linalg.norm(pt - p) for pt, p in
                  zip(tgt.parameters(), net.parameters())]
        agent_pairs = list(zip(tgt.parameters(), net.parameters()))
        for pt, p in agent_pairs:
            pt *= (1.0 - chi)
            pt += chi * p
        after = [np.linalg.norm(pt - p) for pt, p in agent_pairs]
        for b, a in zip(before, after):
            assert a == pytest.approx((1 - chi) * b, rel=1e-9)


def test_actor_updates_only_on_delay_multiples():
    agent = _agent(actor_delay=5, seed=21)
    rng = np.random.default_rng(22)
    for t in range(1, 21):
        snap = _params_snapshot(agent.actor)
        agent.update(_batch(agent, seed=t), t, rng)
        changed = not _params_equal(agent.actor, snap)
        assert changed == (t % 5 == 0)


def test_critics_update_every_step():
    agent = _agent(actor_delay=5, seed=23)
    rng = np.random.default_rng(24)
    for t in range(1, 8):
        snap = _params_snapshot(agent.critic1)
        agent.update(_batch(agent, seed=t), t, rng)
        assert not _params_equal(agent.critic1, snap)


def test_actor_gradient_matches_scalar_chain_rule():
    # 1-d state, 1-d action, single-layer linear nets: the ascent direction
    # on Q(s, mu(s)) is dQ/da * dmu/dtheta, computable by hand
    agent = _agent(state_dim=1, action_dim=1, hidden=(1,), seed=31)
    # actor: x -> tanh(w2 * relu(w1 x + b1) + b2); make it effectively linear
    batch_s = np.array([[0.7]])
    acts = agent.actor.forward_cached(batch_s)
    a_out = acts[-1]
    x = np.concatenate([batch_s, a_out], axis=1)
    _, _, dx = agent.critic1.gradients(x, np.ones((1, 1)))
    dq_da = dx[0, 1]
    dws, dbs, _ = agent.actor.backward(
        agent.actor.forward_cached(batch_s), np.array([[dq_da]]))
    # finite-difference the composition J(theta) = Q(s, mu_theta(s))
    h = 1e-6
    w = agent.actor.ws[0]
    keep = w[0, 0]
    w[0, 0] = keep + h
    up = float(agent.critic1.forward(
        np.concatenate([batch_s, agent.actor.forward(batch_s)], axis=1))[0, 0])
    w[0, 0] = keep - h
    dn = float(agent.critic1.forward(
        np.concatenate([batch_s, agent.actor.forward(batch_s)], axis=1))[0, 0])
    w[0, 0] = keep
    fd = (up - dn) / (2 * h)
    assert dws[0][0, 0] == pytest.approx(fd, rel=1e-4, abs=1e-10)


# ---------------------------------------------------------------------------
# single-critic (ddpg) variant

def test_ddpg_has_single_critic_and_plain_target():
    agent = _agent(variant="ddpg")
    assert agent.critic2 is None and agent.critic2_target is None
    batch = _batch(agent)
    y = agent.target_q(batch, np.random.default_rng(0))
    s2 = batch[3]
    a2 = agent.actor_target.forward(s2)
    q = agent.critic1_target.forward(np.concatenate([s2, a2], axis=1))[:, 0]
    assert np.allclose(y, batch[2] + agent.hyper.gamma * q)


def test_td3_degenerates_to_ddpg_when_tied():
    # tied twin critics + zero smoothing + delay 1 reproduce the
    # single-critic update exactly on actor and critic 1
    td3 = _agent(seed=41, smooth_sigma=0.0, actor_delay=1)
    ddpg = _agent(seed=41, variant="ddpg", smooth_sigma=0.0, actor_delay=1)
    td3.critic2.copy_from(td3.critic1)
    td3.critic2_target.copy_from(td3.critic1_target)
    assert all(np.array_equal(a, b) for a, b in
               zip(td3.actor.parameters(), ddpg.actor.parameters()))
    batch = _batch(td3, seed=42)
    td3.update(batch, 1, np.random.default_rng(0))
    ddpg.update(batch, 1, np.random.default_rng(0))
    for a, b in zip(td3.critic1.parameters(), ddpg.critic1.parameters()):
        assert np.allclose(a, b, atol=1e-10)
    for a, b in zip(td3.actor.parameters(), ddpg.actor.parameters()):
        assert np.allclose(a, b, atol=1e-10)


def test_ddpg_scalar_target_trace():
    agent = _agent(variant="ddpg", gamma=0.5)
    batch = _batch(agent, n=3, seed=43)
    y = agent.target_q(batch, np.random.default_rng(0))
    for i in range(3):
        s2 = batch[3][i]
        a2 = agent.actor_target.forward(s2)
        q = float(agent.critic1_target.forward(np.concatenate([s2, a2]))[0])
        assert y[i] == pytest.approx(batch[2][i] + 0.5 * q, rel=1e-12)


# ---------------------------------------------------------------------------
# checkpoints

def test_agent_checkpoint_roundtrip(tmp_path):
    agent = _agent(seed=51)
    agent.update(_batch(agent, seed=52), 5, np.random.default_rng(0))
    path = tmp_path / "agent.txt"
    agent.save(path)
    fresh = _agent(seed=99)
    fresh.load(path)
    for a, b in zip(agent.actor.parameters(), fresh.actor.parameters()):
        assert np.array_equal(a, b)
    for a, b in zip(agent.critic2_target.parameters(),
                    fresh.critic2_target.parameters()):
        assert np.array_equal(a, b)
    assert fresh.opt_critic1.t == agent.opt_critic1.t
    s = np.random.default_rng(1).normal(size=6)
    assert np.array_equal(agent.act(s, False, np.random.default_rng(0)),
                          fresh.act(s, False, np.random.default_rng(0)))
