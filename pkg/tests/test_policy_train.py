import numpy as np
import pytest
from conftest import make_tiny_env

from orderpick import agents
from orderpick.evaluation import run_episode
from orderpick.marl.policy import Decision, LearnedPolicy, PolicySet
from orderpick.marl.train import ConfigMismatch, TrainConfig, Trainer, load_policy
from orderpick.warehouse import Order, OrderLine, Role


def test_network_shapes():
    env = make_tiny_env()
    ps = PolicySet(env, hierarchical=True, sectors=2)
    assert ps.manager.n_heads == env.num_agents
    assert ps.manager.n_actions == 2
    assert ps.manager.hidden == (128, 128, 128)
    assert ps.agv_net.hidden == (64, 64)
    assert ps.agv_net.n_actions == len(env.warehouse)
    flat = PolicySet(env, hierarchical=False)
    assert flat.manager is None and "manager" not in flat.nets()


def test_decisions_cover_uncommitted_agents():
    env = make_tiny_env()
    env.reset(0)
    ps = PolicySet(env, hierarchical=True, sectors=2)
    decisions = ps.decide(env.state, np.random.default_rng(0))
    assert [d.agent for d in decisions] == [0, 1, 2]
    for d in decisions:
        assert d.mask[d.action]
        assert 0 <= d.sector < 2 and d.m_mask[d.sector]


def test_learned_policy_runs_with_mask_checks():
    env = make_tiny_env()
    for hier in (True, False):
        report = run_episode(env, LearnedPolicy(PolicySet(env, hier, 2, seed=3)), 1)
        assert report.ticks > 0


def test_manager_mask_only_sectors_with_legal_locations():
    env = make_tiny_env()
    env.reset(0)
    ps = PolicySet(env, hierarchical=True, sectors=2)
    env.state.workers[0].order = Order([OrderLine(int(ps.partition.members(1)[0]))])
    for seed in range(20):
        d = next(d for d in ps.decide(env.state, np.random.default_rng(seed)) if d.agent == 0)
        assert d.m_mask.tolist() == [False, True]
        assert d.sector == 1


def test_one_sector_matches_flat_support():
    env = make_tiny_env()
    env.reset(2)
    hier = PolicySet(env, hierarchical=True, sectors=1)
    flat = PolicySet(env, hierarchical=False)
    rng = np.random.default_rng(0)
    for run in (hier.decide(env.state, rng), flat.decide(env.state, rng)):
        pending = {d.agent: d.action for d in run if d.role == Role.AGV}
        for d in run:
            np.testing.assert_array_equal(d.mask, agents.action_mask(env.state, d.agent, pending=pending))


def test_picker_observation_uses_fresh_agv_targets():
    env = make_tiny_env()
    env.reset(0)
    ps = PolicySet(env, hierarchical=False)
    decisions = ps.decide(env.state, np.random.default_rng(0))
    agv = {d.agent: d.action for d in decisions if d.role == Role.AGV}
    picker = next(d for d in decisions if d.role == Role.PICKER)
    np.testing.assert_array_equal(picker.obs, agents.observe(env.state, 2, pending=agv))


def test_decision_reward_accumulation():
    d = Decision(0, Role.AGV, np.zeros(1), np.ones(1, bool), 0, 0.0)
    for r in (1.0, 2.0, 3.0):
        d.add_reward(r, 0.5)
    assert d.reward == 1.0 + 0.5 * 2.0 + 0.25 * 3.0
    assert d.duration == 3 and d.discount == 0.125


def _short(alg, **kw):
    return TrainConfig(algorithm=alg, episodes=8, n_envs=2, eval_interval=4, eval_episodes=2, seed=1, **kw)


@pytest.mark.parametrize("alg", ["hsnac", "snac"])
def test_short_training_run(alg):
    env = make_tiny_env()
    result = Trainer(env, 2, _short(alg)).run()
    assert result.episodes == 8
    assert [p.episode for p in result.curve] == [4, 8]
    for p in result.curve:
        assert np.isfinite([p.pick_rate, p.mean_reward, p.policy_loss, p.value_loss, p.entropy]).all()
    for net in result.policy.nets().values():
        assert all(np.isfinite(v).all() for v in net.params.values())


def test_training_is_seeded():
    a = Trainer(make_tiny_env(), 2, _short("hsnac"))
    a.run()
    b = Trainer(make_tiny_env(), 2, _short("hsnac"))
    b.run()
    for k, v in a.policy.state_arrays().items():
        np.testing.assert_array_equal(v, b.policy.state_arrays()[k])


def test_checkpoint_roundtrip(tmp_path):
    env = make_tiny_env()
    tr = Trainer(env, 2, _short("hsnac"), meta={"config_hash": "abc"})
    tr.run()
    path = tr.save(tmp_path / "c.npz")
    policy = load_policy(env, path, 2)
    env.reset(0)
    x = agents.global_observation(env.state)
    np.testing.assert_array_equal(policy.manager.params["W0"], tr.policy.manager.params["W0"])
    other = Trainer(env, 2, _short("hsnac"))
    meta = other.load(path, expect_hash="abc")
    assert meta["episodes_done"] == 8 and other.episodes_done == 8
    assert other.optims["agv"].t == tr.optims["agv"].t
    with pytest.raises(ConfigMismatch):
        other.load(path, expect_hash="different")
    assert x.shape[0] == policy.manager.n_in


def test_checkpoint_for_other_layout_rejected(tmp_path):
    from orderpick.engine import OrderPickingEnv
    from orderpick.warehouse import OrderProfile, WorkerSpec, generate_layout

    env = make_tiny_env()
    path = Trainer(env, 2, _short("snac")).save(tmp_path / "c.npz")
    g = generate_layout(3, 5, 1)
    big = OrderPickingEnv(g, WorkerSpec(2, 1), OrderProfile.uniform(g.n_items))
    with pytest.raises(ConfigMismatch):
        load_policy(big, path, 2)


def test_train_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(algorithm="ppo")
    with pytest.raises(ValueError):
        TrainConfig(gamma=1.5)


def test_pickers_share_one_network():
    from orderpick.engine import OrderPickingEnv
    from orderpick.marl.nets import forward
    from orderpick.warehouse import OrderProfile, WorkerSpec, generate_layout

    g = generate_layout(2, 5, 1)
    env = OrderPickingEnv(g, WorkerSpec(2, 2), OrderProfile.uniform(g.n_items))
    env.reset(4)
    ps = PolicySet(env, hierarchical=False, seed=1)
    obs = np.stack([agents.observe(env.state, i) for i in (2, 3)])
    masks = np.stack([agents.action_mask(env.state, i) for i in (2, 3)])
    probs, values = forward(ps.picker_net, obs, masks)
    swapped, swapped_values = forward(ps.picker_net, obs[::-1], masks[::-1])
    # batched matmul may reorder sums, so allow last-bit differences
    np.testing.assert_allclose(swapped, probs[::-1], rtol=1e-12)
    np.testing.assert_allclose(swapped_values, values[::-1], rtol=1e-12)
