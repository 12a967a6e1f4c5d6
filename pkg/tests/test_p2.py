import numpy as np
import pytest

from hflsim.p2_td3 import (
    FitnessWeights,
    Td3Agent,
    Td3Config,
    episode_step,
    fitness,
    resolve_overlaps,
    select_by_threshold,
    shaped_reward,
    update_penalty,
)
from hflsim.rng import stream


W = FitnessWeights(0.6, 0.2, 0.2)


# ------------------------------------------------------------- fitness

def test_fitness_weights_validation():
    FitnessWeights(1.0, 0.0, 0.0)
    with pytest.raises(ValueError):
        FitnessWeights(0.5, 0.2, 0.2)      # does not sum to 1
    with pytest.raises(ValueError):
        FitnessWeights(1.2, -0.1, -0.1)    # out of range


def test_fitness_hand_values():
    # kld (1,2,4) -> sim (0.25,0.5,1); dist (2,1,4) -> prox (0.5,1,0.25);
    # freq (1,2,4) -> (0.25,0.5,1); mixed by (0.6,0.2,0.2)
    a = fitness([1.0, 2.0, 4.0], [2.0, 1.0, 4.0], [1.0, 2.0, 4.0], W)
    assert np.allclose(a, [0.3, 0.6, 0.85], atol=1e-12)


def test_fitness_zero_divergence_degenerates_to_one():
    a = fitness([0.0, 0.0], [1.0, 1.0], [1.0, 1.0], W)
    assert np.allclose(a, 1.0)


def test_fitness_rejects_bad_inputs():
    with pytest.raises(ValueError):
        fitness([], [], [], W)
    with pytest.raises(ValueError):
        fitness([1.0], [0.0], [1.0], W)
    with pytest.raises(ValueError):
        fitness([-0.1], [1.0], [1.0], W)


def test_fitness_in_unit_interval():
    gen = stream(1, "p2", "unit")
    for _ in range(50):
        n = int(gen.integers(1, 20))
        a = fitness(
            gen.uniform(0, 5, n), gen.uniform(0.1, 10, n), gen.uniform(1, 9, n), W
        )
        assert np.all(a > 0) and np.all(a <= 1.0 + 1e-12)


# ------------------------------------------------------------- selection

def test_select_by_threshold_inclusive():
    sel = select_by_threshold([0.3, 0.5, 0.7], 0.5)
    assert list(sel) == [1, 2]
    with pytest.raises(ValueError):
        select_by_threshold([0.5], 1.5)


def test_resolve_overlaps_highest_score_wins():
    out = resolve_overlaps({0: {7: 0.4, 8: 0.9}, 1: {7: 0.6}})
    assert out == {0: {8}, 1: {7}}


def test_resolve_overlaps_tie_goes_to_lowest_uav():
    out = resolve_overlaps({2: {5: 0.5}, 1: {5: 0.5}, 3: {6: 0.1}})
    assert out == {1: {5}, 2: set(), 3: {6}}


def test_resolve_overlaps_disjoint_passthrough():
    cand = {0: {1: 0.9, 2: 0.8}, 1: {3: 0.7}}
    out = resolve_overlaps(cand)
    assert out == {0: {1, 2}, 1: {3}}


# ------------------------------------------------------------- reward

def test_shaped_reward_hand_values():
    # within the deadline the penalty vanishes
    assert shaped_reward(0.2, 0.3, 1.0, 1.0, 2.0, t_dev=2.0, t_max=3.0) == pytest.approx(0.5)
    # 1 s over deadline, penalty weight 2 -> 0.5 - 2*(5-3)^2 = -7.5
    assert shaped_reward(0.2, 0.3, 1.0, 1.0, 2.0, t_dev=5.0, t_max=3.0) == pytest.approx(-7.5)


def test_update_penalty_cadence():
    assert update_penalty(1.0, t=2, d=2) == pytest.approx(1.5)
    assert update_penalty(1.0, t=3, d=2) == pytest.approx(1.0)
    assert update_penalty(1.0, t=4, d=2, delta=0.25) == pytest.approx(1.25)
    with pytest.raises(ValueError):
        update_penalty(1.0, 1, 1, delta=0.0)


# ------------------------------------------------------------- agent

def small_cfg(**kw) -> Td3Config:
    base = dict(state_dim=2, hidden=8, warmup=0, batch_size=8, noise_sigma=0.0)
    base.update(kw)
    return Td3Config(**base)


def test_config_validation():
    with pytest.raises(ValueError):
        Td3Config(tau=0.0)
    with pytest.raises(ValueError):
        Td3Config(policy_delay=0)
    with pytest.raises(ValueError):
        Td3Config(d_alpha_pen=0.0)


def _constant_net(net, value: float) -> None:
    """Zero every weight so the net outputs its final bias, then set it."""
    flat = np.zeros(net.n_params)
    flat[-1] = value
    net.set_flat(flat)


def test_critic_target_hand_value():
    # r + gamma * min(Q1', Q2') with the twin targets pinned to 2 and 3:
    # 1 + 0.9 * 2 = 2.8
    agent = Td3Agent(small_cfg(gamma=0.9), stream(2, "p2", "target"))
    _constant_net(agent.critic1_target, 2.0)
    _constant_net(agent.critic2_target, 3.0)
    z = agent.critic_target(np.array([[1.0]]), np.zeros((1, 2)))
    assert z.shape == (1, 1)
    assert z[0, 0] == pytest.approx(2.8)


def test_critic_target_uses_min_of_twins():
    agent = Td3Agent(small_cfg(gamma=1.0), stream(3, "p2", "twin"))
    _constant_net(agent.critic1_target, 5.0)
    _constant_net(agent.critic2_target, -1.0)
    z = agent.critic_target(np.zeros((4, 1)), np.zeros((4, 2)))
    assert np.allclose(z, -1.0)


def test_act_warmup_uniform_then_policy():
    agent = Td3Agent(small_cfg(warmup=3), stream(4, "p2", "warm"))
    s = np.zeros(2)
    draws = {agent.act(s) for _ in range(3)}
    assert len(draws) == 3  # random during warmup even for a fixed state
    agent.warmup_left = 0
    a1 = agent.act(s, noisy=False)
    a2 = agent.act(s, noisy=False)
    assert a1 == a2
    assert 0.0 <= a1 <= 1.0


def test_act_noise_is_clipped_to_valid_range():
    agent = Td3Agent(small_cfg(noise_sigma=0.5, noise_clip=0.25), stream(5, "p2", "n"))
    agent.warmup_left = 0
    base = agent.act(np.zeros(2), noisy=False)
    for _ in range(100):
        a = agent.act(np.zeros(2))
        assert 0.0 <= a <= 1.0
        assert abs(a - base) <= 0.25 + 1e-12


def test_buffer_fifo_ring():
    agent = Td3Agent(small_cfg(buffer_cap=3), stream(6, "p2", "buf"))
    s = np.zeros(2)
    for r in range(1, 6):
        agent.store(s, 0.5, float(r), s)
    rewards = sorted(item[2] for item in agent.buffer)
    assert rewards == [3.0, 4.0, 5.0]  # 1 and 2 were evicted first


def test_store_clips_action():
    agent = Td3Agent(small_cfg(), stream(7, "p2", "clip"))
    agent.store(np.zeros(2), 1.7, 0.0, np.zeros(2))
    assert agent.buffer[0][1] == 1.0


def test_soft_update_blend():
    agent = Td3Agent(small_cfg(tau=0.25), stream(8, "p2", "soft"))
    agent.actor.set_flat(np.ones(agent.actor.n_params))
    agent.actor_target.set_flat(np.zeros(agent.actor.n_params))
    agent.soft_update()
    assert np.allclose(agent.actor_target.get_flat(), 0.25)
    with pytest.raises(ValueError):
        agent.soft_update(tau=0.0)


def test_train_step_requires_full_batch():
    agent = Td3Agent(small_cfg(batch_size=8), stream(9, "p2", "nb"))
    for _ in range(7):
        agent.store(np.zeros(2), 0.5, 0.0, np.zeros(2))
    assert agent.train_step() is None
    agent.store(np.zeros(2), 0.5, 0.0, np.zeros(2))
    assert agent.train_step() is not None


def test_update_critics_descends_td_error():
    agent = Td3Agent(small_cfg(), stream(10, "p2", "td"))
    gen = stream(11, "p2", "td", "data")
    s = gen.normal(size=(16, 2))
    a = gen.random(size=(16, 1))
    r = gen.normal(size=(16, 1))
    s2 = gen.normal(size=(16, 2))
    l1 = agent.update_critics(s, a, r, s2)
    l2 = agent.update_critics(s, a, r, s2)
    assert l2 < l1


def test_update_actor_ascends_critic_value():
    agent = Td3Agent(small_cfg(lr_actor=0.005), stream(12, "p2", "ascend"))
    gen = stream(13, "p2", "ascend", "data")
    s = gen.normal(size=(32, 2))

    def mean_q() -> float:
        a = agent.actor.forward(s)
        sa = np.concatenate([s, a], axis=1)
        return float(np.mean(agent.critic1.forward(sa)))

    before = mean_q()
    agent.update_actor(s)
    assert mean_q() >= before - 1e-12


def test_delayed_updates_and_penalty_growth():
    agent = Td3Agent(small_cfg(policy_delay=2, batch_size=4), stream(14, "p2", "delay"))
    gen = stream(15, "p2", "delay", "data")
    for _ in range(4):
        agent.store(gen.normal(size=2), 0.5, 0.0, gen.normal(size=2))
    actor0 = agent.actor.get_flat().copy()
    pen0 = agent.alpha_pen
    agent.train_step()  # t=1: critics only
    assert np.array_equal(agent.actor.get_flat(), actor0)
    assert agent.alpha_pen == pen0
    agent.train_step()  # t=2: actor, penalty, targets
    assert not np.array_equal(agent.actor.get_flat(), actor0)
    assert agent.alpha_pen == pytest.approx(pen0 + agent.cfg.d_alpha_pen)


def test_save_load_roundtrip(tmp_path):
    agent = Td3Agent(small_cfg(warmup=2), stream(16, "p2", "ckpt"))
    gen = stream(17, "p2", "ckpt", "data")
    for _ in range(10):
        agent.store(gen.normal(size=2), 0.5, gen.normal(), gen.normal(size=2))
        agent.train_step()
    bin_path, meta_path = tmp_path / "agent.bin", tmp_path / "agent.json"
    agent.save(bin_path, meta_path)
    back = Td3Agent.load(bin_path, meta_path, stream(16, "p2", "ckpt"))
    s = np.array([[0.3, -0.7]])
    assert np.array_equal(back.actor.forward(s), agent.actor.forward(s))
    assert np.array_equal(
        back.critic1_target.forward(np.array([[0.3, -0.7, 0.5]])),
        agent.critic1_target.forward(np.array([[0.3, -0.7, 0.5]])),
    )
    assert back.t == agent.t
    assert back.alpha_pen == agent.alpha_pen
    assert back.warmup_left == agent.warmup_left


def test_load_rejects_truncated_blob(tmp_path):
    agent = Td3Agent(small_cfg(), stream(18, "p2", "trunc"))
    bin_path, meta_path = tmp_path / "a.bin", tmp_path / "a.json"
    agent.save(bin_path, meta_path)
    blob = bin_path.read_bytes()
    bin_path.write_bytes(blob[:-8])
    with pytest.raises(ValueError):
        Td3Agent.load(bin_path, meta_path, stream(18, "p2", "trunc"))


# ------------------------------------------------------------- episodes

class _QuadraticEnv:
    """1-D bandit with peak at a*; state is a fixed dummy pair."""

    def __init__(self, peak: float = 0.6):
        self.peak = peak

    def state(self):
        return np.array([0.0, 0.0])

    def evaluate(self, action: float):
        return 1.0 - (action - self.peak) ** 2, np.array([0.0, 0.0])


def test_episode_step_returns_best_tried():
    agent = Td3Agent(small_cfg(warmup=100), stream(19, "p2", "ep"))
    env = _QuadraticEnv()
    best, tried = episode_step(agent, env, t_step=5)
    assert len(tried) == 5
    assert best == max(tried, key=lambda ar: ar[1])[0]
    assert len(agent.buffer) == 5
    with pytest.raises(ValueError):
        episode_step(agent, env, t_step=0)


def test_bandit_short_run_moves_toward_peak():
    # compressed rehearsal of the long bandit check in the acceptance suite
    cfg = small_cfg(warmup=40, batch_size=16, noise_sigma=0.1, lr_actor=0.01, lr_critic=0.02)
    agent = Td3Agent(cfg, stream(20, "p2", "bandit"))
    env = _QuadraticEnv(0.6)
    actions = []
    for _ in range(150):
        s = env.state()
        a = agent.act(s)
        r, s2 = env.evaluate(a)
        agent.store(s, a, r, s2)
        agent.train_step()
        actions.append(a)
    tail = np.mean(actions[-30:])
    assert abs(tail - 0.6) < 0.2
