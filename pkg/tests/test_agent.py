import numpy as np
import pandas as pd
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from drgr.agent import (
    DRGRAgent,
    OUNoise,
    ReplayBuffer,
    TrainConfig,
    Transition,
    actor_forward,
    attention_aggregate,
    critic_forward,
    embed_state,
    linear_schedule,
    rank_items,
    select_action,
    train_loop,
)
from drgr.envsim import EnvConfig, EnvState, GroupRecEnv, MFModel
from drgr.nncore import MLP, grad_check

MEMBERS = {0: (0, 1, 2), 1: (3,), 2: (1, 4)}


def make_agent(**kw):
    return DRGRAgent(5, 12, MEMBERS, TrainConfig(**kw))


def toy_batch(rng, groups=(0, 1, 2, 0), n_items=12):
    def st_(g):
        return EnvState(g, tuple(int(x) for x in rng.choice(n_items, 5, replace=False)))

    return [
        Transition(st_(g), int(rng.integers(n_items)), np.zeros(32), float(rng.uniform(-1, 1)), st_(g))
        for g in groups
    ]


# attention ------------------------------------------------------------------


def test_single_member_group_is_the_member_embedding():
    agent = make_agent()
    np.testing.assert_array_equal(attention_aggregate(agent.params, [3]), agent.params.user_emb.rows[3])


def test_identical_members_give_that_embedding():
    agent = make_agent()
    agent.params.user_emb.rows[1] = agent.params.user_emb.rows[4]
    np.testing.assert_allclose(attention_aggregate(agent.params, [1, 4]), agent.params.user_emb.rows[4], atol=1e-15)


def transcribed_attention(U, P, b, h):
    scores = []
    for u in U:
        hidden = [max(0.0, sum(P[a][k] * u[k] for k in range(len(u))) + b[a]) for a in range(len(b))]
        scores.append(sum(h[a] * hidden[a] for a in range(len(h))))
    m = max(scores)
    ex = [np.exp(s - m) for s in scores]
    alpha = [e / sum(ex) for e in ex]
    return np.array([sum(alpha[j] * U[j][k] for j in range(len(U))) for k in range(len(U[0]))])


@pytest.mark.parametrize("seed", range(5))
def test_three_member_attention_matches_transcription(seed):
    rng = np.random.default_rng(seed)
    agent = make_agent(seed=seed)
    p = agent.params
    p.user_emb.rows[...] = rng.normal(size=p.user_emb.rows.shape)
    members = [0, 2, 4]
    expected = transcribed_attention(p.user_emb.rows[members], p.att_P, p.att_b, p.att_h)
    np.testing.assert_allclose(attention_aggregate(p, members), expected, rtol=0, atol=1e-12)


def test_empty_group_rejected():
    with pytest.raises(ValueError):
        attention_aggregate(make_agent().params, [])


# state embedding ------------------------------------------------------------


def test_state_vector_layout():
    agent = make_agent()
    s = EnvState(2, (5, 6, 7, 8, 9))
    x = embed_state(agent.params, s, MEMBERS)
    assert x.shape == (192,)
    np.testing.assert_array_equal(x[:32], attention_aggregate(agent.params, MEMBERS[2]))
    np.testing.assert_array_equal(x[32:64], agent.params.item_emb.rows[5])
    np.testing.assert_array_equal(x[160:], agent.params.item_emb.rows[9])


def test_state_is_order_sensitive_and_local():
    agent = make_agent()
    a = embed_state(agent.params, EnvState(2, (5, 6, 7, 8, 9)), MEMBERS)
    b = embed_state(agent.params, EnvState(2, (6, 5, 7, 8, 9)), MEMBERS)
    assert not np.array_equal(a, b)
    agent.params.user_emb.rows[0] += 1.0  # user 0 is not in group 2
    np.testing.assert_array_equal(embed_state(agent.params, EnvState(2, (5, 6, 7, 8, 9)), MEMBERS), a)


# actor / critic -------------------------------------------------------------


def _zero(mlp: MLP) -> MLP:
    for v in mlp.params().values():
        v[...] = 0.0
    return mlp


def test_zero_networks_output_zero():
    rng = np.random.default_rng(0)
    actor = _zero(MLP.init([192, 128, 64, 32], rng))
    critic = _zero(MLP.init([224, 32, 16, 1], rng))
    x = rng.normal(size=192)
    np.testing.assert_array_equal(actor_forward(actor, x), 0.0)
    assert critic_forward(critic, x, rng.normal(size=32)) == 0.0


def test_networks_are_pure():
    agent = make_agent()
    x = np.random.default_rng(1).normal(size=192)
    a = np.random.default_rng(2).normal(size=32)
    assert np.array_equal(actor_forward(agent.params.actor, x), actor_forward(agent.params.actor, x))
    assert critic_forward(agent.params.critic, x, a) == critic_forward(agent.params.critic, x, a.copy())


def test_shape_mismatch_rejected():
    agent = make_agent()
    with pytest.raises(ValueError):
        actor_forward(agent.params.actor, np.zeros(191))
    with pytest.raises(ValueError):
        critic_forward(agent.params.critic, np.zeros(192), np.zeros(31))


def _min_actor_preactivation(agent, batch):
    S = np.stack([embed_state(agent.params, t.state, MEMBERS) for t in batch])
    acts = agent.params.actor.forward(S)
    return min(np.abs(a @ layer.weight.T + layer.bias).min()
               for a, layer in zip(acts[:-2], agent.params.actor.layers[:-1]))


def test_composed_path_gradients():
    agent = make_agent(tau=0.5)
    # seed picked so no ReLU unit sits within eps of its hinge
    rng = np.random.default_rng(7)
    for v in agent.target.blocks().values():
        v += rng.normal(0, 0.05, v.shape)
    batch = toy_batch(rng)
    assert _min_actor_preactivation(agent, batch) > 1e-4
    g = agent.gradients(batch)
    live = agent.params.blocks()
    crit = grad_check(lambda: agent.gradients(batch).report.critic_loss,
                      {k: live[k] for k in g.critic}, g.critic, max_entries=40)
    act = grad_check(lambda: agent.gradients(batch).report.actor_loss,
                     {k: live[k] for k in g.actor}, g.actor, max_entries=40)
    assert crit.passed, str(crit)
    assert act.passed, str(act)


# action selection -----------------------------------------------------------


def test_select_action_examples():
    emb = np.zeros((3, 4))
    emb[1, 0] = 1.0
    emb[2, 1] = 1.0
    w = np.array([2.0, 1.0, 0.0, 0.0])
    assert select_action(w, [1, 2], emb) == 1
    assert select_action(3.5 * w, [1, 2], emb) == 1
    assert select_action(w, [2], emb) == 2
    assert select_action(w, [2, 1], emb, noise=np.array([0.0, 5.0, 0.0, 0.0])) == 2
    with pytest.raises(ValueError):
        select_action(w, [], emb)


def test_select_action_tie_breaks_by_smallest_id():
    emb = np.ones((5, 2))
    assert select_action(np.ones(2), [4, 2, 3], emb) == 2


def test_rank_items_contract():
    agent = make_agent()
    s = EnvState(0, (0, 1, 2, 3, 4))
    cands = list(range(5, 12))
    assert rank_items(agent, s, cands, 1) == [select_action(agent.proto_action(s), cands, agent.params.item_emb.rows)]
    full = rank_items(agent, s, cands, len(cands))
    assert sorted(full) == cands
    scores = agent.item_scores(s, np.array(full))
    assert np.all(np.diff(scores) <= 0)
    with pytest.raises(ValueError):
        rank_items(agent, s, cands, 0)


def test_rank_invariant_to_positive_scaling():
    agent = make_agent()
    s = EnvState(1, (0, 1, 2, 3, 4))
    before = rank_items(agent, s, range(12), 6)
    agent.params.actor.layers[-1].weight *= 3.0
    agent.params.actor.layers[-1].bias *= 3.0
    assert rank_items(agent, s, range(12), 6) == before


# exploration noise ----------------------------------------------------------


def test_ou_without_noise():
    ou = OUNoise(4, theta=0.15, sigma=0.0, seed=0)
    for _ in range(10):
        np.testing.assert_array_equal(ou.sample(), 0.0)
    ou.x[:] = 2.0
    for k in range(1, 6):
        np.testing.assert_allclose(ou.sample(), 2.0 * 0.85**k, rtol=1e-14)


def test_ou_stationary_std():
    theta, sigma = 0.15, 0.2
    ou = OUNoise(8, theta=theta, sigma=sigma, seed=3)
    xs = np.array([ou.sample() for _ in range(100_000)])
    expected = sigma / np.sqrt(2 * theta - theta**2)
    assert abs(xs[1000:].std() / expected - 1.0) < 0.05


def test_linear_schedule_endpoints():
    assert linear_schedule(0.2, 0.01, 0, 1000) == 0.2
    assert linear_schedule(0.2, 0.01, 999, 1000) == pytest.approx(0.01)
    assert linear_schedule(0.2, 0.01, 500, 1001) == pytest.approx(0.105)


# replay ---------------------------------------------------------------------


def _t(k):
    return Transition(EnvState(0, (k,)), k, np.zeros(1), 0.0, EnvState(0, (k,)))


def test_replay_ring_buffer():
    buf = ReplayBuffer(3, seed=0)
    for k in range(5):
        buf.push(_t(k))
    assert len(buf) == 3
    assert sorted(t.action_item for t in buf.sample(3)) == [2, 3, 4]
    with pytest.raises(ValueError):
        buf.sample(4)


def test_replay_sampling_is_uniform():
    n, draws, batch = 20, 20_000, 4
    buf = ReplayBuffer(n, seed=5)
    for k in range(n):
        buf.push(_t(k))
    counts = np.zeros(n)
    for _ in range(draws):
        for t in buf.sample(batch):
            counts[t.action_item] += 1
    p = batch / n
    sd = np.sqrt(draws * p * (1 - p))
    assert np.all(np.abs(counts - draws * p) < 3 * sd)


# DDPG update ----------------------------------------------------------------


def test_gamma_zero_target_is_reward():
    agent = make_agent(gamma=0.0)
    batch = toy_batch(np.random.default_rng(2))
    rep = agent.gradients(batch).report
    assert rep.mean_target == pytest.approx(np.mean([t.reward for t in batch]), abs=1e-15)


def test_tau_one_copies_online_into_target():
    agent = make_agent(tau=1.0, batch_size=4)
    agent.update(toy_batch(np.random.default_rng(3)))
    for k, v in agent.params.blocks().items():
        np.testing.assert_array_equal(agent.target.blocks()[k], v)


def test_target_lags_towards_frozen_online():
    agent = make_agent(tau=0.01)
    rng = np.random.default_rng(4)
    for v in agent.params.blocks().values():
        v += rng.normal(0, 0.1, v.shape)

    def gap():
        return max(np.max(np.abs(agent.target.blocks()[k] - v)) for k, v in agent.params.blocks().items())

    d0 = gap()
    agent.soft_update()
    assert gap() < d0
    assert gap() == pytest.approx(0.99 * d0, rel=1e-9)


@pytest.mark.parametrize("target_action", ["proto", "item"])
def test_linear_critic_step_matches_hand_derivation(target_action):
    lr = 0.01
    agent = DRGRAgent(5, 12, MEMBERS, TrainConfig(
        critic_hidden=(), train_actor=False, train_embeddings=False, gamma=0.9, lr=lr,
        weight_decay=0.0, tau=0.5, batch_size=2, target_action=target_action))
    rng = np.random.default_rng(7)
    for v in agent.params.critic.params().values():
        v[...] = rng.normal(0, 0.1, v.shape)
    for v in agent.target.critic.params().values():
        v[...] = rng.normal(0, 0.1, v.shape)
    batch = toy_batch(rng, groups=(0, 2))

    # hand computation for Q(s, a) = w . [s, a] + c
    p, t = agent.params, agent.target
    w, c = p.critic.layers[0].weight[0].copy(), p.critic.layers[0].bias[0]
    wt, ct = t.critic.layers[0].weight[0], t.critic.layers[0].bias[0]
    gw, gc = np.zeros_like(w), 0.0
    for tr in batch:
        s = embed_state(p, tr.state, MEMBERS)
        s2 = embed_state(t, tr.next_state, MEMBERS)
        a2 = t.actor(s2)
        if target_action == "item":
            scores = t.item_emb.rows @ a2
            scores[list(tr.next_state.history)] = -np.inf
            a2 = t.item_emb.rows[int(np.argmax(scores))]
        y = tr.reward + 0.9 * (wt @ np.concatenate([s2, a2]) + ct)
        x = np.concatenate([s, p.item_emb.rows[tr.action_item]])
        err = w @ x + c - y
        gw += 2.0 / 2 * err * x
        gc += 2.0 / 2 * err

    g = agent.gradients(batch).critic
    np.testing.assert_allclose(g["critic.0.weight"][0], gw, rtol=0, atol=1e-10)
    assert g["critic.0.bias"][0] == pytest.approx(gc, abs=1e-10)

    before = {k: v.copy() for k, v in agent.params.blocks().items()}
    agent.update(batch)
    # first Adam step: m_hat = g, v_hat = g^2
    step_w = lr * gw / (np.abs(gw) + 1e-8)
    np.testing.assert_allclose(agent.params.critic.layers[0].weight[0], w - step_w, rtol=0, atol=1e-10)
    assert agent.params.critic.layers[0].bias[0] == pytest.approx(c - lr * gc / (abs(gc) + 1e-8), abs=1e-10)
    for k, v in agent.params.blocks().items():
        if not k.startswith("critic."):
            np.testing.assert_array_equal(v, before[k])


def test_frozen_item_embeddings_stay_put():
    agent = make_agent(freeze_item_embeddings=True, batch_size=4)
    before = agent.params.item_emb.rows.copy()
    agent.update(toy_batch(np.random.default_rng(8)))
    np.testing.assert_array_equal(agent.params.item_emb.rows, before)


def test_agent_checkpoint_round_trip(tmp_path):
    agent = make_agent(batch_size=4)
    agent.update(toy_batch(np.random.default_rng(9)))
    agent.save(tmp_path / "a.ckpt")
    back = DRGRAgent.load(tmp_path / "a.ckpt")
    s = EnvState(0, (0, 1, 2, 3, 4))
    assert back.rank_items(s, range(5, 12), 7) == agent.rank_items(s, range(5, 12), 7)
    for k, v in agent.target.blocks().items():
        np.testing.assert_array_equal(back.target.blocks()[k], v)


# training loop --------------------------------------------------------------


def tiny_env(n_groups=3, n_items=12):
    rng = np.random.default_rng(0)
    rows = [(g, i, int(i % 2 == 0 or i < 5), i) for g in range(n_groups) for i in range(n_items)]
    train = pd.DataFrame(rows, columns=["group_id", "item_id", "label", "timestamp"])
    model = MFModel(rng.normal(0, 0.3, (n_groups, 4)), rng.normal(0, 0.3, (n_items, 4)),
                    np.zeros(n_groups), np.zeros(n_items), np.array(0.0))
    return GroupRecEnv(model, train, EnvConfig(episode_length=4))


def test_train_loop_deterministic_without_noise():
    env = tiny_env()
    cfg = dict(episodes=6, episode_length=4, batch_size=8, ou_sigma_start=0.0, ou_sigma_end=0.0, seed=3)
    a = train_loop(env, DRGRAgent(5, 12, MEMBERS, TrainConfig(**cfg))).curve
    b = train_loop(env, DRGRAgent(5, 12, MEMBERS, TrainConfig(**cfg))).curve
    pd.testing.assert_frame_equal(a, b)
    assert list(a.columns) == ["episode", "mean_reward", "critic_loss", "actor_loss"]


def test_no_updates_before_buffer_holds_a_batch():
    env = tiny_env()
    agent = DRGRAgent(5, 12, MEMBERS, TrainConfig(episodes=2, episode_length=4, batch_size=64))
    before = {k: v.copy() for k, v in agent.params.blocks().items()}
    curve = train_loop(env, agent).curve
    assert curve["critic_loss"].isna().all()
    for k, v in agent.params.blocks().items():
        np.testing.assert_array_equal(v, before[k])


def test_train_loop_keeps_best_validation_snapshot():
    env = tiny_env()
    agent = DRGRAgent(5, 12, MEMBERS, TrainConfig(episodes=4, episode_length=4, batch_size=4, eval_every=1))
    scores = iter([0.1, 0.5, 0.2, 0.3])
    res = train_loop(env, agent, validate=lambda a: next(scores))
    assert res.best_episode == 2 and res.best_score == 0.5
    assert set(res.best_blocks) == set(agent.params.blocks())


def test_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(tau=0.0)
    with pytest.raises(ValueError):
        TrainConfig(target_action="greedy")
    assert TrainConfig().state_dim == 192


@settings(max_examples=30, deadline=None)
@given(st.lists(st.integers(0, 11), min_size=5, max_size=5), st.integers(1, 7))
def test_rank_items_is_pure(history, k):
    agent = make_agent()
    s = EnvState(2, tuple(history))
    cands = [i for i in range(12) if i not in history]
    if len(cands) < k:
        return
    assert rank_items(agent, s, cands, k) == rank_items(agent, s, cands, k)
