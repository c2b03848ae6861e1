import numpy as np
import pytest

from gdmsr import recommender as rec_mod
from gdmsr.dataset import SocialGraph, load_synthetic
from gdmsr.graphconv import Adjacency, ModelParams, bpr_loss, gcn_forward, predict_score
from gdmsr.numerics import Tensor
from gdmsr.recommender import RecConfig, score_all, train_recommender

from conftest import make_dataset


@pytest.fixture(scope="module")
def synth():
    return load_synthetic(n_users=90, n_items=140, seed=2)


def test_zero_epochs_returns_initial_params():
    d = make_dataset(3, 4, [(0, 0), (1, 1), (2, 2)])
    m = train_recommender(d, SocialGraph(3, [], []), RecConfig(epochs=0, seed=5))
    init = ModelParams.init(3, 4, 8, 2, seed=5)
    np.testing.assert_array_equal(m.params.E1.data, init.E1.data)
    np.testing.assert_array_equal(m.params.E2.data, init.E2.data)


def test_single_step_descends_on_its_triple():
    # one user, two items: the only possible negative is item 1
    d = make_dataset(1, 2, [(0, 0)])
    g = SocialGraph(1, [], [])
    cfg = RecConfig(epochs=1, lr=0.01, seed=0)
    adj = Adjacency.build(d, g)
    before = float(bpr_loss(gcn_forward(ModelParams.init(1, 2, 8, 2, seed=0), adj), [(0, 0, 1)]).data)
    m = train_recommender(d, g, cfg)
    after = float(bpr_loss(m.stack, [(0, 0, 1)]).data)
    assert after < before


def test_same_seed_same_validation_history(synth):
    d, g = synth
    cfg = RecConfig(epochs=4, eval_every=2, seed=3)
    a, b = train_recommender(d, g, cfg), train_recommender(d, g, cfg)
    assert a.history == b.history
    assert a.user_table.tobytes() == b.user_table.tobytes()


def test_training_never_mutates_graph(synth):
    d, g = synth
    active = np.ones(g.n_edges, dtype=bool)
    active[::3] = False
    g2 = g.with_active(active)
    train_recommender(d, g2, RecConfig(epochs=2, eval_every=1))
    np.testing.assert_array_equal(g2.active, active)


def test_cached_stack_matches_forward_of_stored_params(synth):
    d, g = synth
    m = train_recommender(d, g, RecConfig(epochs=3, eval_every=1, seed=1))
    fresh = gcn_forward(m.params, Adjacency.build(d, m.graph))
    np.testing.assert_array_equal(fresh.user_star.data, m.user_table)
    np.testing.assert_array_equal(fresh.item_star.data, m.item_table)


def test_score_all_matches_dot_products(synth):
    d, g = synth
    m = train_recommender(d, g, RecConfig(epochs=2, eval_every=1))
    cands = [0, 5, 5, 17]
    scores = score_all(m, 3, cands)
    assert scores[1] == scores[2]
    assert scores == [predict_score(m.stack, 3, i) for i in cands]
    ref = m.item_table.astype(np.float64)[cands] @ m.user_table.astype(np.float64)[3]
    np.testing.assert_allclose(scores, ref, rtol=1e-6)
    assert score_all(m, 3, []) == []


def test_divergence_raises(monkeypatch):
    d = make_dataset(2, 3, [(0, 0), (1, 1)])
    monkeypatch.setattr(rec_mod, "bpr_loss", lambda stack, triples: Tensor(np.array(np.nan)))
    with pytest.raises(FloatingPointError):
        train_recommender(d, SocialGraph(2, [], []), RecConfig(epochs=1))


def test_early_stopping_keeps_best_snapshot(synth):
    d, g = synth
    m = train_recommender(d, g, RecConfig(epochs=30, eval_every=1, patience=2, seed=0))
    assert len(m.history) <= 30
    best_epoch, best = max(m.history, key=lambda t: (t[1], -t[0]))
    assert best == max(r for _, r in m.history)
