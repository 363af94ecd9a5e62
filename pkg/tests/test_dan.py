import math

import numpy as np
import pytest

from patientvec import dan
from patientvec.corpus import EncodedDataset, EncodedPatient
from patientvec.dan import DanConfig, DanModel, Gradients
from patientvec.numeric import Rng


def tiny(seed, V=12, d=6, h=5, n=4, activation="relu"):
    r = Rng(seed)
    return DanModel(r.normal((V, d)), r.normal((d, h)), r.normal(h) * 0.5, r.normal((h, n)), r.normal(n) * 0.5,
                    activation=activation)


def tiny_batch(seed, V=12, n=4, size=3):
    r = Rng(seed).child("batch")
    batch = [r.integers(0, V, size=int(r.integers(1, 6))).tolist() for _ in range(size)]
    Y = (r.random((size, n)) < 0.5).astype(np.float64)
    return batch, Y


def batch_loss(model, batch, Y):
    return dan.loss(dan.predict_proba(model, batch), Y)


def fd_rel_error(seed, activation="relu", eps=1e-6):
    m = tiny(seed, activation=activation)
    batch, Y = tiny_batch(seed)
    g, _ = dan.backward(m, batch, Y)
    gE = np.zeros_like(m.E)
    gE[g.E_rows] = g.E
    worst = 0.0
    for name, grad in (("E", gE), ("W1", g.W1), ("b1", g.b1), ("W2", g.W2), ("b2", g.b2)):
        theta = getattr(m, name).reshape(-1)
        flat = grad.reshape(-1)
        for i in range(theta.size):
            old = theta[i]
            theta[i] = old + eps
            up = batch_loss(m, batch, Y)
            theta[i] = old - eps
            down = batch_loss(m, batch, Y)
            theta[i] = old
            num = (up - down) / (2 * eps)
            worst = max(worst, abs(num - flat[i]) / max(abs(num), abs(flat[i]), 1e-8))
    return worst


def toy_dataset(seed=0, n_pat=60, V=20, n_codes=3):
    """Codes are a deterministic function of which CUI block a patient draws from."""
    r = Rng(seed)
    pats = []
    for i in range(n_pat):
        block = int(r.integers(0, n_codes))
        cuis = np.unique(block * (V // n_codes) + r.integers(0, V // n_codes, size=5))
        pats.append(EncodedPatient(f"p{i}", cuis, np.ones(len(cuis), dtype=np.int64), cuis,
                                   np.array([block]), "train" if i < 0.8 * n_pat else "validation"))
    return EncodedDataset(pats, V, n_codes)


# ------------------------------------------------------------------ forward / loss

def test_zero_model_probabilities():
    m = DanModel(np.zeros((4, 2)), np.zeros((2, 3)), np.zeros(3), np.zeros((3, 5)), np.zeros(5))
    h, p = dan.forward(m, [0, 2])
    assert np.all(p == 0.5) and not h.any()


def test_average_of_two_rows():
    E = np.array([[1.0, 0.0], [0.0, 1.0]])
    m = DanModel(E, np.eye(2), np.zeros(2), np.zeros((2, 1)), np.zeros(1))
    a, _, h, _ = dan.forward_batch(m, dan.averaging_matrix([[0, 1]], 2))
    assert a[0].tolist() == [0.5, 0.5]
    assert h[0].tolist() == [0.5, 0.5]


def test_set_semantics():
    m = tiny(1)
    h1, p1 = dan.forward(m, [3, 7])
    h2, p2 = dan.forward(m, [7, 3, 7, 7])
    assert np.array_equal(h1, h2) and np.array_equal(p1, p2)


def test_loss_examples():
    assert dan.loss([0.5, 0.5, 0.5], [1, 0, 1]) == pytest.approx(math.log(2), abs=1e-15)
    assert dan.loss([1.0, 0.0], [1, 0]) <= 1e-11
    assert dan.loss([0.9, 0.2], [1, 0]) == pytest.approx((-math.log(0.9) - math.log(0.8)) / 2, abs=1e-15)
    assert dan.loss([0.9, 0.2], [1, 0]) == pytest.approx(0.16425, abs=5e-6)


def test_loss_clamp_keeps_finite():
    assert math.isfinite(dan.loss([0.0, 1.0], [1, 0]))


def test_loss_length_mismatch():
    with pytest.raises(ValueError, match="length mismatch"):
        dan.loss([0.5], [1, 0])


# ------------------------------------------------------------------ backward

@pytest.mark.parametrize("seed", range(20))
def test_backward_finite_difference(seed):
    assert fd_rel_error(seed) < 1e-5


def test_backward_finite_difference_tanh():
    assert max(fd_rel_error(s, activation="tanh") for s in range(3)) < 1e-5


def test_untouched_rows_have_no_gradient():
    m = tiny(2)
    batch = [[0, 1], [1, 5]]
    g, _ = dan.backward(m, batch, np.ones((2, 4)))
    assert g.E_rows.tolist() == [0, 1, 5]
    before = m.E.copy()
    dan.rmsprop_step(m, g, DanConfig(embed_dim=6, hidden_dim=5))
    untouched = [i for i in range(12) if i not in (0, 1, 5)]
    assert np.array_equal(m.E[untouched], before[untouched])
    assert not m.cache["E"][untouched].any()


def test_b2_gradient_closed_form():
    m = tiny(4)
    batch, Y = tiny_batch(4)
    g, _ = dan.backward(m, batch, Y)
    p = dan.predict_proba(m, batch)
    np.testing.assert_allclose(g.b2, (p - Y).mean(axis=0) / Y.shape[1], rtol=1e-14, atol=1e-16)


def test_embedding_gradient_scaled_by_unique_count():
    # a single patient: every listed row receives da / (number of unique CUIs)
    m = tiny(6)
    g, _ = dan.backward(m, [[2, 9, 9, 4]], np.ones((1, 4)))
    assert g.E_rows.tolist() == [2, 4, 9]
    assert np.allclose(g.E[0], g.E[1]) and np.allclose(g.E[1], g.E[2])
    # moving every listed row by v moves the average by v, so the summed row gradient is dL/da
    v = Rng(1).normal(6) * 1e-6
    base = batch_loss(m, [[2, 4, 9]], np.ones((1, 4)))
    m.E[[2, 4, 9]] += v
    moved = batch_loss(m, [[2, 4, 9]], np.ones((1, 4)))
    assert moved - base == pytest.approx(float(g.E.sum(axis=0) @ v), rel=1e-4)


# ------------------------------------------------------------------ rmsprop

def single_param_model(theta=0.0):
    return DanModel(np.zeros((1, 1)), np.full((1, 1), theta), np.zeros(1), np.zeros((1, 1)), np.zeros(1))


def grads_for(g):
    return Gradients(np.zeros(0, dtype=np.int64), np.zeros((0, 1)), np.full((1, 1), g), np.zeros(1),
                     np.zeros((1, 1)), np.zeros(1))


def test_rmsprop_closed_form():
    m = single_param_model()
    dan.rmsprop_step(m, grads_for(1.0), DanConfig(embed_dim=1, hidden_dim=1))
    assert m.cache["W1"][0, 0] == pytest.approx(0.1, abs=1e-15)
    assert m.W1[0, 0] == pytest.approx(-0.001 / (math.sqrt(0.1) + 1e-8), rel=1e-15)
    assert m.W1[0, 0] == pytest.approx(-0.0031623, abs=1e-7)


def test_rmsprop_two_step_recurrence():
    g, lr, rho, eps = 0.7, 1e-3, 0.9, 1e-8
    m = single_param_model(0.3)
    cfg = DanConfig(embed_dim=1, hidden_dim=1)
    dan.rmsprop_step(m, grads_for(g), cfg)
    dan.rmsprop_step(m, grads_for(g), cfg)
    c1 = (1 - rho) * g * g
    c2 = rho * c1 + (1 - rho) * g * g
    want = 0.3 - lr * g / (math.sqrt(c1) + eps) - lr * g / (math.sqrt(c2) + eps)
    assert m.cache["W1"][0, 0] == pytest.approx(c2, rel=1e-15)
    assert m.W1[0, 0] == pytest.approx(want, rel=1e-14)


def test_rmsprop_zero_gradient_decays_cache():
    m = tiny(8)
    for k in m.cache:
        m.cache[k][...] = 2.0
    before = m.copy()
    zero = Gradients(np.arange(12), np.zeros((12, 6)), np.zeros((6, 5)), np.zeros(5), np.zeros((5, 4)), np.zeros(4))
    dan.rmsprop_step(m, zero, DanConfig(embed_dim=6, hidden_dim=5))
    for name in dan.PARAMS:
        assert np.array_equal(getattr(m, name), getattr(before, name))
        np.testing.assert_allclose(m.cache[name], 0.9 * before.cache[name], rtol=1e-15)


def test_rmsprop_shape_check():
    with pytest.raises(ValueError):
        dan.rmsprop_step(tiny(0), Gradients(np.zeros(0, dtype=np.int64), np.zeros((0, 6)), np.zeros((2, 2)),
                                            np.zeros(5), np.zeros((5, 4)), np.zeros(4)), DanConfig())


# ------------------------------------------------------------------ predict / harvest

def test_predict_threshold_rules():
    m = DanModel(np.zeros((3, 2)), np.zeros((2, 2)), np.zeros(2), np.zeros((2, 4)), np.zeros(4))
    assert dan.predict_codes(m, [[0, 1]], 0.5).tolist() == [[1, 1, 1, 1]]
    assert dan.predict_codes(m, [[0, 1]], 0.99).tolist() == [[0, 0, 0, 0]]


def test_predict_monotone_in_threshold():
    m = tiny(3)
    batch, _ = tiny_batch(3, size=10)
    prev = dan.predict_codes(m, batch, 0.9)
    for t in (0.7, 0.5, 0.3, 0.1):
        cur = dan.predict_codes(m, batch, t)
        assert np.all(cur >= prev)
        prev = cur


def test_config_rejects_bad_threshold():
    with pytest.raises(ValueError):
        DanConfig(sigmoid_threshold=1.0)


def test_harvest_frozen_and_ignores_output_layer():
    m = tiny(5)
    batch, _ = tiny_batch(5, size=4)
    snap = m.copy()
    h1 = dan.harvest(m, batch)
    assert np.array_equal(h1, dan.harvest(m, batch))
    for name in dan.PARAMS:
        assert np.array_equal(getattr(m, name), getattr(snap, name))
    m.W2 += 10.0
    m.b2 -= 3.0
    assert np.array_equal(h1, dan.harvest(m, batch))
    assert np.all(h1 >= 0)


def test_harvest_empty_patient_is_activation_of_bias():
    m = tiny(9)
    h = dan.harvest(m, [[]])
    assert np.array_equal(h[0], np.maximum(m.b1, 0))


def test_harvest_width_default():
    m = dan.init_model(7, 3, DanConfig())
    assert dan.harvest(m, [[1, 2]]).shape == (1, 1000)


# ------------------------------------------------------------------ training

def test_repeated_batch_loss_decreases():
    m = dan.init_model(12, 4, DanConfig(embed_dim=6, hidden_dim=5, seed=1))
    batch, Y = tiny_batch(1, size=5)
    cfg = DanConfig(embed_dim=6, hidden_dim=5, learning_rate=1e-3)
    losses = []
    for _ in range(11):
        g, value = dan.backward(m, batch, Y)
        losses.append(value)
        dan.rmsprop_step(m, g, cfg)
    assert all(b < a for a, b in zip(losses, losses[1:]))


def test_epochs_zero_returns_init():
    ds = toy_dataset()
    cfg = DanConfig(embed_dim=4, hidden_dim=8, epochs=0, seed=3)
    m, log = dan.train(ds, cfg)
    ref = dan.init_model(ds.n_cuis, ds.n_codes, cfg)
    assert log == []
    for name in dan.PARAMS:
        assert np.array_equal(getattr(m, name), getattr(ref, name))


def test_train_deterministic_and_learns():
    ds = toy_dataset()
    cfg = DanConfig(embed_dim=8, hidden_dim=16, epochs=40, batch_size=10, learning_rate=0.01, seed=2)
    a, log_a = dan.train(ds, cfg)
    b, log_b = dan.train(ds, cfg)
    assert log_a == log_b
    for name in dan.PARAMS:
        assert np.array_equal(getattr(a, name), getattr(b, name))
    assert [e["epoch"] for e in log_a] == list(range(1, 41))
    assert log_a[-1]["mean_train_loss"] < log_a[0]["mean_train_loss"]
    assert log_a[-1]["val_macro_f1"] == 1.0


def test_retrain_uses_all_patients():
    ds = toy_dataset()
    cfg = DanConfig(embed_dim=4, hidden_dim=4, epochs=1, batch_size=100, seed=0)
    m, log = dan.train(ds, cfg, retrain=True)
    assert log[0]["val_macro_f1"] is None
    g, value = dan.backward(dan.init_model(ds.n_cuis, ds.n_codes, cfg),
                            [p.cuis for p in ds.patients], ds.targets())
    assert log[0]["mean_train_loss"] == pytest.approx(value, rel=1e-12)


def test_pretrained_embeddings_used():
    ds = toy_dataset()
    emb = Rng(0).normal((ds.n_cuis, 4))
    m = dan.init_model(ds.n_cuis, ds.n_codes, DanConfig(embed_dim=4, hidden_dim=4), emb)
    assert np.array_equal(m.E, emb)
    with pytest.raises(ValueError):
        dan.init_model(ds.n_cuis, ds.n_codes, DanConfig(embed_dim=5, hidden_dim=4), emb)


def test_empty_training_split():
    ds = toy_dataset()
    for p in ds.patients:
        p.split = "validation"
    with pytest.raises(ValueError, match="empty training split"):
        dan.train(ds, DanConfig(embed_dim=2, hidden_dim=2, epochs=1))
