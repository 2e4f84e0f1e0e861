import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from beampred.errors import ContractError
from beampred.geodesy import NormalizationStats
from beampred.model import (AdamState, ModelConfig, adam_step, cross_entropy, gru_forward,
                            init_params, load_checkpoint, log_softmax, loss_and_gradients,
                            predict_topk, save_checkpoint, topk_from_logits, train)
from oracles import gradient_check, loop_gru_logits

SMALL = ModelConfig(hidden_dim=4, num_classes=6, batch_size=4, epochs=5)


def test_default_parameter_shapes():
    p = init_params(ModelConfig())
    assert p["l1.W_z"].shape == (64, 2) and p["l2.W_z"].shape == (64, 64)
    assert p["out.W"].shape == (64, 64)
    assert all(v.dtype == np.float64 for v in p.values())
    bound = 1 / 8
    assert all(np.abs(v).max() <= bound for v in p.values())


def test_zero_weights_give_bias_logits():
    p = {k: np.zeros_like(v) for k, v in init_params(SMALL).items()}
    p["out.b"] = np.arange(6.0)
    hidden, logits = gru_forward(p, np.random.default_rng(0).normal(size=(3, 2, 2)))
    np.testing.assert_array_equal(logits, np.tile(np.arange(6.0), (3, 1)))
    assert all(np.all(h == 0) for h in hidden)


def test_zero_input_zero_bias_keeps_state_at_zero():
    p = init_params(SMALL)
    for k in p:
        if ".b_" in k:
            p[k][:] = 0
    hidden, _ = gru_forward(p, np.zeros((2, 2)))
    assert np.all(hidden[-1] == 0)


def test_forward_matches_scalar_loop():
    p = init_params(SMALL, seed=5)
    x = np.random.default_rng(1).uniform(size=(3, 2, 2))
    _, logits = gru_forward(p, x)
    for i in range(3):
        np.testing.assert_allclose(logits[i], loop_gru_logits(p, x[i]), atol=1e-12, rtol=0)


def test_single_sequence_equals_batch_row():
    p = init_params(SMALL)
    x = np.random.default_rng(2).uniform(size=(4, 2, 2))
    np.testing.assert_array_equal(gru_forward(p, x[1])[1][0], gru_forward(p, x)[1][1])


def test_hidden_state_stays_bounded():
    p = init_params(SMALL)
    hidden, _ = gru_forward(p, np.random.default_rng(3).uniform(size=(50, 2, 2)))
    for h in hidden:
        assert np.all(np.abs(h) < 1)
    # tanh rounds to exactly +-1 in float64 once saturated
    hidden, _ = gru_forward(p, np.random.default_rng(3).normal(scale=1e3, size=(5, 2, 2)))
    for h in hidden:
        assert np.all(np.isfinite(h)) and np.all(np.abs(h) <= 1)


def test_cross_entropy_limits():
    assert cross_entropy(np.zeros((2, 64)), [0, 63]) == pytest.approx(math.log(64), abs=1e-12)
    logits = np.zeros((1, 64))
    logits[0, 7] = 50.0
    assert cross_entropy(logits, [7]) < 1e-20


def test_log_softmax_stable_for_large_logits():
    logits = np.array([[1e3, 0.0, -1e3], [1e3, 1e3, 1e3]])
    lp = log_softmax(logits)
    assert np.all(np.isfinite(lp))
    np.testing.assert_allclose(np.exp(lp).sum(axis=1), 1.0)
    assert cross_entropy(logits, [0, 1]) == pytest.approx(math.log(3) / 2)


def test_gradients_match_finite_differences():
    cfg = ModelConfig(hidden_dim=3, num_classes=5)
    p = init_params(cfg, seed=9)
    rng = np.random.default_rng(4)
    x = rng.uniform(size=(4, 2, 2))
    y = rng.integers(0, 5, size=4)
    assert gradient_check(p, x, y) < 1e-4


def test_gradients_finite_for_saturated_inputs():
    p = init_params(SMALL)
    x = np.full((2, 2, 2), 1e3)
    loss, grads = loss_and_gradients(p, x, [0, 1])
    assert np.isfinite(loss) and all(np.all(np.isfinite(g)) for g in grads.values())


def test_adam_zero_gradient_leaves_params():
    p = init_params(SMALL)
    g = {k: np.zeros_like(v) for k, v in p.items()}
    new, state = adam_step(p, g, AdamState.zeros(p))
    assert state.t == 1
    for k in p:
        np.testing.assert_array_equal(new[k], p[k])


def test_adam_first_step_is_learning_rate_sized():
    p = {"w": np.array([1.0, -2.0, 3.0])}
    g = {"w": np.array([0.5, -7.0, 1e-3])}
    new, _ = adam_step(p, g, AdamState.zeros(p), lr=0.01)
    np.testing.assert_allclose(p["w"] - new["w"], 0.01 * np.sign(g["w"]), rtol=1e-4)


def test_adam_does_not_mutate_inputs():
    p = {"w": np.ones(3)}
    g = {"w": np.ones(3)}
    s = AdamState.zeros(p)
    adam_step(p, g, s)
    assert np.all(p["w"] == 1) and s.t == 0 and np.all(s.m["w"] == 0)


def test_adam_descends_quadratic_bowl():
    p = {"w": np.array([3.0, -4.0])}
    s = AdamState.zeros(p)
    losses = []
    for _ in range(100):
        losses.append(float(p["w"] @ p["w"]))
        p, s = adam_step(p, {"w": 2 * p["w"]}, s, lr=0.05)
    assert np.all(np.diff(losses) < 0)
    assert losses[-1] < 0.05 * losses[0]


def test_topk_ordering_and_ties():
    assert topk_from_logits(np.array([0.0, 3.0, 1.0, 2.0]), 2).tolist() == [[1, 3]]
    assert topk_from_logits(np.zeros(5), 3).tolist() == [[0, 1, 2]]
    with pytest.raises(ContractError):
        topk_from_logits(np.zeros(5), 6)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.integers(-1000, 1000), min_size=64, max_size=64), st.integers(-100, 100))
def test_topk_properties(values, shift):
    # integer-valued logits so the shift is exact
    logits = np.array(values, dtype=float)
    full = topk_from_logits(logits, 64)[0]
    assert sorted(full) == list(range(64))
    assert full.tolist() == sorted(range(64), key=lambda i: (-logits[i], i))
    np.testing.assert_array_equal(topk_from_logits(logits + shift, 3), topk_from_logits(logits, 3))


def test_predict_topk_shape():
    p = init_params(SMALL)
    out = predict_topk(p, np.zeros((7, 2, 2)), 3)
    assert out.shape == (7, 3)


def _toy(n=10, seed=0):
    rng = np.random.default_rng(seed)
    x = rng.uniform(size=(n, 2, 2))
    y = np.arange(n) % 6
    return x, y


def test_training_is_deterministic():
    x, y = _toy()
    a, la = train(x, y, x, y, SMALL)
    b, lb = train(x, y, x, y, SMALL)
    assert la.train_loss == lb.train_loss
    for k in a:
        np.testing.assert_array_equal(a[k], b[k])
    assert len(la.val_dba) == SMALL.epochs


def test_training_memorizes_small_set():
    x, y = _toy()
    cfg = ModelConfig(hidden_dim=16, num_classes=6, batch_size=10, epochs=400,
                      learning_rate=0.02)
    params, log = train(x, y, x, y, cfg)
    assert log.train_loss[-1] < log.train_loss[0]
    assert np.array_equal(predict_topk(params, x, 1)[:, 0], y)


def test_on_epoch_hook_called_each_epoch():
    x, y = _toy()
    seen = []
    train(x, y, x, y, SMALL, on_epoch=lambda e, p, log: seen.append(e))
    assert seen == [1, 2, 3, 4, 5]


def test_checkpoint_round_trip(tmp_path):
    p = init_params(SMALL, seed=2)
    stats = NormalizationStats(np.array([-1.0, -2.0]), np.array([3.0, 4.0]))
    save_checkpoint(tmp_path / "a.ckpt", p, SMALL, stats, {"epoch": 3})
    save_checkpoint(tmp_path / "b.ckpt", p, SMALL, stats, {"epoch": 3})
    assert (tmp_path / "a.ckpt").read_bytes() == (tmp_path / "b.ckpt").read_bytes()
    q, cfg, st2, extra = load_checkpoint(tmp_path / "a.ckpt")
    assert cfg == SMALL and st2 == stats and extra == {"epoch": 3}
    for k in p:
        np.testing.assert_array_equal(p[k], q[k])


def test_checkpoint_shape_mismatch_rejected(tmp_path):
    p = init_params(SMALL)
    p["out.W"] = np.zeros((7, 4))
    save_checkpoint(tmp_path / "bad.ckpt", p, SMALL)
    with pytest.raises(ContractError, match="out.W"):
        load_checkpoint(tmp_path / "bad.ckpt")


def test_checkpoint_wrong_container_rejected(tmp_path):
    import zipfile
    with zipfile.ZipFile(tmp_path / "x.ckpt", "w") as zf:
        zf.writestr("meta.json", '{"format": "other"}')
    with pytest.raises(ContractError):
        load_checkpoint(tmp_path / "x.ckpt")
