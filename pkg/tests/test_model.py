import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gucnet.model import (FcnTower, LabelError, Mode, StaleCacheError, backward_tower, build_model,
                          cross_entropy_loss, forward_latent, matching_loss, total_loss)
from gucnet.numeric import Rng64, grad_check, softmax_rows
from gucnet.prototypes import make_hmax_variant, make_multi_hot, make_random_unit

from helpers import kink_margin, model_grad_error

D, K, C, HIDDEN = 8, 16, 4, (12, 10)


def small_model(mode, seed=3, **kw):
    g = make_hmax_variant(C, K, "hmax") if mode == "prototype" else None
    return build_model(mode, D, C, K, hidden=HIDDEN, seed=seed, prototypes=g, guide_dim=kw.get("guide_dim"))


def batch(seed=0, n=10, dim=D):
    rng = Rng64(seed)
    return rng.normal((n, dim)), np.arange(n) % C


# ---- towers -----------------------------------------------------------------

def test_eval_forward_deterministic():
    t = FcnTower([D, *HIDDEN, K], rng=Rng64(1))
    t.training = False
    x, _ = batch()
    a, _ = forward_latent(t, x)
    b, _ = forward_latent(t, x)
    assert np.array_equal(a, b)


def test_zero_parameters_give_zero_latent():
    t = FcnTower([D, *HIDDEN, K], rng=Rng64(1))
    for w, b in zip(t.weights, t.biases):
        w[...] = 0.0
        b[...] = 0.0
    latent, _ = forward_latent(t, batch()[0], Rng64(0))
    assert not latent.any()


def test_forward_rejects_wrong_width():
    t = FcnTower([D, 4, K])
    with pytest.raises(ValueError):
        forward_latent(t, np.ones((2, D + 1)), Rng64(0))


def test_inverted_dropout_is_unbiased():
    # one hidden layer and an identity output layer: the latent is the dropped hidden signal
    t = FcnTower([3, 4, 4], dropout=0.5, rng=Rng64(2))
    t.weights[0][...] = np.abs(t.weights[0]) + 0.1
    t.weights[1][...] = np.eye(4)
    x = np.array([[1.0, 0.5, 2.0]])
    t.training = False
    expected, _ = forward_latent(t, x)
    t.training = True
    rng = Rng64(9)
    total = np.zeros_like(expected)
    for _ in range(10_000):
        total += forward_latent(t, x, rng)[0]
    mean = total / 10_000
    assert np.all(np.abs(mean - expected) <= 0.02 * np.abs(expected))


# ---- losses ------------------------------------------------------------------

def test_ce_uniform_logits():
    loss, _ = cross_entropy_loss(np.zeros((3, 10)), [0, 4, 9])
    assert loss == pytest.approx(math.log(10), abs=1e-12)


def test_ce_confident_true_class():
    logits = np.zeros((1, 5))
    logits[0, 2] = 200.0
    loss, grad = cross_entropy_loss(logits, [2])
    assert loss < 1e-12
    assert np.all(np.isfinite(grad))


def test_ce_gradient_fd():
    rng = Rng64(4)
    logits, labels = rng.normal((8, 5)), np.array([0, 1, 2, 3, 4, 0, 1, 2])
    _, grad = cross_entropy_loss(logits, labels)
    assert grad_check(lambda z: cross_entropy_loss(z, labels)[0], logits, grad) < 1e-5


@settings(deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 12), st.integers(2, 9))
def test_ce_gradient_rows_sum_to_zero(seed, n, c):
    rng = Rng64(seed)
    logits = rng.normal((n, c)) * 5
    labels = rng.permutation(n * c)[:n] % c
    _, grad = cross_entropy_loss(logits, labels)
    assert np.max(np.abs(grad.sum(axis=1))) < 1e-12


def test_ce_label_range():
    with pytest.raises(LabelError):
        cross_entropy_loss(np.zeros((2, 3)), [0, 3])


def test_matching_zero_at_prototypes():
    g = make_multi_hot(3, 6, 2)
    labels = np.array([2, 0, 1, 1])
    loss, grad = matching_loss(g.vectors[labels].copy(), labels, g)
    assert loss == 0.0 and not grad.any()


def test_matching_hand_case():
    from gucnet.prototypes import PrototypeSet
    g = PrototypeSet(np.array([[0.0, 1.0, 1.0, 0.0]]), "multi_hot", ones=2)
    loss, grad = matching_loss(np.array([[1.0, 1.0, 0.0, 0.0]]), [0], g)
    assert loss == 0.5
    assert grad.tolist() == [[0.25, 0.0, -0.25, 0.0]]


def test_matching_gradient_fd_with_kink_exclusion():
    g = make_random_unit(4, 6, 1)
    rng = Rng64(12)
    labels = np.array([0, 1, 2, 3, 1])
    latent = rng.normal((5, 6))
    latent[0, 0] = g.vectors[0, 0] + 5e-5  # inside the exclusion zone
    _, grad = matching_loss(latent, labels, g)
    near_kink = np.abs(latent - g.vectors[labels]) < 1e-4
    assert near_kink.sum() == 1
    err = grad_check(lambda z: matching_loss(z, labels, g)[0], latent, grad, h=1e-5, skip=near_kink)
    assert err < 1e-4


def test_matching_needs_prototypes():
    with pytest.raises(ValueError):
        matching_loss(np.zeros((1, 4)), [0], None)


@given(st.integers(0, 10_000), st.data())
def test_matching_invariant_under_coordinate_permutation(seed, data):
    g = make_random_unit(3, 7, seed)
    labels = np.array([0, 1, 2, 2])
    latent = Rng64(seed).normal((4, 7))
    perm = np.array(data.draw(st.permutations(range(7))))
    from gucnet.prototypes import PrototypeSet
    gp = PrototypeSet(g.vectors[:, perm], g.kind, seed=g.seed)
    a = matching_loss(latent, labels, g)[0]
    b = matching_loss(latent[:, perm], labels, gp)[0]
    assert a == pytest.approx(b, rel=1e-12)


def test_total_loss():
    assert total_loss(2.0, 1.0, 0.01) == pytest.approx(2.01)
    assert total_loss(2.0, 1.0, 0.0) == 2.0
    assert total_loss(2.0, 0.0, 0.7) == 2.0
    with pytest.raises(ValueError):
        total_loss(1.0, 1.0, 1.5)


# ---- full-model gradients ------------------------------------------------------

@pytest.mark.parametrize("objective", ["ce", "ml", "joint"])
def test_prototype_model_gradcheck_eval_mode(objective):
    model = small_model("prototype").eval()
    x, labels = batch(1)
    assert kink_margin(model, x, labels) > 1e-4
    assert model_grad_error(model, objective, alpha=0.5, x=x, labels=labels) < 1e-4


def test_prototype_model_gradcheck_with_fixed_dropout_masks():
    model = small_model("prototype").train()
    x, labels = batch(2)
    assert model_grad_error(model, "joint", alpha=0.3, dropout_seed=5, x=x, labels=labels) < 1e-4


def test_baseline_model_gradcheck():
    model = small_model("baseline").eval()
    x, labels = batch(3)
    assert model_grad_error(model, "ce", x=x, labels=labels) < 1e-4


def test_texture_model_gradcheck_both_towers():
    model = small_model("texture", guide_dim=5).eval()
    x, labels = batch(4)
    y, y_labels = batch(5, dim=5)
    y_labels = (y_labels + 1) % C
    err = model_grad_error(model, "ce", x=x, labels=labels, y=y, y_labels=y_labels)
    assert err < 1e-4


def test_ml_objective_leaves_head_without_gradient():
    model = small_model("prototype")
    x, labels = batch()
    res = model.compute_gradients(x, labels, objective="ml", alpha=0.01, rng=Rng64(0))
    assert not any(name.startswith("head") for name in res.grads)
    assert res.ce_loss is None and res.ml_loss is not None


def test_texture_tower_gradients_come_from_their_own_half():
    model = small_model("texture", guide_dim=5).eval()
    x, labels = batch(4)
    y, y_labels = batch(5, dim=5)
    base = model.compute_gradients(x, labels, y=y, y_labels=y_labels)
    x2 = x + Rng64(8).normal(x.shape)
    moved = model.compute_gradients(x2, labels, y=y, y_labels=y_labels)
    # the guide tower only sees the guide half through the shared head's softmax normaliser per row
    for name in base.grads:
        if name.startswith("y."):
            np.testing.assert_array_equal(base.grads[name], moved.grads[name])
        if name == "x.W0":
            assert not np.array_equal(base.grads[name], moved.grads[name])


def test_stale_cache_detected():
    model = small_model("baseline")
    x, _ = batch()
    latent, cache = forward_latent(model.tower_x, x, Rng64(0))
    model.touch()
    with pytest.raises(StaleCacheError):
        backward_tower(model.tower_x, cache, np.ones_like(latent), "x")


def test_model_invariants():
    with pytest.raises(ValueError):
        build_model("prototype", D, C, K, hidden=HIDDEN)
    with pytest.raises(ValueError):
        build_model("prototype", D, C, K, hidden=HIDDEN, prototypes=make_multi_hot(C, K + 1, 1))
    with pytest.raises(ValueError):
        build_model("texture", D, C, K, hidden=HIDDEN)
    m = build_model("texture", D, C, K, hidden=HIDDEN, guide_dim=3)
    assert m.tower_y.in_dim == 3 and m.tower_x.in_dim == D
    assert m.mode is Mode.TEXTURE


def test_eval_output_is_pure_function_of_params_and_input():
    a, b = small_model("baseline", seed=6), small_model("baseline", seed=6)
    x, _ = batch()
    np.testing.assert_array_equal(a.eval().predict_proba(x), b.eval().predict_proba(x))
    np.testing.assert_allclose(a.predict_proba(x).sum(axis=1), 1.0, atol=1e-12)


def test_shared_head_texture_ce_decreases_on_separable_toy():
    from gucnet.training import Adam
    rng = Rng64(0)
    centers = np.eye(C, D) * 4
    labels = np.arange(64) % C
    x = centers[labels] + 0.3 * rng.normal((64, D))
    y = np.eye(C, 5)[labels] * 3 + 0.1 * rng.normal((64, 5))
    model = small_model("texture", guide_dim=5).train()
    opt = Adam(0.01)
    drng = Rng64(1)
    first = None
    for _ in range(100):
        res = model.compute_gradients(x, labels, y=y, y_labels=labels, rng=drng)
        first = res.ce_loss if first is None else first
        opt.step(model, res.grads)
    model.eval()
    final = model.compute_gradients(x, labels, y=y, y_labels=labels).ce_loss
    assert final < first


def test_softmax_of_head_matches_probabilities():
    m = small_model("baseline").eval()
    x, _ = batch()
    latent, _ = forward_latent(m.tower_x, x)
    np.testing.assert_allclose(m.predict_proba(x), softmax_rows(m.head.logits(latent)))
