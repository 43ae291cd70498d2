import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from gucnet.data import gen_gaussian_mixture, make_bundle
from gucnet.evaluation import ablate_binning, ablate_hamming, evaluate, report_from_predictions
from gucnet.model import build_model
from gucnet.numeric import ShapeError
from gucnet.training import ConfigError, TrainConfig

SMALL = dict(epochs=2, hidden=(16,), latent_dim=16, seed=3)


class FixedModel:
    """Stands in for a trained model with canned predictions."""

    def __init__(self, preds, dim=2, classes=7):
        self.preds = np.asarray(preds)
        self.tower_x = type("T", (), {"in_dim": dim})()
        self.num_classes = classes

    def predict(self, features):
        return self.preds


def test_perfect_predictions():
    labels = np.arange(21) % 7
    data = make_bundle(np.zeros((21, 2)), labels, 7)
    rep = evaluate(FixedModel(labels), data)
    assert rep.accuracy == 1.0
    assert np.array_equal(rep.confusion, np.diag([3] * 7))
    assert rep.per_class_recall == [1.0] * 7


def test_constant_predictor_on_balanced_set():
    labels = np.arange(70) % 7
    rep = evaluate(FixedModel(np.zeros(70, dtype=int)), make_bundle(np.zeros((70, 2)), labels, 7))
    assert rep.accuracy == pytest.approx(1 / 7)


@given(st.integers(2, 8), st.lists(st.integers(0, 100), min_size=1, max_size=60))
def test_accuracy_is_trace_over_n(c, raw):
    labels = np.array(raw) % c
    preds = (np.array(raw) * 7 + 3) % c
    rep = report_from_predictions(preds, labels, c)
    assert rep.confusion.sum() == rep.num_test == len(raw)
    assert rep.accuracy == pytest.approx(np.mean(preds == labels))
    assert rep.accuracy == pytest.approx(np.trace(rep.confusion) / len(raw))
    assert rep.confusion.sum(axis=1).tolist() == np.bincount(labels, minlength=c).tolist()


def test_argmax_ties_go_to_lowest_index():
    m = build_model("baseline", 3, 4, 2, hidden=(), seed=0)
    for p in m.parameters().values():
        p[...] = 0.0
    assert m.predict(np.ones((5, 3))).tolist() == [0] * 5


def test_evaluate_dim_mismatch_and_idempotence():
    m = build_model("baseline", 3, 2, 4, hidden=(5,), seed=0).eval()
    data = make_bundle(np.random.default_rng(0).normal(size=(6, 3)), [0, 1] * 3)
    assert evaluate(m, data).to_dict() == evaluate(m, data).to_dict()
    with pytest.raises(ShapeError):
        evaluate(m, make_bundle(np.zeros((2, 4)), [0, 1]))


@pytest.fixture(scope="module")
def x():
    return gen_gaussian_mixture(4, 8, 20, 1.0, 0.5, seed=2)


def test_hamming_harness_contract(x):
    cfg = TrainConfig(mode="prototype", **SMALL)
    rep = ablate_hamming(x, cfg)
    assert [c[0] for c in rep.conditions] == ["random", "h2", "hhalf", "hmax"]
    assert [c[2]["ones"] for c in rep.conditions] == [None, 1, 2, 4]
    for _, r, det in rep.conditions:
        assert r.accuracy == pytest.approx(det["final_test_acc"])
    # the only config field that differs between conditions is the prototype choice
    configs = list(rep.configs.values())
    for other in configs[1:]:
        assert {k for k in other if other[k] != configs[0][k]} == {"prototype"}
    with pytest.raises(ConfigError):
        ablate_hamming(x, TrainConfig(mode="texture", **SMALL))


def test_hamming_harness_shares_split(x):
    cfg = TrainConfig(mode="prototype", **SMALL)
    a = ablate_hamming(x, cfg, conditions=["hmax"])
    b = ablate_hamming(x, cfg, conditions=["h2"])
    assert a.fingerprint == b.fingerprint


def test_binning_harness_records_permutations(x):
    y = gen_gaussian_mixture(4, 5, 15, 1.0, 0.05, seed=9)
    rep = ablate_binning(x, y, TrainConfig(mode="texture", **SMALL), shuffle_seeds=[1, 2])
    labels = [c[0] for c in rep.conditions]
    assert labels == ["identity", "shuffled-1", "shuffled-2"]
    perms = [c[2]["permutation"] for c in rep.conditions]
    assert perms[0] == [0, 1, 2, 3]
    assert all(sorted(p) == [0, 1, 2, 3] for p in perms)
    d = rep.to_dict()
    assert d["study"] == "binning" and len(d["conditions"]) == 3
    with pytest.raises(ConfigError):
        ablate_binning(x, y, TrainConfig(mode="prototype", **SMALL))
