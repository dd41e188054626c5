import datetime as dt
import math

import numpy as np
import pytest

from drugclip import diffcore as dc
from drugclip.contrastive import (
    DrugClipModel,
    PositiveIndex,
    TrainConfig,
    batch_loss,
    bce_loss,
    build_batch,
    disease_set_key,
    similarity_matrix,
    train,
)
from drugclip.dataio import build_dataset, make_trial
from drugclip.encoders import MpnnConfig
from drugclip.errors import EmptyDataset, ShapeMismatch, UnknownToken
from drugclip.ontology import Ontology


def log_sigmoid(x):
    return -math.log1p(math.exp(-x))


def trial(tid, drug, smiles, codes, day=1):
    return make_trial(tid, dt.date(2015, 1, day), drug, smiles, codes)


TOY = [
    trial("T1", "D1", "CCO", "J45", 1),
    trial("T2", "D2", "c1ccccc1O", "E11.9;K50.1", 2),
    trial("T3", "D3", "CC(=O)N", "G44.311", 3),
    trial("T4", "D4", "C1CCNCC1", "D41.20", 4),
]


@pytest.fixture
def toy_model():
    onto = Ontology(c for t in TOY for c in t.codes)
    return DrugClipModel.initialize(onto, MpnnConfig(depth=2, dim=8), seed=0)


class TestSimilarity:
    def test_hand_example(self):
        drugs = np.array([[1.0, 0.0], [0.0, 1.0]])
        diseases = np.array([[1.0, 0.0], [1.0, 1.0]]) / np.array([[1.0], [math.sqrt(2)]])
        S = similarity_matrix(drugs, diseases).value
        r = 1 / math.sqrt(2)
        np.testing.assert_allclose(S, [[1.0, r], [0.0, r]], rtol=0, atol=1e-15)

    def test_same_rows_give_unit_diagonal(self):
        X = np.random.default_rng(0).normal(size=(5, 3))
        np.testing.assert_allclose(np.diag(similarity_matrix(X, X).value), 1.0, rtol=0, atol=1e-15)

    def test_orthogonal(self):
        S = similarity_matrix(np.array([[1.0, 0.0]]), np.array([[0.0, 3.0]])).value
        assert S[0, 0] == 0.0

    def test_range(self):
        rng = np.random.default_rng(1)
        S = similarity_matrix(rng.normal(size=(20, 4)), rng.normal(size=(20, 4))).value
        assert np.abs(S).max() <= 1.0

    def test_shape_mismatch(self):
        with pytest.raises(ShapeMismatch):
            similarity_matrix(np.ones((2, 3)), np.ones((2, 4)))


class TestBceLoss:
    def test_zero_scores(self):
        for Y in (np.eye(3), np.ones((3, 3)), np.zeros((3, 3))):
            assert abs(bce_loss(np.zeros((3, 3)), Y).item() - math.log(2)) <= 1e-12
        assert bce_loss(np.zeros((2, 2)), np.eye(2)).item() == pytest.approx(0.693147, abs=1e-6)

    def test_closed_form_example(self):
        S = np.array([[2.0, -1.0], [-1.0, 2.0]])
        expected = -(2 * log_sigmoid(2.0) + 2 * log_sigmoid(1.0)) / 4
        assert bce_loss(S, np.eye(2)).item() == pytest.approx(expected, rel=1e-13)
        assert expected == pytest.approx(0.220095, abs=1e-6)

    def test_limit(self):
        Y = np.eye(3)
        losses = [bce_loss(np.where(Y == 1, s, -s), Y).item() for s in (1.0, 10.0, 30.0)]
        assert losses[0] > losses[1] > losses[2]
        assert losses[2] < 1e-12

    def test_floored_at_extremes(self):
        value = bce_loss(np.array([[-1000.0]]), np.array([[1.0]])).item()
        assert math.isfinite(value)
        assert value == pytest.approx(-math.log(1e-12))

    def test_transpose_symmetry(self):
        rng = np.random.default_rng(2)
        S = rng.uniform(-1, 1, size=(4, 4))
        Y = (rng.uniform(size=(4, 4)) > 0.6).astype(float)
        assert bce_loss(S, Y).item() == pytest.approx(bce_loss(S.T, Y.T).item(), rel=1e-15)

    def test_elementwise_bounds(self):
        # with S in [-1, 1] each element lies between -log sigmoid(1) and -log sigmoid(-1)
        rng = np.random.default_rng(3)
        for _ in range(20):
            S = rng.uniform(-1, 1, size=(1, 1))
            Y = rng.integers(0, 2, size=(1, 1)).astype(float)
            value = bce_loss(S, Y).item()
            assert -log_sigmoid(1.0) - 1e-15 <= value <= -log_sigmoid(-1.0) + 1e-15

    def test_gradient_at_zero(self):
        B = 4
        Y = np.zeros((B, B))
        Y[np.arange(B), np.arange(B)] = 1
        Y[0, 2] = 1
        store = dc.ParameterStore()
        store.register("S", (B, B))
        with dc.Tape():
            loss = bce_loss(store.tensor("S"), Y)
        np.testing.assert_array_equal(dc.backward(loss)["S"], (0.5 - Y) / B ** 2)

    def test_shape_mismatch(self):
        with pytest.raises(ShapeMismatch):
            bce_loss(np.zeros((2, 2)), np.zeros((2, 3)))


class TestBuildBatch:
    def test_single_trial(self, toy_model):
        batch = build_batch(TOY[:1], PositiveIndex.from_trials(TOY), toy_model)
        np.testing.assert_array_equal(batch.labels, [[1.0]])
        assert batch.drug_embeddings.shape == (1, 8)

    def test_disjoint_trials(self, toy_model):
        batch = build_batch(TOY, PositiveIndex.from_trials(TOY), toy_model)
        np.testing.assert_array_equal(batch.labels, np.eye(4))

    def test_repeated_pair(self, toy_model):
        again = trial("T9", "D1", "CCO", "J45", 9)
        batch = build_batch([TOY[0], again], PositiveIndex.from_trials(TOY + [again]), toy_model)
        np.testing.assert_array_equal(batch.labels, np.ones((2, 2)))

    def test_known_positive_cross_pair(self, toy_model):
        # D1 is also known to treat T2's disease set, given in a different order
        index = PositiveIndex.from_trials(TOY)
        index.add("D1", ["K50.1", "E11.9"])
        batch = build_batch(TOY[:2], index, toy_model)
        np.testing.assert_array_equal(batch.labels, [[1, 1], [0, 1]])

    def test_bad_smiles_names_trial(self, toy_model):
        bad = trial("T5", "D5", "CCX", "J45")
        with pytest.raises(UnknownToken, match="T5"):
            build_batch([bad], PositiveIndex(), toy_model)

    def test_empty(self, toy_model):
        with pytest.raises(EmptyDataset):
            build_batch([], PositiveIndex(), toy_model)

    def test_disease_set_key(self):
        assert disease_set_key(["k50.1", "E11.9", "E119"]) == "E119;K501"
        assert ("D2", ["K50.1", "E11.9"]) in PositiveIndex.from_trials(TOY)

    def test_full_loss_gradients(self, toy_model):
        # two drugs against two disease sets, every parameter coordinate
        index = PositiveIndex.from_trials(TOY)
        model = toy_model

        def loss(store):
            model.store = store
            return batch_loss(build_batch(TOY[1:3], index, model))

        assert dc.check_gradients(loss, model.store) < 1e-4


class TestTrain:
    config = TrainConfig(epochs=2, batch_size=2, dim=8, depth=2, seed=5)

    def test_zero_epochs_keeps_initialization(self):
        onto = Ontology(c for t in TOY for c in t.codes)
        model, history = train(TOY, TrainConfig(epochs=0, dim=8, depth=2, seed=5), onto)
        fresh = DrugClipModel.initialize(onto, MpnnConfig(depth=2, dim=8), seed=5)
        assert history == []
        for name in fresh.store:
            np.testing.assert_array_equal(model.store[name], fresh.store[name])

    def test_deterministic(self):
        _, h1 = train(TOY, self.config)
        m2, h2 = train(TOY, self.config)
        m3, _ = train(TOY, self.config)
        assert h1 == h2
        for name in m2.store:
            assert m2.store[name].tobytes() == m3.store[name].tobytes()

    def test_history_length_and_partial_batch(self):
        config = TrainConfig(epochs=3, batch_size=3, dim=8, depth=2)
        _, history = train(TOY, config)
        assert len(history) == 3
        assert all(math.isfinite(v) for v in history)

    def test_seed_matters(self):
        _, h1 = train(TOY, self.config)
        _, h2 = train(TOY, TrainConfig(epochs=2, batch_size=2, dim=8, depth=2, seed=6))
        assert h1 != h2

    def test_empty(self):
        with pytest.raises(EmptyDataset):
            train([], self.config)

    def test_unparseable_trials_dropped(self, caplog):
        dataset, _ = build_dataset(TOY + [trial("T5", "D5", "C1CC", "J45")])
        assert len(dataset) == 4
        assert "T5" in caplog.text

    @pytest.mark.parametrize("kwargs", [dict(epochs=-1), dict(batch_size=0), dict(lr=0.0),
                                        dict(seed=-3), dict(readout="max")])
    def test_invalid_config(self, kwargs):
        with pytest.raises(ValueError):
            TrainConfig(**kwargs).mpnn
