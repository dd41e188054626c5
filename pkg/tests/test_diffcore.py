import numpy as np
import pytest
import scipy.sparse as sp

from drugclip import diffcore as dc
from drugclip.errors import NoTape, NumericalError, ShapeMismatch, UnknownParameter


def store_with(**arrays):
    store = dc.ParameterStore()
    for name, value in arrays.items():
        value = np.asarray(value, dtype=np.float64)
        store.register(name, value.shape)
        store[name] = value
    return store


def rand(shape, seed):
    return np.random.default_rng(seed).uniform(-1.0, 1.0, size=shape)


def scalarize(t, seed=99):
    """Contract an output with fixed random weights so every entry matters."""
    w = rand(t.shape, seed)
    return dc.reduce_sum(dc.mul(t, w))


# op name -> (input shapes, function of the input tensors)
OPS = {
    "add": ([(3, 4), (3, 4)], lambda a, b: dc.add(a, b)),
    "add_broadcast": ([(3, 4), (4,)], lambda a, b: a + b),
    "sub": ([(3, 4), (1, 4)], lambda a, b: a - b),
    "mul": ([(3, 4), (3, 1)], lambda a, b: a * b),
    "neg": ([(5,)], lambda a: -a),
    "add_n": ([(2, 3), (2, 3), (2, 3)], lambda a, b, c: dc.add_n([a, b, c])),
    "relu": ([(4, 5)], dc.relu),
    "tanh": ([(4, 5)], dc.tanh),
    "sigmoid": ([(4, 5)], dc.sigmoid),
    "exp": ([(6,)], dc.exp),
    "log": ([(6,)], lambda a: dc.log(a * a + 0.5)),
    "matmul_mm": ([(3, 4), (4, 2)], dc.matmul),
    "matmul_mv": ([(3, 4), (4,)], dc.matmul),
    "matmul_vm": ([(4,), (4, 2)], dc.matmul),
    "matmul_vv": ([(4,), (4,)], dc.matmul),
    "linear": ([(3, 4), (3,), (5, 4)], dc.linear),
    "linear_vec": ([(3, 4), (3,), (4,)], dc.linear),
    "transpose": ([(3, 4)], dc.transpose),
    "reshape": ([(3, 4)], lambda a: dc.reshape(a, (2, 6))),
    "concat": ([(2, 3), (2, 1), (2, 2)], lambda a, b, c: dc.concat([a, b, c], axis=1)),
    "concat_rows": ([(2, 3), (1, 3)], lambda a, b: dc.concat([a, b], axis=0)),
    "gather": ([(4, 3)], lambda a: dc.gather(a, np.array([0, 2, 2, 3, 0]))),
    "sparse_matmul": ([(4, 3)], lambda a: dc.sparse_matmul(
        sp.csr_matrix(np.array([[1.0, 0, 2, 0], [0, 0, 0, 0], [0.5, 1, 0, 3]])), a)),
    "reduce_sum": ([(3, 4)], lambda a: dc.reduce_sum(a, axis=0)),
    "reduce_mean": ([(3, 4)], lambda a: dc.reduce_mean(a, axis=1)),
    "reduce_mean_all": ([(3, 4)], dc.reduce_mean),
    "softmax": ([(5,)], dc.softmax),
    "segment_softmax": ([(6,)], lambda a: dc.segment_softmax(a, np.array([0, 0, 1, 1, 1, 2]), 3)),
    "l2_normalize": ([(3, 4)], dc.l2_normalize),
    "cosine": ([(5,), (5,)], dc.cosine),
    "cosine_matrix": ([(3, 4), (2, 4)], dc.cosine_matrix),
}


class TestOpGradients:
    @pytest.mark.parametrize("name", sorted(OPS))
    def test_matches_finite_differences(self, name):
        shapes, fn = OPS[name]
        names = [f"x{i}" for i in range(len(shapes))]
        store = store_with(**{n: rand(s, seed=i) for i, (n, s) in enumerate(zip(names, shapes))})

        def loss(st):
            return scalarize(fn(*[st.tensor(n) for n in names]))

        assert dc.check_gradients(loss, store, epsilon=1e-5) < 1e-5

    def test_shape_mismatch(self):
        with pytest.raises(ShapeMismatch):
            dc.add(np.ones((2, 3)), np.ones((3, 2)))
        with pytest.raises(ShapeMismatch):
            dc.matmul(np.ones((2, 3)), np.ones((2, 3)))

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_non_finite_raises(self):
        with pytest.raises(NumericalError):
            dc.exp(np.array([1000.0]))
        with pytest.raises(NumericalError):
            dc.log(np.array([0.0]))
        assert np.isfinite(dc.log(np.array([0.0]), floor=1e-12).value).all()


class TestForwardValues:
    def test_sigmoid_at_zero(self):
        assert dc.sigmoid(np.array(0.0)).item() == 0.5

    def test_sigmoid_is_stable(self):
        np.testing.assert_allclose(dc.sigmoid(np.array([-800.0, 800.0])).value, [0.0, 1.0])

    def test_softmax_uniform(self):
        np.testing.assert_allclose(dc.softmax(np.full(3, 2.7)).value, np.full(3, 1 / 3), rtol=0, atol=1e-15)

    def test_softmax_normalized(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            p = dc.softmax(rng.normal(scale=20, size=rng.integers(1, 30))).value
            assert (p > 0).all()
            assert abs(p.sum() - 1.0) <= 1e-12

    def test_cosine_self(self):
        v = np.array([0.3, -2.0, 1.5])
        assert dc.cosine(v, v).item() == pytest.approx(1.0, abs=1e-15)

    def test_cosine_zero_vector(self):
        assert dc.cosine(np.zeros(3), np.ones(3)).item() == 0.0

    def test_cosine_matrix_values(self):
        X = np.array([[1.0, 0.0], [1.0, 1.0]])
        Y = np.array([[0.0, 2.0], [3.0, 0.0]])
        expected = np.array([[0.0, 1.0], [2 ** -0.5, 2 ** -0.5]])
        np.testing.assert_allclose(dc.cosine_matrix(X, Y).value, expected, atol=1e-15)
        assert np.abs(dc.cosine_matrix(X, X).value).max() <= 1.0


class TestBackward:
    def test_sum_gives_ones(self):
        store = store_with(p=[1.0, -2.0, 3.0])
        with dc.Tape():
            loss = dc.reduce_sum(store.tensor("p"))
        np.testing.assert_array_equal(dc.backward(loss)["p"], np.ones(3))

    def test_sigmoid_slope_at_zero(self):
        x = np.array([0.5, -1.0, 2.0])
        store = store_with(w=np.zeros(3))
        with dc.Tape():
            loss = dc.sigmoid(dc.matmul(store.tensor("w"), x))
        np.testing.assert_allclose(dc.backward(loss)["w"], 0.25 * x, rtol=0, atol=1e-16)

    def test_fan_out_accumulates_exactly(self):
        store = store_with(x=rand((4,), 1))

        def g(st):
            return dc.reduce_sum(dc.tanh(dc.mul(st.tensor("x"), st.tensor("x"))))

        with dc.Tape():
            once = dc.backward(g(store))["x"]
        with dc.Tape():
            twice = dc.backward(dc.add(g(store), g(store)))["x"]
        np.testing.assert_array_equal(twice, 2 * once)

    def test_requires_tape(self):
        store = store_with(p=[1.0, 2.0])
        loss = dc.reduce_sum(dc.mul(store.tensor("p"), store.tensor("p")))
        with pytest.raises(NoTape):
            dc.backward(loss)

    def test_unreachable_parameters_get_zeros(self):
        store = store_with(a=[1.0, 2.0], b=np.ones((2, 2)))
        with dc.Tape():
            loss = dc.reduce_sum(store.tensor("a"))
        grads = dc.backward(loss, store)
        np.testing.assert_array_equal(grads["b"], np.zeros((2, 2)))

    def test_non_scalar_rejected(self):
        store = store_with(a=[1.0, 2.0])
        with dc.Tape():
            out = dc.tanh(store.tensor("a"))
        with pytest.raises(ShapeMismatch):
            dc.backward(out)

    def test_deterministic(self):
        store = store_with(W=rand((3, 4), 0), x=rand((5, 4), 1))

        def run():
            with dc.Tape():
                loss = dc.reduce_mean(dc.tanh(dc.linear(store.tensor("W"), np.zeros(3), store.tensor("x"))))
            return loss.item(), dc.backward(loss)

        (l1, g1), (l2, g2) = run(), run()
        assert l1 == l2
        for k in g1:
            np.testing.assert_array_equal(g1[k], g2[k])

    def test_no_recording_outside_tape(self):
        store = store_with(a=[1.0])
        out = dc.tanh(store.tensor("a"))
        assert out.tape is None
        with dc.Tape() as tape:
            dc.tanh(np.ones(2))  # constant input: nothing to record
            dc.tanh(store.tensor("a"))
        assert len(tape) == 1


class TestCheckGradients:
    def test_quadratic(self):
        store = store_with(p=rand((3, 2), 5))
        err = dc.check_gradients(lambda st: dc.reduce_sum(dc.mul(st.tensor("p"), st.tensor("p"))), store)
        assert err < 1e-9

    def test_detects_wrong_gradient(self):
        # clamp_unit deliberately passes gradients straight through
        store = store_with(p=np.array([2.0, -3.0]))
        err = dc.check_gradients(lambda st: dc.reduce_sum(dc.clamp_unit(st.tensor("p"))), store)
        assert err == pytest.approx(1.0)

    def test_restores_parameters(self):
        p = rand((2, 2), 3)
        store = store_with(p=p)
        dc.check_gradients(lambda st: dc.reduce_sum(dc.exp(st.tensor("p"))), store)
        np.testing.assert_array_equal(store["p"], p)


class TestParameterStore:
    def test_unknown_name(self):
        with pytest.raises(UnknownParameter):
            dc.ParameterStore()["missing"]

    def test_shape_is_fixed(self):
        store = store_with(a=np.zeros((2, 3)))
        with pytest.raises(ShapeMismatch):
            store["a"] = np.zeros((3, 2))

    def test_copy_is_independent(self):
        store = store_with(a=np.zeros(2))
        clone = store.copy()
        clone["a"] = np.ones(2)
        np.testing.assert_array_equal(store["a"], np.zeros(2))


class TestGlorot:
    def make(self):
        store = dc.ParameterStore()
        store.register("W", (4, 4))
        store.register("V", (30, 50))
        store.register("b", (4,), "bias")
        store.register("E", (10, 3), "embedding")
        return store

    def test_same_seed_bitwise(self):
        a = dc.glorot_init(self.make(), seed=11)
        b = dc.glorot_init(self.make(), seed=11)
        for name in a:
            assert a[name].tobytes() == b[name].tobytes()

    def test_different_seed_differs(self):
        a = dc.glorot_init(self.make(), seed=1)
        b = dc.glorot_init(self.make(), seed=2)
        assert not np.array_equal(a["W"], b["W"])

    def test_bounds(self):
        store = dc.glorot_init(self.make(), seed=0)
        assert np.abs(store["W"]).max() <= np.sqrt(6 / 8)
        assert np.abs(store["V"]).max() <= np.sqrt(6 / 80)
        assert np.abs(store["V"]).max() > 0.9 * np.sqrt(6 / 80)
        np.testing.assert_array_equal(store["b"], np.zeros(4))
        assert np.abs(store["E"]).max() <= 0.1

    def test_streams_keyed_by_name(self):
        # adding a parameter does not shift the draws of the others
        a = dc.glorot_init(self.make(), seed=5)
        bigger = self.make()
        bigger.register("extra", (7, 7))
        b = dc.glorot_init(bigger, seed=5)
        np.testing.assert_array_equal(a["V"], b["V"])


class TestAdam:
    def test_zero_gradient_is_noop(self):
        store = store_with(p=[1.0, -2.0])
        state = dc.AdamState()
        for _ in range(3):
            dc.adam_step(store, {"p": np.zeros(2)}, state)
        np.testing.assert_array_equal(store["p"], [1.0, -2.0])

    def test_first_step_closed_form(self):
        # m_hat = g and v_hat = g^2 after bias correction, so dp = -lr*g/(|g|+eps)
        g = np.array([0.3, -4.0, 1e-3])
        store = store_with(p=np.zeros(3))
        dc.adam_step(store, {"p": g}, dc.AdamState(), lr=0.01)
        expected = -0.01 * g / (np.abs(g) + 1e-8)
        np.testing.assert_allclose(store["p"], expected, rtol=1e-12, atol=0)
        np.testing.assert_allclose(store["p"], -0.01 * np.sign(g), rtol=1e-4)

    def test_constant_gradient_limit(self):
        g = np.array([2.0, -0.5])
        store = store_with(p=np.zeros(2))
        state = dc.AdamState()
        prev = store["p"].copy()
        for _ in range(500):
            dc.adam_step(store, {"p": g}, state, lr=1e-3)
            step = store["p"] - prev
            prev = store["p"].copy()
        np.testing.assert_allclose(step, -1e-3 * np.sign(g), rtol=1e-6)

    def test_shape_mismatch(self):
        store = store_with(p=np.zeros(2))
        with pytest.raises(ShapeMismatch):
            dc.adam_step(store, {"p": np.zeros(3)}, dc.AdamState())
