import logging
import time
import unittest

import numpy as np

from moira.numerics import AdamState, Tape, adam_step, cosine_sim, dropout, leaky_relu, matmul, row_softmax
from moira.utils.exceptions import ContractError, DimensionError, EmptySupportError


def finiteDifferences(f, x, h=1e-5):
    """Central differences of the scalar function f at every entry of x."""
    grad = np.zeros_like(x)
    for idx in np.ndindex(*x.shape):
        xp, xm = x.copy(), x.copy()
        xp[idx] += h
        xm[idx] -= h
        grad[idx] = (f(xp) - f(xm)) / (2 * h)
    return grad


def relativeError(a, b):
    return np.max(np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), 1e-3))


class TestPrimitives(unittest.TestCase):
    """
    Forward values of the primitives.
    """

    def test_matmul(self):
        np.testing.assert_array_equal(matmul(np.eye(2), [[3, 4], [5, 6]]), [[3, 4], [5, 6]])
        np.testing.assert_array_equal(matmul([[1, 2]], [[3], [4]]), [[11]])
        np.testing.assert_array_equal(matmul([[2, 0], [0, 2]], np.ones((2, 2))), [[2, 2], [2, 2]])
        with self.assertRaises(DimensionError) as cm:
            matmul(np.ones((2, 3)), np.ones((2, 3)))
        self.assertIn("(2, 3) vs (2, 3)", str(cm.exception))

    def test_leaky_relu(self):
        np.testing.assert_array_equal(leaky_relu(np.array([[1.0, 0.0, -2.0]]), 0.01), [[1.0, 0.0, -0.02]])

    def test_dropout(self):
        x = np.ones((1, 10000))
        np.testing.assert_array_equal(dropout(x, 0.7, training=False), x)
        np.testing.assert_array_equal(dropout(x, 0.0, training=True, rng=np.random.default_rng(0)), x)
        y = dropout(x, 0.5, training=True, rng=np.random.default_rng(0))
        self.assertTrue(0.97 <= y.mean() <= 1.03)
        self.assertTrue(set(np.unique(y)) <= {0.0, 2.0})
        with self.assertRaises(ContractError):
            dropout(x, 1.0, training=True, rng=np.random.default_rng(0))

    def test_dropout_expectation(self):
        y = dropout(np.ones((1000, 1000)), 0.5, training=True, rng=np.random.default_rng(1))
        self.assertAlmostEqual(y.mean(), 1.0, delta=0.01)

    def test_row_softmax(self):
        np.testing.assert_allclose(row_softmax(np.zeros((1, 2))), [[0.5, 0.5]], atol=1e-15)
        np.testing.assert_array_equal(row_softmax(np.array([[3.0, -1.0]]), mask=[True, False]), [[1.0, 0.0]])
        np.testing.assert_allclose(row_softmax(np.log([[2.0, 1.0]])), [[2 / 3, 1 / 3]], atol=1e-15)
        with self.assertRaises(EmptySupportError):
            row_softmax(np.zeros((2, 2)), mask=np.array([[True, False], [False, False]]))

    def test_row_softmax_properties(self):
        rng = np.random.default_rng(0)
        for _ in range(100):
            X = rng.uniform(-2, 2, (4, 5))
            mask = rng.random((4, 5)) < 0.6
            mask[np.arange(4), rng.integers(0, 5, 4)] = True
            Y = row_softmax(X, mask=mask)
            np.testing.assert_allclose(Y.sum(axis=1), 1.0, atol=1e-12)
            self.assertTrue(np.all(Y[~mask] == 0.0))
            shifted = row_softmax(X + rng.uniform(-5, 5, (4, 1)), mask=mask)
            np.testing.assert_allclose(shifted, Y, atol=1e-12)

    def test_cosine_sim(self):
        self.assertAlmostEqual(cosine_sim([1, 2, 3], [1, 2, 3]), 1.0, places=12)
        self.assertEqual(cosine_sim([1, 0], [0, 1]), 0.0)
        self.assertAlmostEqual(cosine_sim([1, 1], [1, 0]), 1 / np.sqrt(2), places=12)
        self.assertEqual(cosine_sim([0, 0], [1, 0]), 0.0)
        rng = np.random.default_rng(0)
        for _ in range(100):
            a, b = rng.normal(size=6), rng.normal(size=6)
            self.assertAlmostEqual(cosine_sim(a, rng.uniform(0.1, 10) * a), 1.0, delta=1e-12)
            self.assertLessEqual(abs(cosine_sim(a, b)), 1 + 1e-12)

    def test_cosine_self_similarity(self):
        for scale in [1e-3, 1.0, 1e6]:
            a = scale * np.array([3.0, -1.0, 2.0])
            self.assertAlmostEqual(cosine_sim(a, a), 1.0, delta=1e-12)
        tiny = np.array([1e-6, 0.0])
        self.assertAlmostEqual(cosine_sim(tiny, tiny), 1e-12 / 1e-8, delta=1e-12)


class TestBackward(unittest.TestCase):
    """
    Tape gradients against central finite differences.
    """

    def test_simple_gradients(self):
        tape = Tape()
        x = tape.leaf(np.arange(6.0).reshape(2, 3))
        tape.backward(tape.sum(x))
        np.testing.assert_array_equal(tape.grad(x), np.ones((2, 3)))

        tape = Tape()
        x = tape.leaf(3.0)
        tape.backward(tape.mul(x, x))
        self.assertEqual(tape.grad(x)[0, 0], 6.0)

        tape = Tape()
        with self.assertRaises(ContractError):
            tape.backward(tape.leaf(np.ones((2, 1))))

    def test_primitive_gradients(self):
        logging.info("\t > Numerics: finite differences of every primitive ...")
        start = time.time()

        rng = np.random.default_rng(42)
        weights = rng.normal(size=(3, 4))
        mask = np.array([[True, False, True, True], [False, True, True, False], [True, True, True, True]])

        ops = {
            "matmul": lambda t, x: t.matmul(x, weights.T),
            "transpose": lambda t, x: t.transpose(x),
            "add": lambda t, x: t.add(x, weights[:1]),
            "sub": lambda t, x: t.sub(weights, x),
            "mul": lambda t, x: t.mul(x, x),
            "scale": lambda t, x: t.scale(x, -1.7),
            "mean": lambda t, x: t.mean(x),
            "leaky_relu": lambda t, x: t.leaky_relu(x, 0.01),
            "dropout": lambda t, x: t.dropout(x, 0.5, True, np.random.default_rng(3)),
            "row_softmax": lambda t, x: t.row_softmax(x, mask=mask),
            "log_softmax": lambda t, x: t.log_softmax(x),
            "log": lambda t, x: t.log(t.mul(x, x)),
            "gather_rows": lambda t, x: t.gather_rows(x, [2, 0, 0]),
            "scatter_rows": lambda t, x: t.scatter_rows(x, [4, 0, 2], 5),
            "pick": lambda t, x: t.pick(x, [1, 3, 0]),
            "cosine_matrix": lambda t, x: t.cosine_matrix(x, weights),
        }
        for name, op in ops.items():
            for trial in range(100 if name not in ["cosine_matrix", "scatter_rows"] else 20):
                x0 = rng.uniform(-2, 2, (3, 4))
                # avoid evaluating the kink of LeakyReLU
                x0[np.abs(x0) < 0.1] = 0.5
                probe = rng.normal(size=op(Tape(), x0).shape)

                def f(x):
                    return float((op(Tape(), x).value * probe).sum())

                tape = Tape()
                x = tape.leaf(x0)
                tape.backward(tape.sum(tape.mul(op(tape, x), probe)))
                err = relativeError(tape.grad(x), finiteDifferences(f, x0))
                self.assertLess(err, 1e-5, f"{name}: relative error {err:.2e}")

        end = time.time()
        logging.info("\t > Done in {:.2f} s".format(end - start))

    def test_composition(self):
        """Three layers, twenty leaves."""
        rng = np.random.default_rng(7)
        shapes = [(4, 3), (1, 3), (3, 3), (1, 3), (3, 2), (1, 2)]
        inputs = rng.uniform(-2, 2, (5, 4))
        leaves = [rng.uniform(-1, 1, s) for s in shapes]
        extra = [rng.uniform(-1, 1, (1, 1)) for _ in range(14)]

        def build(t, values):
            vs = [t.leaf(v) for v in values]
            h = t.leaky_relu(t.add(t.matmul(inputs, vs[0]), vs[1]))
            h = t.leaky_relu(t.add(t.matmul(h, vs[2]), vs[3]))
            out = t.log_softmax(t.add(t.matmul(h, vs[4]), vs[5]))
            total = t.mean(out)
            for e in vs[6:]:
                total = t.add(total, t.mul(e, e))
            return vs, total

        values = leaves + extra
        tape = Tape()
        vs, root = build(tape, values)
        tape.backward(root)
        for k, v in enumerate(values):

            def f(x, k=k):
                vals = list(values)
                vals[k] = x
                return build(Tape(), vals)[1].value[0, 0]

            self.assertLess(relativeError(tape.grad(vs[k]), finiteDifferences(f, v)), 1e-5)


class TestAdam(unittest.TestCase):
    def test_zero_learning_rate(self):
        params = {"w": np.array([[1.0, -2.0]])}
        updated, state = adam_step(params, {"w": np.array([[0.5, 0.5]])}, AdamState(), lr=0.0)
        np.testing.assert_array_equal(updated["w"], params["w"])
        self.assertEqual(state.step, 1)
        self.assertTrue(np.all(state.m["w"] != 0))

    def test_first_step(self):
        params = {"w": np.array([[1.0, -2.0, 0.3]])}
        grads = {"w": np.array([[0.2, -5.0, 1e-3]])}
        updated, _ = adam_step(params, grads, AdamState(), lr=1e-3)
        np.testing.assert_allclose(params["w"] - updated["w"], 1e-3 * np.sign(grads["w"]), rtol=1e-4)

    def test_weight_decay(self):
        params = {"w": np.array([[1.0]])}
        updated, _ = adam_step(params, {"w": np.zeros((1, 1))}, AdamState(), lr=1e-3, weight_decay=0.001)
        self.assertLess(updated["w"][0, 0], 1.0)
        decoupled, _ = adam_step(
            params, {"w": np.zeros((1, 1))}, AdamState(), lr=1e-3, weight_decay=0.001, decoupled=True
        )
        self.assertAlmostEqual(decoupled["w"][0, 0], 1.0 - 1e-6, places=15)

    def test_deterministic(self):
        rng = np.random.default_rng(0)
        params = {"a": rng.normal(size=(3, 2)), "b": rng.normal(size=(1, 2))}
        grads = {"a": rng.normal(size=(3, 2)), "b": rng.normal(size=(1, 2))}
        state = AdamState()
        one, s1 = adam_step(params, grads, state.copy(), lr=0.01, weight_decay=0.1)
        two, s2 = adam_step(params, grads, state.copy(), lr=0.01, weight_decay=0.1)
        for k in params:
            np.testing.assert_array_equal(one[k], two[k])
            np.testing.assert_array_equal(s1.v[k], s2.v[k])

    def test_shape_mismatch(self):
        with self.assertRaises(DimensionError):
            adam_step({"w": np.zeros((2, 2))}, {"w": np.zeros((2, 1))}, AdamState(), lr=0.1)


if __name__ == "__main__":
    unittest.main()
