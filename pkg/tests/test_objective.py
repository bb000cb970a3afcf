import unittest

import numpy as np

from moira.models.moira import objective as obj
from moira.numerics import Tape
from moira.utils.exceptions import ConfigError, ContractError, DimensionError


class TestPredictionLosses(unittest.TestCase):
    def test_loss_pred(self):
        self.assertLessEqual(obj.loss_pred(np.array([[0.0, 1.0], [1.0, 0.0]]), np.array([1, 0])), 1e-11)
        self.assertAlmostEqual(obj.loss_pred(np.full((3, 2), 0.5), np.array([0, 1, 1])), np.log(2), places=12)
        a = obj.loss_pred(np.array([[0.2, 0.8]]), np.array([0]))
        b = obj.loss_pred(np.array([[0.6, 0.4]]), np.array([0]))
        both = obj.loss_pred(np.array([[0.2, 0.8], [0.6, 0.4]]), np.array([0, 0]))
        self.assertAlmostEqual(both, (a + b) / 2, places=14)
        with self.assertRaises(ContractError):
            obj.loss_pred(np.full((1, 2), 0.5), np.array([2]))

    def test_loss_pred_clamped(self):
        # a zero probability of the true class hits the clamp instead of -log(0)
        self.assertAlmostEqual(obj.loss_pred(np.array([[1.0, 0.0]]), np.array([1])), -np.log(1e-12), places=6)

    def test_loss_aux(self):
        probs = np.array([[0.3, 0.7]])
        presence = np.array([[True, False]])
        self.assertAlmostEqual(
            obj.loss_aux({"a": probs}, presence, np.array([1]), ["a", "b"]),
            obj.loss_pred(probs, np.array([1])),
            places=14,
        )
        perfect = {"a": np.array([[1.0, 0.0], [0.0, 1.0]]), "b": np.array([[0.0, 1.0]])}
        presence = np.array([[True, False], [True, True]])
        self.assertLessEqual(obj.loss_aux(perfect, presence, np.array([0, 1]), ["a", "b"]), 1e-11)

        two = {"a": np.array([[0.2, 0.8]]), "b": np.array([[0.6, 0.4]])}
        value = obj.loss_aux(two, np.array([[True, True]]), np.array([0]), ["a", "b"])
        self.assertAlmostEqual(value, (-np.log(0.2) - np.log(0.6)) / 2, places=12)

    def test_loss_aux_contract(self):
        presence = np.array([[True, False]])
        with self.assertRaises(ContractError):
            obj.loss_aux({"a": np.full((1, 2), 0.5), "b": np.full((1, 2), 0.5)}, presence, np.array([0]), ["a", "b"])
        with self.assertRaises(ContractError):
            obj.loss_aux({}, presence, np.array([0]), ["a", "b"])


class TestContrastiveLosses(unittest.TestCase):
    def test_pair_examples(self):
        self.assertAlmostEqual(obj.loss_clip_pair(np.array([[1.0, 2.0]]), np.array([[-3.0, 0.5]]), 0.07), 0.0, places=12)
        same = np.tile([[0.5, -1.0, 2.0]], (5, 1))
        self.assertAlmostEqual(obj.loss_clip_pair(same, same, 0.07), np.log(5), places=10)
        eye = np.eye(2)
        expected = -np.log(np.e / (np.e + 1))
        self.assertAlmostEqual(obj.loss_clip_pair(eye, eye, 1.0), expected, places=12)
        self.assertAlmostEqual(expected, 0.3133, places=4)
        with self.assertRaises(DimensionError):
            obj.loss_clip_pair(np.ones((2, 3)), np.ones((3, 3)), 1.0)

    def test_pair_invariances(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            Zm, Zn = rng.normal(size=(6, 4)), rng.normal(size=(6, 4))
            base = obj.loss_clip_pair(Zm, Zn, 0.1)
            perm = rng.permutation(6)
            self.assertAlmostEqual(obj.loss_clip_pair(Zm[perm], Zn[perm], 0.1), base, delta=1e-10)
            c = rng.uniform(0.1, 10)
            self.assertAlmostEqual(obj.loss_clip_pair(c * Zm, c * Zn, 0.1), base, delta=1e-10)

    def test_total(self):
        rng = np.random.default_rng(1)
        Z = {m: rng.normal(size=(4, 3)) for m in "abc"}
        rows = {m: np.arange(4) for m in "abc"}
        expected = sum(
            obj.loss_clip_pair(Z[m], Z[n], 0.2) + obj.loss_clip_pair(Z[n], Z[m], 0.2)
            for m, n in [("a", "b"), ("a", "c"), ("b", "c")]
        )
        self.assertAlmostEqual(obj.loss_clip_total(Z, rows, 0.2), expected, places=12)

        self.assertEqual(obj.loss_clip_total({"a": Z["a"]}, {"a": rows["a"]}, 0.2), 0.0)
        disjoint = {"a": np.array([0, 1]), "b": np.array([2, 3])}
        self.assertEqual(obj.loss_clip_total({"a": Z["a"][:2], "b": Z["b"][:2]}, disjoint, 0.2), 0.0)

    def test_total_uses_common_samples(self):
        rng = np.random.default_rng(2)
        za, zb = rng.normal(size=(4, 3)), rng.normal(size=(3, 3))
        rows = {"a": np.array([0, 1, 2, 4]), "b": np.array([1, 2, 4])}
        expected = obj.loss_clip_pair(za[1:], zb, 0.3) + obj.loss_clip_pair(zb, za[1:], 0.3)
        self.assertAlmostEqual(obj.loss_clip_total({"a": za, "b": zb}, rows, 0.3), expected, places=12)


class TestReconstructionAndTotal(unittest.TestCase):
    def test_loss_recon(self):
        x = np.array([[0.0, 2.0]])
        self.assertEqual(obj.loss_recon(x, x), 0.0)
        self.assertEqual(obj.loss_recon(x + 1, x), 1.0)
        self.assertEqual(obj.loss_recon(np.array([[1.0, 0.0]]), x), 2.5)
        with self.assertRaises(DimensionError):
            obj.loss_recon(np.ones((1, 3)), x)

    def test_loss_total(self):
        cfg = obj.loadDefaultParams()
        parts = {"pred": 0.5, "aux": 0.25, "clip": 2.0}
        self.assertAlmostEqual(obj.loss_total(parts, cfg), 2.75, places=14)
        cfg.enable_aux, cfg.enable_clip = False, False
        self.assertEqual(obj.loss_total(parts, cfg), 0.5)

        cfg = obj.loadDefaultParams()
        cfg.lambda_clip = 0.0
        off = obj.loadDefaultParams()
        off.enable_clip = False
        self.assertEqual(obj.loss_total(parts, cfg), obj.loss_total(parts, off))

    def test_validate(self):
        cfg = obj.loadDefaultParams()
        cfg.tau = 0.0
        with self.assertRaises(ConfigError) as cm:
            obj.validate(cfg)
        self.assertEqual(cm.exception.field, "objective.tau")

    def test_tape_gradients(self):
        """Losses evaluated on tape nodes return nodes that can be differentiated."""
        rng = np.random.default_rng(3)
        Zm0, Zn0 = rng.normal(size=(4, 3)), rng.normal(size=(4, 3))

        def f(Zm):
            return obj.loss_clip_pair(Zm, Zn0, 0.5)

        tape = Tape()
        Zm = tape.leaf(Zm0)
        tape.backward(obj.loss_clip_pair(Zm, Zn0, 0.5))
        h = 1e-5
        for idx in np.ndindex(*Zm0.shape):
            plus, minus = Zm0.copy(), Zm0.copy()
            plus[idx] += h
            minus[idx] -= h
            fd = (f(plus) - f(minus)) / (2 * h)
            g = tape.grad(Zm)[idx]
            self.assertLess(abs(g - fd) / max(abs(g), abs(fd), 1e-3), 1e-5)


if __name__ == "__main__":
    unittest.main()
