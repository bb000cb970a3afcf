import logging
import time
import unittest

import numpy as np
import scipy.stats

import moira.utils.functions as func
from moira.utils import synthetic
from moira.utils.exceptions import ConfigError, ContractError, DimensionError
from moira.utils.loadData import MaskedDataset


def bruteForceAnova(x, labels):
    """Direct sums of squares of a single feature."""
    classes = sorted(set(labels))
    N, G = len(x), len(classes)
    grand = sum(x) / N
    ssb, ssw = 0.0, 0.0
    for c in classes:
        xs = [v for v, y in zip(x, labels) if y == c]
        mean = sum(xs) / len(xs)
        ssb += len(xs) * (mean - grand) ** 2
        ssw += sum((v - mean) ** 2 for v in xs)
    return (ssb / (G - 1)) / (ssw / (N - G))


class TestAnova(unittest.TestCase):
    def test_examples(self):
        F = func.anova_f(np.array([[1.0], [2.0], [3.0], [4.0]]), np.array([0, 0, 1, 1]))
        # SSB = 4 (df 1), SSW = 1 (df 2)
        self.assertAlmostEqual(F[0], 8.0, places=12)

        X = np.array([[5.0, 1.0], [5.0, 1.0], [5.0, 2.0], [5.0, 2.0]])
        F = func.anova_f(X, np.array([0, 0, 1, 1]))
        self.assertEqual(F[0], 0.0)
        self.assertEqual(F[1], np.inf)

    def test_errors(self):
        with self.assertRaises(ContractError):
            func.anova_f(np.ones((4, 2)), np.zeros(4, dtype=int))
        with self.assertRaises(ContractError):
            func.anova_f(np.ones((2, 2)), np.array([0, 1]))
        with self.assertRaises(DimensionError):
            func.anova_f(np.ones((3, 2)), np.array([0, 1]))

    def test_oracle(self):
        logging.info("\t > ANOVA: 1000 random instances against brute force and scipy ...")
        start = time.time()

        rng = np.random.default_rng(0)
        for _ in range(1000):
            G = int(rng.choice([2, 3]))
            N = int(rng.integers(G + 1, 51))
            labels = np.concatenate([np.arange(G), rng.integers(0, G, N - G)])
            X = rng.normal(size=(N, 3)) + labels[:, None] * rng.normal(size=3)
            F = func.anova_f(X, labels)
            for j in range(3):
                expected = bruteForceAnova(list(X[:, j]), list(labels))
                self.assertLess(abs(F[j] - expected) / abs(expected), 1e-10)
            groups = [X[labels == c] for c in range(G)]
            np.testing.assert_allclose(F, scipy.stats.f_oneway(*groups).statistic, rtol=1e-10)

        end = time.time()
        logging.info("\t > Done in {:.2f} s".format(end - start))


class TestSelection(unittest.TestCase):
    def test_top_k(self):
        np.testing.assert_array_equal(func.select_top_k(np.array([1.0, 5.0, 3.0]), 2).selected, [1, 2])
        np.testing.assert_array_equal(func.select_top_k(np.ones(4), 2).selected, [0, 1])
        np.testing.assert_array_equal(func.select_top_k(np.array([1.0, 2.0]), 10).selected, [1, 0])

    def test_infinite_scores_rank_first(self):
        sel = func.select_top_k(np.array([3.0, np.inf, 10.0, np.inf]), 3)
        np.testing.assert_array_equal(sel.selected, [1, 3, 2])
        np.testing.assert_array_equal(sel.ranks(), [4, 1, 3, 2])


class TestStandardize(unittest.TestCase):
    def test_example(self):
        stats = func.standardize_fit(np.array([[0.0], [2.0]]))
        self.assertEqual(stats.mean[0], 1.0)
        self.assertEqual(stats.std[0], 1.0)
        np.testing.assert_array_equal(func.standardize_apply(np.array([[1.0]]), stats), [[0.0]])

    def test_constant_feature(self):
        X = np.array([[3.0, 1.0], [3.0, 2.0], [3.0, 5.0]])
        Z = func.standardize_apply(X, func.standardize_fit(X))
        np.testing.assert_array_equal(Z[:, 0], 0.0)

    def test_moments(self):
        X = np.random.default_rng(0).normal(3.0, 2.0, size=(50, 4))
        Z = func.standardize_apply(X, func.standardize_fit(X))
        np.testing.assert_allclose(Z.mean(axis=0), 0.0, atol=1e-12)
        np.testing.assert_allclose(Z.std(axis=0), 1.0, atol=1e-12)

    def test_presence(self):
        X = np.array([[1.0], [0.0], [3.0]])
        stats = func.standardize_fit(X, presence=np.array([True, False, True]))
        self.assertEqual(stats.mean[0], 2.0)

    def test_mismatch(self):
        stats = func.standardize_fit(np.ones((3, 2)))
        with self.assertRaises(DimensionError):
            func.standardize_apply(np.ones((3, 3)), stats)


class TestSplit(unittest.TestCase):
    def dataset(self, labels):
        cfg = synthetic.loadDefaultParams(n_modalities=2, seed=0)
        cfg.n_samples = len(labels)
        ds = synthetic.synthesize(cfg)
        ds.labels = np.asarray(labels)
        return ds

    def test_sizes_and_determinism(self):
        ds = self.dataset([0] * 5 + [1] * 5)
        train, test = func.split(ds, 0.2, seed=7)
        self.assertEqual((train.nSamples, test.nSamples), (8, 2))
        again = func.split(ds, 0.2, seed=7)[1]
        self.assertEqual(test.sample_ids, again.sample_ids)
        self.assertEqual(set(train.sample_ids) | set(test.sample_ids), set(ds.sample_ids))
        self.assertEqual(set(train.sample_ids) & set(test.sample_ids), set())

    def test_stratified(self):
        ds = self.dataset([0] * 6 + [1] * 4)
        _, test = func.split(ds, 0.5, seed=0)
        np.testing.assert_array_equal(np.bincount(test.labels), [3, 2])

    def test_boundary(self):
        ds = self.dataset([0] * 5 + [1] * 5)
        train, test = func.split(ds, 0.99, seed=0)
        np.testing.assert_array_equal(np.bincount(train.labels), [1, 1])
        np.testing.assert_array_equal(np.bincount(test.labels), [4, 4])

    def test_errors(self):
        ds = self.dataset([0] * 5 + [1])
        with self.assertRaises(ContractError):
            func.split(ds, 0.3, seed=0)
        with self.assertRaises(ContractError):
            func.split(ds, 1.0, seed=0)


class TestPreprocess(unittest.TestCase):
    def test_preprocess(self):
        cfg = synthetic.loadDefaultParams(n_modalities=2, seed=4)
        cfg.n_samples = 80
        ds = synthetic.synthesize(cfg)
        train, test = func.split(ds, 0.3, seed=0)
        ptrain, ptest, selections, stats = func.preprocess(train, test, top_k=10)
        for j, m in enumerate(ds.modalities):
            self.assertEqual(len(ptrain.feature_ids[m]), 10)
            rows = ptrain.presentRows(m)
            np.testing.assert_allclose(ptrain.matrices[m][rows].mean(axis=0), 0.0, atol=1e-12)
            # absent rows stay zero
            self.assertTrue(np.all(ptest.matrices[m][~ptest.presence[:, j]] == 0.0))
            self.assertEqual(ptest.feature_ids[m], ptrain.feature_ids[m])
            self.assertEqual(len(selections[m].scores), 50)

    def test_modality_absent_from_training(self):
        rng = np.random.default_rng(0)

        def cohort(n, presence):
            ids = {"a": ["a0", "a1", "a2"], "b": ["b0", "b1"]}
            matrices = {"a": rng.normal(size=(n, 3)), "b": rng.normal(size=(n, 2))}
            presence = np.array(presence, dtype=bool)
            for j, m in enumerate(["a", "b"]):
                matrices[m][~presence[:, j]] = 0.0
            sampleIds = [f"S{i}" for i in range(n)]
            return MaskedDataset(["a", "b"], ids, matrices, sampleIds, presence, np.arange(n) % 2, n_classes=2)

        train = cohort(10, [[True, False]] * 10)
        test = cohort(4, [[True, True], [True, True], [False, True], [False, True]])
        with self.assertLogs(level="WARNING"):
            ptrain, ptest, selections, stats = func.preprocess(train, test, top_k=2)
        self.assertEqual(ptrain.modalities, ["a"])
        self.assertEqual(ptest.modalities, ["a"])
        self.assertEqual(ptest.nSamples, 2)
        self.assertEqual(sorted(selections), ["a"])
        self.assertEqual(sorted(stats), ["a"])

        with self.assertRaises(ConfigError):
            func.preprocess(train.subset([]), test)


if __name__ == "__main__":
    unittest.main()
