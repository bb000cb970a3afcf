import logging
import time
import unittest

import numpy as np

from moira.utils import metrics
from moira.utils.exceptions import ContractError
from moira.utils.metrics import ScoredLabels


def bruteForceAuroc(scores, labels):
    pos = [s for s, y in zip(scores, labels) if y == 1]
    neg = [s for s, y in zip(scores, labels) if y == 0]
    count = 0.0
    for p in pos:
        for n in neg:
            count += 1.0 if p > n else 0.5 if p == n else 0.0
    return count / (len(pos) * len(neg))


class TestThresholdMetrics(unittest.TestCase):
    def test_accuracy(self):
        self.assertEqual(metrics.accuracy(ScoredLabels([0.9, 0.1], [1, 0])), 1.0)
        self.assertEqual(metrics.accuracy(ScoredLabels([0.1, 0.9], [1, 0])), 0.0)
        self.assertAlmostEqual(metrics.accuracy(ScoredLabels([0.9, 0.6, 0.7], [1, 0, 1])), 2 / 3, places=15)
        # the threshold itself counts as positive
        self.assertEqual(metrics.accuracy(ScoredLabels([0.5], [1])), 1.0)
        with self.assertRaises(ContractError):
            metrics.accuracy(ScoredLabels([], []))

    def test_precision(self):
        self.assertEqual(metrics.precision(ScoredLabels([0.9, 0.8, 0.7, 0.6], [1, 0, 1, 0])), 0.5)
        self.assertEqual(metrics.precision(ScoredLabels([0.1, 0.2], [1, 0])), 0.0)
        self.assertEqual(metrics.precision(ScoredLabels([0.9, 0.2], [1, 0])), 1.0)

    def test_labels_contract(self):
        with self.assertRaises(ContractError):
            ScoredLabels([0.1, 0.2], [0, 2])
        with self.assertRaises(ContractError):
            ScoredLabels([0.1], [0, 1])


class TestRankingMetrics(unittest.TestCase):
    def test_auroc_examples(self):
        self.assertEqual(metrics.auroc(ScoredLabels([0.9, 0.8, 0.2, 0.1], [1, 1, 0, 0])), 1.0)
        self.assertEqual(metrics.auroc(ScoredLabels([0.3] * 4, [1, 0, 1, 0])), 0.5)
        self.assertEqual(metrics.auroc(ScoredLabels([0.8, 0.7, 0.6, 0.5], [1, 0, 1, 0])), 0.75)
        with self.assertRaises(ContractError):
            metrics.auroc(ScoredLabels([0.1, 0.2], [1, 1]))

    def test_auroc_oracle(self):
        logging.info("\t > Metrics: AUROC against pair counting on 1000 random instances ...")
        start = time.time()

        rng = np.random.default_rng(0)
        for _ in range(1000):
            n = int(rng.integers(2, 201))
            labels = rng.integers(0, 2, n)
            labels[:2] = [0, 1]
            # coarse scores produce ties
            scores = np.round(rng.random(n), int(rng.integers(1, 4)))
            scored = ScoredLabels(scores, labels)
            self.assertEqual(metrics.auroc(scored), bruteForceAuroc(scores, labels))

        end = time.time()
        logging.info("\t > Done in {:.2f} s".format(end - start))

    def test_auroc_properties(self):
        rng = np.random.default_rng(1)
        for _ in range(50):
            scores = rng.random(30)
            labels = rng.integers(0, 2, 30)
            labels[:2] = [0, 1]
            base = metrics.auroc(ScoredLabels(scores, labels))
            self.assertEqual(metrics.auroc(ScoredLabels(np.exp(3 * scores) - 7, labels)), base)
            self.assertAlmostEqual(base + metrics.auroc(ScoredLabels(-scores, labels)), 1.0, places=12)

    def test_auprc_examples(self):
        self.assertEqual(metrics.auprc(ScoredLabels([0.9, 0.8, 0.3], [1, 1, 0])), 1.0)
        self.assertEqual(metrics.auprc(ScoredLabels([0.2, 0.9], [1, 0])), 0.5)
        # positives at ranks 1 and 3: (1 + 2/3) / 2
        self.assertAlmostEqual(metrics.auprc(ScoredLabels([0.9, 0.8, 0.7], [1, 0, 1])), 5 / 6, places=15)
        # tied scores enter together
        self.assertEqual(metrics.auprc(ScoredLabels([0.5, 0.5], [1, 0])), 0.5)
        with self.assertRaises(ContractError):
            metrics.auprc(ScoredLabels([0.1, 0.2], [0, 0]))

    def test_auprc_random_scores(self):
        for seed in range(10):
            rng = np.random.default_rng(seed)
            labels = (rng.random(5000) < 0.3).astype(int)
            value = metrics.auprc(ScoredLabels(rng.random(5000), labels))
            self.assertAlmostEqual(value, labels.mean(), delta=0.05)


class TestEvaluate(unittest.TestCase):
    def test_binary(self):
        probs = np.array([[0.2, 0.8], [0.7, 0.3], [0.4, 0.6], [0.9, 0.1]])
        result = metrics.evaluate(probs, np.array([1, 0, 0, 0]))
        self.assertEqual(result.accuracy, 0.75)
        self.assertEqual(result.precision, 0.5)
        self.assertEqual(result.auroc, 1.0)
        self.assertEqual(result.auprc, 1.0)
        for k in metrics.METRICS:
            self.assertTrue(0.0 <= result[k] <= 1.0)

    def test_single_class(self):
        with self.assertLogs(level="WARNING"):
            result = metrics.evaluate(np.array([[0.2, 0.8], [0.3, 0.7]]), np.array([1, 1]))
        self.assertTrue(np.isnan(result.auroc))
        self.assertEqual(result.auprc, 1.0)

    def test_multiclass(self):
        probs = np.array([[0.7, 0.2, 0.1], [0.1, 0.1, 0.8], [0.3, 0.4, 0.3]])
        result = metrics.evaluate(probs, np.array([0, 2, 0]))
        self.assertAlmostEqual(result.accuracy, 2 / 3, places=15)
        self.assertTrue(np.isnan(result.precision))
        self.assertTrue(np.isnan(result.auroc))


if __name__ == "__main__":
    unittest.main()
