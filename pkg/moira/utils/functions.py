import logging

import numpy as np

from .exceptions import ContractError, DimensionError, EmptySupportError
from .seeding import rngFor

# relative tolerance under which a sum of squares counts as zero
ZERO_VARIANCE_TOL = 1e-12


def anova_f(matrix, labels):
    """One-way ANOVA F-score of every feature (column) of `matrix` with respect to the
    class labels. Features without any variance score 0, features that are constant
    within every class but differ between classes score `np.inf`.

    :param matrix: Samples x features matrix
    :type matrix: numpy.ndarray
    :param labels: Class index per sample
    :type labels: numpy.ndarray
    :raises ContractError: If fewer than 2 classes are present or N <= number of classes
    :return: F-score per feature
    :rtype: numpy.ndarray
    """
    X = np.asarray(matrix, dtype=np.float64)
    labels = np.asarray(labels)
    if X.ndim != 2 or X.shape[0] != len(labels):
        raise DimensionError("anova_f needs one label per row", X.shape, labels.shape)
    classes = np.unique(labels)
    N, G = X.shape[0], len(classes)
    if G < 2:
        raise ContractError(f"ANOVA needs at least 2 classes, got {G}.")
    if N <= G:
        raise ContractError(f"ANOVA needs more samples ({N}) than classes ({G}).")

    grandMean = X.mean(axis=0)
    ssb = np.zeros(X.shape[1])
    ssw = np.zeros(X.shape[1])
    for c in classes:
        Xc = X[labels == c]
        classMean = Xc.mean(axis=0)
        ssb += len(Xc) * (classMean - grandMean) ** 2
        ssw += ((Xc - classMean) ** 2).sum(axis=0)

    scale = (X ** 2).sum(axis=0) + 1.0
    withinZero = ssw <= ZERO_VARIANCE_TOL * scale
    betweenZero = ssb <= ZERO_VARIANCE_TOL * scale

    F = np.zeros(X.shape[1])
    regular = ~withinZero
    F[regular] = (ssb[regular] / (G - 1)) / (ssw[regular] / (N - G))
    F[withinZero & ~betweenZero] = np.inf
    F[withinZero & betweenZero] = 0.0
    return F


class FeatureSelection:
    """Top-k features of one modality."""

    def __init__(self, modality_name, scores, selected):
        self.modality_name = modality_name
        self.scores = np.asarray(scores, dtype=np.float64)
        self.selected = np.asarray(selected, dtype=int)

    def __repr__(self):
        return f"FeatureSelection({self.modality_name}, {len(self.selected)} of {len(self.scores)})"

    def ranks(self):
        """1-based rank of every feature in descending-score order."""
        order = _rankOrder(self.scores)
        ranks = np.empty(len(order), dtype=int)
        ranks[order] = np.arange(1, len(order) + 1)
        return ranks


def _rankOrder(scores):
    # primary key: descending score (inf first), secondary: ascending index
    scores = np.asarray(scores, dtype=np.float64)
    return np.lexsort((np.arange(len(scores)), -scores))


def select_top_k(scores, k, modality_name=None):
    """Indices of the `k` highest scores, ties broken by ascending index.

    :param scores: Score per feature
    :type scores: numpy.ndarray
    :param k: Number of features to keep, truncated at the number of features
    :type k: int
    :rtype: FeatureSelection
    """
    assert k >= 1, "k must be at least 1."
    order = _rankOrder(scores)
    return FeatureSelection(modality_name, scores, order[: min(int(k), len(order))])


class StandardizeStats:
    def __init__(self, mean, std):
        self.mean = np.asarray(mean, dtype=np.float64)
        self.std = np.asarray(std, dtype=np.float64)

    def __len__(self):
        return len(self.mean)


def standardize_fit(matrix, presence=None):
    """Per-feature mean and (population) standard deviation over the rows where
    `presence` is true.

    :param matrix: Samples x features matrix
    :type matrix: numpy.ndarray
    :param presence: Boolean row mask, defaults to all rows
    :type presence: numpy.ndarray, optional
    :rtype: StandardizeStats
    """
    X = np.asarray(matrix, dtype=np.float64)
    if presence is not None:
        X = X[np.asarray(presence, dtype=bool)]
    if X.shape[0] == 0:
        raise EmptySupportError("Cannot fit standardization without any present sample.")
    return StandardizeStats(X.mean(axis=0), X.std(axis=0))


def standardize_apply(matrix, stats):
    """z-scores `matrix` with fitted statistics; zero-variance features map to 0."""
    X = np.asarray(matrix, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != len(stats):
        raise DimensionError("Standardization fitted on a different feature count", X.shape, (len(stats),))
    constant = stats.std <= ZERO_VARIANCE_TOL * (np.abs(stats.mean) + 1.0)
    safe = np.where(constant, 1.0, stats.std)
    Z = (X - stats.mean) / safe
    Z[:, constant] = 0.0
    return Z


def _testCount(n, fraction):
    return int(np.floor(n * fraction + 0.5))


def split(dataset, test_fraction, seed, stratified=True):
    """Seeded train/test split of a MaskedDataset.

    With `stratified`, every class contributes round(n_c * test_fraction) test samples,
    clamped so that each class keeps at least one train and one test sample.

    :param dataset: Dataset to split
    :type dataset: MaskedDataset
    :param test_fraction: Fraction of samples in the test set, in (0, 1)
    :type test_fraction: float
    :param seed: Split seed
    :type seed: int
    :param stratified: Split every class separately, defaults to True
    :type stratified: bool, optional
    :raises ContractError: If a class has fewer than 2 samples under stratification
    :return: Train and test datasets
    :rtype: tuple[MaskedDataset, MaskedDataset]
    """
    if not 0 < test_fraction < 1:
        raise ContractError(f"test_fraction must be in (0, 1), got {test_fraction}.")
    rng = rngFor(seed, "split")
    N = dataset.nSamples
    if stratified:
        testIdx = []
        for c in range(dataset.n_classes):
            members = np.flatnonzero(dataset.labels == c)
            if len(members) == 0:
                continue
            if len(members) < 2:
                raise ContractError(f"Class {c} has {len(members)} sample, stratified split needs at least 2.")
            nTest = min(max(_testCount(len(members), test_fraction), 1), len(members) - 1)
            testIdx.append(rng.permutation(members)[:nTest])
        testIdx = np.concatenate(testIdx)
    else:
        if N < 2:
            raise ContractError("Cannot split fewer than 2 samples.")
        nTest = min(max(_testCount(N, test_fraction), 1), N - 1)
        testIdx = rng.permutation(N)[:nTest]

    isTest = np.zeros(N, dtype=bool)
    isTest[testIdx] = True
    train, test = dataset.subset(np.flatnonzero(~isTest)), dataset.subset(np.flatnonzero(isTest))
    logging.debug(f"Split {N} samples into {train.nSamples} train / {test.nSamples} test (seed {seed}).")
    return train, test


def preprocess(train, test, top_k=200):
    """Feature selection and standardization fitted on the training split only.

    Per modality the ANOVA F-scores are computed on the training samples that have the
    modality, the `top_k` features are kept and z-scored with statistics of the same
    samples. The test split reuses the training selection and statistics. A modality that
    no training sample has is silenced in both splits with a warning.

    :param train: Training split
    :type train: MaskedDataset
    :param test: Test split
    :type test: MaskedDataset
    :param top_k: Features kept per modality, None keeps all
    :type top_k: int, optional
    :return: Processed train and test sets, selections and standardization stats per modality
    :rtype: tuple
    """
    empty = [m for m in train.modalities if len(train.presentRows(m)) == 0]
    if empty:
        logging.warning(f"No training sample has {empty}, silencing them in both splits.")
        train, test = train.silence(empty), test.silence(empty)

    selections, stats = {}, {}
    for m in train.modalities:
        rows = train.presentRows(m)
        X = train.matrices[m][rows]
        y = train.labels[rows]
        nFeatures = X.shape[1]
        try:
            scores = anova_f(X, y)
        except ContractError as e:
            logging.warning(f"Feature scores of {m} fall back to zero: {e}")
            scores = np.zeros(nFeatures)
        sel = select_top_k(scores, top_k if top_k else nFeatures, modality_name=m)
        selections[m] = sel

        featureIds = [train.feature_ids[m][j] for j in sel.selected]
        st = standardize_fit(X[:, sel.selected])
        stats[m] = st
        train = train.replaceModality(m, featureIds, standardize_apply(train.matrices[m][:, sel.selected], st))
        test = test.replaceModality(m, featureIds, standardize_apply(test.matrices[m][:, sel.selected], st))
        logging.debug(f"{m}: kept {len(sel.selected)} of {nFeatures} features.")
    return train, test, selections, stats
