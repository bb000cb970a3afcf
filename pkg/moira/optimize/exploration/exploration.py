import logging
import multiprocessing

import numpy as np
import pandas as pd
import psutil

from . import explorationUtils as eu
from ..training import training
from ...utils.collections import dotdict, merge
from ...utils.exceptions import ConfigError
from ...utils.metrics import METRICS


def _initWorker(level):
    logging.getLogger().setLevel(level)


def _runSeed(task):
    dataset, modelCfg, trainCfg, seed, checkpointDir = task
    return training.runSingle(dataset, modelCfg, trainCfg, seed=seed, checkpointDir=checkpointDir)


def defaultWorkers():
    """Number of physical cores (at least 1)."""
    return max(psutil.cpu_count(logical=False) or 1, 1)


class RepeatedRuns:
    """
    Repeats a training run for a range of seeds. The split is fixed by the
    `split_seed` of the training configuration, the run seed changes initialization
    and dropout only.
    """

    def __init__(
        self, dataset, modelCfg=None, trainCfg=None, nRuns=30, baseSeed=0, parallel=1, seeds=None, checkpointDir=None,
    ):
        """
        :param dataset: Dataset to train on
        :type dataset: MaskedDataset
        :param modelCfg: Architecture overrides, defaults to None
        :type modelCfg: dict, optional
        :param trainCfg: TrainConfig overrides, defaults to None
        :type trainCfg: dict, optional
        :param nRuns: Number of runs with seeds baseSeed, ..., baseSeed + nRuns - 1, defaults to 30
        :type nRuns: int, optional
        :param baseSeed: First seed, defaults to 0
        :type baseSeed: int, optional
        :param parallel: Number of worker processes, None uses one per physical core, defaults to 1
        :type parallel: int, optional
        :param seeds: Explicit list of seeds, replaces nRuns and baseSeed, defaults to None
        :type seeds: list[int], optional
        :param checkpointDir: Directory for the checkpoints of all runs, defaults to None
        :type checkpointDir: str, optional
        """
        if seeds is None:
            if int(nRuns) < 1:
                raise ConfigError("runs", "at least one run is required")
            seeds = list(range(int(baseSeed), int(baseSeed) + int(nRuns)))
        assert len(seeds) > 0, "No seeds to run."
        self.seeds = [int(s) for s in seeds]

        self.dataset = dataset
        self.modelCfg = modelCfg or {}
        # resolve once so that invalid configurations fail before any work is done
        self.trainCfg = training.resolveConfig(trainCfg)
        self.parallel = defaultWorkers() if not parallel else min(int(parallel), len(self.seeds))
        self.checkpointDir = checkpointDir

        self.results = None
        self.dfResults = None
        self.aggregate = None

    def run(self):
        """Executes all runs. Results are sorted by seed, independent of scheduling.

        :return: Runs sorted by seed
        :rtype: list[RunResult]
        """
        tasks = [(self.dataset, self.modelCfg, self.trainCfg, seed, self.checkpointDir) for seed in self.seeds]
        logging.info(f"Starting {len(tasks)} runs with {self.parallel} worker(s).")
        results = []
        if self.parallel > 1:
            with multiprocessing.Pool(
                self.parallel, initializer=_initWorker, initargs=(logging.getLogger().getEffectiveLevel(),)
            ) as pool:
                self._collect(pool.imap(_runSeed, tasks), results)
        else:
            self._collect(map(_runSeed, tasks), results)

        self.results = sorted(results, key=lambda r: r.seed)
        self.dfResults = eu.resultsTable(self.results)
        self.aggregate = eu.aggregateResults(self.results)
        logging.info("All runs done: " + ", ".join(f"{k} {v.mean:.3f}+-{v.std:.3f}" for k, v in self.aggregate.items()))
        return self.results

    def _collect(self, iterator, results):
        # imap and map yield in task order, so the i-th result belongs to the i-th seed
        iterator = iter(iterator)
        for seed in training.progressBar(self.seeds, enabled=self.trainCfg.progress, desc="runs"):
            try:
                results.append(next(iterator))
            except Exception as e:
                logging.error(f"Run with seed {seed} failed, aborting: {e}")
                raise


def run_repeated(dataset, modelCfg=None, trainCfg=None, n_runs=30, base_seed=0, parallel=1, seeds=None):
    """Runs seeds base_seed .. base_seed + n_runs - 1 and aggregates their metrics.

    :return: Mean and std per metric, and the runs sorted by seed
    :rtype: (dotdict, list[RunResult])
    """
    search = RepeatedRuns(dataset, modelCfg, trainCfg, nRuns=n_runs, baseSeed=base_seed, parallel=parallel, seeds=seeds)
    results = search.run()
    return search.aggregate, results


def ablationConditions(modalities, trimodal=None):
    """Conditions of the ablation table as (name, TrainConfig overrides) pairs: the
    full model, the trimodal union and intersection, every single modality removed and
    the auxiliary and contrastive losses removed alone and together.

    :param modalities: Modalities of the dataset
    :type modalities: list[str]
    :param trimodal: Modalities of the trimodal rows, defaults to the first three
    :type trimodal: list[str], optional
    :rtype: list[tuple[str, dict]]
    """
    modalities = list(modalities)
    conditions = [("full", {})]

    if trimodal is None:
        trimodal = modalities[:3]
    unknown = [m for m in trimodal if m not in modalities]
    if unknown:
        raise ConfigError("trimodal", f"unknown modalities {unknown}, dataset has {modalities}")
    if len(modalities) >= 3 and len(trimodal) == 3 and len(set(trimodal)) == 3:
        label = "+".join(trimodal)
        conditions.append((f"union({label})", {"modalities": list(trimodal), "intersection": False}))
        conditions.append((f"intersection({label})", {"modalities": list(trimodal), "intersection": True}))
    else:
        logging.warning("Trimodal rows need three distinct modalities out of at least three, skipping them.")
        # a row without overrides is a note, it is reported but not run
        conditions.append((f"note: trimodal rows omitted ({len(modalities)} modalities)", None))

    if len(modalities) > 1:
        for m in modalities:
            conditions.append((f"--{m}", {"silenced_modalities": [m]}))
    else:
        logging.warning("A single modality cannot be removed, skipping the modality rows.")

    conditions.append(("--aux", {"objective": {"enable_aux": False}}))
    conditions.append(("--CLIP", {"objective": {"enable_clip": False}}))
    conditions.append(("--(aux+CLIP)", {"objective": {"enable_aux": False, "enable_clip": False}}))
    return conditions


class AblationSuite:
    """
    Repeated runs for every ablation condition, collected into one table with a row per
    condition and the mean of every metric as columns.
    """

    def __init__(self, dataset, modelCfg=None, trainCfg=None, nRuns=30, baseSeed=0, parallel=1, trimodal=None):
        self.dataset = dataset
        self.modelCfg = modelCfg or {}
        self.baseCfg = training.resolveConfig(trainCfg)
        self.nRuns = nRuns
        self.baseSeed = baseSeed
        self.parallel = parallel
        if trimodal is None:
            trimodal = self.baseCfg.trimodal
        self.conditions = ablationConditions(dataset.modalities, trimodal)

        self.searches = dotdict({})
        self.dfResults = None
        self.dfStd = None
        self.sampleCounts = dotdict({})

    def conditionConfig(self, overrides):
        return merge(self.baseCfg, overrides)

    def run(self):
        """Runs all conditions.

        :return: Table with columns condition, accuracy, precision, auroc, auprc
        :rtype: pandas.DataFrame
        """
        means, stds = [], []
        for name, overrides in self.conditions:
            if overrides is None:
                means.append(dict(condition=name, **{k: np.nan for k in METRICS}))
                stds.append(dict(condition=name, **{k: np.nan for k in METRICS}))
                continue
            logging.info(f"Ablation condition `{name}`")
            search = RepeatedRuns(
                self.dataset,
                self.modelCfg,
                self.conditionConfig(overrides),
                nRuns=self.nRuns,
                baseSeed=self.baseSeed,
                parallel=self.parallel,
            )
            search.run()
            self.searches[name] = search
            self.sampleCounts[name] = dotdict({"train": search.results[0].nTrain, "test": search.results[0].nTest})
            means.append(dict(condition=name, **{k: search.aggregate[k].mean for k in METRICS}))
            stds.append(dict(condition=name, **{k: search.aggregate[k].std for k in METRICS}))
        self.dfResults = pd.DataFrame(means, columns=["condition"] + METRICS)
        self.dfStd = pd.DataFrame(stds, columns=["condition"] + METRICS)
        return self.dfResults


def ablation_suite(dataset, modelCfg=None, trainCfg=None, n_runs=30, base_seed=0, parallel=1, trimodal=None):
    """Runs the ablation table, see `AblationSuite`."""
    suite = AblationSuite(
        dataset, modelCfg, trainCfg, nRuns=n_runs, baseSeed=base_seed, parallel=parallel, trimodal=trimodal
    )
    return suite.run()
