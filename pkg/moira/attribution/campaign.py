"""
Feature frequency reports: many models are trained with different seeds, the features
of every run are ranked by integrated-gradient magnitude and the features that land in
the top fraction most often are reported.
"""
import logging
import math
import multiprocessing

import numpy as np
import pandas as pd
import xarray as xr

from .integratedGradients import attributeSamples
from ..optimize.exploration.exploration import _initWorker, defaultWorkers
from ..optimize.training import training
from ..utils.collections import dotdict, merge
from ..utils.exceptions import ConfigError, ContractError


def loadDefaultParams():
    """Default parameters of an attribution campaign.

    :rtype: dotdict
    """
    params = dotdict({})

    params.n_runs = 100  # models trained with seeds base_seed, base_seed + 1, ...
    params.steps = 128  # Riemann steps of integrated gradients
    params.baseline = "zero"  # zero vector in standardized space, i.e. the training mean
    params.positive_class = 1  # attributed class, only its correctly classified test samples are used
    params.top_fraction = 0.10  # features marked per run
    params.report_size = 12  # features listed per modality
    return params


def validate(cfg):
    if int(cfg.n_runs) < 1:
        raise ConfigError("attribution.n_runs", "must be at least 1")
    if int(cfg.steps) < 1:
        raise ConfigError("attribution.steps", "must be at least 1")
    if cfg.baseline != "zero":
        raise ConfigError("attribution.baseline", "only the `zero` baseline is supported")
    if not 0 < cfg.top_fraction <= 1:
        raise ConfigError("attribution.top_fraction", "must be in (0, 1]")
    if int(cfg.report_size) < 1:
        raise ConfigError("attribution.report_size", "must be at least 1")


class FrequencyReport:
    """How often every feature of a modality was among the top features of a run."""

    def __init__(self, modality_name, feature_ids, counts, meanAbsIG, nRuns, report_size=12):
        self.modality_name = modality_name
        self.feature_ids = list(feature_ids)
        self.counts = np.asarray(counts, dtype=int)
        self.meanAbsIG = np.asarray(meanAbsIG, dtype=np.float64)
        self.nRuns = int(nRuns)
        # descending count, ascending feature index
        order = np.lexsort((np.arange(len(self.counts)), -self.counts))
        self.ranked = order[: min(int(report_size), len(order))]

    def __repr__(self):
        return f"FrequencyReport({self.modality_name}, {self.nRuns} runs, top {[self.feature_ids[i] for i in self.ranked[:3]]} ...)"

    def toFrame(self):
        """Report rows with columns modality, feature_id, count, rank, mean_abs_ig."""
        return pd.DataFrame(
            {
                "modality": self.modality_name,
                "feature_id": [self.feature_ids[i] for i in self.ranked],
                "count": self.counts[self.ranked],
                "rank": np.arange(1, len(self.ranked) + 1),
                "mean_abs_ig": self.meanAbsIG[self.ranked],
            },
            columns=["modality", "feature_id", "count", "rank", "mean_abs_ig"],
        )


def runScores(attributions, featureIds, run=0):
    """Per-feature score of one run: mean absolute attribution over its samples (NaN if
    the run has no samples).

    :rtype: xarray.DataArray
    """
    attributions = np.asarray(attributions, dtype=np.float64).reshape(-1, len(featureIds))
    score = np.abs(attributions).mean(axis=0) if len(attributions) else np.full(len(featureIds), np.nan)
    return xr.DataArray(score[None, :], dims=("run", "feature"), coords={"run": [run], "feature": list(featureIds)})


def countTopFeatures(scores, top_fraction=0.10, report_size=12, modality_name=None):
    """Counts, over runs, how often every feature is among the top ceil(top_fraction * features)
    of its run. Runs without scores mark nothing.

    :param scores: Per-run feature scores with dims (run, feature)
    :type scores: xarray.DataArray
    :rtype: FrequencyReport
    """
    nRuns, nFeatures = scores.sizes["run"], scores.sizes["feature"]
    if nRuns == 0:
        raise ContractError("Frequency counting needs at least one run.")
    # round first so that e.g. 0.1 * 200 does not become 21
    nTop = min(int(math.ceil(round(top_fraction * nFeatures, 9))), nFeatures)
    values = scores.values
    counts = np.zeros(nFeatures, dtype=int)
    for r in range(nRuns):
        row = values[r]
        if np.all(np.isnan(row)):
            logging.warning(f"{modality_name}: run {int(scores.run[r])} has no attributed samples.")
            continue
        row = np.where(np.isnan(row), -np.inf, row)
        top = np.lexsort((np.arange(nFeatures), -row))[:nTop]
        counts[top] += 1
    with np.errstate(invalid="ignore"):
        meanAbsIG = np.nan_to_num(scores.mean(dim="run", skipna=True).values, nan=0.0)
    return FrequencyReport(modality_name, list(scores.feature.values), counts, meanAbsIG, nRuns, report_size)


def rank_and_count(runAttributions, featureIds, top_fraction=0.10, report_size=12, modality_name=None):
    """Frequency report from the attributions of several runs.

    :param runAttributions: Per run, attributions (samples x features) of one modality
    :type runAttributions: list[numpy.ndarray]
    :param featureIds: Feature ids of the modality
    :type featureIds: list[str]
    :raises ContractError: If there are no runs
    :rtype: FrequencyReport
    """
    if len(runAttributions) == 0:
        raise ContractError("rank_and_count needs at least one run.")
    scores = xr.concat([runScores(a, featureIds, run=i) for i, a in enumerate(runAttributions)], dim="run")
    return countTopFeatures(scores, top_fraction, report_size, modality_name)


def attributeRun(task):
    """Trains the model of one seed and attributes its eligible test samples.

    :return: seed, per-modality scores (xarray), per-modality sample counts and completeness gaps
    :rtype: dotdict
    """
    dataset, modelCfg, trainCfg, cfg, seed = task
    result = training.runSingle(dataset, modelCfg, trainCfg, seed=seed, keepModel=True)
    model, test = result.model, result.test
    predicted = np.argmax(model.predictProba(test), axis=1)
    eligible = (test.labels == cfg.positive_class) & (predicted == test.labels)

    out = dotdict({"seed": seed, "scores": {}, "n_samples": {}, "gaps": {}, "metrics": result.metrics})
    for j, m in enumerate(test.modalities):
        samples = np.flatnonzero(eligible & test.presence[:, j])
        attributions, gaps = attributeSamples(model, test, samples, m, cfg.positive_class, cfg.steps)
        out.scores[m] = runScores(attributions, test.feature_ids[m], run=seed)
        out.n_samples[m] = len(samples)
        out.gaps[m] = gaps
    logging.info(f"Attribution run {seed}: " + ", ".join(f"{m} {n} samples" for m, n in out.n_samples.items()))
    return out


class AttributionCampaign:
    """
    Repeated training and attribution over seeds, aggregated into one FrequencyReport
    per modality.
    """

    def __init__(self, dataset, modelCfg=None, trainCfg=None, attributionCfg=None, baseSeed=0, parallel=1):
        self.dataset = dataset
        self.modelCfg = modelCfg or {}
        self.trainCfg = training.resolveConfig(trainCfg)
        self.cfg = merge(loadDefaultParams(), attributionCfg or {})
        validate(self.cfg)
        if self.cfg.positive_class >= dataset.n_classes:
            raise ConfigError("attribution.positive_class", f"dataset has {dataset.n_classes} classes")
        self.seeds = list(range(int(baseSeed), int(baseSeed) + int(self.cfg.n_runs)))
        self.parallel = defaultWorkers() if not parallel else min(int(parallel), len(self.seeds))

        self.runs = None
        self.reports = None

    def run(self):
        tasks = [(self.dataset, self.modelCfg, self.trainCfg, self.cfg, seed) for seed in self.seeds]
        logging.info(f"Attribution campaign: {len(tasks)} runs with {self.parallel} worker(s).")
        runs = []
        if self.parallel > 1:
            with multiprocessing.Pool(
                self.parallel, initializer=_initWorker, initargs=(logging.getLogger().getEffectiveLevel(),)
            ) as pool:
                iterator = pool.imap(attributeRun, tasks)
                for seed in training.progressBar(self.seeds, enabled=self.trainCfg.progress, desc="attribution"):
                    runs.append(self._next(iterator, seed))
        else:
            iterator = map(attributeRun, tasks)
            for seed in training.progressBar(self.seeds, enabled=self.trainCfg.progress, desc="attribution"):
                runs.append(self._next(iterator, seed))
        self.runs = sorted(runs, key=lambda r: r.seed)

        self.reports = dotdict({})
        for m in self.runs[0].scores:
            scores = xr.concat([r.scores[m] for r in self.runs], dim="run")
            self.reports[m] = countTopFeatures(scores, self.cfg.top_fraction, self.cfg.report_size, m)
        return self.reports

    @staticmethod
    def _next(iterator, seed):
        try:
            return next(iterator)
        except Exception as e:
            logging.error(f"Attribution run with seed {seed} failed, aborting: {e}")
            raise

    def gapSummary(self):
        """Largest and mean completeness gap per modality over all attributed samples."""
        summary = {}
        for m in self.reports:
            gaps = np.concatenate([r.gaps[m] for r in self.runs])
            summary[m] = {
                "n": int(len(gaps)),
                "max": float(gaps.max()) if len(gaps) else 0.0,
                "mean": float(gaps.mean()) if len(gaps) else 0.0,
            }
        return summary

    def manifest(self):
        return {
            "seeds": self.seeds,
            "steps": self.cfg.steps,
            "baseline": "zero vector in standardized feature space (training mean)",
            "target_class_rule": f"logit of class {self.cfg.positive_class}, correctly classified test samples of that class",
            "top_fraction": self.cfg.top_fraction,
            "report_size": self.cfg.report_size,
            "samples_per_run": {m: [r.n_samples[m] for r in self.runs] for m in self.reports},
            "completeness_gaps": self.gapSummary(),
        }


def attribution_campaign(dataset, modelCfg=None, trainCfg=None, attributionCfg=None, n_runs=None, base_seed=0, parallel=1):
    """Runs an attribution campaign, see `AttributionCampaign`.

    :return: FrequencyReport per modality
    :rtype: dotdict
    """
    attributionCfg = dict(attributionCfg or {})
    if n_runs is not None:
        attributionCfg["n_runs"] = n_runs
    campaign = AttributionCampaign(dataset, modelCfg, trainCfg, attributionCfg, baseSeed=base_seed, parallel=parallel)
    return campaign.run()
