import copy
import logging
import os
import sys
import time

import numpy as np
import tqdm

from . import loadDefaultParams as dp
from ...models.moira import MOIRAModel
from ...models.moira import loadDefaultParams as modelDefaults
from ...models.moira import objective
from ...models.moira.model import decoderWeights, encoderWeights
from ...numerics import AdamState, Tape, adam_step
from ...utils import functions as func
from ...utils import metrics
from ...utils.collections import dotdict, merge, toJsonable
from ...utils.exceptions import ConfigError, ContractError, NumericalError
from ...utils.seeding import rngFor


def progressBar(iterable, enabled=True, **kwargs):
    """tqdm bar that stays quiet unless stderr is a terminal and info logs are shown."""
    disable = not enabled or not sys.stderr.isatty() or logging.getLogger().getEffectiveLevel() > logging.INFO
    return tqdm.tqdm(iterable, disable=disable, **kwargs)


def validate(cfg):
    """Raises a ConfigError naming the first invalid field of a TrainConfig."""
    if cfg.lr < 0:
        raise ConfigError("lr", "must be non-negative")
    if cfg.weight_decay < 0:
        raise ConfigError("weight_decay", "must be non-negative")
    if int(cfg.epochs) < 0:
        raise ConfigError("epochs", "must be non-negative")
    if int(cfg.pretrain_patience) < 1:
        raise ConfigError("pretrain_patience", "must be at least 1")
    if int(cfg.pretrain_max_epochs) < 1:
        raise ConfigError("pretrain_max_epochs", "must be at least 1")
    if not 0 < cfg.pretrain_val_fraction < 1:
        raise ConfigError("pretrain_val_fraction", "must be in (0, 1)")
    if not 0 < cfg.test_fraction < 1:
        raise ConfigError("test_fraction", "must be in (0, 1)")
    if cfg.batch_mode != "full":
        raise ConfigError("batch_mode", "only full-batch training is supported")
    if cfg.top_k is not None and int(cfg.top_k) < 1:
        raise ConfigError("top_k", "must be at least 1 or None")
    objective.validate(cfg.objective)


def resolveConfig(trainCfg=None, seed=None):
    cfg = merge(dp.loadDefaultParams(), trainCfg or {})
    if seed is not None:
        cfg.seed = int(seed)
    validate(cfg)
    return cfg


def modelConfigFor(data, modelCfg=None, seed=0):
    """Model configuration for a dataset: input dims and classes from the data,
    architecture from `modelCfg` overrides.
    """
    params = modelDefaults.loadDefaultParams(inputDims=data.inputDims, n_classes=data.n_classes, seed=seed)
    overrides = {k: v for k, v in (modelCfg or {}).items() if k not in ("modalities", "input_dims", "n_classes", "seed")}
    return merge(params, overrides)


class RunResult:
    """Outcome of one training run."""

    def __init__(self, seed, metrics, trainMetrics=None, lossTrace=None, pretrainTrace=None, config=None):
        self.seed = seed
        self.metrics = dotdict(metrics)
        self.trainMetrics = dotdict(trainMetrics or {})
        self.lossTrace = dotdict(lossTrace or {})
        self.pretrainTrace = dotdict(pretrainTrace or {})
        self.config = config
        self.checkpoint = None
        self.nTrain = None
        self.nTest = None
        self.duration = None
        # only kept when requested, see `runSingle(keepModel=True)`
        self.model = None
        self.train = None
        self.test = None

    def __repr__(self):
        shown = ", ".join(f"{k}={v:.3f}" for k, v in self.metrics.items())
        return f"RunResult(seed={self.seed}, {shown})"

    def toDict(self):
        return toJsonable(
            {
                "seed": self.seed,
                "metrics": self.metrics,
                "train_metrics": self.trainMetrics,
                "loss_trace": self.lossTrace,
                "pretrain_trace": self.pretrainTrace,
                "checkpoint": self.checkpoint,
                "n_train": self.nTrain,
                "n_test": self.nTest,
            }
        )


def _reconstruction(model, m, weights, X, withGrad=False):
    tape = Tape()
    W = {n: tape.leaf(w) for n, w in weights.items()}
    z = model.encodeTape(tape, W, m, X, training=False)
    loss = objective.loss_recon(model.decodeTape(tape, W, m, z), X)
    if not withGrad:
        return loss.value[0, 0], None
    tape.backward(loss)
    return loss.value[0, 0], {n: tape.grad(W[n]) for n in W}


def pretrain(model, data, cfg):
    """Reconstruction pretraining of every modality's encoder and decoder.

    Each modality is trained on its own: the training samples that have it are split
    90/10 (seeded by the modality name), the reconstruction MSE is minimized with Adam
    and training stops once the validation MSE has not improved by more than
    `pretrain_tolerance` for `pretrain_patience` epochs. The weights of the best
    validation epoch are restored.

    :param model: Model whose encoder and decoder weights are updated in place
    :type model: MOIRAModel
    :param data: Training split
    :type data: MaskedDataset
    :param cfg: TrainConfig
    :type cfg: dotdict
    :return: Per modality: skipped, stop_epoch, best_epoch, initial_val_mse, best_val_mse, val_trace
    :rtype: dotdict
    """
    trace = dotdict({})
    for m in model.modalities:
        rows = data.presentRows(m)
        if len(rows) < int(cfg.pretrain_min_samples):
            logging.warning(f"Pretraining: {m} has only {len(rows)} samples, keeping its random initialization.")
            trace[m] = dotdict({"skipped": True})
            continue

        X = data.matrices[m][rows]
        rng = rngFor(cfg.seed, "pretrain", m)
        order = rng.permutation(len(rows))
        nVal = min(max(int(np.floor(len(rows) * cfg.pretrain_val_fraction + 0.5)), 1), len(rows) - 1)
        Xval, Xtrain = X[order[:nVal]], X[order[nVal:]]

        names = encoderWeights(m) + decoderWeights(m)
        weights = {n: model.weights[n].copy() for n in names}
        best, _ = _reconstruction(model, m, weights, Xval)
        initial = best
        bestWeights, bestEpoch, wait, epoch = copy.deepcopy(weights), 0, 0, 0
        valTrace = [best]
        state = AdamState()

        for epoch in range(1, int(cfg.pretrain_max_epochs) + 1):
            _, grads = _reconstruction(model, m, weights, Xtrain, withGrad=True)
            weights, state = adam_step(
                weights, grads, state, cfg.lr, cfg.weight_decay, decoupled=cfg.decoupled_weight_decay
            )
            val, _ = _reconstruction(model, m, weights, Xval)
            valTrace.append(val)
            if val < best - cfg.pretrain_tolerance:
                best, bestWeights, bestEpoch, wait = val, copy.deepcopy(weights), epoch, 0
            else:
                wait += 1
                if wait >= int(cfg.pretrain_patience):
                    break

        model.setWeights(bestWeights)
        logging.info(f"Pretraining {m}: stopped at epoch {epoch}, best validation MSE {best:.4g} (epoch {bestEpoch}).")
        trace[m] = dotdict(
            {
                "skipped": False,
                "stop_epoch": epoch,
                "best_epoch": bestEpoch,
                "initial_val_mse": initial,
                "best_val_mse": best,
                "val_trace": valTrace,
            }
        )
    return trace


def dropoutStreams(seed, modalities):
    rngs = {m: rngFor(seed, "dropout", m) for m in modalities}
    rngs["predictor"] = rngFor(seed, "dropout", "predictor")
    return rngs


def train(model, data, cfg):
    """Full-batch supervised training for `cfg.epochs` epochs.

    :param model: Model to train in place
    :type model: MOIRAModel
    :param data: Training split
    :type data: MaskedDataset
    :param cfg: TrainConfig
    :type cfg: dotdict
    :raises ContractError: If the training set is empty
    :raises NumericalError: If the loss becomes non-finite
    :return: Per-epoch traces of the loss terms (before each update)
    :rtype: dotdict
    """
    if data.nSamples == 0:
        raise ContractError("Cannot train on an empty training set.")
    model.checkModalities(data)
    names = [n for n in model.weights if not n.startswith("dec.")]
    rngs = dropoutStreams(cfg.seed, model.modalities)
    state = AdamState()
    trace = dotdict({k: [] for k in ["pred", "aux", "clip", "total"]})

    for epoch in progressBar(range(int(cfg.epochs)), enabled=cfg.progress, desc="training", leave=False):
        tape = Tape()
        W = model.bind(tape, names)
        try:
            out = model.forwardTape(tape, W, data.matrices, data.presence, training=True, rngs=rngs)
            losses = objective.computeLosses(tape, out, data.labels, data.presence, model.modalities, cfg.objective)
        except NumericalError:
            logging.error(f"Non-finite values in the forward pass at epoch {epoch}!")
            raise
        for k in trace:
            trace[k].append(float(losses[k].value[0, 0]))

        tape.backward(losses.total)
        grads = {n: tape.grad(W[n]) for n in names}
        updated, state = adam_step(
            {n: model.weights[n] for n in names},
            grads,
            state,
            cfg.lr,
            cfg.weight_decay,
            decoupled=cfg.decoupled_weight_decay,
        )
        if not all(np.all(np.isfinite(w)) for w in updated.values()):
            logging.error(f"Non-finite weights after epoch {epoch}!")
            raise NumericalError(f"Weights became non-finite at epoch {epoch}.")
        model.weights.update(updated)

    if trace.total:
        logging.debug(f"Training: total loss {trace.total[0]:.4f} -> {trace.total[-1]:.4f}")
    return trace


def evaluate(model, data):
    """Metrics of the model's evaluation-mode predictions on `data`."""
    return metrics.evaluate(model.predictProba(data), data.labels)


def prepareSplits(dataset, cfg):
    """Split, modality restriction and silencing, then feature selection fitted on
    the training split.
    """
    train_, test_ = func.split(dataset, cfg.test_fraction, cfg.split_seed, cfg.stratified)
    if cfg.modalities:
        train_ = train_.keepModalities(cfg.modalities, intersection=cfg.intersection)
        test_ = test_.keepModalities(cfg.modalities)
    elif cfg.intersection:
        train_ = train_.keepModalities(train_.modalities, intersection=True)
    if cfg.silenced_modalities:
        train_ = train_.silence(cfg.silenced_modalities)
        test_ = test_.silence(cfg.silenced_modalities)
    if train_.nSamples == 0:
        raise ContractError("The training split is empty.")
    return func.preprocess(train_, test_, cfg.top_k)


def runSingle(dataset, modelCfg=None, trainCfg=None, seed=None, checkpointDir=None, keepModel=False):
    """One complete run: split with the fixed split seed, select and standardize
    features, initialize, pretrain, train and evaluate.

    :param dataset: Full dataset
    :type dataset: MaskedDataset
    :param modelCfg: Architecture overrides, see `moira.models.moira.loadDefaultParams`
    :type modelCfg: dict, optional
    :param trainCfg: TrainConfig overrides
    :type trainCfg: dict, optional
    :param seed: Seed of this run, overrides `trainCfg.seed`
    :type seed: int, optional
    :param checkpointDir: Directory to save the trained model to, defaults to None
    :type checkpointDir: str, optional
    :param keepModel: Attach model and processed splits to the result, defaults to False
    :type keepModel: bool, optional
    :rtype: RunResult
    """
    start = time.time()
    cfg = resolveConfig(trainCfg, seed)
    train_, test_, _, _ = prepareSplits(dataset, cfg)

    model = MOIRAModel(params=modelConfigFor(train_, modelCfg, cfg.seed))
    pretrainTrace = pretrain(model, train_, cfg) if cfg.pretrain else dotdict({})
    lossTrace = train(model, train_, cfg)

    result = RunResult(
        cfg.seed,
        evaluate(model, test_),
        trainMetrics=evaluate(model, train_),
        lossTrace=lossTrace,
        pretrainTrace=pretrainTrace,
        config=dotdict({"train": cfg, "model": model.params}),
    )
    result.nTrain, result.nTest = train_.nSamples, test_.nSamples
    if checkpointDir is not None:
        os.makedirs(checkpointDir, exist_ok=True)
        result.checkpoint = os.path.join(checkpointDir, f"model_seed{cfg.seed}.json")
        model.save(result.checkpoint, provenance={"seed": cfg.seed, "split_seed": cfg.split_seed})
    if keepModel:
        result.model, result.train, result.test = model, train_, test_
    result.duration = time.time() - start
    logging.info(f"Run with seed {cfg.seed} done in {result.duration:.2f} s: {result}")
    return result
