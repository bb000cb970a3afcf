"""
Loss terms of the MOIRA objective. Every loss accepts either tape nodes (and then
returns a 1x1 node that can be differentiated) or plain arrays (and then returns a
float). All batch reductions are means.
"""
import itertools

import numpy as np

from ...numerics import Tape, Var
from ...numerics.tape import COSINE_EPS, LOG_CLAMP
from ...utils.collections import dotdict
from ...utils.exceptions import ConfigError, ContractError, DimensionError


def loadDefaultParams():
    """Default parameters of the training objective.

    :return: ObjectiveConfig
    :rtype: dotdict
    """
    params = dotdict({})

    params.tau = 0.07  # temperature of the contrastive alignment loss
    params.enable_aux = True  # per-modality auxiliary cross-entropy
    params.enable_clip = True  # cross-modal contrastive alignment

    # coefficients of the loss terms in the total objective
    params.lambda_pred = 1.0
    params.lambda_aux = 1.0
    params.lambda_clip = 1.0

    params.log_clamp = LOG_CLAMP  # lower clamp of probabilities inside the log
    params.cosine_eps = COSINE_EPS  # lower bound of the cosine denominator
    return params


def validate(cfg):
    if not cfg.tau > 0:
        raise ConfigError("objective.tau", "must be positive")
    for field in ["lambda_pred", "lambda_aux", "lambda_clip"]:
        if not np.isfinite(cfg[field]):
            raise ConfigError(f"objective.{field}", "must be finite")


def _session(*args):
    """Tape of the first node among `args` (dicts are searched as well); a fresh tape
    and `plain=True` if there is none.
    """
    for a in args:
        candidates = a.values() if isinstance(a, dict) else [a]
        for c in candidates:
            if isinstance(c, Var):
                return c.tape, False
    return Tape(), True


def _finish(node, plain):
    return float(node.value[0, 0]) if plain else node


def _zero(tape):
    return tape.leaf(np.zeros((1, 1)))


def _nll(tape, probs, labels, clamp):
    """Sum over rows of -log(probs[i, labels[i]])."""
    probs = tape._var(probs)
    labels = np.asarray(labels, dtype=int).ravel()
    if len(labels) != probs.shape[0]:
        raise DimensionError("One label per prediction row is required", (len(labels),), probs.shape)
    if len(labels) and (labels.min() < 0 or labels.max() >= probs.shape[1]):
        raise ContractError(f"Labels must be in [0, {probs.shape[1] - 1}].")
    return tape.scale(tape.sum(tape.log(tape.pick(probs, labels), clamp)), -1.0)


def loss_pred(probs, labels, clamp=LOG_CLAMP):
    """Mean cross-entropy of predicted class probabilities.

    :param probs: Samples x classes probabilities
    :param labels: Class index per sample
    :type labels: numpy.ndarray
    :raises ContractError: If a label is not a valid class index
    """
    tape, plain = _session(probs)
    n = np.asarray(labels).size
    if n == 0:
        raise ContractError("loss_pred needs at least one sample.")
    return _finish(tape.scale(_nll(tape, probs, labels, clamp), 1.0 / n), plain)


def loss_aux(modalityProbs, presence, labels, modalities, clamp=LOG_CLAMP):
    """Mean cross-entropy over all present (sample, modality) pairs of the per-modality
    predictions.

    :param modalityProbs: Per modality, probabilities of its present samples in sample order
    :type modalityProbs: dict
    :param presence: Samples x modalities boolean matrix
    :param labels: Class index per sample
    :param modalities: Modality names in presence column order
    :type modalities: list[str]
    :raises ContractError: If predictions do not match the present pairs
    """
    tape, plain = _session(modalityProbs)
    presence = np.asarray(presence, dtype=bool)
    labels = np.asarray(labels, dtype=int)
    unknown = set(modalityProbs) - set(modalities)
    if unknown:
        raise ContractError(f"Predictions for unknown modalities {sorted(unknown)}.")
    total, pairs = None, 0
    for j, m in enumerate(modalities):
        rows = np.flatnonzero(presence[:, j])
        if m not in modalityProbs:
            if len(rows) > 0:
                raise ContractError(f"Missing predictions of modality {m} for its {len(rows)} present samples.")
            continue
        probs = tape._var(modalityProbs[m])
        if probs.shape[0] != len(rows):
            raise ContractError(f"{probs.shape[0]} predictions of {m} for {len(rows)} present samples.")
        if len(rows) == 0:
            continue
        term = _nll(tape, probs, labels[rows], clamp)
        total = term if total is None else tape.add(total, term)
        pairs += len(rows)
    if pairs == 0:
        return _finish(_zero(tape), plain)
    return _finish(tape.scale(total, 1.0 / pairs), plain)


def loss_clip_pair(Zm, Zn, tau, eps=COSINE_EPS):
    """Directional contrastive loss m -> n over row-aligned embeddings: the i-th row of
    `Zn` is the positive of the i-th row of `Zm`, all other rows of `Zn` are negatives.
    """
    tape, plain = _session(Zm, Zn)
    Zm, Zn = tape._var(Zm), tape._var(Zn)
    if Zm.shape[0] != Zn.shape[0]:
        raise DimensionError("Contrastive pairs need the same rows", Zm.shape, Zn.shape)
    N = Zm.shape[0]
    if N == 0:
        raise ContractError("loss_clip_pair needs at least one row.")
    logits = tape.scale(tape.cosine_matrix(Zm, Zn, eps), 1.0 / tau)
    positives = tape.pick(tape.log_softmax(logits), np.arange(N))
    return _finish(tape.scale(tape.mean(positives), -1.0), plain)


def commonRows(rows_m, rows_n):
    """Positions (within each modality's present rows) of the samples having both."""
    common = np.intersect1d(rows_m, rows_n)
    return np.searchsorted(rows_m, common), np.searchsorted(rows_n, common)


def loss_clip_total(embeddings, rows, tau, modalities=None, eps=COSINE_EPS):
    """Sum over unordered modality pairs of both directional losses, each computed on
    the samples that have both modalities. Pairs with fewer than 2 such samples are
    skipped.

    :param embeddings: Per modality, embeddings of its present samples
    :type embeddings: dict
    :param rows: Per modality, sorted sample indices of its present samples
    :type rows: dict
    """
    tape, plain = _session(embeddings)
    modalities = [m for m in (modalities or list(embeddings)) if m in embeddings]
    total = None
    for m, n in itertools.combinations(modalities, 2):
        im, jn = commonRows(np.asarray(rows[m]), np.asarray(rows[n]))
        if len(im) < 2:
            continue
        Zm = tape.gather_rows(embeddings[m], im)
        Zn = tape.gather_rows(embeddings[n], jn)
        term = tape.add(loss_clip_pair(Zm, Zn, tau, eps), loss_clip_pair(Zn, Zm, tau, eps))
        total = term if total is None else tape.add(total, term)
    return _finish(_zero(tape) if total is None else total, plain)


def loss_recon(xhat, x):
    """Mean squared reconstruction error over all elements."""
    tape, plain = _session(xhat, x)
    xhat, x = tape._var(xhat), tape._var(x)
    if xhat.shape != x.shape:
        raise DimensionError("Reconstruction shape mismatch", xhat.shape, x.shape)
    diff = tape.sub(xhat, x)
    return _finish(tape.mean(tape.mul(diff, diff)), plain)


def loss_total(components, cfg):
    """Weighted sum lambda_pred*pred + [enable_aux]*lambda_aux*aux + [enable_clip]*lambda_clip*clip.

    :param components: Loss terms `pred`, `aux` and `clip` (nodes or floats)
    :type components: dict
    :param cfg: ObjectiveConfig
    :type cfg: dict
    """
    tape, plain = _session(components)
    terms = [("pred", True, cfg["lambda_pred"])]
    terms.append(("aux", cfg["enable_aux"], cfg["lambda_aux"]))
    terms.append(("clip", cfg["enable_clip"], cfg["lambda_clip"]))
    total = None
    for name, enabled, weight in terms:
        if not enabled:
            continue
        term = tape.scale(tape._var(components[name]), weight)
        total = term if total is None else tape.add(total, term)
    return _finish(total, plain)


def computeLosses(tape, out, labels, presence, modalities, cfg):
    """All loss terms of one forward pass recorded on `tape`.

    :param out: Output of `MOIRAModel.forwardTape`
    :type out: dotdict
    :return: Nodes `pred`, `aux`, `clip` and `total`
    :rtype: dotdict
    """
    losses = dotdict({})
    losses.pred = loss_pred(out.probs, labels, cfg.log_clamp)
    if cfg.enable_aux and out.modalityProbs:
        losses.aux = loss_aux(out.modalityProbs, presence, labels, modalities, cfg.log_clamp)
    else:
        losses.aux = _zero(tape)
    if cfg.enable_clip and out.embeddings:
        losses.clip = loss_clip_total(out.embeddings, out.rows, cfg.tau, modalities, cfg.cosine_eps)
    else:
        losses.clip = _zero(tape)
    losses.total = loss_total(losses, cfg)
    return losses
