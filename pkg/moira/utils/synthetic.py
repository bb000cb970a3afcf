"""
Synthetic multi-omics cohorts. A shared latent class signal is observed through one
random linear map per modality plus noise, and every (sample, modality) pair is
missing with a per-modality rate.
"""
import logging

import numpy as np

from .collections import dotdict, merge
from .exceptions import ConfigError
from .loadData import MaskedDataset
from .seeding import rngFor

DEFAULT_MODALITIES = ["mRNA", "meth", "miRNA", "TMT", "HD4"]


def loadDefaultParams(n_modalities=3, seed=0):
    """Default synthesis parameters.

    :param n_modalities: Number of modalities, defaults to 3
    :type n_modalities: int, optional
    :param seed: Seed of the cohort, defaults to 0
    :type seed: int, optional
    :return: SynthConfig
    :rtype: dotdict
    """
    params = dotdict({})

    params.n_samples = 300  # cohort size
    params.n_classes = 2  # number of classes
    params.latent_dim = 8  # dimension of the shared latent signal
    params.class_separation = 2.0  # distance of every class mean from the origin
    params.seed = seed

    params.modalities = [defaultModality(i) for i in range(n_modalities)]
    return params


def defaultModality(i):
    """Default parameters of the i-th modality."""
    return dotdict(
        {
            "name": DEFAULT_MODALITIES[i] if i < len(DEFAULT_MODALITIES) else f"mod{i}",
            "feature_dim": 50,  # observed features
            "noise_std": 1.0,  # std of the additive Gaussian noise
            "missing_rate": 0.2,  # probability that the modality is absent for a sample
            "informative": None,  # only the first n features carry signal, None: all
        }
    )


def resolveConfig(overrides=None):
    """Defaults overlaid with user values; every modality entry is completed with the
    defaults of its position.

    :rtype: dotdict
    """
    overrides = dict(overrides or {})
    modalities = overrides.pop("modalities", None)
    cfg = merge(loadDefaultParams(), overrides)
    if modalities is not None:
        if not isinstance(modalities, list):
            raise ConfigError("modalities", "must be a list of modality entries")
        cfg.modalities = [merge(defaultModality(i), mod, _prefix=f"modalities[{i}].") for i, mod in enumerate(modalities)]
    validate(cfg)
    return cfg


def validate(cfg):
    """Raises a ConfigError naming the first invalid field."""
    if not cfg.modalities:
        raise ConfigError("modalities", "at least one modality is required")
    for field in ["n_samples", "latent_dim"]:
        if int(cfg[field]) < 1:
            raise ConfigError(field, "must be at least 1")
    if int(cfg.n_classes) < 2:
        raise ConfigError("n_classes", "must be at least 2")
    if int(cfg.n_classes) > int(cfg.latent_dim):
        raise ConfigError("n_classes", "class means need one orthogonal latent direction each (n_classes <= latent_dim)")
    if int(cfg.n_samples) < int(cfg.n_classes):
        raise ConfigError("n_samples", "must be at least n_classes")
    if cfg.class_separation < 0:
        raise ConfigError("class_separation", "must be non-negative")
    names = set()
    for i, mod in enumerate(cfg.modalities):
        prefix = f"modalities[{i}]"
        if mod.get("name") in names:
            raise ConfigError(f"{prefix}.name", f"duplicate modality `{mod.get('name')}`")
        names.add(mod.get("name"))
        if int(mod["feature_dim"]) < 1:
            raise ConfigError(f"{prefix}.feature_dim", "must be at least 1")
        if mod["noise_std"] < 0:
            raise ConfigError(f"{prefix}.noise_std", "must be non-negative")
        if not 0 <= mod["missing_rate"] < 1:
            raise ConfigError(f"{prefix}.missing_rate", "must be in [0, 1)")
        informative = mod.get("informative")
        if informative is not None and not 1 <= int(informative) <= int(mod["feature_dim"]):
            raise ConfigError(f"{prefix}.informative", "must be in [1, feature_dim]")


def featureIds(mod):
    return [f"{mod['name']}_{j:04d}" for j in range(int(mod["feature_dim"]))]


def plantedFeatures(cfg):
    """Feature ids that carry class signal, per modality."""
    planted = {}
    for mod in cfg.modalities:
        ids = featureIds(mod)
        n = mod.get("informative")
        planted[mod["name"]] = ids if n is None else ids[: int(n)]
    return planted


def _samplePresence(rng, n, rates):
    keep = 1.0 - np.asarray(rates)
    presence = rng.random((n, len(rates))) < keep
    empty = np.flatnonzero(~presence.any(axis=1))
    for i in empty:
        while not presence[i].any():
            presence[i] = rng.random(len(rates)) < keep
    return presence, len(empty)


def synthesize(cfg):
    """Draws a synthetic MaskedDataset; bitwise deterministic in `cfg.seed`.

    :param cfg: SynthConfig, see `loadDefaultParams`
    :type cfg: dotdict
    :rtype: MaskedDataset
    """
    cfg = dotdict(cfg)
    cfg.modalities = [dotdict(m) for m in cfg.modalities]
    validate(cfg)
    N, C, L = int(cfg.n_samples), int(cfg.n_classes), int(cfg.latent_dim)

    rng = rngFor(cfg.seed, "synth")
    labels = rng.permutation(np.arange(N) % C)
    Q, _ = np.linalg.qr(rng.standard_normal((L, L)))
    means = cfg.class_separation * Q[:, :C].T
    latent = means[labels] + rng.standard_normal((N, L))

    names = [m.name for m in cfg.modalities]
    presence, resampled = _samplePresence(
        rngFor(cfg.seed, "synth", "presence"), N, [m.missing_rate for m in cfg.modalities]
    )
    if resampled > 0:
        logging.debug(f"synthesize: re-sampled presence of {resampled} samples without modalities.")

    matrices, ids = {}, {}
    for j, mod in enumerate(cfg.modalities):
        mrng = rngFor(cfg.seed, "synth", mod.name)
        p = int(mod.feature_dim)
        A = mrng.standard_normal((L, p)) / np.sqrt(L)
        if mod.get("informative") is not None:
            A[:, int(mod.informative) :] = 0.0
        X = latent @ A + mod.noise_std * mrng.standard_normal((N, p))
        X[~presence[:, j]] = 0.0
        matrices[mod.name] = X
        ids[mod.name] = featureIds(mod)

    width = len(str(N))
    sampleIds = [f"S{i:0{width}d}" for i in range(N)]
    ds = MaskedDataset(names, ids, matrices, sampleIds, presence, labels, n_classes=C)
    logging.info(f"Synthesized {ds} with {100 * (1 - ds.completeFraction()):.1f}% incomplete samples.")
    return ds
