"""
Command line interface.

    moira synth --config synth.json --out data/
    moira train data/dataset.json --config run.json --runs 30 --parallel 4 --out results/

Exit codes: 0 success, 2 configuration error, 3 input file error (parse or hash
mismatch), 4 any other failure.
"""
import argparse
import json
import logging
import logging.config
import os
import re
import sys

import numpy as np
import pandas as pd

from . import __version__
from .attribution.campaign import AttributionCampaign
from .attribution.campaign import loadDefaultParams as attributionDefaults
from .models.moira import MOIRAModel
from .optimize.exploration import explorationUtils as eu
from .optimize.exploration.exploration import AblationSuite, RepeatedRuns
from .optimize.training import training
from .utils import paths, synthetic
from .utils.collections import merge
from .utils.exceptions import ConfigError, IntegrityError, ParseError
from .utils.loadData import Dataset, manifestHash, write_csv, write_labels, writeManifest

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_INPUT = 3
EXIT_RUNTIME = 4

LOG_LEVELS = {
    "error": logging.ERROR,
    "warn": logging.WARNING,
    "warning": logging.WARNING,
    "info": logging.INFO,
    "debug": logging.DEBUG,
}

CONFIG_SECTIONS = ["model", "train", "attribution"]


def configureLogging():
    logging.config.fileConfig(paths.LOGGING_CONFIG, disable_existing_loggers=False)
    level = os.environ.get(paths.LOG_LEVEL_ENV)
    if level:
        if level.lower() not in LOG_LEVELS:
            raise ConfigError(paths.LOG_LEVEL_ENV, f"must be one of {sorted(LOG_LEVELS)}")
        logging.getLogger().setLevel(LOG_LEVELS[level.lower()])


def readConfig(path):
    """Reads a JSON configuration file, an empty dict if `path` is None."""
    if path is None:
        return {}
    try:
        with open(path) as f:
            config = json.load(f)
    except FileNotFoundError:
        raise ConfigError("config", f"file {path} does not exist")
    except json.JSONDecodeError as e:
        raise ConfigError("config", f"{path} is not valid JSON ({e.msg}, line {e.lineno})")
    if not isinstance(config, dict):
        raise ConfigError("config", "top level must be a JSON object")
    return config


def resolveConfig(args):
    """Model, train and attribution sections of the config file with the command line
    flags applied on top (flags win).
    """
    config = readConfig(args.config)
    unknown = [k for k in config if k not in CONFIG_SECTIONS]
    if unknown:
        raise ConfigError(unknown[0], f"unknown configuration section, use {CONFIG_SECTIONS}")

    modelCfg = dict(config.get("model", {}))
    trainCfg = training.resolveConfig(config.get("train", {}))
    attributionCfg = merge(attributionDefaults(), config.get("attribution", {}))

    if args.seed is not None:
        trainCfg.seed = args.seed
    if getattr(args, "silence", None):
        trainCfg.silenced_modalities = [m.strip() for m in args.silence.split(",") if m.strip()]
    if getattr(args, "no_aux", False):
        trainCfg.objective.enable_aux = False
    if getattr(args, "no_clip", False):
        trainCfg.objective.enable_clip = False
    if getattr(args, "runs", None) is not None:
        if args.runs < 1:
            raise ConfigError("runs", "must be at least 1")
        attributionCfg.n_runs = args.runs
    return modelCfg, trainCfg, attributionCfg


def loadInputs(manifestPath):
    """Verifies the hashes of all inputs, then loads the dataset."""
    dataset = Dataset(manifestPath)
    hashes = dict(dataset.inputHashes())
    hashes["manifest"] = manifestHash(manifestPath)
    return dataset.data, hashes


def writeRunManifest(out, command, config, inputs, seeds, outputs):
    eu.writeJson(
        os.path.join(out, "manifest.json"),
        {
            "command": command,
            "config": config,
            "inputs": inputs,
            "seeds": seeds,
            "version": __version__,
            "outputs": sorted(os.path.relpath(p, out) for p in outputs if p is not None),
        },
    )


def safeName(name):
    return re.sub(r"[^A-Za-z0-9.+-]+", "_", name.replace("--", "without_")).strip("_")


# ----------------------------------------------------------------------------
# commands


def cmd_synth(args):
    cfg = synthetic.resolveConfig(readConfig(args.config))
    if args.seed is not None:
        cfg.seed = args.seed
    dataset = synthetic.synthesize(cfg)

    os.makedirs(args.out, exist_ok=True)
    modalityPaths = {}
    for table in dataset.toTables():
        modalityPaths[table.modality_name] = os.path.join(args.out, f"{table.modality_name}.csv")
        write_csv(table, modalityPaths[table.modality_name])
    labelsPath = os.path.join(args.out, "labels.csv")
    write_labels(dataset.labelMap(), labelsPath)
    writeManifest(
        os.path.join(args.out, "dataset.json"),
        modalityPaths,
        labelsPath,
        extra={"command": "synth", "synth": cfg, "planted_features": synthetic.plantedFeatures(cfg)},
    )
    logging.info(f"Dataset written to {args.out}")
    return EXIT_OK


def cmd_select(args):
    modelCfg, trainCfg, _ = resolveConfig(args)
    dataset, hashes = loadInputs(args.manifest)
    _, _, selections, _ = training.prepareSplits(dataset, trainCfg)

    os.makedirs(args.out, exist_ok=True)
    outputs = []
    for m, sel in selections.items():
        ranks = sel.ranks()
        selected = np.zeros(len(sel.scores), dtype=bool)
        selected[sel.selected] = True
        df = pd.DataFrame(
            {"feature_id": dataset.feature_ids[m], "score": sel.scores, "rank": ranks, "selected": selected}
        ).sort_values("rank")
        path = os.path.join(args.out, f"selection_{safeName(m)}.csv")
        df.to_csv(path, index=False, float_format="%.10g", lineterminator="\n")
        outputs.append(path)
    writeRunManifest(args.out, "select", {"train": trainCfg}, hashes, [trainCfg.split_seed], outputs)
    return EXIT_OK


def cmd_pretrain(args):
    modelCfg, trainCfg, _ = resolveConfig(args)
    dataset, hashes = loadInputs(args.manifest)
    train_, _, _, _ = training.prepareSplits(dataset, trainCfg)
    model = MOIRAModel(params=training.modelConfigFor(train_, modelCfg, trainCfg.seed))
    trace = training.pretrain(model, train_, trainCfg)

    os.makedirs(args.out, exist_ok=True)
    checkpoint = os.path.join(args.out, "pretrained.json")
    model.save(checkpoint, provenance={"seed": trainCfg.seed, "split_seed": trainCfg.split_seed, "inputs": hashes})
    tracePath = os.path.join(args.out, "pretrain_trace.json")
    eu.writeJson(tracePath, {"manifest": "manifest.json", "pretrain_trace": trace})
    writeRunManifest(
        args.out, "pretrain", {"train": trainCfg, "model": model.params}, hashes, [trainCfg.seed], [checkpoint, tracePath]
    )
    return EXIT_OK


def cmd_train(args):
    modelCfg, trainCfg, _ = resolveConfig(args)
    dataset, hashes = loadInputs(args.manifest)
    search = RepeatedRuns(
        dataset,
        modelCfg,
        trainCfg,
        nRuns=args.runs or 1,
        baseSeed=trainCfg.seed,
        parallel=args.parallel,
        checkpointDir=os.path.join(args.out, "checkpoints"),
    )
    search.run()

    resultsPath = os.path.join(args.out, "results.json")
    eu.writeRunResults(resultsPath, search, hashes, extra={"manifest": "manifest.json"})
    outputs = [resultsPath] + [r.checkpoint for r in search.results]
    writeRunManifest(args.out, "train", {"train": trainCfg, "model": modelCfg}, hashes, search.seeds, outputs)
    print(eu.formatTable(eu.loadSummary(resultsPath)))
    return EXIT_OK


def cmd_ablate(args):
    modelCfg, trainCfg, _ = resolveConfig(args)
    dataset, hashes = loadInputs(args.manifest)
    suite = AblationSuite(dataset, modelCfg, trainCfg, nRuns=args.runs or 1, baseSeed=trainCfg.seed, parallel=args.parallel)
    suite.run()

    tablePath = os.path.join(args.out, "ablation.csv")
    eu.writeAblationTable(tablePath, suite, hashes, extra={"manifest": "manifest.json"})
    outputs = [tablePath, os.path.splitext(tablePath)[0] + ".json"]
    for name, search in suite.searches.items():
        path = os.path.join(args.out, "conditions", f"{safeName(name)}.json")
        eu.writeRunResults(path, search, hashes, extra={"manifest": "../manifest.json", "condition": name})
        outputs.append(path)
    writeRunManifest(
        args.out, "ablate", {"train": trainCfg, "model": modelCfg}, hashes, list(suite.searches.values())[0].seeds, outputs
    )
    print(eu.formatTable(eu.loadSummary(tablePath)))
    return EXIT_OK


def cmd_attribute(args):
    modelCfg, trainCfg, attributionCfg = resolveConfig(args)
    dataset, hashes = loadInputs(args.manifest)
    campaign = AttributionCampaign(
        dataset, modelCfg, trainCfg, attributionCfg, baseSeed=trainCfg.seed, parallel=args.parallel
    )
    reports = campaign.run()

    os.makedirs(args.out, exist_ok=True)
    outputs = []
    for m, report in reports.items():
        path = os.path.join(args.out, f"attribution_{safeName(m)}.csv")
        report.toFrame().to_csv(path, index=False, float_format="%.10g", lineterminator="\n")
        outputs.append(path)
    campaignPath = os.path.join(args.out, "campaign.json")
    eu.writeJson(campaignPath, {"manifest": "manifest.json", **campaign.manifest()})
    outputs.append(campaignPath)
    writeRunManifest(
        args.out,
        "attribute",
        {"train": trainCfg, "model": modelCfg, "attribution": attributionCfg},
        hashes,
        campaign.seeds,
        outputs,
    )
    return EXIT_OK


def cmd_report(args):
    df = eu.loadSummary(args.results)
    print(eu.formatTable(df))
    out = args.out or os.path.dirname(os.path.abspath(args.results))
    os.makedirs(out, exist_ok=True)
    df.to_csv(os.path.join(out, "report.csv"), index=False, float_format="%.6f", lineterminator="\n")
    return EXIT_OK


COMMANDS = {
    "synth": cmd_synth,
    "select": cmd_select,
    "pretrain": cmd_pretrain,
    "train": cmd_train,
    "ablate": cmd_ablate,
    "attribute": cmd_attribute,
    "report": cmd_report,
}


def buildParser():
    parser = argparse.ArgumentParser(prog="moira", description="Multi-omics classification with missing modalities.")
    parser.add_argument("--version", action="version", version=f"moira {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, manifest=True, out=True):
        if manifest:
            p.add_argument("manifest", help="dataset manifest (JSON)")
        p.add_argument("--config", help="configuration file (JSON)")
        p.add_argument("--seed", type=int, help="base seed")
        if out:
            p.add_argument("--out", default=paths.RESULTS_DIR, help="output directory")
        return p

    def training_flags(p):
        p.add_argument("--silence", help="comma separated modalities to remove")
        p.add_argument("--no-aux", action="store_true", help="disable the auxiliary loss")
        p.add_argument("--no-clip", action="store_true", help="disable the contrastive loss")
        return p

    def run_flags(p):
        p.add_argument("--runs", type=int, help="number of runs")
        p.add_argument("--parallel", type=int, default=1, help="worker processes (0: one per physical core)")
        return p

    common(sub.add_parser("synth", help="write a synthetic dataset"), manifest=False)
    training_flags(common(sub.add_parser("select", help="write ANOVA feature rankings")))
    training_flags(common(sub.add_parser("pretrain", help="pretrain encoders and decoders")))
    run_flags(training_flags(common(sub.add_parser("train", help="train and evaluate"))))
    run_flags(training_flags(common(sub.add_parser("ablate", help="run the ablation table"))))
    run_flags(training_flags(common(sub.add_parser("attribute", help="integrated-gradients frequency reports"))))
    report = sub.add_parser("report", help="summarize a results JSON or ablation CSV")
    report.add_argument("results", help="results.json or ablation.csv")
    report.add_argument("--out", help="output directory, defaults to the directory of the results file")
    return parser


def main(argv=None):
    parser = buildParser()
    args = parser.parse_args(argv)
    try:
        configureLogging()
        return COMMANDS[args.command](args)
    except ConfigError as e:
        logging.error(f"Configuration error: {e}")
        return EXIT_CONFIG
    except (IntegrityError, ParseError) as e:
        logging.error(f"Input error: {e}")
        return EXIT_INPUT
    except Exception as e:
        logging.error(f"{type(e).__name__}: {e}")
        logging.debug("Traceback", exc_info=True)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
