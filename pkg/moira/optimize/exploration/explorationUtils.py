import datetime
import json
import logging
import os

import numpy as np
import pandas as pd

from ... import __version__
from ...utils.collections import dotdict, toJsonable
from ...utils.exceptions import ParseError
from ...utils.metrics import METRICS

# recorded with every results file
METRIC_NOTES = {
    "threshold": 0.5,
    "auprc_interpolation": "step",
    "auroc": "Mann-Whitney, ties count 1/2",
    "multiclass": "only argmax accuracy, other metrics NaN",
}


def resultsTable(results):
    """One row per run with its seed and test metrics."""
    rows = [dict(seed=r.seed, **{k: r.metrics.get(k, np.nan) for k in METRICS}) for r in results]
    return pd.DataFrame(rows, columns=["seed"] + METRICS)


def aggregateResults(results):
    """Mean and (population) standard deviation of every metric over runs.

    :rtype: dotdict
    """
    aggregate = dotdict({})
    for k in METRICS:
        values = np.array([r.metrics.get(k, np.nan) for r in results], dtype=np.float64)
        aggregate[k] = dotdict({"mean": float(np.mean(values)), "std": float(np.std(values)), "n": len(values)})
    return aggregate


def writeJson(path, content):
    """Writes a results document. Keys are sorted and the wall-clock time is kept in a
    separate `timestamps` field so that identical runs produce identical content.
    """
    content = dict(content)
    content["timestamps"] = {"written": datetime.datetime.now().isoformat(timespec="seconds")}
    content.setdefault("version", __version__)
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w") as f:
        json.dump(toJsonable(content), f, indent=2, sort_keys=True)
        f.write("\n")
    logging.info(f"Results written to {path}")


def writeRunResults(path, search, inputHashes=None, extra=None):
    """Results document of repeated runs: config echo, per-run metrics, aggregate and input hashes.
    Checkpoint paths are stored relative to the results file.
    """
    base = os.path.dirname(os.path.abspath(path))
    runs = []
    for r in search.results:
        run = r.toDict()
        if run["checkpoint"] is not None:
            run["checkpoint"] = os.path.relpath(os.path.abspath(run["checkpoint"]), base)
        runs.append(run)
    writeJson(
        path,
        {
            **(extra or {}),
            "config": {"train": search.trainCfg, "model": search.modelCfg},
            "seeds": search.seeds,
            "runs": runs,
            "aggregate": search.aggregate,
            "metric_notes": METRIC_NOTES,
            "inputs": inputHashes or {},
        },
    )


def writeAblationTable(path, suite, inputHashes=None, extra=None):
    """Writes the ablation table as CSV (condition, metric means) and a JSON document
    with standard deviations and sample counts next to it.
    """
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    suite.dfResults.to_csv(path, index=False, float_format="%.6f", lineterminator="\n")
    writeJson(
        os.path.splitext(path)[0] + ".json",
        {
            **(extra or {}),
            "config": {"train": suite.baseCfg, "model": suite.modelCfg},
            "conditions": [name for name, _ in suite.conditions],
            "mean": suite.dfResults.to_dict(orient="records"),
            "std": suite.dfStd.to_dict(orient="records"),
            "sample_counts": suite.sampleCounts,
            "metric_notes": METRIC_NOTES,
            "inputs": inputHashes or {},
        },
    )


def loadSummary(path):
    """Reads a results JSON (repeated runs) or an ablation CSV into a table with one
    row per condition (repeated runs give a single row `runs`) and mean/std columns.

    :rtype: pandas.DataFrame
    """
    if not os.path.exists(path):
        raise ParseError("Results file not found", path)
    if path.endswith(".csv"):
        df = pd.read_csv(path)
        missing = [c for c in ["condition"] + METRICS if c not in df.columns]
        if missing:
            raise ParseError(f"Ablation table misses columns {missing}", path, row=1)
        stdPath = os.path.splitext(path)[0] + ".json"
        if os.path.exists(stdPath):
            with open(stdPath) as f:
                std = pd.DataFrame(json.load(f).get("std", []))
            if len(std):
                df = df.merge(std, on="condition", how="left", suffixes=("", "_std"))
        return df
    try:
        with open(path) as f:
            content = json.load(f)
    except json.JSONDecodeError as e:
        raise ParseError(f"Results file is not valid JSON: {e.msg}", path, row=e.lineno, column=e.colno)
    if "aggregate" not in content:
        raise ParseError("Results file has no `aggregate` block", path)
    row = {"condition": "runs"}
    for k in METRICS:
        entry = content["aggregate"].get(k) or {}
        row[k] = np.nan if entry.get("mean") is None else entry["mean"]
        row[f"{k}_std"] = np.nan if entry.get("std") is None else entry["std"]
    return pd.DataFrame([row])


def formatTable(df):
    """Fixed-width text rendering with `mean +- std` cells where a std is known."""
    header = f"{'condition':<32}" + "".join(f"{k:>20}" for k in METRICS)
    lines = [header, "-" * len(header)]
    for _, row in df.iterrows():
        cells = []
        for k in METRICS:
            mean = row.get(k, np.nan)
            std = row.get(f"{k}_std", np.nan)
            if pd.isna(mean):
                cell = "n/a"
            elif pd.isna(std):
                cell = f"{mean:.4f}"
            else:
                cell = f"{mean:.4f} +- {std:.4f}"
            cells.append(f"{cell:>20}")
        lines.append(f"{str(row['condition']):<32}" + "".join(cells))
    return "\n".join(lines)
