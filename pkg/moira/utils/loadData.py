import datetime
import hashlib
import json
import logging
import os
import re

import numpy as np
import pandas as pd

from . import paths
from .collections import dotdict, toJsonable
from .exceptions import ConfigError, ContractError, IntegrityError, ParseError


class OmicsTable:
    """One modality: a samples x features matrix with string identifiers."""

    def __init__(self, modality_name, sample_ids, feature_ids, matrix):
        self.modality_name = str(modality_name)
        self.sample_ids = [str(s) for s in sample_ids]
        self.feature_ids = [str(f) for f in feature_ids]
        self.matrix = np.array(matrix, dtype=np.float64, ndmin=2)

        _checkUnique(self.sample_ids, f"sample id in modality {self.modality_name}")
        _checkUnique(self.feature_ids, f"feature id in modality {self.modality_name}")
        assert self.matrix.shape == (
            len(self.sample_ids),
            len(self.feature_ids),
        ), f"Matrix of {self.modality_name} has shape {self.matrix.shape}, ids imply {(len(self.sample_ids), len(self.feature_ids))}."
        assert np.all(np.isfinite(self.matrix)), f"Matrix of {self.modality_name} contains non-finite values."

    @property
    def shape(self):
        return self.matrix.shape

    def __repr__(self):
        return f"OmicsTable({self.modality_name}, {self.shape[0]} samples x {self.shape[1]} features)"


def _checkUnique(ids, what):
    seen = set()
    for i in ids:
        if i in seen:
            raise ContractError(f"Duplicate {what}: {i}")
        seen.add(i)


class MaskedDataset:
    """Samples aligned across modalities with a presence mask.

    Rows of absent (sample, modality) pairs are stored as zeros; model code only ever
    reads present rows, selected through `presentRows()`.
    """

    def __init__(self, modalities, feature_ids, matrices, sample_ids, presence, labels, n_classes=None):
        self.modalities = list(modalities)
        self.feature_ids = {m: list(feature_ids[m]) for m in self.modalities}
        self.matrices = {m: np.array(matrices[m], dtype=np.float64, ndmin=2) for m in self.modalities}
        self.sample_ids = list(sample_ids)
        self.presence = np.array(presence, dtype=bool).reshape(len(self.sample_ids), len(self.modalities))
        self.labels = np.asarray(labels, dtype=int)
        self.n_classes = int(n_classes) if n_classes is not None else int(self.labels.max()) + 1
        self.nDropped = 0

        assert len(self.labels) == len(self.sample_ids), "One label per sample is required."
        assert len(set(self.modalities)) == len(self.modalities), "Modality names must be unique."
        for m in self.modalities:
            assert self.matrices[m].shape == (len(self.sample_ids), len(self.feature_ids[m])), f"Matrix of {m} does not fit."
        if len(self.sample_ids) > 0:
            assert self.presence.any(axis=1).all(), "Every sample needs at least one present modality."
            assert self.labels.min() >= 0 and self.labels.max() < self.n_classes, "Labels out of range."

    def __repr__(self):
        dims = ", ".join(f"{m}:{len(self.feature_ids[m])}" for m in self.modalities)
        return f"MaskedDataset({self.nSamples} samples, modalities [{dims}], {self.n_classes} classes)"

    @property
    def nSamples(self):
        return len(self.sample_ids)

    @property
    def inputDims(self):
        return {m: len(self.feature_ids[m]) for m in self.modalities}

    def modalityIndex(self, name):
        if name not in self.modalities:
            raise ConfigError("modality", f"unknown modality `{name}`, dataset has {self.modalities}")
        return self.modalities.index(name)

    def presentRows(self, name):
        """Indices of the samples that have modality `name`."""
        return np.flatnonzero(self.presence[:, self.modalityIndex(name)])

    def classCounts(self):
        return np.bincount(self.labels, minlength=self.n_classes)

    def completeFraction(self):
        """Fraction of samples that have every modality."""
        if self.nSamples == 0:
            return 0.0
        return float(self.presence.all(axis=1).mean())

    def subset(self, indices):
        indices = np.asarray(indices, dtype=int)
        return MaskedDataset(
            self.modalities,
            self.feature_ids,
            {m: self.matrices[m][indices] for m in self.modalities},
            [self.sample_ids[i] for i in indices],
            self.presence[indices],
            self.labels[indices],
            n_classes=self.n_classes,
        )

    def silence(self, names):
        """Removes modalities from every sample's modality set. Samples left without any
        modality are dropped.
        """
        names = set(names)
        for n in names:
            self.modalityIndex(n)
        keep = [m for m in self.modalities if m not in names]
        return self.keepModalities(keep)

    def keepModalities(self, names, intersection=False):
        """Restricts the dataset to `names` (in the given order). With `intersection`,
        only samples that have all of them are kept, otherwise samples with at least one.
        """
        names = list(names)
        if len(names) == 0:
            raise ConfigError("modalities", "at least one modality must remain")
        cols = [self.modalityIndex(n) for n in names]
        presence = self.presence[:, cols]
        rows = np.flatnonzero(presence.all(axis=1) if intersection else presence.any(axis=1))
        dropped = self.nSamples - len(rows)
        if dropped > 0:
            logging.info(f"Dropping {dropped} samples without {'all' if intersection else 'any'} of {names}.")
        return MaskedDataset(
            names,
            {m: self.feature_ids[m] for m in names},
            {m: self.matrices[m][rows] for m in names},
            [self.sample_ids[i] for i in rows],
            presence[rows],
            self.labels[rows],
            n_classes=self.n_classes,
        )

    def replaceModality(self, name, feature_ids, matrix):
        """Returns a copy in which modality `name` has new features (e.g. after selection).
        Absent rows of the new matrix are forced to zero.
        """
        i = self.modalityIndex(name)
        matrix = np.array(matrix, dtype=np.float64, ndmin=2)
        matrix[~self.presence[:, i]] = 0.0
        matrices = dict(self.matrices)
        matrices[name] = matrix
        featureIds = dict(self.feature_ids)
        featureIds[name] = list(feature_ids)
        return MaskedDataset(
            self.modalities, featureIds, matrices, self.sample_ids, self.presence, self.labels, n_classes=self.n_classes
        )

    def toTables(self):
        """One OmicsTable per modality, containing only the present samples."""
        tables = []
        for m in self.modalities:
            rows = self.presentRows(m)
            tables.append(
                OmicsTable(m, [self.sample_ids[i] for i in rows], self.feature_ids[m], self.matrices[m][rows])
            )
        return tables

    def labelMap(self):
        return {s: int(y) for s, y in zip(self.sample_ids, self.labels)}


def align(tables, labels, n_classes=None):
    """Aligns modality tables on the union of their sample ids (sorted).

    Samples without a label are dropped with a warning; the number of dropped samples
    is stored in `nDropped` of the returned dataset.

    :param tables: One table per modality
    :type tables: list[OmicsTable]
    :param labels: Class index per sample id
    :type labels: dict[str, int]
    :return: Aligned dataset
    :rtype: MaskedDataset
    """
    assert len(tables) > 0, "At least one modality table is required."
    names = [t.modality_name for t in tables]
    _checkUnique(names, "modality name")
    for t in tables:
        _checkUnique(t.feature_ids, f"feature id in modality {t.modality_name}")

    allIds = sorted(set().union(*[t.sample_ids for t in tables]))
    sampleIds = [s for s in allIds if s in labels]
    dropped = len(allIds) - len(sampleIds)

    index = {s: i for i, s in enumerate(sampleIds)}
    presence = np.zeros((len(sampleIds), len(tables)), dtype=bool)
    matrices = {}
    for j, t in enumerate(tables):
        matrix = np.zeros((len(sampleIds), len(t.feature_ids)))
        for r, s in enumerate(t.sample_ids):
            if s in index:
                matrix[index[s]] = t.matrix[r]
                presence[index[s], j] = True
        matrices[t.modality_name] = matrix

    # every kept sample comes from some table, but keep the rule explicit
    nonEmpty = presence.any(axis=1)
    dropped += int((~nonEmpty).sum())
    rows = np.flatnonzero(nonEmpty)

    if dropped > 0:
        logging.warning(f"align: dropped {dropped} samples without label or without any modality.")

    ds = MaskedDataset(
        names,
        {t.modality_name: t.feature_ids for t in tables},
        {m: matrices[m][rows] for m in names},
        [sampleIds[i] for i in rows],
        presence[rows],
        [int(labels[sampleIds[i]]) for i in rows],
        n_classes=n_classes,
    )
    ds.nDropped = dropped
    return ds


def _readCells(path):
    try:
        df = pd.read_csv(path, header=None, dtype=str, keep_default_na=False, encoding="utf-8")
    except FileNotFoundError:
        raise ParseError("File not found", path)
    except pd.errors.EmptyDataError:
        raise ParseError("Empty file", path)
    except pd.errors.ParserError as e:
        match = re.search(r"line (\d+)", str(e))
        raise ParseError("Ragged row", path, row=int(match.group(1)) if match else None)
    # too short rows are padded by pandas
    ragged = df.isna().any(axis=1).to_numpy()
    if ragged.any():
        raise ParseError("Ragged row", path, row=int(np.argmax(ragged)) + 1)
    return df


def load_csv(path, modality_name=None):
    """Loads one modality from a CSV file with header `sample_id,<feature ids...>`.

    :param path: Path of the CSV file
    :type path: str
    :param modality_name: Name of the modality, defaults to the file name without extension
    :type modality_name: str, optional
    :raises ParseError: On ragged rows, non-numeric cells or duplicate ids (with file row/column)
    :return: Loaded table
    :rtype: OmicsTable
    """
    if modality_name is None:
        modality_name = os.path.splitext(os.path.basename(path))[0]
    df = _readCells(path)
    header = df.iloc[0].tolist()
    if header[0] != "sample_id":
        raise ParseError(f"First header cell must be `sample_id`, got `{header[0]}`", path, row=1, column=1)
    featureIds = header[1:]
    seen = set()
    for j, f in enumerate(featureIds):
        if f in seen:
            raise ParseError(f"Duplicate feature id `{f}`", path, row=1, column=j + 2)
        seen.add(f)

    body = df.iloc[1:]
    sampleIds = body.iloc[:, 0].tolist()
    seen = set()
    for r, s in enumerate(sampleIds):
        if s in seen:
            raise ParseError(f"Duplicate sample id `{s}`", path, row=r + 2, column=1)
        seen.add(s)

    matrix = np.zeros((len(sampleIds), len(featureIds)))
    for j in range(len(featureIds)):
        column = body.iloc[:, j + 1]
        values = pd.to_numeric(column, errors="coerce").to_numpy(dtype=np.float64)
        bad = ~np.isfinite(values)
        if bad.any():
            r = int(np.argmax(bad))
            raise ParseError(f"Non-numeric cell `{column.iloc[r]}`", path, row=r + 2, column=j + 2)
        matrix[:, j] = values

    logging.debug(f"Loaded {modality_name}: {matrix.shape[0]} samples x {matrix.shape[1]} features from {path}")
    return OmicsTable(modality_name, sampleIds, featureIds, matrix)


def load_labels(path):
    """Loads a labels CSV with header `sample_id,label` (non-negative integers).

    :rtype: dict[str, int]
    """
    df = _readCells(path)
    if df.shape[1] != 2 or df.iloc[0].tolist() != ["sample_id", "label"]:
        raise ParseError("Labels header must be `sample_id,label`", path, row=1)
    labels = {}
    for r, (s, y) in enumerate(df.iloc[1:].itertuples(index=False)):
        if not re.fullmatch(r"\d+", y.strip()):
            raise ParseError(f"Label `{y}` is not a non-negative integer", path, row=r + 2, column=2)
        if s in labels:
            raise ParseError(f"Duplicate sample id `{s}`", path, row=r + 2, column=1)
        labels[s] = int(y)
    return labels


def write_csv(table, path):
    """Writes a table in the format read by `load_csv`."""
    df = pd.DataFrame(table.matrix, index=pd.Index(table.sample_ids, name="sample_id"), columns=table.feature_ids)
    df.to_csv(path, float_format="%.17g", lineterminator="\n")


def write_labels(labels, path):
    df = pd.DataFrame({"sample_id": list(labels.keys()), "label": list(labels.values())})
    df.to_csv(path, index=False, lineterminator="\n")


def fileHash(path):
    """SHA-256 hex digest of a file's contents."""
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for block in iter(lambda: f.read(1 << 16), b""):
            h.update(block)
    return h.hexdigest()


def manifestHash(path):
    """SHA-256 of a manifest's canonical JSON without its `timestamps` field, so that
    manifests describing the same inputs hash alike whenever they were written.
    """
    manifest = Dataset.readManifest(path)
    manifest.pop("timestamps", None)
    canonical = json.dumps(toJsonable(manifest), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def writeManifest(path, modalityPaths, labelsPath, selection=None, extra=None):
    """Writes a dataset manifest (JSON) that lists the modality CSVs and the label file
    with their hashes. Paths are stored relative to the manifest's directory.

    :param modalityPaths: Modality name -> CSV path
    :type modalityPaths: dict[str, str]
    """
    base = os.path.dirname(os.path.abspath(path))
    manifest = {
        "format_version": paths.CHECKPOINT_FORMAT_VERSION,
        "modalities": [
            {"name": name, "path": os.path.relpath(os.path.abspath(p), base), "sha256": fileHash(p)}
            for name, p in modalityPaths.items()
        ],
        "labels": {"path": os.path.relpath(os.path.abspath(labelsPath), base), "sha256": fileHash(labelsPath)},
        "selection": selection or {},
        "provenance": extra or {},
        "timestamps": {"created": datetime.datetime.now().isoformat(timespec="seconds")},
    }
    with open(path, "w") as f:
        json.dump(toJsonable(manifest), f, indent=2, sort_keys=True)
        f.write("\n")
    return manifest


class Dataset:
    """Dataset class.
    """

    def __init__(self, manifestPath=None, verify=True):
        """
        Load a multi-omics dataset described by a manifest JSON file. The manifest
        lists one CSV per modality and a labels CSV, together with their SHA-256
        hashes which are checked before anything is parsed.

        Loaded data is provided with the class attributes:
        self.manifest: the parsed manifest
        self.tables: one OmicsTable per modality
        self.labels: class index per sample id
        self.data: the aligned MaskedDataset

        :param manifestPath: Path of the manifest, defaults to None (empty dataset)
        :type manifestPath: str, optional
        :param verify: Check file hashes, defaults to True
        :type verify: bool, optional
        """
        self.manifest = None
        if manifestPath:
            self.loadDataset(manifestPath, verify=verify)

    def loadDataset(self, manifestPath, verify=True):
        """Load data into accessible class attributes.

        :raises IntegrityError: If a file hash does not match the manifest
        """
        self.manifestPath = manifestPath
        self.manifest = self.readManifest(manifestPath)
        if verify:
            self.verify()

        logging.info(f"Loading dataset from {manifestPath}.")
        self.tables = [load_csv(self._path(m["path"]), modality_name=m["name"]) for m in self.manifest.modalities]
        self.labels = load_labels(self._path(self.manifest.labels["path"]))
        self.data = align(self.tables, self.labels)
        logging.info(f"Dataset loaded: {self.data}")
        return self.data

    @staticmethod
    def readManifest(manifestPath):
        try:
            with open(manifestPath) as f:
                manifest = dotdict(json.load(f))
        except FileNotFoundError:
            raise ParseError("Manifest not found", manifestPath)
        except json.JSONDecodeError as e:
            raise ParseError(f"Manifest is not valid JSON: {e.msg}", manifestPath, row=e.lineno, column=e.colno)
        for key in ["modalities", "labels"]:
            if key not in manifest:
                raise ParseError(f"Manifest misses `{key}`", manifestPath)
        manifest.labels = dotdict(manifest.labels)
        return manifest

    def _path(self, relative):
        return os.path.join(os.path.dirname(os.path.abspath(self.manifestPath)), relative)

    def inputHashes(self):
        hashes = {m["name"]: m["sha256"] for m in self.manifest.modalities}
        hashes["labels"] = self.manifest.labels["sha256"]
        return hashes

    def verify(self):
        """Compares every listed file against its recorded hash."""
        entries = [(m["path"], m.get("sha256")) for m in self.manifest.modalities]
        entries.append((self.manifest.labels["path"], self.manifest.labels.get("sha256")))
        for relative, expected in entries:
            path = self._path(relative)
            if not os.path.exists(path):
                raise IntegrityError(f"Input {path} listed in the manifest does not exist.")
            actual = fileHash(path)
            if expected is not None and actual != expected:
                raise IntegrityError(f"Hash mismatch for {path}: manifest {expected[:12]}..., file {actual[:12]}...")
        logging.debug("All manifest hashes verified.")
