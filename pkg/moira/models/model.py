import json
import logging

import numpy as np

from ..utils import paths
from ..utils.collections import dotdict, toJsonable
from ..utils.exceptions import DimensionError, NumericalError, ParseError


class Model:
    """The Model superclass holds the configuration and the weights of a network and
    reads and writes checkpoints.
    """

    def __init__(self, params):
        if hasattr(self, "name"):
            if self.name is not None:
                assert isinstance(self.name, str), f"Model name is not a string."

        assert isinstance(params, dict), "Parameters must be a dictionary."
        self.params = dotdict(params)
        self.validateParams()

        # weights by name, see `weightShapes()`
        self.weights = dotdict({})
        self.initializeWeights()
        self.checkWeights()

        logging.info(f"{self.name}: Model initialized.")

    def validateParams(self):
        """Overload to check `self.params`, raising a ConfigError on invalid values."""

    def weightShapes(self):
        """Name and shape of every weight array of the model.

        :rtype: dict[str, tuple]
        """
        raise NotImplementedError

    def initializeWeights(self):
        raise NotImplementedError

    def checkWeights(self):
        """Checks that every weight exists with the right shape and is finite."""
        shapes = self.weightShapes()
        missing = set(shapes) - set(self.weights)
        assert not missing, f"Weights {sorted(missing)} are not initialized."
        for name, shape in shapes.items():
            if self.weights[name].shape != tuple(shape):
                raise DimensionError(f"Weight `{name}` has the wrong shape", self.weights[name].shape, shape)
            if not np.all(np.isfinite(self.weights[name])):
                logging.error(f"{self.name}: non-finite values in weight `{name}`!")
                raise NumericalError(f"Weight `{name}` contains non-finite values.")

    def getWeights(self):
        """Returns a copy of all weights."""
        return dotdict({k: v.copy() for k, v in self.weights.items()})

    def setWeights(self, weights, strict=True):
        """Replaces weights by (copies of) the given arrays.

        :param weights: Arrays by name
        :type weights: dict
        :param strict: All names must be known, defaults to True
        :type strict: bool, optional
        """
        shapes = self.weightShapes()
        for name, value in weights.items():
            if name not in shapes:
                if strict:
                    raise KeyError(f"Unknown weight `{name}` for model {self.name}.")
                continue
            value = np.array(value, dtype=np.float64, ndmin=2)
            if value.shape != tuple(shapes[name]):
                raise DimensionError(f"Weight `{name}` has the wrong shape", value.shape, shapes[name])
            self.weights[name] = value
        self.checkWeights()

    def predictProba(self, data):
        """Class probabilities (samples x classes) in evaluation mode."""
        raise NotImplementedError

    def save(self, path, provenance=None):
        """Writes config and weights to a JSON checkpoint.

        :param path: Output file
        :type path: str
        :param provenance: Extra information stored with the checkpoint (seeds, input hashes)
        :type provenance: dict, optional
        """
        checkpoint = {
            "format_version": paths.CHECKPOINT_FORMAT_VERSION,
            "model": self.name,
            "config": self.params,
            "weights": {k: self.weights[k] for k in sorted(self.weights)},
            "provenance": provenance or {},
        }
        with open(path, "w") as f:
            json.dump(toJsonable(checkpoint), f)
        logging.info(f"{self.name}: checkpoint saved to {path}")

    @classmethod
    def load(cls, path):
        """Reads a checkpoint written by `save()`."""
        try:
            with open(path) as f:
                checkpoint = json.load(f)
        except FileNotFoundError:
            raise ParseError("Checkpoint not found", path)
        except json.JSONDecodeError as e:
            raise ParseError(f"Checkpoint is not valid JSON: {e.msg}", path, row=e.lineno, column=e.colno)
        version = checkpoint.get("format_version")
        if version != paths.CHECKPOINT_FORMAT_VERSION:
            raise ParseError(f"Unsupported checkpoint format version `{version}`", path)
        if checkpoint.get("model") != cls.name:
            raise ParseError(f"Checkpoint holds a `{checkpoint.get('model')}` model, not `{cls.name}`", path)
        model = cls(params=checkpoint["config"])
        model.setWeights(checkpoint["weights"])
        model.provenance = dotdict(checkpoint.get("provenance", {}))
        return model
