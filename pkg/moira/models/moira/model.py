import numpy as np

from . import loadDefaultParams as dp
from ..model import Model
from ...numerics import Tape, Var
from ...utils.collections import dotdict
from ...utils.exceptions import ConfigError, DimensionError
from ...utils.seeding import rngFor

GATES = ["linear_head", "scalar"]


def encoderWeights(m):
    return [f"enc.{m}.W1", f"enc.{m}.b1", f"enc.{m}.W2", f"enc.{m}.b2"]


def decoderWeights(m):
    return [f"dec.{m}.W1", f"dec.{m}.b1", f"dec.{m}.W2", f"dec.{m}.b2"]


def gateWeights(m):
    return [f"gate.{m}.u", f"gate.{m}.c"]


PREDICTOR_WEIGHTS = ["pred.W1", "pred.b1", "pred.W2", "pred.b2"]


def glorot(rng, fanIn, fanOut):
    limit = np.sqrt(6.0 / (fanIn + fanOut))
    return rng.uniform(-limit, limit, size=(fanIn, fanOut))


class MOIRAModel(Model):
    """
    Multi-omics classifier for incomplete samples. Every modality has its own
    encoder; a gate weighs the embeddings of the modalities a sample actually has and
    a shared predictor classifies the weighted sum. Decoders mirror the encoders and
    are only used for reconstruction pretraining.
    """

    name = "moira"
    description = "Gated multi-omics integration with missing modalities"

    def __init__(self, params=None, inputDims=None, n_classes=2, seed=0):
        # load default parameters if none were given
        if params is None:
            params = dp.loadDefaultParams(inputDims=inputDims, n_classes=n_classes, seed=seed)

        # Initialize base class Model
        super().__init__(params=params)

    # ------------------------------------------------------------------------
    # configuration

    @property
    def modalities(self):
        return list(self.params.modalities)

    @property
    def embedDim(self):
        return int(self.params.embed_dim)

    @property
    def hiddenDim(self):
        return int(self.params.hidden_dim or self.params.embed_dim)

    @property
    def predictorHiddenDim(self):
        return int(self.params.predictor_hidden_dim or self.params.embed_dim)

    def validateParams(self):
        p = self.params
        if not p.modalities:
            raise ConfigError("modalities", "at least one modality is required")
        if len(set(p.modalities)) != len(p.modalities):
            raise ConfigError("modalities", "modality names must be unique")
        for m in p.modalities:
            if m not in p.input_dims or int(p.input_dims[m]) < 1:
                raise ConfigError(f"input_dims.{m}", "every modality needs an input dimension >= 1")
        if int(p.embed_dim) < 1:
            raise ConfigError("embed_dim", "must be at least 1")
        for field in ["hidden_dim", "predictor_hidden_dim"]:
            if p[field] is not None and int(p[field]) < 1:
                raise ConfigError(field, "must be at least 1 or None")
        if not 0 <= p.dropout < 1:
            raise ConfigError("dropout", "must be in [0, 1)")
        if int(p.n_classes) < 2:
            raise ConfigError("n_classes", "must be at least 2")
        if not 0 <= p.leaky_slope < 1:
            raise ConfigError("leaky_slope", "must be in [0, 1)")
        if p.gate not in GATES:
            raise ConfigError("gate", f"must be one of {GATES}")

    # ------------------------------------------------------------------------
    # weights

    def weightShapes(self):
        d, h, hp, C = self.embedDim, self.hiddenDim, self.predictorHiddenDim, int(self.params.n_classes)
        shapes = {}
        for m in self.modalities:
            p = int(self.params.input_dims[m])
            shapes.update(zip(encoderWeights(m), [(p, h), (1, h), (h, d), (1, d)]))
            shapes.update(zip(decoderWeights(m), [(d, h), (1, h), (h, p), (1, p)]))
            shapes.update(zip(gateWeights(m), [(d, 1), (1, 1)]))
        shapes.update(zip(PREDICTOR_WEIGHTS, [(d, hp), (1, hp), (hp, C), (1, C)]))
        return shapes

    def initializeWeights(self):
        """Glorot-uniform matrices and zero biases. Every modality draws from its own
        stream keyed by its name, so its initial weights do not depend on the other
        modalities.
        """
        shapes = self.weightShapes()
        seed = self.params.seed
        for m in self.modalities:
            rng = rngFor(seed, "init", m)
            for name in encoderWeights(m) + decoderWeights(m) + gateWeights(m):
                self.weights[name] = self._initial(rng, name, shapes[name])
        rng = rngFor(seed, "init", "predictor")
        for name in PREDICTOR_WEIGHTS:
            self.weights[name] = self._initial(rng, name, shapes[name])

    @staticmethod
    def _initial(rng, name, shape):
        if name.rsplit(".", 1)[-1] in ("W1", "W2", "u"):
            return glorot(rng, *shape)
        return np.zeros(shape)

    def modalityWeights(self, m):
        """Names of all weights that belong to modality m."""
        return encoderWeights(m) + decoderWeights(m) + gateWeights(m)

    def bind(self, tape, names=None):
        """Records the weights as leaves of `tape`.

        :return: Leaf nodes by weight name
        :rtype: dict[str, Var]
        """
        names = names or list(self.weights)
        return {n: tape.leaf(self.weights[n]) for n in names}

    # ------------------------------------------------------------------------
    # building blocks on a tape

    def _checkWidth(self, x, expected, what):
        if x.shape[1] != expected:
            raise DimensionError(f"{what} width mismatch", x.shape, (x.shape[0], expected))

    def _mlp(self, tape, x, W1, b1, W2, b2, p, training, rng):
        slope = self.params.leaky_slope
        h = tape.dropout(tape.leaky_relu(tape.add(tape.matmul(x, W1), b1), slope), p, training, rng)
        return tape.add(tape.matmul(h, W2), b2)

    def encodeTape(self, tape, W, m, x, training=False, rng=None):
        x = tape._var(x)
        self._checkWidth(x, int(self.params.input_dims[m]), f"Encoder input of {m}")
        W1, b1, W2, b2 = [W[n] for n in encoderWeights(m)]
        p = self.params.dropout
        z = self._mlp(tape, x, W1, b1, W2, b2, p, training, rng)
        return tape.dropout(tape.leaky_relu(z, self.params.leaky_slope), p, training, rng)

    def decodeTape(self, tape, W, m, z):
        z = tape._var(z)
        self._checkWidth(z, self.embedDim, f"Decoder input of {m}")
        W1, b1, W2, b2 = [W[n] for n in decoderWeights(m)]
        return self._mlp(tape, z, W1, b1, W2, b2, 0.0, False, None)

    def predictLogitsTape(self, tape, W, z, training=False, rng=None):
        z = tape._var(z)
        self._checkWidth(z, self.embedDim, "Predictor input")
        V1, a1, V2, a2 = [W[n] for n in PREDICTOR_WEIGHTS]
        return self._mlp(tape, z, V1, a1, V2, a2, self.params.dropout, training, rng)

    def gateScoresTape(self, tape, W, embeddings, rows, n_samples):
        """Scores of every (sample, modality) as an N x M matrix; absent entries are 0
        and get masked by the softmax.
        """
        M = len(self.modalities)
        S = None
        for j, m in enumerate(self.modalities):
            if m not in embeddings:
                continue
            z = embeddings[m]
            u, c = W[f"gate.{m}.u"], W[f"gate.{m}.c"]
            if self.params.gate == "linear_head":
                s = tape.add(tape.matmul(z, u), c)
            else:
                s = tape.add(np.zeros((z.shape[0], 1)), c)
            column = np.zeros((1, M))
            column[0, j] = 1.0
            placed = tape.matmul(tape.scatter_rows(s, rows[m], n_samples), column)
            S = placed if S is None else tape.add(S, placed)
        if S is None:
            S = tape.leaf(np.zeros((n_samples, M)))
        return S

    def aggregateTape(self, tape, alpha, embeddings, rows, n_samples):
        M = len(self.modalities)
        zagg = None
        for j, m in enumerate(self.modalities):
            if m not in embeddings:
                continue
            pickColumn = np.zeros((M, 1))
            pickColumn[j, 0] = 1.0
            weighted = tape.mul(tape.matmul(alpha, pickColumn), tape.scatter_rows(embeddings[m], rows[m], n_samples))
            zagg = weighted if zagg is None else tape.add(zagg, weighted)
        return zagg

    def forwardTape(self, tape, W, inputs, presence, training=False, rngs=None):
        """Full forward pass of a batch on `tape`.

        :param W: Weight nodes, see `bind()`
        :type W: dict[str, Var]
        :param inputs: Samples x features matrix (array or node) per modality; rows of
            absent modalities are never read
        :type inputs: dict
        :param presence: Samples x modalities boolean matrix
        :type presence: numpy.ndarray
        :param rngs: Dropout generators by modality name and "predictor"
        :type rngs: dict, optional
        :return: Nodes of embeddings, rows, alpha, aggregate, logits, probs, modalityLogits, modalityProbs
        :rtype: dotdict
        """
        presence = np.asarray(presence, dtype=bool)
        N = presence.shape[0]
        if presence.ndim != 2 or presence.shape[1] != len(self.modalities):
            raise DimensionError("Presence needs one column per modality", presence.shape, (N, len(self.modalities)))
        rngs = rngs or {}

        embeddings, rows = {}, {}
        for j, m in enumerate(self.modalities):
            r = np.flatnonzero(presence[:, j])
            rows[m] = r
            if len(r) == 0:
                continue
            x = tape.gather_rows(inputs[m], r)
            embeddings[m] = self.encodeTape(tape, W, m, x, training, rngs.get(m))

        S = self.gateScoresTape(tape, W, embeddings, rows, N)
        alpha = tape.row_softmax(S, mask=presence)
        zagg = self.aggregateTape(tape, alpha, embeddings, rows, N)

        logits = self.predictLogitsTape(tape, W, zagg, training, rngs.get("predictor"))
        out = dotdict(
            {
                "embeddings": embeddings,
                "rows": rows,
                "alpha": alpha,
                "aggregate": zagg,
                "logits": logits,
                "probs": tape.row_softmax(logits),
                "modalityLogits": {},
                "modalityProbs": {},
            }
        )
        # the predictor is shared by the aggregate and every modality embedding
        for m, z in embeddings.items():
            out.modalityLogits[m] = self.predictLogitsTape(tape, W, z, training, rngs.get("predictor"))
            out.modalityProbs[m] = tape.row_softmax(out.modalityLogits[m])
        return out

    # ------------------------------------------------------------------------
    # array interface

    def _constants(self, tape):
        return self.bind(tape)

    def encode(self, m, x, training=False, rng=None):
        """Embedding (rows x d) of modality `m` for the feature rows `x`."""
        tape = Tape()
        return self.encodeTape(tape, self._constants(tape), m, x, training, rng).value

    def gate(self, embeddings, presence):
        """Gate weights alpha (samples x modalities) from the embeddings of the present
        (sample, modality) pairs, in sample order per modality.

        :raises EmptySupportError: If a sample has no present modality
        """
        presence = np.asarray(presence, dtype=bool).reshape(-1, len(self.modalities))
        tape = Tape()
        W = self._constants(tape)
        rows = {m: np.flatnonzero(presence[:, j]) for j, m in enumerate(self.modalities)}
        nodes = {m: tape.leaf(z) for m, z in embeddings.items() if len(rows[m]) > 0}
        S = self.gateScoresTape(tape, W, nodes, rows, presence.shape[0])
        return tape.row_softmax(S, mask=presence).value

    def aggregate(self, embeddings, alpha, presence):
        """Weighted sum of the present embeddings with gate weights `alpha`."""
        presence = np.asarray(presence, dtype=bool).reshape(-1, len(self.modalities))
        tape = Tape()
        rows = {m: np.flatnonzero(presence[:, j]) for j, m in enumerate(self.modalities)}
        nodes = {m: tape.leaf(z) for m, z in embeddings.items() if len(rows[m]) > 0}
        return self.aggregateTape(tape, tape.leaf(alpha), nodes, rows, presence.shape[0]).value

    def predict(self, z, training=False, rng=None):
        """Class probabilities of embeddings `z` (rows x d)."""
        tape = Tape()
        logits = self.predictLogitsTape(tape, self._constants(tape), z, training, rng)
        return tape.row_softmax(logits).value

    def decode(self, m, z):
        """Reconstruction (rows x input_dim of m) of embeddings `z`."""
        tape = Tape()
        return self.decodeTape(tape, self._constants(tape), m, z).value

    def forward(self, inputs, presence, training=False, rngs=None):
        """Forward pass returning plain arrays, see `forwardTape()`."""
        tape = Tape()
        out = self.forwardTape(tape, self._constants(tape), inputs, presence, training, rngs)
        return _values(out)

    def forwardDataset(self, data, training=False, rngs=None):
        self.checkModalities(data)
        return self.forward(data.matrices, data.presence, training, rngs)

    def predictProba(self, data):
        return self.forwardDataset(data).probs

    def checkModalities(self, data):
        if list(data.modalities) != self.modalities:
            raise ConfigError("modalities", f"dataset has {data.modalities}, model expects {self.modalities}")
        for m in self.modalities:
            if len(data.feature_ids[m]) != int(self.params.input_dims[m]):
                raise DimensionError(
                    f"Features of {m} do not fit the model", (len(data.feature_ids[m]),), (self.params.input_dims[m],)
                )


def _values(out):
    def value(x):
        if isinstance(x, Var):
            return x.value
        if isinstance(x, dict):
            return {k: value(v) for k, v in x.items()}
        return x

    return dotdict({k: value(v) for k, v in out.items()})
