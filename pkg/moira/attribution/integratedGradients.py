"""
Integrated gradients of a class logit with respect to the features of one modality.
"""
import numpy as np

from ..numerics import Tape
from ..utils.exceptions import ContractError


class AttributionResult:
    """Attributions of one sample's features in one modality."""

    def __init__(self, sample_id, modality_name, attribution, baseline, steps, target_class, delta):
        self.sample_id = sample_id
        self.modality_name = modality_name
        self.attribution = np.asarray(attribution, dtype=np.float64)
        self.baseline = np.asarray(baseline, dtype=np.float64)
        self.steps = int(steps)
        self.target_class = int(target_class)
        # F(x) - F(baseline)
        self.delta = float(delta)
        self.completeness_gap = float(abs(self.attribution.sum() - self.delta))

    def __repr__(self):
        return (
            f"AttributionResult({self.sample_id}, {self.modality_name}, {len(self.attribution)} features, "
            f"gap={self.completeness_gap:.2e})"
        )


def _targetLogits(model, inputs, presence, target_class, tape=None):
    tape = tape or Tape()
    out = model.forwardTape(tape, model.bind(tape), inputs, presence, training=False)
    return tape, tape.pick(out.logits, np.full(presence.shape[0], target_class))


def integrated_gradients(model, data, sample, modality, target_class, steps=128, baseline=None):
    """Integrated gradients of the pre-softmax logit of `target_class` at the aggregate
    predictor output with respect to the features of `modality`, approximated by a
    right Riemann sum over `steps` points of the straight path from `baseline` to the
    sample. All other present modalities keep their actual values; dropout is off.

    :param model: Trained model
    :type model: MOIRAModel
    :param data: Dataset holding the sample (in the model's feature space)
    :type data: MaskedDataset
    :param sample: Row index of the sample
    :type sample: int
    :param modality: Modality to attribute
    :type modality: str
    :param target_class: Class whose logit is explained
    :type target_class: int
    :param steps: Number of path points S, defaults to 128
    :type steps: int, optional
    :param baseline: Baseline features, defaults to zeros (the training mean after standardization)
    :type baseline: numpy.ndarray, optional
    :raises ContractError: If the modality is absent for the sample
    :rtype: AttributionResult
    """
    if int(steps) < 1:
        raise ContractError("Integrated gradients need at least one step.")
    if not 0 <= int(target_class) < int(model.params.n_classes):
        raise ContractError(f"Target class {target_class} does not exist.")
    model.checkModalities(data)
    j = data.modalityIndex(modality)
    if not data.presence[sample, j]:
        raise ContractError(f"Modality {modality} is absent for sample {data.sample_ids[sample]}.")

    x = data.matrices[modality][sample]
    baseline = np.zeros_like(x) if baseline is None else np.asarray(baseline, dtype=np.float64).ravel()
    if baseline.shape != x.shape:
        raise ContractError(f"Baseline has {baseline.size} features, {modality} has {x.size}.")

    S = int(steps)
    alphas = np.arange(1, S + 1, dtype=np.float64).reshape(-1, 1) / S
    presence = np.repeat(data.presence[sample : sample + 1], S + 1, axis=0)
    inputs = {m: np.repeat(data.matrices[m][sample : sample + 1], S + 1, axis=0) for m in data.modalities}

    # rows 0..S-1: path points, row S: the baseline itself
    tape = Tape()
    path = tape.leaf(np.vstack([baseline + alphas * (x - baseline), baseline]))
    inputs[modality] = path
    _, F = _targetLogits(model, inputs, presence, target_class, tape)
    onPath = np.zeros((S + 1, 1))
    onPath[:S] = 1.0
    tape.backward(tape.sum(tape.mul(F, onPath)))
    grads = tape.grad(path)[:S]

    attribution = (x - baseline) * grads.mean(axis=0)
    delta = F.value[S - 1, 0] - F.value[S, 0]
    return AttributionResult(data.sample_ids[sample], modality, attribution, baseline, S, target_class, delta)


def attributeSamples(model, data, samples, modality, target_class, steps=128, baseline=None):
    """Integrated gradients for several samples.

    :return: Attributions (samples x features) and the completeness gap of every sample
    :rtype: (numpy.ndarray, numpy.ndarray)
    """
    results = [integrated_gradients(model, data, i, modality, target_class, steps, baseline) for i in samples]
    nFeatures = len(data.feature_ids[modality])
    if not results:
        return np.zeros((0, nFeatures)), np.zeros(0)
    return np.vstack([r.attribution for r in results]), np.array([r.completeness_gap for r in results])
