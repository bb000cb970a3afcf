from ...utils.collections import dotdict


def loadDefaultParams(inputDims=None, n_classes=2, seed=0):
    """Load default parameters of the MOIRA network

    :param inputDims: Number of input features per modality, in modality order, defaults to None (no modality yet)
    :type inputDims: dict[str, int], optional
    :param n_classes: Number of classes, defaults to 2
    :type n_classes: int, optional
    :param seed: Seed of the weight initialization, defaults to 0
    :type seed: int, optional

    :return: A dictionary with the default parameters of the model
    :rtype: dict
    """
    params = dotdict({})

    params.seed = seed  # seed of the "init" random stream

    # ------------------------------------------------------------------------
    # modalities
    # ------------------------------------------------------------------------
    inputDims = dict(inputDims or {})
    params.modalities = list(inputDims)  # modality order
    params.input_dims = dotdict({m: int(p) for m, p in inputDims.items()})
    params.n_classes = n_classes

    # ------------------------------------------------------------------------
    # architecture
    # ------------------------------------------------------------------------
    params.embed_dim = 300  # d, width of every modality embedding
    params.hidden_dim = None  # encoder/decoder hidden width, None: embed_dim
    params.predictor_hidden_dim = None  # hidden width of the shared predictor, None: embed_dim
    params.dropout = 0.5  # dropout probability in encoders and predictor
    params.leaky_slope = 0.01  # negative slope of every LeakyReLU

    # gate score of modality m: "linear_head" u_m.z + c_m, "scalar" c_m only
    params.gate = "linear_head"

    return params
