from ...models.moira import objective
from ...utils.collections import dotdict


def loadDefaultParams(seed=0):
    """Load default parameters of a training run

    :param seed: Seed of initialization and dropout, defaults to 0
    :type seed: int, optional

    :return: TrainConfig
    :rtype: dict
    """
    params = dotdict({})

    params.seed = seed  # varies between repeated runs
    params.split_seed = 0  # fixed across repeated runs, the split stays the same

    # ------------------------------------------------------------------------
    # data
    # ------------------------------------------------------------------------
    params.test_fraction = 0.3
    params.stratified = True
    params.top_k = 200  # ANOVA-selected features per modality, None: keep all
    params.silenced_modalities = []  # removed from every sample's modality set
    params.modalities = None  # restrict the run to these modalities, None: all
    params.intersection = False  # train only on samples having all of `modalities` (all modalities if None)
    params.trimodal = None  # modalities of the trimodal ablation rows, None: the first three

    # ------------------------------------------------------------------------
    # optimization
    # ------------------------------------------------------------------------
    params.lr = 1e-4
    params.weight_decay = 1e-3
    params.decoupled_weight_decay = False  # False: L2 term in the gradient, True: AdamW
    params.epochs = 200
    params.batch_mode = "full"  # every epoch is one step on the whole training split

    # ------------------------------------------------------------------------
    # reconstruction pretraining of encoders and decoders
    # ------------------------------------------------------------------------
    params.pretrain = True
    params.pretrain_patience = 30
    params.pretrain_max_epochs = 2000
    params.pretrain_val_fraction = 0.1
    params.pretrain_tolerance = 1e-6  # minimal absolute improvement of the validation MSE
    params.pretrain_min_samples = 10  # modalities with fewer present samples are not pretrained

    params.progress = True  # tqdm progress bars

    params.objective = objective.loadDefaultParams()
    return params
