from .training import RunResult, evaluate, pretrain, resolveConfig, runSingle, train
