from .exploration import AblationSuite, RepeatedRuns, ablationConditions, ablation_suite, run_repeated
