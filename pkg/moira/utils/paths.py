"""
This file is a configuration file that contains default directories for saving data
"""
import os

RESULTS_DIR = "./data/results/"
DATASETS_DIR = "./data/datasets/"

LOGGING_CONFIG = os.path.join(os.path.dirname(__file__), "moira_logging.ini")
LOG_LEVEL_ENV = "MOIRA_LOG"

CHECKPOINT_FORMAT_VERSION = "1"
