"""
MetaNulling - Few-Shot Meta-Learning with Linear Nulling
Core modules: numeric kernels, the nulling head, episodic training and evaluation.
"""

__version__ = "1.0.0"
__author__ = "MetaNulling Team"

from .errors import (MLNError, DimensionError, DegenerateInputError, LabelError, ConfigError,
                     DatasetError, DatasetFormatError, DatasetExhaustedError, CheckpointError,
                     ChecksumError, VersionMismatchError, DivergenceError)
from .numeric import RngStream
from .nulling_head import HeadConfig, ReferenceBank
from .embedding import EmbeddingConfig, EmbeddingParams
from .episodes import DatasetSpec, Episode, EpisodeSampler
from .config_manager import ConfigManager, TrainConfig
from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .checkpoint import describe as describe_checkpoint
from .evaluator import (EvalReport, FewShotEvaluator, inspect_projector,
                        nearest_class_mean_accuracy, select_references)
from .trainer import MetaTrainer, episode_loss, train_loop, write_metrics_csv
from .platform_utils import PlatformUtils

__all__ = [
    'MLNError', 'DimensionError', 'DegenerateInputError', 'LabelError', 'ConfigError',
    'DatasetError', 'DatasetFormatError', 'DatasetExhaustedError', 'CheckpointError',
    'ChecksumError', 'VersionMismatchError', 'DivergenceError',
    'RngStream',
    'HeadConfig', 'ReferenceBank',
    'EmbeddingConfig', 'EmbeddingParams',
    'DatasetSpec', 'Episode', 'EpisodeSampler',
    'ConfigManager', 'TrainConfig',
    'Checkpoint', 'load_checkpoint', 'save_checkpoint', 'describe_checkpoint',
    'EvalReport', 'FewShotEvaluator', 'inspect_projector', 'nearest_class_mean_accuracy',
    'select_references',
    'MetaTrainer', 'episode_loss', 'train_loop', 'write_metrics_csv',
    'PlatformUtils',
]
