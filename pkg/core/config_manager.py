"""
Configuration manager for the meta-nulling toolkit.
Loads INI configuration (sections DATASET, MODEL, TRAIN, EVAL, LOGGING),
named presets, command line overrides and the MLN_SEED environment variable.
"""

import json
import logging
import os
from configparser import ConfigParser
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional

from .embedding import EmbeddingConfig
from .episodes import SOURCES, DatasetSpec
from .errors import ConfigError, DatasetError
from .nulling_head import GRADIENT_MODES, LOGIT_MODES, HeadConfig
from .platform_utils import PlatformUtils

logger = logging.getLogger(__name__)

SEED_ENV_VAR = 'MLN_SEED'
PRESETS_FILE = Path(__file__).resolve().parent.parent / 'config' / 'presets.json'


@dataclass
class DatasetConfig:
    """Dataset section; ``split`` is 'train,val,test' class counts for file sources."""
    source: str = 'gaussian-synthetic'
    path: str = ''
    height: int = 28
    width: int = 28
    split: str = ''
    rotate: bool = False
    synthetic_dim: int = 16
    synthetic_sigma: float = 0.3

    def to_spec(self) -> DatasetSpec:
        counts = None
        if self.split.strip():
            try:
                counts = tuple(int(v) for v in self.split.split(','))
            except ValueError as e:
                raise ConfigError(f"[DATASET] split must be 'train,val,test' counts, got '{self.split}'") from e
            if len(counts) != 3:
                raise ConfigError(f"[DATASET] split needs three counts, got '{self.split}'")
        return DatasetSpec(source=self.source, path=self.path or None,
                           image_shape=(self.height, self.width), split_counts=counts,
                           rotate=self.rotate, synthetic_dim=self.synthetic_dim,
                           synthetic_sigma=self.synthetic_sigma)

    @property
    def input_dim(self) -> int:
        if self.source == 'gaussian-synthetic':
            return self.synthetic_dim
        return self.height * self.width


@dataclass
class ModelConfig:
    """Embedding layout and reference bank size."""
    widths: List[int] = field(default_factory=lambda: [64, 32])
    n_ref: int = 20
    normalize: bool = True
    tol: float = 1e-8
    eps: float = 1e-12
    seed: int = 0


@dataclass
class TrainConfig:
    """Episodic training schedule.

    ``queries`` defaults to 5 per class; the training query count is not fixed
    by the method, this mirrors the usual Omniglot test protocol.
    """
    episodes: int = 2000
    way: int = 20
    shots: int = 1
    queries: int = 5
    learning_rate: float = 1e-2
    decay_factor: float = 0.5
    decay_interval: int = 2000
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    logit_mode: str = 'projected-euclidean'
    gradient_mode: str = 'stop-gradient-projector'
    support_mode: str = 'fixed'
    val_interval: int = 0
    val_episodes: int = 100
    val_way: int = 5
    seed: int = 0


@dataclass
class EvalConfig:
    way: int = 5
    shots: int = 1
    queries: int = 15
    episodes: int = 1000
    split: str = 'test'
    workers: str = '1'
    seed: int = 1


@dataclass
class LoggingConfig:
    """Logging configuration."""
    level: str = 'INFO'
    file: Optional[str] = None
    max_size: int = 10485760  # 10MB
    backup_count: int = 5
    console_output: bool = True


SECTIONS = ('DATASET', 'MODEL', 'TRAIN', 'EVAL', 'LOGGING')
SUPPORT_MODES = ('fixed', 'incremental')


def _parse_bool(value: str) -> bool:
    lowered = value.strip().lower()
    if lowered in ('1', 'true', 'yes', 'on'):
        return True
    if lowered in ('0', 'false', 'no', 'off'):
        return False
    raise ValueError(f"not a boolean: '{value}'")


def _coerce(current: Any, value: str) -> Any:
    """Convert an INI string to the type of the field's current value."""
    if isinstance(current, bool):
        return _parse_bool(value)
    if isinstance(current, int):
        return int(value)
    if isinstance(current, float):
        return float(value)
    if isinstance(current, list):
        return [int(v) for v in value.split(',') if v.strip()]
    return value.strip()


def _format(value: Any) -> str:
    if isinstance(value, list):
        return ','.join(str(v) for v in value)
    return '' if value is None else str(value)


class ConfigManager:
    """Manages configuration for training, evaluation and inspection runs."""

    def __init__(self, config_file: Optional[str] = None, preset: Optional[str] = None):
        self.platform_utils = PlatformUtils()
        self.config_file = self._resolve_config_file(config_file)

        self.dataset_config = DatasetConfig()
        self.model_config = ModelConfig()
        self.train_config = TrainConfig()
        self.eval_config = EvalConfig()
        self.logging_config = LoggingConfig()

        self._load_default_config()
        if preset:
            self.apply_preset(preset)
        if self.config_file and self.config_file.exists():
            self._load_config_file()
        elif config_file:
            raise ConfigError(f"Config file not found: {config_file}")
        self._apply_env()

    def _sections(self) -> Dict[str, Any]:
        return {
            'DATASET': self.dataset_config,
            'MODEL': self.model_config,
            'TRAIN': self.train_config,
            'EVAL': self.eval_config,
            'LOGGING': self.logging_config,
        }

    def _resolve_config_file(self, config_file: Optional[str]) -> Optional[Path]:
        """Resolve configuration file path."""
        if config_file:
            return self.platform_utils.normalize_path(config_file)

        possible_configs = [
            Path.cwd() / 'config' / 'config.ini',
            Path.cwd() / 'config.ini',
            Path.home() / '.meta_nulling' / 'config.ini'
        ]
        for config_path in possible_configs:
            if config_path.exists():
                return config_path
        return None

    def _load_default_config(self):
        self.logging_config.file = str(Path.cwd() / 'logs' / 'meta_nulling.log')

    def _set(self, section: str, key: str, value: str):
        target = self._sections().get(section.upper())
        if target is None:
            raise ConfigError(f"Unknown config section [{section}]")
        if key not in {f.name for f in fields(target)}:
            raise ConfigError(f"Unknown key '{key}' in section [{section.upper()}]")
        try:
            setattr(target, key, _coerce(getattr(target, key), value))
        except ValueError as e:
            raise ConfigError(f"[{section.upper()}] {key}: {e}") from e

    def _apply_mapping(self, values: Dict[str, Dict[str, Any]]):
        for section, entries in values.items():
            for key, value in entries.items():
                self._set(section, key, _format(value))

    def _load_config_file(self):
        """Load configuration from file."""
        parser = ConfigParser()
        try:
            parser.read(self.config_file, encoding='utf-8')
        except Exception as e:
            raise ConfigError(f"Failed to parse config file {self.config_file}: {e}") from e

        for section in parser.sections():
            if section.upper() not in SECTIONS:
                logger.warning("Ignoring unknown config section [%s]", section)
                continue
            for key, value in parser[section].items():
                self._set(section, key, value)

        if self.logging_config.file:
            self.logging_config.file = str(self.platform_utils.normalize_path(self.logging_config.file))
        logger.debug("Loaded configuration from %s", self.config_file)

    def _apply_env(self):
        seed = os.environ.get(SEED_ENV_VAR)
        if seed is None or not seed.strip():
            return
        try:
            value = int(seed)
        except ValueError as e:
            raise ConfigError(f"{SEED_ENV_VAR} must be an integer, got '{seed}'") from e
        self.train_config.seed = value
        self.eval_config.seed = value

    @staticmethod
    def load_presets() -> Dict[str, Dict[str, Any]]:
        if not PRESETS_FILE.exists():
            return {}
        with open(PRESETS_FILE, 'r', encoding='utf-8') as f:
            return json.load(f).get('presets', {})

    def apply_preset(self, name: str):
        presets = self.load_presets()
        if name not in presets:
            raise ConfigError(f"Unknown preset '{name}'. Available: {sorted(presets)}")
        self._apply_mapping({k: v for k, v in presets[name].items() if k.upper() in SECTIONS})

    def apply_overrides(self, overrides: Iterable[str]):
        """Apply ``SECTION.key=value`` strings."""
        for item in overrides or []:
            target, sep, value = item.partition('=')
            section, dot, key = target.partition('.')
            if not sep or not dot:
                raise ConfigError(f"Override must look like SECTION.key=value, got '{item}'")
            self._set(section.strip(), key.strip(), value)

    def update_from_args(self, args):
        """Update configuration from command line arguments."""
        if getattr(args, 'overrides', None):
            self.apply_overrides(args.overrides)

        if getattr(args, 'way', None):
            self.eval_config.way = args.way
        if getattr(args, 'shots', None):
            self.eval_config.shots = args.shots
        if getattr(args, 'queries', None):
            self.eval_config.queries = args.queries
        if getattr(args, 'episodes', None) is not None:
            if getattr(args, 'command', None) == 'train':
                self.train_config.episodes = args.episodes
            else:
                self.eval_config.episodes = args.episodes
        if getattr(args, 'workers', None):
            self.eval_config.workers = str(args.workers)
        if getattr(args, 'seed', None) is not None:
            self.train_config.seed = args.seed
            self.eval_config.seed = args.seed

        if getattr(args, 'verbose', False):
            self.logging_config.level = 'DEBUG'
        if getattr(args, 'quiet', False):
            self.logging_config.console_output = False

        # the environment wins over files and flags
        self._apply_env()

    def embedding_config(self) -> EmbeddingConfig:
        return EmbeddingConfig(input_dim=self.dataset_config.input_dim,
                               widths=list(self.model_config.widths),
                               seed=self.model_config.seed)

    def head_config(self) -> HeadConfig:
        return HeadConfig(dim=self.model_config.widths[-1], n_ref=self.model_config.n_ref,
                          logit_mode=self.train_config.logit_mode,
                          gradient_mode=self.train_config.gradient_mode,
                          normalize=self.model_config.normalize, tol=self.model_config.tol,
                          eps=self.model_config.eps)

    def dataset_spec(self) -> DatasetSpec:
        try:
            return self.dataset_config.to_spec()
        except DatasetError as e:
            raise ConfigError(str(e)) from e

    def eval_workers(self) -> int:
        workers = self.eval_config.workers.strip().lower()
        if workers == 'auto':
            return self.platform_utils.get_recommended_workers()
        try:
            return max(1, int(workers))
        except ValueError as e:
            raise ConfigError(f"[EVAL] workers must be an integer or 'auto', got '{workers}'") from e

    def validate_config(self) -> List[str]:
        """Validate configuration and return list of errors."""
        errors = []
        data, model, train, ev = (self.dataset_config, self.model_config,
                                  self.train_config, self.eval_config)

        if data.source not in SOURCES:
            errors.append(f"Unknown dataset source: {data.source}")
        elif data.source != 'gaussian-synthetic':
            if not data.path:
                errors.append(f"Dataset source '{data.source}' needs [DATASET] path")
            elif not Path(data.path).exists():
                errors.append(f"Dataset path does not exist: {data.path}")
            if data.rotate and data.height != data.width:
                errors.append("Rotation augmentation needs square images")
        if data.synthetic_sigma < 0:
            errors.append("[DATASET] synthetic_sigma must be non-negative")

        if not model.widths or any(w < 1 for w in model.widths):
            errors.append(f"Invalid layer widths: {model.widths}")
        else:
            dim = model.widths[-1]
            if dim <= train.way:
                errors.append(f"Embedding dimension {dim} must exceed training way {train.way}")
        if train.way > model.n_ref:
            errors.append(f"Training way {train.way} exceeds reference count {model.n_ref}")
        if ev.way > model.n_ref:
            errors.append(f"Evaluation way {ev.way} exceeds reference count {model.n_ref}")

        if train.logit_mode not in LOGIT_MODES:
            errors.append(f"Unknown logit mode: {train.logit_mode}")
        if train.gradient_mode not in GRADIENT_MODES:
            errors.append(f"Unknown gradient mode: {train.gradient_mode}")
        if train.support_mode not in SUPPORT_MODES:
            errors.append(f"Unknown support mode: {train.support_mode}")
        if train.support_mode == 'incremental' and train.shots < 2:
            errors.append("Incremental support mode needs at least 2 shots")
        for name, value in (('train episodes', train.episodes), ('eval episodes', ev.episodes)):
            if value < 0:
                errors.append(f"{name} must be non-negative")
        for name, value in (('train way', train.way), ('eval way', ev.way)):
            if value < 2:
                errors.append(f"{name} must be at least 2")
        for name, value in (('train shots', train.shots), ('eval shots', ev.shots),
                            ('train queries', train.queries), ('eval queries', ev.queries)):
            if value < 1:
                errors.append(f"{name} must be at least 1")
        if train.learning_rate <= 0 or train.decay_interval < 1 or train.decay_factor <= 0:
            errors.append("Learning rate, decay factor and decay interval must be positive")
        if ev.split not in ('train', 'val', 'test'):
            errors.append(f"Unknown evaluation split: {ev.split}")
        return errors

    def save_config(self, config_file: Optional[str] = None):
        """Save current configuration to file."""
        save_path = Path(config_file) if config_file else self.config_file
        if not save_path:
            save_path = Path.cwd() / 'config' / 'config.ini'
        save_path.parent.mkdir(parents=True, exist_ok=True)

        config = ConfigParser()
        for section, values in self._sections().items():
            config.add_section(section)
            for key, value in asdict(values).items():
                config.set(section, key, _format(value))

        with open(save_path, 'w', encoding='utf-8') as f:
            config.write(f)

    def as_dict(self) -> Dict[str, Dict[str, Any]]:
        return {section: asdict(values) for section, values in self._sections().items()}

    def print_config_summary(self):
        """Print a summary of current configuration."""
        data, model, train, ev = (self.dataset_config, self.model_config,
                                  self.train_config, self.eval_config)
        print("=== Configuration Summary ===")
        print(f"Dataset: {data.source} {data.path}".rstrip())
        print(f"Input Dimension: {data.input_dim}")
        print(f"Embedding Widths: {model.widths} (D = {model.widths[-1]})")
        print(f"Reference Vectors: {model.n_ref}")
        print(f"Training: {train.episodes} episodes, {train.way}-way {train.shots}-shot, "
              f"{train.queries} queries/class")
        print(f"Learning Rate: {train.learning_rate} x {train.decay_factor} every {train.decay_interval}")
        print(f"Logit Mode: {train.logit_mode}")
        print(f"Gradient Mode: {train.gradient_mode}")
        print(f"Evaluation: {ev.episodes} episodes, {ev.way}-way {ev.shots}-shot on '{ev.split}'")
        print(f"Seeds: train {train.seed}, eval {ev.seed}, model {model.seed}")
        print(f"Log Level: {self.logging_config.level}")
