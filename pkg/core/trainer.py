"""
Episodic meta-training of the embedding network and the reference bank.

Each episode: embed the support set, average per class, build the null-space
projector from the error vectors, score the queries and take one Adam step on
the softmax cross-entropy. Slot k of every training episode is bound to
reference row k.
"""

import csv
import logging
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Callable, Iterator, List, Optional, Tuple, Union

import numpy as np
from tqdm import tqdm

from . import autodiff as ad
from .autodiff import Tensor
from .checkpoint import Checkpoint
from .config_manager import TrainConfig
from .embedding import EmbeddingConfig, EmbeddingParams, embed_batch, init_params
from .episodes import DatasetSpec, Episode, EpisodeSampler
from .errors import DatasetError, DegenerateInputError, DivergenceError
from .evaluator import FewShotEvaluator
from .nulling_head import (HeadConfig, NullProjector, ReferenceBank, build_projector,
                           class_averages, error_vectors, nulled_logits, predict)
from .numeric import RngStream
from .optimizer import AdamState, adam_update, lr_schedule

logger = logging.getLogger(__name__)

METRICS_HEADER = ('episode', 'loss', 'train_acc', 'lr')
# validation episodes draw from streams far away from the training ones
VALIDATION_SEED_OFFSET = 1_000_000


@dataclass
class EpisodeOutput:
    loss: Tensor
    logits: Tensor
    labels: np.ndarray

    @property
    def accuracy(self) -> float:
        if self.labels.size == 0:
            return 0.0
        return float(np.mean(predict(self.logits) == self.labels))


@dataclass
class TrainMetrics:
    episode: int
    loss: float
    train_acc: float
    lr: float

    def to_row(self) -> List[str]:
        return [str(self.episode), repr(self.loss), repr(self.train_acc), repr(self.lr)]


def _head_pass(params: EmbeddingParams, refs: Tensor, support_x: np.ndarray,
               support_y: np.ndarray, query_x: np.ndarray, way: int, head: HeadConfig,
               projector: Optional[NullProjector] = None) -> Tuple[Tensor, NullProjector]:
    support = embed_batch(params, support_x)
    protos = class_averages(support, support_y, way)
    if projector is None:
        errs = error_vectors(refs, protos, head.normalize, head.eps)
        projector = build_projector(errs, head.tol,
                                    differentiable=head.gradient_mode == 'differentiate-projector')
    queries = embed_batch(params, query_x)
    logits = nulled_logits(queries, refs, projector, head.logit_mode, head.normalize, head.eps)
    return logits, projector


def episode_loss(params: EmbeddingParams, bank: ReferenceBank, episode: Episode,
                 head: HeadConfig, support_mode: str = 'fixed',
                 projector: Optional[NullProjector] = None) -> EpisodeOutput:
    """Mean cross-entropy of the episode's queries against their slots.

    ``support_mode='incremental'`` sums the losses of the sub-episodes where
    the first j shots are the support and shot j+1 is the query, for
    j = 1 .. shots-1; the projector is rebuilt for each j. ``projector``
    reuses a precomputed projector (fixed mode only).
    """
    refs = bank.rows(np.arange(episode.way))

    if support_mode == 'fixed':
        if episode.query_x.shape[0] == 0:
            raise DatasetError("training episode has no queries")
        logits, _ = _head_pass(params, refs, episode.support_x, episode.support_y,
                               episode.query_x, episode.way, head, projector)
        loss = ad.softmax_cross_entropy(logits, episode.query_y)
        return EpisodeOutput(loss, logits, episode.query_y)

    if support_mode != 'incremental':
        raise ValueError(f"Unknown support mode '{support_mode}'")
    if episode.shots < 2:
        raise DatasetError(f"incremental support needs at least 2 shots, episode has {episode.shots}")
    total = None
    for j in range(1, episode.shots):
        support_x, support_y = episode.prefix_support(j)
        query_x, query_y = episode.shot_rows(j)
        logits, _ = _head_pass(params, refs, support_x, support_y, query_x, episode.way, head)
        step_loss = ad.softmax_cross_entropy(logits, query_y)
        total = step_loss if total is None else total + step_loss
    return EpisodeOutput(total, logits, query_y)


class MetaTrainer:
    """Runs the episodic training loop for one model."""

    def __init__(self, embedding_config: EmbeddingConfig, head_config: HeadConfig,
                 train_config: TrainConfig, sampler: EpisodeSampler,
                 progress: bool = False,
                 on_metrics: Optional[Callable[[TrainMetrics], None]] = None):
        self.embedding_config = embedding_config
        self.head_config = head_config
        self.train_config = train_config
        self.sampler = sampler
        self.progress = progress
        self.on_metrics = on_metrics
        self.metrics: List[TrainMetrics] = []
        self.validation: List[Tuple[int, float, float]] = []

        if sampler.input_dim != embedding_config.input_dim:
            raise DatasetError(f"dataset input dimension {sampler.input_dim} does not match "
                               f"embedding input {embedding_config.input_dim}")
        if train_config.way > head_config.n_ref:
            raise DatasetError(f"training way {train_config.way} exceeds reference count {head_config.n_ref}")
        head_config.check_way(train_config.way)

    def initialize(self) -> Checkpoint:
        """Random unit-norm references and freshly initialized weights."""
        rng = RngStream(self.embedding_config.seed)
        params = init_params(self.embedding_config, rng)
        bank = ReferenceBank.initialize(self.head_config.n_ref, self.embedding_config.output_dim, rng)
        tc = self.train_config
        adam = AdamState.for_params(params.parameters() + [bank.refs], tc.beta1, tc.beta2, tc.adam_eps)
        return Checkpoint(embedding_config=self.embedding_config, params=params, bank=bank,
                          adam=adam, train_config=tc, head_config=self.head_config)

    def _sample(self, index: int) -> Episode:
        tc = self.train_config
        rng = RngStream(tc.seed).derive(index)
        queries = 0 if tc.support_mode == 'incremental' else tc.queries
        return self.sampler.sample('train', tc.way, tc.shots, queries, rng)

    def step(self, checkpoint: Checkpoint, episode: Episode) -> TrainMetrics:
        """One Adam step on one episode; mutates parameters, bank and optimizer state."""
        index = checkpoint.episode
        lr = lr_schedule(index, self.train_config)
        try:
            output = episode_loss(checkpoint.params, checkpoint.bank, episode, self.head_config,
                                  self.train_config.support_mode)
        except DegenerateInputError as e:
            raise DivergenceError(f"episode {index} (lr {lr:g}): {e}; try a smaller learning rate") from e
        loss = output.loss.item()
        if not np.isfinite(loss):
            raise DivergenceError(f"loss became {loss} at episode {index} (lr {lr:g}); "
                                  f"try a smaller learning rate")

        params = checkpoint.params.parameters() + [checkpoint.bank.refs]
        grads = ad.backward(output.loss, params)
        for i, g in enumerate(grads):
            if not np.all(np.isfinite(g)):
                raise DivergenceError(f"non-finite gradient for parameter {i} at episode {index}")
        adam_update(checkpoint.adam, params, grads, lr)
        checkpoint.episode = index + 1
        return TrainMetrics(episode=index, loss=loss, train_acc=output.accuracy, lr=lr)

    def validate(self, checkpoint: Checkpoint) -> Optional[Tuple[float, float]]:
        """Test-time protocol on the validation split; None when it cannot run."""
        tc = self.train_config
        available = self.sampler.class_count('val')
        if available is not None and available < tc.val_way:
            logger.warning("Skipping validation: %d validation classes for %d-way episodes",
                           available, tc.val_way)
            return None
        evaluator = FewShotEvaluator(checkpoint, self.sampler)
        report = evaluator.evaluate(tc.val_way, tc.shots, tc.queries, tc.val_episodes,
                                    tc.seed + VALIDATION_SEED_OFFSET, split='val')
        logger.info("Validation after %d episodes: %.4f +- %.4f",
                    checkpoint.episode, report.mean_acc, report.ci95)
        self.validation.append((checkpoint.episode, report.mean_acc, report.ci95))
        return report.mean_acc, report.ci95

    def train_loop(self, checkpoint: Optional[Checkpoint] = None) -> Checkpoint:
        """Run the configured number of episodes; resumes from ``checkpoint`` if given."""
        checkpoint = checkpoint or self.initialize()
        tc = self.train_config
        start = checkpoint.episode
        indices: Union[range, Iterator[int]] = range(start, start + tc.episodes)
        if self.progress:
            indices = tqdm(indices, desc="Training", unit="episode")

        logger.info("Training %d episodes (%d-way %d-shot, %s support) from episode %d",
                    tc.episodes, tc.way, tc.shots, tc.support_mode, start)
        for index in indices:
            metrics = self.step(checkpoint, self._sample(index))
            self.metrics.append(metrics)
            if self.on_metrics:
                self.on_metrics(metrics)
            if self.progress:
                indices.set_postfix(loss=f"{metrics.loss:.4f}", acc=f"{metrics.train_acc:.3f}")
            if tc.val_interval and checkpoint.episode % tc.val_interval == 0:
                self.validate(checkpoint)

        if self.metrics:
            tail = self.metrics[-min(len(self.metrics), 100):]
            logger.info("Finished at episode %d; last %d episodes: loss %.4f, accuracy %.4f",
                        checkpoint.episode, len(tail), np.mean([m.loss for m in tail]),
                        np.mean([m.train_acc for m in tail]))
        return checkpoint


def write_metrics_csv(path: Union[str, Path], metrics: List[TrainMetrics]):
    """Write the metrics stream as ``episode,loss,train_acc,lr`` lines."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w', newline='', encoding='utf-8') as f:
        writer = csv.writer(f, lineterminator='\n')
        writer.writerow(METRICS_HEADER)
        for m in metrics:
            writer.writerow(m.to_row())


def train_loop(train_config: TrainConfig, embedding_config: EmbeddingConfig,
               head_config: HeadConfig, spec: DatasetSpec,
               metrics_path: Optional[Union[str, Path]] = None,
               progress: bool = False) -> Tuple[Checkpoint, List[TrainMetrics]]:
    """Build a sampler for ``spec``, train, and optionally write the metrics CSV."""
    sampler = EpisodeSampler(spec)
    logger.debug("Train config: %s", asdict(train_config))
    trainer = MetaTrainer(embedding_config, head_config, train_config, sampler, progress=progress)
    checkpoint = trainer.train_loop()
    if metrics_path:
        write_metrics_csv(metrics_path, trainer.metrics)
    return checkpoint, trainer.metrics
