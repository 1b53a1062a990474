"""
Few-shot evaluation with test-time reference relabeling, projector
diagnostics and a nearest-class-mean baseline.
"""

import csv
import io
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Union

import numpy as np
from tqdm import tqdm

from .autodiff import Tensor
from .checkpoint import Checkpoint
from .embedding import EmbeddingParams, embed_batch
from .episodes import Episode, EpisodeSampler
from .errors import DatasetError, DatasetExhaustedError
from .nulling_head import (HeadConfig, PrototypeSet, ReferenceBank, build_projector,
                           class_averages, error_vectors, nulled_logits, predict,
                           alignment_score, zero_forcing_residuals)
from .numeric import DEFAULT_EPS, RngStream, matrix_rank

logger = logging.getLogger(__name__)

REPORT_HEADER = 'way,shots,episodes,mean_acc,ci95'
Z_95 = 1.96


def confidence_interval(accuracies: Sequence[float]) -> float:
    """Normal-approximation 95% half-width, 1.96 * s / sqrt(n); 0 for n < 2."""
    values = np.asarray(accuracies, dtype=np.float64)
    if values.size < 2:
        return 0.0
    return float(Z_95 * values.std(ddof=1) / np.sqrt(values.size))


@dataclass
class EvalReport:
    episodes: int
    way: int
    shots: int
    mean_acc: float
    ci95: float
    accuracies: List[float] = field(default_factory=list)
    config: Dict[str, object] = field(default_factory=dict)
    seconds: float = 0.0

    @classmethod
    def from_accuracies(cls, accuracies: Sequence[float], way: int, shots: int,
                        config: Optional[Dict[str, object]] = None,
                        seconds: float = 0.0) -> 'EvalReport':
        accuracies = [float(a) for a in accuracies]
        mean = float(np.mean(accuracies)) if accuracies else 0.0
        return cls(episodes=len(accuracies), way=way, shots=shots, mean_acc=mean,
                   ci95=confidence_interval(accuracies), accuracies=accuracies,
                   config=dict(config or {}), seconds=seconds)

    def is_consistent(self, atol: float = 1e-12) -> bool:
        """Mean and CI agree with the per-episode accuracies carried."""
        if len(self.accuracies) != self.episodes:
            return False
        again = EvalReport.from_accuracies(self.accuracies, self.way, self.shots)
        return abs(again.mean_acc - self.mean_acc) <= atol and abs(again.ci95 - self.ci95) <= atol

    def to_csv_row(self) -> str:
        return f"{self.way},{self.shots},{self.episodes},{self.mean_acc:.6f},{self.ci95:.6f}"

    def append_csv(self, path: Union[str, Path]):
        """Append one report row, writing the header for a new file."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        new_file = not path.exists() or path.stat().st_size == 0
        with open(path, 'a', encoding='utf-8') as f:
            if new_file:
                f.write(REPORT_HEADER + '\n')
            f.write(self.to_csv_row() + '\n')

    def write_per_episode(self, path: Union[str, Path]):
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, 'w', newline='', encoding='utf-8') as f:
            writer = csv.writer(f, lineterminator='\n')
            writer.writerow(('episode', 'accuracy'))
            for i, acc in enumerate(self.accuracies):
                writer.writerow((i, repr(acc)))

    def summary(self) -> str:
        return (f"{self.way}-way {self.shots}-shot over {self.episodes} episodes: "
                f"{100 * self.mean_acc:.2f}% +- {100 * self.ci95:.2f}%")


@dataclass
class ReferenceSelection:
    """Bank rows chosen for episode slots 0..way-1, and their class labels."""
    rows: np.ndarray
    labels: np.ndarray
    refs: Tensor


def select_references(bank: ReferenceBank, protos: PrototypeSet, normalize: bool = True,
                      eps: float = DEFAULT_EPS) -> ReferenceSelection:
    """Greedy nearest unused reference for every prototype, in slot order.

    Distances are Euclidean between normalized copies; an exact tie goes to
    the lower row index.
    """
    way = protos.way
    if bank.size < way:
        raise DatasetError(f"episode way {way} exceeds reference count {bank.size}")
    refs = bank.refs.data
    targets = protos.protos.data
    if normalize:
        refs = refs / np.maximum(np.linalg.norm(refs, axis=1, keepdims=True), eps)
        targets = targets / np.maximum(np.linalg.norm(targets, axis=1, keepdims=True), eps)

    distances = np.linalg.norm(targets[:, None, :] - refs[None, :, :], axis=2)
    used = np.zeros(bank.size, dtype=bool)
    rows = np.empty(way, dtype=np.int64)
    for slot in range(way):
        candidates = np.where(used, np.inf, distances[slot])
        rows[slot] = int(np.argmin(candidates))
        used[rows[slot]] = True
    return ReferenceSelection(rows=rows, labels=bank.labels[rows],
                              refs=Tensor(bank.refs.data[rows]))


def _frozen(params: EmbeddingParams) -> EmbeddingParams:
    return EmbeddingParams(weights=[w.detach() for w in params.weights],
                           biases=[b.detach() for b in params.biases])


class FewShotEvaluator:
    """Test-time protocol against a fixed checkpoint."""

    def __init__(self, checkpoint: Checkpoint, sampler: EpisodeSampler,
                 head_config: Optional[HeadConfig] = None, workers: int = 1,
                 progress: bool = False):
        self.checkpoint = checkpoint
        self.sampler = sampler
        self.head = head_config or checkpoint.head_config
        self.workers = max(1, int(workers))
        self.progress = progress
        self._params = _frozen(checkpoint.params)
        self._bank = ReferenceBank(checkpoint.bank.refs.detach(), checkpoint.bank.labels.copy())

    def classify(self, episode: Episode) -> np.ndarray:
        """Predicted slot for every query of ``episode``."""
        support = embed_batch(self._params, episode.support_x)
        protos = class_averages(support, episode.support_y, episode.way)
        selection = select_references(self._bank, protos, self.head.normalize, self.head.eps)
        errs = error_vectors(selection.refs, protos, self.head.normalize, self.head.eps)
        projector = build_projector(errs, self.head.tol)
        queries = embed_batch(self._params, episode.query_x)
        logits = nulled_logits(queries, selection.refs, projector, self.head.logit_mode,
                               self.head.normalize, self.head.eps)
        return predict(logits)

    def episode_accuracy(self, episode: Episode) -> float:
        if episode.query_y.size == 0:
            raise DatasetError("evaluation episode has no queries")
        return float(np.mean(self.classify(episode) == episode.query_y))

    def _run_episode(self, index: int, seed: int, split: str, way: int, shots: int,
                     queries: int) -> float:
        rng = RngStream(seed).derive(index)
        return self.episode_accuracy(self.sampler.sample(split, way, shots, queries, rng))

    def evaluate(self, way: int, shots: int, queries: int, episodes: int, seed: int,
                 split: str = 'test') -> EvalReport:
        """Episode i is sampled from seed + i; results are reduced in index order."""
        available = self.sampler.class_count(split)
        if available is not None and available < way:
            raise DatasetExhaustedError(f"{way}-way evaluation needs {way} classes, "
                                        f"the {split} split has {available}")
        if way > self._bank.size:
            raise DatasetError(f"episode way {way} exceeds reference count {self._bank.size}")
        self.head.check_way(way)

        started = time.perf_counter()
        accuracies: List[float] = [0.0] * episodes
        bar = tqdm(total=episodes, desc="Evaluating", unit="episode", disable=not self.progress)
        if self.workers == 1:
            for i in range(episodes):
                accuracies[i] = self._run_episode(i, seed, split, way, shots, queries)
                bar.update(1)
        else:
            with ThreadPoolExecutor(max_workers=self.workers) as executor:
                futures = [executor.submit(self._run_episode, i, seed, split, way, shots, queries)
                           for i in range(episodes)]
                for i, future in enumerate(futures):
                    accuracies[i] = future.result()
                    bar.update(1)
        bar.close()

        report = EvalReport.from_accuracies(
            accuracies, way, shots, seconds=time.perf_counter() - started,
            config={'queries': queries, 'seed': seed, 'split': split, 'workers': self.workers,
                    'logit_mode': self.head.logit_mode, 'checkpoint_episode': self.checkpoint.episode})
        logger.info("Evaluation %s (%.1fs)", report.summary(), report.seconds)
        return report


def evaluate(checkpoint: Checkpoint, sampler: EpisodeSampler, way: int, shots: int,
             queries: int, episodes: int, seed: int, split: str = 'test',
             workers: int = 1, progress: bool = False) -> EvalReport:
    return FewShotEvaluator(checkpoint, sampler, workers=workers,
                            progress=progress).evaluate(way, shots, queries, episodes, seed, split)


@dataclass
class ProjectorDiagnostics:
    residuals: np.ndarray
    alignment: np.ndarray
    trace: float
    rank: int
    dim: int
    rows: np.ndarray
    distances: np.ndarray

    def to_csv(self) -> str:
        """Long format: ``quantity,index_a,index_b,value``."""
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator='\n')
        writer.writerow(('quantity', 'index_a', 'index_b', 'value'))
        for k, value in enumerate(self.residuals):
            writer.writerow(('residual_norm', k, '', repr(float(value))))
        for k, value in enumerate(self.alignment):
            writer.writerow(('alignment', k, '', repr(float(value))))
        for k, row in enumerate(self.rows):
            writer.writerow(('reference_row', k, '', int(row)))
        writer.writerow(('trace', '', '', repr(self.trace)))
        writer.writerow(('rank', '', '', self.rank))
        writer.writerow(('dim', '', '', self.dim))
        way = self.distances.shape[0]
        for i in range(way):
            for j in range(i + 1, way):
                writer.writerow(('projected_distance', i, j, repr(float(self.distances[i, j]))))
        return buffer.getvalue()


def inspect_projector(checkpoint: Checkpoint, episode: Episode, relabel: bool = True,
                      head_config: Optional[HeadConfig] = None) -> ProjectorDiagnostics:
    """Residual norms ||P v_k||, alignment scores, trace(P), rank(V) and the
    pairwise distances of the episode references under P."""
    head = head_config or checkpoint.head_config
    params = _frozen(checkpoint.params)
    bank = ReferenceBank(checkpoint.bank.refs.detach(), checkpoint.bank.labels.copy())

    protos = class_averages(embed_batch(params, episode.support_x), episode.support_y, episode.way)
    if relabel:
        selection = select_references(bank, protos, head.normalize, head.eps)
        rows, refs = selection.rows, selection.refs
    else:
        rows = np.arange(episode.way)
        refs = bank.rows(rows)
    errs = error_vectors(refs, protos, head.normalize, head.eps)
    projector = build_projector(errs, head.tol)

    refs_hat = refs.data
    if head.normalize:
        refs_hat = refs_hat / np.maximum(np.linalg.norm(refs_hat, axis=1, keepdims=True), head.eps)
    diffs = refs_hat[:, None, :] - refs_hat[None, :, :]
    quad = np.einsum('ijd,de,ije->ij', diffs, projector.matrix, diffs)
    return ProjectorDiagnostics(
        residuals=zero_forcing_residuals(errs, projector),
        alignment=alignment_score(refs, protos, projector, head.normalize, head.eps),
        trace=projector.trace,
        rank=matrix_rank(errs.matrix, head.tol),
        dim=projector.dim,
        rows=rows,
        distances=np.sqrt(np.maximum(quad, 0.0)),
    )


def nearest_class_mean_accuracy(sampler: EpisodeSampler, split: str, way: int, shots: int,
                                queries: int, episodes: int, seed: int) -> EvalReport:
    """Classify queries by Euclidean distance to support means in input space."""
    accuracies = []
    for i in range(episodes):
        episode = sampler.sample(split, way, shots, queries, RngStream(seed).derive(i))
        means = np.stack([episode.support_x[episode.support_y == k].mean(axis=0)
                          for k in range(way)])
        dists = np.linalg.norm(episode.query_x[:, None, :] - means[None, :, :], axis=2)
        accuracies.append(float(np.mean(np.argmin(dists, axis=1) == episode.query_y)))
    report = EvalReport.from_accuracies(accuracies, way, shots,
                                        config={'baseline': 'nearest-class-mean', 'seed': seed,
                                                'split': split, 'queries': queries})
    logger.info("Nearest-class-mean baseline %s", report.summary())
    return report
