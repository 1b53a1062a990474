"""
Episode construction: synthetic Gaussian tasks, class-level rotation
augmentation and split-aware sampling from loaded class pools.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, Hashable, List, Optional, Sequence, Tuple

import numpy as np

from .dataset_io import ClassPools, load_pools
from .errors import DatasetError, DatasetExhaustedError, DimensionError
from .numeric import RngStream

logger = logging.getLogger(__name__)

SOURCES = ('gaussian-synthetic', 'image-directory', 'flat-binary')
SPLITS = ('train', 'val', 'test')

ItemId = Tuple[Hashable, int]


@dataclass
class Episode:
    """Support and query sets over ``way`` classes.

    Support rows are ordered slot-major: rows ``k*shots .. (k+1)*shots-1``
    belong to slot k. ``support_ids``/``query_ids`` identify the source item
    of every row as (source class id, item index).
    """
    support_x: np.ndarray
    support_y: np.ndarray
    query_x: np.ndarray
    query_y: np.ndarray
    way: int
    shots: int
    support_ids: List[ItemId] = field(default_factory=list)
    query_ids: List[ItemId] = field(default_factory=list)

    @property
    def support(self) -> List[Tuple[np.ndarray, int]]:
        return list(zip(self.support_x, self.support_y.tolist()))

    @property
    def queries(self) -> List[Tuple[np.ndarray, int]]:
        return list(zip(self.query_x, self.query_y.tolist()))

    @property
    def input_dim(self) -> int:
        return self.support_x.shape[1]

    def prefix_support(self, shots: int) -> Tuple[np.ndarray, np.ndarray]:
        """First ``shots`` support items of every slot."""
        if not 1 <= shots <= self.shots:
            raise DatasetError(f"cannot take {shots} of {self.shots} shots")
        rows = np.concatenate([np.arange(k * self.shots, k * self.shots + shots)
                               for k in range(self.way)])
        return self.support_x[rows], self.support_y[rows]

    def shot_rows(self, shot: int) -> Tuple[np.ndarray, np.ndarray]:
        """Support item number ``shot`` of every slot, as a query batch."""
        rows = np.arange(self.way) * self.shots + shot
        return self.support_x[rows], self.support_y[rows]


@dataclass
class DatasetSpec:
    """Where episodes come from and how classes are partitioned.

    File-based sources take either explicit class lists or ``split_counts``,
    which assigns sorted class ids to train/val/test in that order.
    """
    source: str = 'gaussian-synthetic'
    path: Optional[str] = None
    image_shape: Tuple[int, int] = (28, 28)
    train_classes: List[Hashable] = field(default_factory=list)
    val_classes: List[Hashable] = field(default_factory=list)
    test_classes: List[Hashable] = field(default_factory=list)
    split_counts: Optional[Tuple[int, int, int]] = None
    rotate: bool = False
    synthetic_dim: int = 16
    synthetic_sigma: float = 0.3

    def __post_init__(self):
        if self.source not in SOURCES:
            raise DatasetError(f"Unknown dataset source '{self.source}'. Choose from {SOURCES}")
        self.image_shape = tuple(int(v) for v in self.image_shape)
        if self.source != 'gaussian-synthetic' and not self.path:
            raise DatasetError(f"Dataset source '{self.source}' needs a path")
        self.check_disjoint(self.partition_lists())

    @property
    def input_dim(self) -> int:
        if self.source == 'gaussian-synthetic':
            return self.synthetic_dim
        return self.image_shape[0] * self.image_shape[1]

    def partition_lists(self) -> Dict[str, List[Hashable]]:
        return {'train': list(self.train_classes), 'val': list(self.val_classes),
                'test': list(self.test_classes)}

    @staticmethod
    def check_disjoint(partition: Dict[str, List[Hashable]]):
        seen: Dict[Hashable, str] = {}
        for split, class_ids in partition.items():
            for cid in class_ids:
                if cid in seen and seen[cid] != split:
                    raise DatasetError(f"class {cid!r} appears in both {seen[cid]} and {split} splits")
                seen[cid] = split

    def resolve_partition(self, class_ids: Sequence[Hashable]) -> Dict[str, List[Hashable]]:
        partition = self.partition_lists()
        if any(partition.values()):
            missing = [cid for ids in partition.values() for cid in ids if cid not in set(class_ids)]
            if missing:
                raise DatasetError(f"classes not found in dataset: {missing[:5]}")
            return partition
        ordered = sorted(class_ids)
        counts = self.split_counts or (len(ordered), 0, 0)
        if sum(counts) > len(ordered):
            raise DatasetError(f"split counts {tuple(counts)} exceed {len(ordered)} available classes")
        bounds = np.cumsum([0] + list(counts))
        partition = {split: ordered[bounds[i]:bounds[i + 1]] for i, split in enumerate(SPLITS)}
        self.check_disjoint(partition)
        return partition


def gen_gaussian_episode(way: int, shots: int, queries: int, dim: int, sigma: float,
                         rng: RngStream) -> Episode:
    """Fresh class means uniform in [-1, 1]^dim, items = mean + N(0, sigma^2)."""
    if way < 2 or dim < 1 or shots < 1 or queries < 0 or sigma < 0:
        raise DatasetError(f"invalid synthetic episode: way={way}, shots={shots}, "
                           f"queries={queries}, dim={dim}, sigma={sigma}")
    means = rng.uniform(-1.0, 1.0, size=(way, dim))
    support_noise = rng.normal(0.0, 1.0, size=(way, shots, dim))
    query_noise = rng.normal(0.0, 1.0, size=(way, queries, dim))

    support_x = (means[:, None, :] + sigma * support_noise).reshape(way * shots, dim)
    query_x = (means[:, None, :] + sigma * query_noise).reshape(way * queries, dim)
    return Episode(
        support_x=support_x,
        support_y=np.repeat(np.arange(way), shots),
        query_x=query_x,
        query_y=np.repeat(np.arange(way), queries),
        way=way,
        shots=shots,
        support_ids=[(k, i) for k in range(way) for i in range(shots)],
        query_ids=[(k, shots + i) for k in range(way) for i in range(queries)],
    )


def rotate_image(image: np.ndarray, quarter_turns: int) -> np.ndarray:
    """Clockwise rotation by ``quarter_turns`` x 90 degrees (pure pixel permutation)."""
    image = np.asarray(image)
    if image.ndim != 2 or image.shape[0] != image.shape[1]:
        raise DimensionError(f"rotation needs a square image, got shape {image.shape}")
    return np.rot90(image, k=-(quarter_turns % 4))


def augment_rotations(pools: ClassPools) -> ClassPools:
    """Every class spawns 0/90/180/270 degree variants, each a class of its own."""
    height, width = pools.image_shape
    if height != width:
        raise DimensionError(f"rotation augmentation needs square images, got {height}x{width}")
    augmented = {}
    for class_id, items in pools.pools.items():
        images = items.reshape(-1, height, width)
        for turns in range(4):
            rotated = np.rot90(images, k=-turns, axes=(1, 2))
            augmented[(class_id, turns * 90)] = rotated.reshape(items.shape[0], height * width)
    return ClassPools(augmented, pools.image_shape)


def sample_episode(pools: ClassPools, way: int, shots: int, queries: int,
                   rng: RngStream) -> Episode:
    """Pick ``way`` classes, then ``shots + queries`` distinct items of each."""
    class_ids = pools.class_ids
    if len(class_ids) < way:
        raise DatasetExhaustedError(f"need {way} classes, split has {len(class_ids)}")
    per_class = shots + queries
    chosen = rng.choice(len(class_ids), way)

    support_x, query_x, support_ids, query_ids = [], [], [], []
    for idx in chosen:
        class_id = class_ids[idx]
        items = pools.pools[class_id]
        if items.shape[0] < per_class:
            raise DatasetExhaustedError(
                f"class {class_id!r} has {items.shape[0]} items, episode needs {per_class}")
        picks = rng.choice(items.shape[0], per_class)
        support_x.append(items[picks[:shots]])
        query_x.append(items[picks[shots:]])
        support_ids.extend((class_id, int(i)) for i in picks[:shots])
        query_ids.extend((class_id, int(i)) for i in picks[shots:])

    return Episode(
        support_x=np.concatenate(support_x),
        support_y=np.repeat(np.arange(way), shots),
        query_x=np.concatenate(query_x) if queries else np.zeros((0, pools.dim)),
        query_y=np.repeat(np.arange(way), queries),
        way=way,
        shots=shots,
        support_ids=support_ids,
        query_ids=query_ids,
    )


class EpisodeSampler:
    """Episode source for a dataset spec.

    File-based pools are loaded once, partitioned into splits, and rotation
    augmentation (when enabled) is applied inside each split.
    """

    def __init__(self, spec: DatasetSpec, pools: Optional[ClassPools] = None):
        self.spec = spec
        self.splits: Dict[str, ClassPools] = {}
        if spec.source != 'gaussian-synthetic':
            pools = pools if pools is not None else load_pools(spec.source, spec.path, spec.image_shape)
            self._partition(pools)

    def _partition(self, pools: ClassPools):
        partition = self.spec.resolve_partition(pools.class_ids)
        for split, class_ids in partition.items():
            subset = pools.subset(class_ids)
            if self.spec.rotate and class_ids:
                subset = augment_rotations(subset)
            self.splits[split] = subset
        logger.info("Dataset split sizes: %s",
                    {s: len(p.pools) for s, p in self.splits.items()})

    @property
    def input_dim(self) -> int:
        return self.spec.input_dim

    def class_count(self, split: str) -> Optional[int]:
        """Number of classes in ``split``; None for the unbounded synthetic source."""
        if self.spec.source == 'gaussian-synthetic':
            return None
        return len(self.splits[split].pools)

    def sample(self, split: str, way: int, shots: int, queries: int, rng: RngStream) -> Episode:
        if split not in SPLITS:
            raise DatasetError(f"Unknown split '{split}'. Choose from {SPLITS}")
        if self.spec.source == 'gaussian-synthetic':
            return gen_gaussian_episode(way, shots, queries, self.spec.synthetic_dim,
                                        self.spec.synthetic_sigma, rng)
        return sample_episode(self.splits[split], way, shots, queries, rng)
