"""
Dataset ingestion for image-based episodes.

Two on-disk layouts are understood:

* flat binary: little-endian header (magic ``MLNDS1\\0\\0``, u32 class count,
  u32 items per class, u32 height, u32 width) followed by class-major u8
  grayscale rasters;
* a directory with one sub-directory per class, each holding raw u8 raster
  files of ``height * width`` bytes.

Pixel values are scaled to [0, 1] on load.
"""

import logging
import os
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Hashable, List, Tuple, Union

import numpy as np

from .errors import DatasetFormatError

logger = logging.getLogger(__name__)

MAGIC = b"MLNDS1\x00\x00"
HEADER = struct.Struct("<8sIIII")


@dataclass
class ClassPools:
    """Items of every class, flattened rasters as rows."""
    pools: Dict[Hashable, np.ndarray]
    image_shape: Tuple[int, int]

    @property
    def dim(self) -> int:
        return self.image_shape[0] * self.image_shape[1]

    @property
    def class_ids(self) -> List[Hashable]:
        return list(self.pools.keys())

    def sizes(self) -> Tuple[int, ...]:
        return tuple(items.shape[0] for items in self.pools.values())

    def subset(self, class_ids) -> 'ClassPools':
        return ClassPools({cid: self.pools[cid] for cid in class_ids}, self.image_shape)


def _to_bytes(items: np.ndarray) -> bytes:
    items = np.asarray(items)
    if items.dtype != np.uint8:
        items = np.clip(np.rint(items * 255.0), 0, 255).astype(np.uint8)
    return items.tobytes()


def write_flat_binary(path: Union[str, Path], pools: ClassPools):
    """Write pools (equal item counts per class) in the flat-binary layout."""
    sizes = set(pools.sizes())
    if len(sizes) != 1:
        raise DatasetFormatError(f"flat-binary needs equal item counts per class, got {sorted(sizes)}")
    height, width = pools.image_shape
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'wb') as f:
        f.write(HEADER.pack(MAGIC, len(pools.pools), sizes.pop(), height, width))
        for items in pools.pools.values():
            f.write(_to_bytes(items.reshape(items.shape[0], height * width)))
    logger.info("Wrote %d classes to %s", len(pools.pools), path)


def load_flat_binary(path: Union[str, Path]) -> ClassPools:
    path = Path(path)
    blob = path.read_bytes()
    if len(blob) < HEADER.size:
        raise DatasetFormatError(f"{path}: truncated header ({len(blob)} bytes)")
    magic, n_classes, per_class, height, width = HEADER.unpack_from(blob)
    if magic != MAGIC:
        raise DatasetFormatError(f"{path}: bad magic {magic!r}")
    if height == 0 or width == 0:
        raise DatasetFormatError(f"{path}: inconsistent raster dimensions {height}x{width}")

    expected = HEADER.size + n_classes * per_class * height * width
    if len(blob) < expected:
        raise DatasetFormatError(f"{path}: truncated file, expected {expected} bytes, got {len(blob)}")
    if len(blob) > expected:
        raise DatasetFormatError(f"{path}: {len(blob) - expected} trailing bytes after raster data")

    pixels = np.frombuffer(blob, dtype=np.uint8, offset=HEADER.size)
    pixels = pixels.reshape(n_classes, per_class, height * width).astype(np.float64) / 255.0
    pools = {class_id: pixels[class_id] for class_id in range(n_classes)}
    logger.debug("Loaded %d classes x %d items (%dx%d) from %s",
                 n_classes, per_class, height, width, path)
    return ClassPools(pools, (height, width))


def load_image_directory(path: Union[str, Path], height: int, width: int) -> ClassPools:
    """Read per-class sub-directories of raw u8 rasters (sorted by name)."""
    path = Path(path)
    issues = validate_dataset_directory(path)
    if issues:
        raise DatasetFormatError("; ".join(issues))

    size = height * width
    pools = {}
    for class_dir in sorted(p for p in path.iterdir() if p.is_dir()):
        rows = []
        for item in sorted(p for p in class_dir.iterdir() if p.is_file()):
            raw = item.read_bytes()
            if len(raw) != size:
                raise DatasetFormatError(
                    f"{item}: {len(raw)} bytes, expected {height}x{width}={size}")
            rows.append(np.frombuffer(raw, dtype=np.uint8))
        if not rows:
            logger.warning("Skipping empty class directory %s", class_dir)
            continue
        pools[class_dir.name] = np.stack(rows).astype(np.float64) / 255.0
    return ClassPools(pools, (height, width))


def validate_dataset_directory(path: Path) -> List[str]:
    """Problems that prevent reading ``path`` as a per-class directory."""
    issues = []
    if not path.exists():
        issues.append(f"Dataset directory does not exist: {path}")
        return issues
    if not path.is_dir():
        issues.append(f"Dataset path is not a directory: {path}")
        return issues
    if not os.access(path, os.R_OK):
        issues.append(f"No read permission for dataset directory: {path}")
        return issues
    if not any(p.is_dir() for p in path.iterdir()):
        issues.append(f"No class sub-directories found in: {path}")
    return issues


def load_pools(source: str, path: Union[str, Path], image_shape: Tuple[int, int]) -> ClassPools:
    """Dispatch on the dataset source name."""
    if source == 'flat-binary':
        return load_flat_binary(path)
    if source == 'image-directory':
        return load_image_directory(path, *image_shape)
    raise DatasetFormatError(f"Source '{source}' is not file based")
