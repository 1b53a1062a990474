"""
Binary checkpoint format.

Layout (little-endian)::

    magic "MLNCKPT1" | u32 version | u32 header length | JSON header
    | u32 tensor count | tensors | u32 CRC32 of everything before it

Each tensor is ``u32 rank, u32 dims..., f64 data`` in row-major order. The
JSON header holds the configurations, reference labels, Adam scalars and the
episode counter; it is written with sorted keys so equal checkpoints give
equal bytes.
"""

import json
import logging
import struct
import zlib
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import List, Tuple, Union

import numpy as np

from .autodiff import Tensor
from .config_manager import TrainConfig
from .embedding import EmbeddingConfig, EmbeddingParams
from .errors import CheckpointError, ChecksumError, VersionMismatchError
from .nulling_head import HeadConfig, ReferenceBank
from .optimizer import AdamState

logger = logging.getLogger(__name__)

MAGIC = b"MLNCKPT1"
FORMAT_VERSION = 1
U32 = struct.Struct("<I")


@dataclass
class Checkpoint:
    embedding_config: EmbeddingConfig
    params: EmbeddingParams
    bank: ReferenceBank
    adam: AdamState
    train_config: TrainConfig = field(default_factory=TrainConfig)
    head_config: HeadConfig = field(default_factory=HeadConfig)
    episode: int = 0
    version: int = FORMAT_VERSION

    def tensors(self) -> List[np.ndarray]:
        """Parameters, reference bank, then Adam first and second moments."""
        arrays = [p.data for p in self.params.parameters()]
        arrays.append(self.bank.refs.data)
        return arrays + list(self.adam.m) + list(self.adam.v)

    def header(self) -> dict:
        return {
            'embedding': asdict(self.embedding_config),
            'train': asdict(self.train_config),
            'head': asdict(self.head_config),
            'labels': [int(v) for v in self.bank.labels],
            'adam': {'step': self.adam.step, 'beta1': self.adam.beta1,
                     'beta2': self.adam.beta2, 'eps': self.adam.eps,
                     'slots': len(self.adam.m)},
            'episode': int(self.episode),
        }

    def to_bytes(self) -> bytes:
        header = json.dumps(self.header(), sort_keys=True, separators=(',', ':')).encode('utf-8')
        chunks = [MAGIC, U32.pack(self.version), U32.pack(len(header)), header]
        arrays = self.tensors()
        chunks.append(U32.pack(len(arrays)))
        for array in arrays:
            chunks.append(_pack_tensor(array))
        body = b''.join(chunks)
        return body + U32.pack(zlib.crc32(body) & 0xFFFFFFFF)

    def same_as(self, other: 'Checkpoint') -> bool:
        return self.to_bytes() == other.to_bytes()

    def snapshot(self) -> 'Checkpoint':
        """Deep copy."""
        return Checkpoint(
            embedding_config=EmbeddingConfig(**asdict(self.embedding_config)),
            params=self.params.copy(),
            bank=self.bank.copy(),
            adam=self.adam.copy(),
            train_config=TrainConfig(**asdict(self.train_config)),
            head_config=HeadConfig(**asdict(self.head_config)),
            episode=self.episode,
            version=self.version,
        )


def _pack_tensor(array: np.ndarray) -> bytes:
    array = np.ascontiguousarray(array, dtype='<f8')
    dims = b''.join(U32.pack(d) for d in array.shape)
    return U32.pack(array.ndim) + dims + array.tobytes(order='C')


class _Reader:
    def __init__(self, blob: bytes, path: str):
        self.blob = blob
        self.offset = 0
        self.path = path

    def take(self, n: int) -> bytes:
        if self.offset + n > len(self.blob):
            raise CheckpointError(f"{self.path}: unexpected end of checkpoint data")
        chunk = self.blob[self.offset:self.offset + n]
        self.offset += n
        return chunk

    def u32(self) -> int:
        return U32.unpack(self.take(4))[0]

    def tensor(self) -> np.ndarray:
        rank = self.u32()
        shape = tuple(self.u32() for _ in range(rank))
        count = int(np.prod(shape, dtype=np.int64)) if shape else 1
        data = np.frombuffer(self.take(8 * count), dtype='<f8')
        return data.astype(np.float64).reshape(shape)


def from_bytes(blob: bytes, source: str = '<bytes>') -> Checkpoint:
    if len(blob) < len(MAGIC) + 3 * U32.size:
        raise CheckpointError(f"{source}: file too short to be a checkpoint ({len(blob)} bytes)")
    body, trailer = blob[:-U32.size], blob[-U32.size:]
    expected = U32.unpack(trailer)[0]
    actual = zlib.crc32(body) & 0xFFFFFFFF
    if actual != expected:
        raise ChecksumError(f"{source}: checksum mismatch (stored {expected:08x}, computed {actual:08x})")

    reader = _Reader(body, source)
    if reader.take(len(MAGIC)) != MAGIC:
        raise CheckpointError(f"{source}: not a checkpoint file")
    version = reader.u32()
    if version != FORMAT_VERSION:
        raise VersionMismatchError(f"{source}: format version {version}, this build reads {FORMAT_VERSION}")

    try:
        header = json.loads(reader.take(reader.u32()).decode('utf-8'))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CheckpointError(f"{source}: unreadable header: {e}") from e
    arrays = [reader.tensor() for _ in range(reader.u32())]
    if reader.offset != len(body):
        raise CheckpointError(f"{source}: {len(body) - reader.offset} unexpected bytes after tensors")

    embedding_config = EmbeddingConfig(**header['embedding'])
    n_params = 2 * len(embedding_config.widths)
    slots = header['adam']['slots']
    if len(arrays) != n_params + 1 + 2 * slots:
        raise CheckpointError(f"{source}: {len(arrays)} tensors do not match the header layout")

    params = [Tensor(a, requires_grad=True) for a in arrays[:n_params]]
    bank = ReferenceBank(Tensor(arrays[n_params], requires_grad=True),
                         np.asarray(header['labels'], dtype=np.int64))
    moments = arrays[n_params + 1:]
    adam = AdamState(m=moments[:slots], v=moments[slots:], step=header['adam']['step'],
                     beta1=header['adam']['beta1'], beta2=header['adam']['beta2'],
                     eps=header['adam']['eps'])
    return Checkpoint(
        embedding_config=embedding_config,
        params=EmbeddingParams(weights=params[0::2], biases=params[1::2]),
        bank=bank,
        adam=adam,
        train_config=TrainConfig(**header['train']),
        head_config=HeadConfig(**header['head']),
        episode=header['episode'],
        version=version,
    )


def save_checkpoint(checkpoint: Checkpoint, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    blob = checkpoint.to_bytes()
    tmp = path.with_name(path.name + '.tmp')
    tmp.write_bytes(blob)
    tmp.replace(path)
    logger.info("Saved checkpoint (episode %d, %d bytes) to %s", checkpoint.episode, len(blob), path)
    return path


def load_checkpoint(path: Union[str, Path]) -> Checkpoint:
    path = Path(path)
    checkpoint = from_bytes(path.read_bytes(), str(path))
    logger.debug("Loaded checkpoint from %s (episode %d)", path, checkpoint.episode)
    return checkpoint


def describe(checkpoint: Checkpoint) -> List[Tuple[str, str]]:
    """Key facts for status output."""
    return [
        ('Format Version', str(checkpoint.version)),
        ('Episodes Trained', str(checkpoint.episode)),
        ('Embedding Widths', f"{checkpoint.embedding_config.input_dim} -> {checkpoint.embedding_config.widths}"),
        ('Reference Vectors', f"{checkpoint.bank.size} x {checkpoint.bank.dim}"),
        ('Logit Mode', checkpoint.head_config.logit_mode),
        ('Gradient Mode', checkpoint.head_config.gradient_mode),
    ]
