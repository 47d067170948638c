import logging
import os
import struct
import zlib
from collections import Counter
from dataclasses import dataclass
from typing import Dict, Iterator, Optional, Sequence

import numpy as np

from vchgcl.core.errors import ContractError, ShapeError
from vchgcl.tensor.autograd import Tensor

logger = logging.getLogger(__name__)

SNAPSHOT_MAGIC = b"VCHG"
SNAPSHOT_VERSION = 1


@dataclass
class Parameter:
    """A named trainable tensor."""
    name: str
    tensor: Tensor


def _name_rng(seed: int, name: str) -> np.random.Generator:
    return np.random.default_rng([seed % 2 ** 32, zlib.crc32(name.encode("utf-8"))])


class ParameterStore:
    """
    Registry of the trainable parameters of one model.

    Initialization depends only on (seed, name), so two stores built with the same
    seed agree on every parameter they have in common, whatever the creation order.
    """

    def __init__(self, seed: int = 0):
        self.seed = seed
        self._params: Dict[str, Parameter] = {}

    def create(self, name: str, shape: Sequence[int], fan_in: Optional[int] = None,
               init: str = "uniform") -> Tensor:
        """
        Create and register a parameter.

        Args:
            name: Unique identifier; the prefix before the first dot is its group
            shape: Parameter shape
            fan_in: Input width for the uniform bound; defaults to ``shape[0]``
            init: ``uniform`` (in +-1/sqrt(fan_in)), ``zeros`` or ``ones``

        Returns:
            The parameter tensor
        """
        if name in self._params:
            raise ContractError(f"parameter {name!r} already exists")
        shape = tuple(int(s) for s in shape)
        if init == "uniform":
            bound = 1.0 / np.sqrt(fan_in if fan_in is not None else shape[0])
            data = _name_rng(self.seed, name).uniform(-bound, bound, size=shape)
        elif init == "zeros":
            data = np.zeros(shape)
        elif init == "ones":
            data = np.ones(shape)
        else:
            raise ContractError(f"unknown initializer {init!r}")
        tensor = Tensor(data, requires_grad=True, name=name)
        self._params[name] = Parameter(name=name, tensor=tensor)
        return tensor

    def __getitem__(self, name: str) -> Tensor:
        try:
            return self._params[name].tensor
        except KeyError:
            raise ContractError(f"unknown parameter {name!r}") from None

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __iter__(self) -> Iterator[Parameter]:
        return iter(self._params.values())

    def __len__(self) -> int:
        return len(self._params)

    def names(self):
        return list(self._params)

    def group_counts(self) -> Dict[str, int]:
        """Number of scalar entries per parameter group."""
        counts: Counter = Counter()
        for param in self:
            counts[param.name.split(".", 1)[0]] += param.tensor.size
        return dict(counts)

    def zero_grad(self) -> None:
        for param in self:
            param.tensor.grad = None

    def state(self) -> Dict[str, np.ndarray]:
        return {param.name: param.tensor.data.copy() for param in self}

    def load_state(self, state: Dict[str, np.ndarray]) -> None:
        missing = set(self._params) - set(state)
        unexpected = set(state) - set(self._params)
        if missing or unexpected:
            raise ContractError(f"parameter mismatch: missing={sorted(missing)}, unexpected={sorted(unexpected)}")
        for name, values in state.items():
            target = self._params[name].tensor
            if target.shape != values.shape:
                raise ShapeError(f"snapshot shape for {name!r} differs", target.shape, values.shape)
            target.data = np.array(values, dtype=np.float64)

    def save(self, path: str) -> str:
        return save_snapshot(self.state(), path)


def save_snapshot(state: Dict[str, np.ndarray], path: str) -> str:
    """
    Write parameters to the flat binary snapshot format.

    Layout: magic ``VCHG``, version byte, then per parameter the name length (uint32),
    UTF-8 name, rank (uint32), extents (uint64 each) and little-endian float64 data.
    """
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    with open(path, "wb") as f:
        f.write(SNAPSHOT_MAGIC)
        f.write(struct.pack("<B", SNAPSHOT_VERSION))
        for name, values in state.items():
            encoded = name.encode("utf-8")
            values = np.ascontiguousarray(values, dtype="<f8")
            f.write(struct.pack("<I", len(encoded)))
            f.write(encoded)
            f.write(struct.pack("<I", values.ndim))
            f.write(struct.pack(f"<{values.ndim}Q", *values.shape))
            f.write(values.tobytes(order="C"))
    logger.info(f"Saved {len(state)} parameters to {path}")
    return path


def load_snapshot(path: str) -> Dict[str, np.ndarray]:
    """Read a snapshot written by ``save_snapshot``."""
    try:
        with open(path, "rb") as f:
            blob = f.read()
    except FileNotFoundError:
        raise ContractError(f"snapshot not found at {path}") from None
    if len(blob) < len(SNAPSHOT_MAGIC) + 1 or blob[:4] != SNAPSHOT_MAGIC:
        raise ContractError(f"{path} is not a parameter snapshot")
    version = blob[4]
    if version != SNAPSHOT_VERSION:
        raise ContractError(f"unsupported snapshot version {version}")

    state: Dict[str, np.ndarray] = {}
    offset = 5
    try:
        while offset < len(blob):
            (name_len,) = struct.unpack_from("<I", blob, offset)
            offset += 4
            name = blob[offset:offset + name_len].decode("utf-8")
            offset += name_len
            (rank,) = struct.unpack_from("<I", blob, offset)
            offset += 4
            shape = struct.unpack_from(f"<{rank}Q", blob, offset)
            offset += 8 * rank
            count = int(np.prod(shape)) if rank else 1
            values = np.frombuffer(blob, dtype="<f8", count=count, offset=offset)
            offset += 8 * count
            state[name] = values.astype(np.float64).reshape(shape)
    except (struct.error, ValueError) as e:
        raise ContractError(f"truncated snapshot {path}: {e}") from None
    logger.info(f"Loaded {len(state)} parameters from {path}")
    return state
