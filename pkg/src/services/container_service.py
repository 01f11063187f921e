"""
OTSF tensor container, checkpoints, and feature-pair datasets.

Layout (all integers little-endian):
    magic "OTSF" | version u32 = 1 | record count u32
    per record: name length u16 | name UTF-8 | dtype u8 | rank u32 | dims u32 × rank | payload
Payloads are row-major little-endian scalars: dtype 1 = f64, 2 = f32, 3 = u8.
"""

import logging
import re
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Sequence, Tuple, Union

import numpy as np
import yaml

from config import ModelConfig
from errors import FormatError, ShapeError, UsageError
from models.ofam import FeatureMap, ObjectFeatures, ScoreMap
from models.ots_model import OtsModel, build_model
from services.dataset_service import SceneDataset
from utils.validation_utils import validate_feature_pair

logger = logging.getLogger(__name__)

MAGIC = b"OTSF"
VERSION = 1
DTYPES = {1: np.dtype("<f8"), 2: np.dtype("<f4"), 3: np.dtype("u1")}
DTYPE_CODES = {np.dtype("<f8"): 1, np.dtype("<f4"): 2, np.dtype("u1"): 3}

PathLike = Union[str, Path]
_SAMPLE_RECORD = re.compile(r"^(\d+)\.(\w+)$")


@dataclass(frozen=True, eq=False)
class TensorRecord:
    name: str
    array: np.ndarray

    @property
    def dtype_code(self) -> int:
        code = DTYPE_CODES.get(self.array.dtype.newbyteorder("<"))
        if code is None:
            raise UsageError(f"Record {self.name}: unsupported dtype {self.array.dtype}")
        return code

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.array.shape


def encode_container(records: Sequence[TensorRecord]) -> bytes:
    names = [r.name for r in records]
    if len(set(names)) != len(names):
        raise UsageError("Record names must be unique within a container")

    chunks = [MAGIC, struct.pack("<II", VERSION, len(records))]
    for record in records:
        name = record.name.encode("utf-8")
        if len(name) > 0xFFFF:
            raise UsageError(f"Record name too long: {record.name[:40]}...")
        code = record.dtype_code
        chunks.append(struct.pack("<H", len(name)))
        chunks.append(name)
        chunks.append(struct.pack("<BI", code, record.array.ndim))
        chunks.append(struct.pack(f"<{record.array.ndim}I", *record.array.shape))
        chunks.append(np.ascontiguousarray(record.array, dtype=DTYPES[code]).tobytes())
    return b"".join(chunks)


def decode_container(data: bytes) -> List[TensorRecord]:
    cursor = 0

    def take(size: int, what: str) -> bytes:
        nonlocal cursor
        if cursor + size > len(data):
            raise FormatError(f"Truncated container while reading {what}", offset=cursor)
        chunk = data[cursor:cursor + size]
        cursor += size
        return chunk

    if take(4, "magic") != MAGIC:
        raise FormatError("Bad magic, expected OTSF", offset=0)
    version, count = struct.unpack("<II", take(8, "header"))
    if version != VERSION:
        raise FormatError(f"Unsupported container version {version}", offset=4)

    records = []
    seen = set()
    for _ in range(count):
        start = cursor
        (name_length,) = struct.unpack("<H", take(2, "name length"))
        try:
            name = take(name_length, "name").decode("utf-8")
        except UnicodeDecodeError:
            raise FormatError("Record name is not valid UTF-8", offset=start + 2)
        if name in seen:
            raise FormatError(f"Duplicate record name {name}", offset=start)
        seen.add(name)

        code_offset = cursor
        code, rank = struct.unpack("<BI", take(5, f"{name} header"))
        if code not in DTYPES:
            raise FormatError(f"Record {name}: unknown dtype code {code}", offset=code_offset)
        dims = struct.unpack(f"<{rank}I", take(4 * rank, f"{name} dims"))
        dtype = DTYPES[code]
        size = int(np.prod(dims, dtype=np.int64)) * dtype.itemsize
        payload = take(size, f"{name} payload")
        array = np.frombuffer(payload, dtype=dtype).reshape(dims)
        records.append(TensorRecord(name, array))

    if cursor != len(data):
        raise FormatError(f"{len(data) - cursor} trailing bytes after last record", offset=cursor)
    return records


def write_container(path: PathLike, records: Sequence[TensorRecord]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(encode_container(records))
    logger.info(f"Wrote {len(records)} records to {path}")


def read_container(path: PathLike) -> List[TensorRecord]:
    path = Path(path)
    if not path.exists():
        raise FormatError(f"Container not found: {path}")
    records = decode_container(path.read_bytes())
    logger.debug(f"Read {len(records)} records from {path}")
    return records


def as_float64(record: TensorRecord) -> np.ndarray:
    """Widen f32 and u8 payloads to float64."""
    if record.array.dtype != np.dtype("<f8"):
        logger.warning(f"Widening record {record.name} from {record.array.dtype} to float64")
    return np.asarray(record.array, dtype=np.float64)


def _as_label(record: TensorRecord, index: int) -> int:
    values = record.array.reshape(-1)
    if values.size != 1 or float(values[0]) != int(values[0]) or values[0] < 0:
        raise FormatError(f"Label record {record.name} must hold one nonnegative integer", sample=index)
    return int(values[0])


def _group_samples(records: Sequence[TensorRecord]) -> Dict[int, Dict[str, TensorRecord]]:
    samples: Dict[int, Dict[str, TensorRecord]] = {}
    for record in records:
        match = _SAMPLE_RECORD.match(record.name)
        if match:
            samples.setdefault(int(match.group(1)), {})[match.group(2)] = record
    return samples


def load_feature_pairs(path: PathLike) -> List[Tuple[FeatureMap, ScoreMap, int]]:
    """Co-registered (F, S, label) triplets from ``{i}.F``, ``{i}.S``, ``{i}.y`` records."""
    samples = _group_samples(read_container(path))
    pairs = []
    for index in sorted(samples):
        members = samples[index]
        missing = [key for key in ("F", "S", "y") if key not in members]
        if missing:
            raise FormatError(f"Missing record(s) {', '.join(f'{index}.{m}' for m in missing)}", sample=index)

        features = as_float64(members["F"])
        scores = as_float64(members["S"])
        if features.ndim != 2 or scores.ndim != 2:
            raise FormatError("F and S must be 2-D", sample=index)
        ok, message = validate_feature_pair(features, scores)
        if not ok:
            raise FormatError(message, sample=index)
        try:
            pairs.append((FeatureMap(features), ScoreMap(scores), _as_label(members["y"], index)))
        except (ShapeError, ArithmeticError) as e:
            raise FormatError(str(e), sample=index)

    logger.info(f"Loaded {len(pairs)} feature pairs from {path}")
    return pairs


def object_feature_records(results: Sequence[Tuple[ObjectFeatures, int]]) -> List[TensorRecord]:
    records = []
    for i, (features, label) in enumerate(results):
        records.append(TensorRecord(f"{i}.X", np.asarray(features.matrix, dtype="<f8")))
        records.append(TensorRecord(f"{i}.present", features.present.astype("u1").reshape(1, -1)))
        records.append(TensorRecord(f"{i}.y", np.array([[label]], dtype="<f8")))
    return records


def load_object_features(path: PathLike, class_names: Sequence[str]) -> SceneDataset:
    """SceneDataset from ``{i}.X``, ``{i}.present``, ``{i}.y`` records."""
    samples = _group_samples(read_container(path))
    if not samples:
        raise FormatError(f"No samples found in {path}")

    dataset = []
    for index in sorted(samples):
        members = samples[index]
        if "X" not in members or "y" not in members:
            raise FormatError(f"Missing {index}.X or {index}.y", sample=index)
        matrix = as_float64(members["X"])
        if matrix.ndim != 2:
            raise FormatError("X must be 2-D", sample=index)
        if "present" in members:
            present = members["present"].array.reshape(-1).astype(bool)
        else:
            present = np.any(matrix != 0, axis=0)
        dataset.append((ObjectFeatures(matrix, present), _as_label(members["y"], index)))

    channels, objects = dataset[0][0].matrix.shape
    try:
        return SceneDataset(dataset, tuple(class_names), objects, channels)
    except (ShapeError, UsageError) as e:
        raise FormatError(str(e))


def save_checkpoint(model: OtsModel, path: PathLike) -> Path:
    """Write every named param to ``path`` and the model config echo to ``path`` with a .yaml suffix."""
    path = Path(path)
    records = [TensorRecord(name, np.asarray(param.value, dtype="<f8")) for name, param in model.named_params().items()]
    write_container(path, records)

    echo = path.with_suffix(".yaml")
    echo.write_text(yaml.safe_dump({"model": model.config.to_dict()}, sort_keys=True))
    logger.info(f"Checkpoint saved: {path} ({len(records)} params), config echo {echo}")
    return echo


def load_checkpoint(path: PathLike) -> OtsModel:
    """Rebuild the model from its config echo and load every param by name."""
    path = Path(path)
    echo = path.with_suffix(".yaml")
    if not echo.exists():
        raise FormatError(f"Config echo not found: {echo}")
    config = ModelConfig.from_dict(yaml.safe_load(echo.read_text())["model"])

    model = build_model(config)
    records = {record.name: record for record in read_container(path)}
    params = model.named_params()
    missing = sorted(set(params) - set(records))
    if missing:
        raise FormatError(f"Checkpoint lacks params: {', '.join(missing)}")
    for name, param in params.items():
        value = as_float64(records[name])
        if value.shape != param.shape:
            raise FormatError(f"Param {name} has shape {value.shape}, model expects {param.shape}")
        param.assign(value)

    logger.info(f"Checkpoint loaded: {path}")
    return model
