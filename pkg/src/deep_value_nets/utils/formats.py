"""Text and portable-map codecs for datasets, predictions and trajectory dumps.

Multi-label text format (UTF-8)::

    <M_x> <M>
    l <comma-separated label indices, may be empty> f <index:value ...>

Grid datasets are directories with ``images/NNNNN.pgm`` (P2/P5 graymaps)
and ``masks/NNNNN.pbm`` (P1/P4 bitmaps, 1 = foreground).
"""

import logging
import os
import tempfile
from pathlib import Path
from typing import Iterable, List, Tuple, Union

import numpy as np

from deep_value_nets.models.datasets import (
    DataFormatError,
    GridDataset,
    MultiLabelDataset,
    MultiLabelExample,
    validate_multilabel_example,
)

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


def atomic_write_bytes(path: PathLike, data: bytes) -> None:
    """Write to a temporary file in the target directory, then rename over ``path``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp_name = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(data)
        os.replace(tmp_name, path)
    except BaseException:
        if os.path.exists(tmp_name):
            os.unlink(tmp_name)
        raise


def atomic_write_text(path: PathLike, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


def read_text(path: Path) -> str:
    """UTF-8 contents of ``path``; undecodable bytes are a data format error."""
    try:
        return path.read_text(encoding="utf-8")
    except UnicodeDecodeError as e:
        raise DataFormatError(f"not UTF-8 text ({e.reason} at byte {e.start})", str(path)) from None


def _parse_int(token: str, what: str, source: str, line: int) -> int:
    try:
        return int(token)
    except ValueError:
        raise DataFormatError(f"bad {what} '{token}'", source, line) from None


def parse_multilabel(text: str, source: str = "<string>") -> MultiLabelDataset:
    lines = text.splitlines()
    if not lines or not lines[0].strip():
        raise DataFormatError("missing '<M_x> <M>' header", source, 1)
    header = lines[0].split()
    if len(header) != 2:
        raise DataFormatError(f"header must be '<M_x> <M>', got '{lines[0]}'", source, 1)
    n_features = _parse_int(header[0], "feature count", source, 1)
    n_labels = _parse_int(header[1], "label count", source, 1)
    if n_features < 1 or n_labels < 1:
        raise DataFormatError("feature and label counts must be positive", source, 1)

    examples: List[MultiLabelExample] = []
    for number, raw in enumerate(lines[1:], start=2):
        if not raw.strip():
            continue
        tokens = raw.split()
        if tokens[0] != "l" or "f" not in tokens[1:]:
            raise DataFormatError("expected 'l <labels> f <index:value ...>'", source, number)
        split = tokens.index("f", 1)
        label_text = "".join(tokens[1:split])
        labels = tuple(
            _parse_int(tok, "label index", source, number) for tok in label_text.split(",") if tok
        )
        indices, values = [], []
        for pair in tokens[split + 1 :]:
            index, sep, value = pair.partition(":")
            if not sep:
                raise DataFormatError(f"bad feature pair '{pair}'", source, number)
            indices.append(_parse_int(index, "feature index", source, number))
            try:
                values.append(float(value))
            except ValueError:
                raise DataFormatError(f"bad feature value '{value}'", source, number) from None
        example = MultiLabelExample(tuple(indices), tuple(values), labels)
        try:
            validate_multilabel_example(example, n_features, n_labels, len(examples))
        except DataFormatError as e:
            raise DataFormatError(str(e), source, number) from None
        examples.append(example)
    return MultiLabelDataset(n_features, n_labels, examples)


def load_multilabel(path: PathLike) -> MultiLabelDataset:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Dataset file not found: {path}")
    dataset = parse_multilabel(read_text(path), str(path))
    logger.info(
        f"Loaded {len(dataset)} examples ({dataset.n_features} features, "
        f"{dataset.n_labels} labels) from {path}"
    )
    return dataset


def serialize_multilabel(dataset: MultiLabelDataset) -> str:
    """Canonical text: labels ascending, features ascending by index."""
    lines = [f"{dataset.n_features} {dataset.n_labels}"]
    for example in dataset.examples:
        parts = ["l"]
        if example.labels:
            parts.append(",".join(str(label) for label in sorted(example.labels)))
        parts.append("f")
        pairs = sorted(zip(example.feature_indices, example.feature_values))
        parts.extend(f"{index}:{value!r}" for index, value in pairs)
        lines.append(" ".join(parts))
    return "\n".join(lines) + "\n"


def save_multilabel(path: PathLike, dataset: MultiLabelDataset) -> None:
    atomic_write_text(path, serialize_multilabel(dataset))


def convert_xmc(path: PathLike) -> MultiLabelDataset:
    """Read the extreme-classification release format (Bibtex, Bookmarks).

    Header ``<N> <M_x> <M>``; each line ``l1,l2,... f:v f:v ...`` with
    0-based indices; a line may start directly with features when it has no
    labels.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Dataset file not found: {path}")
    lines = read_text(path).splitlines()
    header = lines[0].split() if lines else []
    if len(header) != 3:
        raise DataFormatError("header must be '<N> <M_x> <M>'", str(path), 1)
    n_features = _parse_int(header[1], "feature count", str(path), 1)
    n_labels = _parse_int(header[2], "label count", str(path), 1)

    body = []
    for raw in lines[1:]:
        tokens = raw.split()
        if not tokens:
            continue
        if ":" in tokens[0]:
            body.append(" ".join(["l", "f", *tokens]))
        else:
            body.append(" ".join(["l", tokens[0], "f", *tokens[1:]]))
    dataset = parse_multilabel("\n".join([f"{n_features} {n_labels}", *body]), str(path))
    logger.info(f"Converted {len(dataset)} examples from {path}")
    return dataset


def _pnm_header(data: bytes, count: int, source: str) -> Tuple[List[bytes], int]:
    tokens: List[bytes] = []
    i = 0
    while len(tokens) < count:
        while i < len(data) and data[i : i + 1].isspace():
            i += 1
        if i >= len(data):
            raise DataFormatError("truncated portable-map header", source)
        if data[i : i + 1] == b"#":
            while i < len(data) and data[i : i + 1] not in (b"\n", b"\r"):
                i += 1
            continue
        start = i
        while i < len(data) and not data[i : i + 1].isspace():
            i += 1
        tokens.append(data[start:i])
    return tokens, i + 1


def read_pnm(path: PathLike) -> np.ndarray:
    """Read P1/P2/P4/P5 into floats: bitmaps as {0, 1}, graymaps scaled to [0, 1]."""
    path = Path(path)
    source = str(path)
    data = path.read_bytes()
    magic = data[:2]
    if magic not in (b"P1", b"P2", b"P4", b"P5"):
        raise DataFormatError(f"unsupported portable-map type {magic!r}", source)
    graymap = magic in (b"P2", b"P5")
    tokens, offset = _pnm_header(data, 4 if graymap else 3, source)
    try:
        width, height = int(tokens[1]), int(tokens[2])
        maxval = int(tokens[3]) if graymap else 1
    except ValueError:
        raise DataFormatError("bad portable-map dimensions", source) from None
    if width < 1 or height < 1 or not 0 < maxval < 65536:
        raise DataFormatError("bad portable-map dimensions", source)

    try:
        if magic == b"P1":
            digits = [c for c in data[offset:].decode("ascii") if c in "01"]
            pixels = np.array(digits[: width * height], dtype=np.float64)
        elif magic == b"P4":
            row_bytes = (width + 7) // 8
            raw = np.frombuffer(data, dtype=np.uint8, count=row_bytes * height, offset=offset)
            pixels = np.unpackbits(raw.reshape(height, row_bytes), axis=1)[:, :width]
            pixels = pixels.astype(np.float64)
        elif magic == b"P2":
            values = data[offset:].split()[: width * height]
            pixels = np.array([int(v) for v in values], dtype=np.float64) / maxval
        else:
            dtype = np.dtype(np.uint8) if maxval < 256 else np.dtype(">u2")
            raw = np.frombuffer(data, dtype=dtype, count=width * height, offset=offset)
            pixels = raw.astype(np.float64) / maxval
    except ValueError as e:
        raise DataFormatError(f"corrupt portable-map data: {e}", source) from None
    if pixels.size != width * height:
        raise DataFormatError("truncated portable-map data", source)
    return pixels.reshape(height, width)


def write_pgm(path: PathLike, image: np.ndarray, binary: bool = True) -> None:
    """Graymap with maxval 255; values are clipped to [0, 1] first."""
    image = np.clip(np.asarray(image, dtype=np.float64), 0.0, 1.0)
    height, width = image.shape
    levels = np.round(image * 255.0).astype(np.uint8)
    if binary:
        data = f"P5\n{width} {height}\n255\n".encode("ascii") + levels.tobytes()
    else:
        rows = "\n".join(" ".join(str(v) for v in row) for row in levels)
        data = f"P2\n{width} {height}\n255\n{rows}\n".encode("ascii")
    atomic_write_bytes(path, data)


def write_pbm(path: PathLike, mask: np.ndarray, binary: bool = True) -> None:
    mask = np.asarray(mask)
    if not np.all((mask == 0) | (mask == 1)):
        raise DataFormatError("bitmaps must be binary", str(path))
    height, width = mask.shape
    bits = mask.astype(np.uint8)
    if binary:
        data = f"P4\n{width} {height}\n".encode("ascii") + np.packbits(bits, axis=1).tobytes()
    else:
        rows = "\n".join(" ".join(str(v) for v in row) for row in bits)
        data = f"P1\n{width} {height}\n{rows}\n".encode("ascii")
    atomic_write_bytes(path, data)


def save_grid_dataset(directory: PathLike, dataset: GridDataset) -> None:
    directory = Path(directory)
    for i in range(len(dataset)):
        write_pgm(directory / "images" / f"{i:05d}.pgm", dataset.images[i])
        write_pbm(directory / "masks" / f"{i:05d}.pbm", dataset.masks[i])
    logger.info(f"Wrote {len(dataset)} grid examples to {directory}")


def load_grid_dataset(directory: PathLike) -> GridDataset:
    directory = Path(directory)
    image_paths = sorted((directory / "images").glob("*.p[gn]m"))
    if not image_paths:
        raise DataFormatError("no images/*.pgm files found", str(directory))
    images, masks = [], []
    for image_path in image_paths:
        mask_path = directory / "masks" / f"{image_path.stem}.pbm"
        if not mask_path.exists():
            raise DataFormatError(f"missing mask for {image_path.name}", str(mask_path))
        images.append(read_pnm(image_path))
        masks.append(read_pnm(mask_path))
    shapes = {image.shape for image in images} | {mask.shape for mask in masks}
    if len(shapes) != 1:
        raise DataFormatError(f"images and masks differ in size: {sorted(shapes)}", str(directory))
    height, width = images[0].shape
    dataset = GridDataset(height, width, np.stack(images), np.stack(masks))
    logger.info(f"Loaded {len(dataset)} grid examples ({height}x{width}) from {directory}")
    return dataset


def write_trajectory(path: PathLike, lines: Iterable[str]) -> None:
    """One record per step: "<step> <v_pred> [<y values...>]"."""
    atomic_write_text(path, "".join(f"{line}\n" for line in lines))


def write_label_sets(path: PathLike, predictions: np.ndarray) -> None:
    """One line per example with comma-separated predicted label indices."""
    lines = [",".join(str(j) for j in np.flatnonzero(row)) for row in np.asarray(predictions)]
    atomic_write_text(path, "".join(f"{line}\n" for line in lines))
