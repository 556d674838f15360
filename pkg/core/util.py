import csv
import copy
import json
import logging
import math
from pathlib import Path
from typing import Any, Dict, Iterable, List, Mapping, Sequence, Union

from .errors import ConfigurationError

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


def format_float(value: float) -> str:
    """Render a float with 17 significant digits, the bit-exact text form used in every output."""
    value = float(value)
    if math.isnan(value):
        return "nan"
    if math.isinf(value):
        return "inf" if value > 0 else "-inf"
    return format(value, ".17g")


def format_value(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        return format_float(value)
    if value is None:
        return ""
    # numpy scalars
    if hasattr(value, "item"):
        return format_value(value.item())
    return str(value)


def read_json(path: PathLike) -> Dict[str, Any]:
    """
    Read a JSON document.

    Args:
        path: File to read

    Returns:
        The decoded top-level object

    Raises:
        ConfigurationError: if the file is missing, unreadable or not a JSON object
    """
    path = Path(path)
    if not path.exists():
        raise ConfigurationError(f"file not found: {path}")
    try:
        with open(path, "r", encoding="utf-8") as f:
            document = json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        logger.error(f"Error loading {path}: {str(e)}")
        raise ConfigurationError(f"cannot read {path}: {str(e)}") from e
    if not isinstance(document, dict):
        raise ConfigurationError(f"{path} must contain a JSON object")
    return document


def merge_defaults(document: Mapping[str, Any], defaults: Mapping[str, Any]) -> Dict[str, Any]:
    """Fill missing sections and keys of ``document`` from ``defaults`` without mutating either."""
    merged = copy.deepcopy(dict(document))
    for key, default in defaults.items():
        if key not in merged:
            merged[key] = copy.deepcopy(default)
        elif isinstance(default, Mapping) and isinstance(merged[key], Mapping):
            merged[key] = merge_defaults(merged[key], default)
    return merged


def load_json_with_defaults(path: PathLike, defaults: Mapping[str, Any]) -> Dict[str, Any]:
    """
    Load a JSON configuration file, filling every missing section from defaults.
    """
    document = read_json(path)
    return merge_defaults(document, defaults)


def write_json(path: PathLike, document: Mapping[str, Any]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(document, f, indent=4)
        f.write("\n")


def write_csv(path: PathLike, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
    """
    Write a header plus rows, formatting every float with 17 significant digits.

    Args:
        path: Destination file; parent directories are created
        header: Column names, in output order
        rows: Row sequences matching the header length

    Returns:
        The written path
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(list(header))
        for row in rows:
            if len(row) != len(header):
                raise ValueError(f"row of length {len(row)} does not match header {list(header)}")
            writer.writerow([format_value(value) for value in row])
    logger.debug(f"Wrote {path}")
    return path


def write_matrix_csv(path: PathLike, matrix: Any, prefix: str, index_name: str) -> Path:
    """Write a 2-D array with one row per entry of its first axis."""
    rows: List[List[Any]] = []
    n_cols = matrix.shape[1]
    header = [index_name] + [f"{prefix}{i + 1}" for i in range(n_cols)]
    for i in range(matrix.shape[0]):
        rows.append([i + 1] + [float(v) for v in matrix[i]])
    return write_csv(path, header, rows)


def write_key_values(path: PathLike, record: Mapping[str, Any]) -> Path:
    """Write a flat ``key=value`` text record in insertion order."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as f:
        for key, value in record.items():
            f.write(f"{key}={format_value(value)}\n")
    return path
