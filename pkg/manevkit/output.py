"""Text outputs: CSV tables with ``# key: value`` metadata lines and JSON summaries.

Floats are written with ``%.17g`` so that identical runs give byte-identical files.
"""
import csv
import json
import logging
import math
import os
import typing

import numpy as np

logger = logging.getLogger(__name__)


def format_value(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return "%.17g" % float(value)
    return str(value)


def _plain(value):
    """JSON-ready copy with numpy scalars and arrays unwrapped."""
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple, np.ndarray)):
        return [_plain(v) for v in value]
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        # %.17g round-trips every double
        return value if not math.isfinite(value) else float("%.17g" % value)
    return value


def ensure_directory(path: str) -> str:
    os.makedirs(path, exist_ok=True)
    return path


def write_csv(path: str, header: typing.Sequence[str], rows: typing.Iterable[typing.Sequence],
              metadata: typing.Optional[dict] = None) -> str:
    with open(path, "w", newline="") as f:
        for key in sorted(metadata or {}):
            f.write("# %s: %s\n" % (key, format_value(metadata[key])))
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([format_value(v) for v in row])
    logger.debug("wrote %s", path)
    return path


def read_csv(path: str) -> typing.Tuple[dict, typing.List[str], typing.List[typing.List[str]]]:
    """Metadata, header and raw rows of a file written by ``write_csv``."""
    metadata = {}
    with open(path, "r", newline="") as f:
        lines = f.read().splitlines()
    body = []
    for line in lines:
        if line.startswith("# ") and not body:
            key, _, value = line[2:].partition(": ")
            metadata[key] = value
        else:
            body.append(line)
    table = list(csv.reader(body))
    return metadata, table[0], table[1:]


def write_json(path: str, summary: dict) -> str:
    with open(path, "w") as f:
        json.dump(_plain(summary), f, indent=2, sort_keys=True, allow_nan=True)
        f.write("\n")
    logger.debug("wrote %s", path)
    return path


def read_json(path: str) -> dict:
    with open(path, "r") as f:
        return json.load(f)
