import sys
import os
import csv
import json
import hashlib
sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

import numpy as np

from config.config import CSV_FLOAT_FORMAT
from utils.sweep import INF


def format_value(value):
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return CSV_FLOAT_FORMAT % float(value)
    if value is None:
        return ""
    return str(value)


def write_field_csv(path, values):
    """
    Write a 2D field, one row per grid line along x.

    Unreached nodes (the INF sentinel) are written as inf.
    """
    values = np.asarray(values, dtype=np.float64)
    values = np.where(values >= INF, np.inf, values)
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    np.savetxt(path, values, fmt=CSV_FLOAT_FORMAT, delimiter=",")
    return path


def write_rows_csv(path, rows, columns):
    """
    Write dict rows with a fixed column order.

    Args:
        path (str): output file
        rows (list): dictionaries holding at least `columns`
        columns (tuple): header and column order

    Returns:
        str: the path written
    """
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([format_value(row.get(col)) for col in columns])
    return path


def _json_default(obj):
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, tuple):
        return list(obj)
    raise TypeError(f"not JSON serializable: {type(obj).__name__}")


def write_json(path, payload):
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w") as handle:
        json.dump(payload, handle, indent=2, sort_keys=True, default=_json_default)
        handle.write("\n")
    return path


def config_fingerprint(resolved):
    """Stable hash of a resolved config mapping."""
    text = json.dumps(resolved, sort_keys=True, default=_json_default)
    return hashlib.sha256(text.encode()).hexdigest()
