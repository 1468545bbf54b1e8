"""Atomic file output: JSON, line-delimited JSON and trajectory CSV."""
from __future__ import annotations

import json
import os
import tempfile


def atomic_write_text(path, text):
    """Write ``text`` to a temporary file next to ``path``, then rename over it."""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_json(path, obj, indent=2):
    atomic_write_text(path, json.dumps(obj, indent=indent) + "\n")


def write_jsonl(path, rows):
    atomic_write_text(path, "".join(json.dumps(r) + "\n" for r in rows))


def read_jsonl(path):
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]


def trajectory_header(n_rotors):
    cols = ["t", "alpha", "beta", "alpha_dot", "beta_dot", "qw", "qx", "qy", "qz", "wx", "wy", "wz"]
    cols += ["alpha_ref", "beta_ref"]
    cols += [f"u_{i}" for i in range(n_rotors)]
    cols += ["F_x", "F_y", "F_z", "tau_x", "tau_y", "tau_z", "reward", "saturated"]
    return cols


def format_row(row):
    """17 significant digits for every value; the trailing saturated flag as 0/1."""
    values = [format(float(v), ".17g") for v in row[:-1]]
    values.append("1" if row[-1] else "0")
    return ",".join(values)


def write_trajectory_csv(path, rows, n_rotors):
    lines = [",".join(trajectory_header(n_rotors))]
    lines += [format_row(r) for r in rows]
    atomic_write_text(path, "\n".join(lines) + "\n")
