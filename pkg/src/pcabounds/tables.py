"""Deterministic CSV output: fixed column order, 17-significant-digit floats,
LF line endings, and a commented metadata header that reproduces the run."""

from __future__ import annotations

import csv


def fmt_value(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, int):
        return str(v)
    if isinstance(v, float):
        return format(v, ".17g")
    if isinstance(v, tuple):
        return ";".join(format(float(x), ".17g") for x in v)
    return str(v)


def write_csv(path, columns, rows, meta=None) -> None:
    """Write rows (tuples aligned with columns) under '# key=value' meta lines."""
    with open(path, "w", newline="") as fh:
        for key, value in (meta or {}).items():
            fh.write(f"# {key}={value}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([fmt_value(v) for v in row])


def read_csv(path):
    """Read back a CSV written by write_csv: (meta, columns, raw string rows)."""
    meta = {}
    columns = None
    rows = []
    with open(path, newline="") as fh:
        plain = []
        for line in fh:
            if line.startswith("#"):
                key, _, value = line[1:].strip().partition("=")
                meta[key.strip()] = value.strip()
            else:
                plain.append(line)
        for record in csv.reader(plain):
            if columns is None:
                columns = record
            else:
                rows.append(record)
    return meta, columns, rows
