"""CSV schema for censored datasets.

Columns: ``coord_1..coord_d, value, status, lower, upper`` with status in
{obs, cens}.  Infinite bounds are encoded as empty fields; floats carry 17
significant digits so write -> read round-trips exactly.
"""

from __future__ import annotations

import csv
import math
from pathlib import Path

import numpy as np

from .censored import CensoredDataset
from .kernels import LocationSet

STATUS_OBSERVED = "obs"
STATUS_CENSORED = "cens"


def _fmt(x: float) -> str:
    if math.isinf(x) or math.isnan(x):
        return ""
    return f"{x:.17g}"


def _parse(field: str, default: float) -> float:
    field = field.strip()
    if not field:
        return default
    return float(field)


class CsvFormatError(ValueError):
    pass


def ingest_csv(path: str | Path, metric: str = "euclidean") -> CensoredDataset:
    """Read a censored dataset, reporting row numbers of any violations."""
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise CsvFormatError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        d = sum(1 for h in header if h.startswith("coord_"))
        expected = [f"coord_{k + 1}" for k in range(d)] + ["value", "status", "lower", "upper"]
        if d == 0 or header != expected:
            raise CsvFormatError(
                f"{path}: header must be coord_1..coord_d,value,status,lower,upper, got {header}"
            )

        points, values, censored, lowers, uppers = [], [], [], [], []
        problems: list[str] = []
        for rownum, row in enumerate(reader, start=2):
            if len(row) != d + 4:
                problems.append(f"row {rownum}: expected {d + 4} fields, got {len(row)}")
                continue
            try:
                coords = [float(c) for c in row[:d]]
            except ValueError:
                problems.append(f"row {rownum}: malformed coordinate")
                continue
            status = row[d + 1].strip()
            if status not in (STATUS_OBSERVED, STATUS_CENSORED):
                problems.append(f"row {rownum}: status must be obs or cens, got {status!r}")
                continue
            is_cens = status == STATUS_CENSORED
            try:
                value = _parse(row[d], math.nan)
                lo = _parse(row[d + 2], -math.inf)
                hi = _parse(row[d + 3], math.inf)
            except ValueError:
                problems.append(f"row {rownum}: malformed numeric field")
                continue
            if not is_cens and math.isnan(value):
                problems.append(f"row {rownum}: observed row is missing its value")
                continue
            if is_cens and lo >= hi:
                problems.append(f"row {rownum}: censored row needs lower < upper")
                continue
            points.append(coords)
            values.append(value)
            censored.append(is_cens)
            lowers.append(lo)
            uppers.append(hi)

    if problems:
        raise CsvFormatError(f"{path}: " + "; ".join(problems))
    if not points:
        raise CsvFormatError(f"{path}: no data rows")
    return CensoredDataset(
        locations=LocationSet(np.array(points), metric),
        values=np.array(values),
        censored=np.array(censored, dtype=bool),
        lower=np.array(lowers),
        upper=np.array(uppers),
    )


def write_csv(data: CensoredDataset, path: str | Path) -> None:
    path = Path(path)
    d = data.locations.dim
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"coord_{k + 1}" for k in range(d)] + ["value", "status", "lower", "upper"])
        for i in range(data.n):
            coords = [_fmt(c) for c in data.locations.points[i]]
            if data.censored[i]:
                writer.writerow(coords + ["", STATUS_CENSORED, _fmt(data.lower[i]), _fmt(data.upper[i])])
            else:
                writer.writerow(coords + [_fmt(data.values[i]), STATUS_OBSERVED, "", ""])
