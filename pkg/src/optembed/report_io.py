"""CSV output helpers for experiment tables.

Wall-clock columns vary between reruns, so every experiment writes two
files: the main table with timing columns removed (byte identical for a
fixed config and seed) and a sibling ``*_timings.csv`` holding the key
columns plus the measured seconds.
"""

from __future__ import annotations

import csv
from pathlib import Path


def timing_csv_path(out_csv) -> Path:
    p = Path(out_csv)
    return p.with_name(p.stem + "_timings" + (p.suffix or ".csv"))


def write_split_csv(rows, out_csv, timing_fields=(), key_fields=None):
    """Write ``rows`` (list of dicts) to ``out_csv`` without the timing
    fields, and the timing fields keyed by ``key_fields`` to the sibling
    timings file.  Field order follows the first row."""
    rows = list(rows)
    if not rows:
        Path(out_csv).write_text("")
        return
    fields = list(rows[0])
    timing_fields = [f for f in fields if f in set(timing_fields)]
    main_fields = [f for f in fields if f not in timing_fields]
    with open(out_csv, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=main_fields, extrasaction="ignore")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: row[k] for k in main_fields})
    if not timing_fields:
        return
    if key_fields is None:
        key_fields = [f for f in main_fields if f in ("rep", "seed", "K", "N",
                                                      "alpha", "mode", "class",
                                                      "max_depth")]
    with open(timing_csv_path(out_csv), "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=key_fields + timing_fields,
                                extrasaction="ignore")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: row[k] for k in key_fields + timing_fields})
