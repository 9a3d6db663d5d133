#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
Result emitters for CSV and JSON artifacts

Every artifact carries a header block with the artifact version, the
subcommand and the full configuration echo, so a file alone is enough to
rerun the experiment. Output is deterministic for identical inputs.
"""

import csv
import io
import json
import logging
import math
from typing import Any, Dict, List, Sequence

logger = logging.getLogger(__name__)


def _jsonable(value: Any) -> Any:
    """Convert numpy scalars, tuples and non-finite floats into JSON-safe values."""
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if hasattr(value, 'item') and not isinstance(value, (str, bytes)):
        value = value.item()
    if isinstance(value, float) and not math.isfinite(value):
        return repr(value)
    if isinstance(value, (str, int, float, bool)) or value is None:
        return value
    return str(value)


def format_value(value: Any) -> str:
    """Format a cell; floats use 17 significant digits so files round-trip."""
    if hasattr(value, 'item') and not isinstance(value, (str, bytes)):
        value = value.item()
    if isinstance(value, bool):
        return 'true' if value else 'false'
    if isinstance(value, float):
        return repr(value) if not math.isfinite(value) else f"{value:.17g}"
    if value is None:
        return ''
    return str(value)


def render_csv(columns: Sequence[str], rows: List[Sequence[Any]], meta: Dict[str, Any]) -> str:
    """
    Render rows as CSV preceded by '#' header lines

    Args:
        columns: Column names in order
        rows: Row tuples matching the columns
        meta: Header data (artifact version, subcommand, config echo)

    Returns:
        The CSV document as a string
    """
    buffer = io.StringIO()
    for key in sorted(meta):
        buffer.write(f"# {key}: {json.dumps(_jsonable(meta[key]), sort_keys=True)}\n")
    writer = csv.writer(buffer, lineterminator='\n')
    writer.writerow(columns)
    for row in rows:
        if len(row) != len(columns):
            raise ValueError(f"row has {len(row)} cells, expected {len(columns)}")
        writer.writerow([format_value(v) for v in row])
    return buffer.getvalue()


def render_json(columns: Sequence[str], rows: List[Sequence[Any]], meta: Dict[str, Any]) -> str:
    """Render rows as a JSON document {meta, data}."""
    data = [dict(zip(columns, (_jsonable(v) for v in row))) for row in rows]
    return json.dumps({'meta': _jsonable(meta), 'data': data}, sort_keys=True, indent=2) + "\n"


def write_artifact(path: str, fmt: str, columns: Sequence[str],
                   rows: List[Sequence[Any]], meta: Dict[str, Any]) -> str:
    """Write an artifact to path ('-' for stdout) and return the rendered text."""
    text = render_json(columns, rows, meta) if fmt == 'json' else render_csv(columns, rows, meta)
    if path == '-':
        print(text, end='')
    else:
        with open(path, 'w', encoding='utf-8') as handle:
            handle.write(text)
        logger.info(f"Wrote {len(rows)} rows to {path}")
    return text


def read_csv_artifact(text: str) -> Dict[str, Any]:
    """Parse an artifact produced by render_csv back into meta and rows of strings."""
    meta: Dict[str, Any] = {}
    body = []
    for line in text.splitlines():
        if line.startswith('# '):
            key, _, payload = line[2:].partition(': ')
            meta[key] = json.loads(payload)
        else:
            body.append(line)
    reader = csv.reader(body)
    columns = next(reader)
    return {'meta': meta, 'columns': columns, 'rows': [row for row in reader]}
