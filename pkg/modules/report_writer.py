"""Atomic output files: JSON lines records, JSON summaries and CSV mirrors."""
import csv
import hashlib
import io
import json
import logging
import math
import os
import tempfile
from typing import Any, Dict, Iterable, List, Optional

from modules import __version__


def _clean(value: Any) -> Any:
    # JSON has no inf/nan; write them as strings so files stay strict JSON
    if isinstance(value, float) and not math.isfinite(value):
        return str(value)
    if isinstance(value, dict):
        return {str(k): _clean(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_clean(v) for v in value]
    return value


def dumps(value: Any, indent: Optional[int] = None) -> str:
    return json.dumps(_clean(value), sort_keys=True, indent=indent, separators=None if indent else (",", ":"))


def config_hash(config: Dict[str, Any]) -> str:
    return hashlib.sha256(dumps(config).encode("utf-8")).hexdigest()


def make_header(config: Dict[str, Any]) -> Dict[str, Any]:
    return {"version": __version__, "config_hash": config_hash(config), "config": config}


def atomic_write_text(path: str, text: str):
    """Write text to path through a temporary file and os.replace."""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp_path = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as f:
            f.write(text)
        os.replace(tmp_path, path)
    except Exception:
        if os.path.exists(tmp_path):
            os.remove(tmp_path)
        raise
    logging.debug(f"Wrote {path}")


def jsonl_text(header: Dict[str, Any], records: Iterable[Dict[str, Any]]) -> str:
    lines = [dumps({"header": header})]
    lines.extend(dumps(record) for record in records)
    return "\n".join(lines) + "\n"


def summary_rows(summary: Dict[str, Any]) -> List[Dict[str, Any]]:
    """Flatten aggregates and verdicts into (section, key, value) rows."""
    rows = []
    for key, value in sorted(summary.get("aggregates", {}).items()):
        if isinstance(value, dict):
            for sub, inner in sorted(value.items()):
                rows.append({"section": "aggregate", "key": f"{key}.{sub}", "value": _clean(inner)})
        else:
            rows.append({"section": "aggregate", "key": key, "value": _clean(value)})
    for verdict in summary.get("verdicts", []):
        rows.append({
            "section": "verdict",
            "key": verdict["criterion"],
            "value": "pass" if verdict["passed"] else "fail",
            "margin": _clean(verdict["margin"]),
            "detail": verdict.get("detail", ""),
        })
    return rows


def csv_text(header: Dict[str, Any], rows: List[Dict[str, Any]]) -> str:
    buffer = io.StringIO()
    buffer.write(f"# version={header['version']} config_hash={header['config_hash']}\n")
    buffer.write(f"# config={dumps(header['config'])}\n")
    fields = ["section", "key", "value", "margin", "detail"]
    writer = csv.DictWriter(buffer, fieldnames=fields, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: row.get(k, "") for k in fields})
    return buffer.getvalue()


def write_experiment(output_dir: str, stem: str, header: Dict[str, Any], records: List[Dict[str, Any]],
                     summary: Dict[str, Any], timings: List[Dict[str, Any]]) -> Dict[str, str]:
    """Write the four experiment files and return their paths by role."""
    paths = {
        "records": os.path.join(output_dir, f"{stem}.records.jsonl"),
        "summary": os.path.join(output_dir, f"{stem}.summary.json"),
        "csv": os.path.join(output_dir, f"{stem}.summary.csv"),
        "timings": os.path.join(output_dir, f"{stem}.timings.jsonl"),
    }
    atomic_write_text(paths["records"], jsonl_text(header, records))
    atomic_write_text(paths["summary"], dumps({"header": header, **summary}, indent=2) + "\n")
    atomic_write_text(paths["csv"], csv_text(header, summary_rows(summary)))
    atomic_write_text(paths["timings"], "\n".join(dumps(t) for t in timings) + ("\n" if timings else ""))
    logging.info(f"Experiment files written under {output_dir} with stem {stem}")
    return paths
