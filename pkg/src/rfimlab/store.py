"""On-disk results: append-only ledger, CSV rows, JSON summaries, binary spools."""

from __future__ import annotations

import csv
import io
import json
import math
import os
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__

LEDGER = "ledger.jsonl"


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return repr(v) if math.isfinite(v) else ("nan" if math.isnan(v) else ("inf" if v > 0 else "-inf"))
    return str(v)


def jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    return obj


class ResultStore:
    """One directory per run configuration.

    Every file written goes through ``_register`` and so appears in the
    ledger; checkpoint files list completed disorder indices per sweep.
    """

    def __init__(self, directory, config_hash: str = "", code_version: str = __version__):
        self.root = Path(directory)
        self.root.mkdir(parents=True, exist_ok=True)
        (self.root / "checkpoints").mkdir(exist_ok=True)
        (self.root / "spools").mkdir(exist_ok=True)
        self.config_hash = config_hash
        self.code_version = code_version

    # -- ledger ---------------------------------------------------------------

    def log(self, event: str, **fields):
        entry = {"event": event, "config_hash": self.config_hash, "code_version": self.code_version,
                 "timestamp": datetime.now(timezone.utc).isoformat(), **jsonable(fields)}
        with open(self.root / LEDGER, "a") as fh:
            fh.write(json.dumps(entry, sort_keys=True) + "\n")

    def ledger(self) -> list[dict]:
        path = self.root / LEDGER
        if not path.exists():
            return []
        return [json.loads(line) for line in path.read_text().splitlines() if line.strip()]

    def artifacts(self) -> set[str]:
        return {e["path"] for e in self.ledger() if e.get("event") == "artifact"}

    def _register(self, path: Path, kind: str):
        rel = str(path.relative_to(self.root))
        if rel not in self.artifacts():
            self.log("artifact", path=rel, kind=kind)

    # -- rows and checkpoints ---------------------------------------------------

    def rows_path(self, tag: str) -> Path:
        return self.root / f"records_{tag}.csv"

    def append_rows(self, tag: str, rows: list[dict]):
        if not rows:
            return
        path = self.rows_path(tag)
        header = list(rows[0].keys())
        new = not path.exists()
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        if new:
            writer.writerow(header)
        else:
            with open(path) as fh:
                header = next(csv.reader(fh))
        for r in rows:
            writer.writerow([_fmt(r.get(k, "")) for k in header])
        with open(path, "a") as fh:
            fh.write(buf.getvalue())
            fh.flush()
            os.fsync(fh.fileno())
        self._register(path, "rows")
        ck = self.root / "checkpoints" / f"{tag}.done"
        with open(ck, "a") as fh:
            for r in rows:
                fh.write(f"{int(r['index'])}\n")
        self._register(ck, "checkpoint")

    def read_rows(self, tag: str) -> list[dict]:
        path = self.rows_path(tag)
        if not path.exists():
            return []
        with open(path) as fh:
            return list(csv.DictReader(fh))

    def completed(self, tag: str) -> set[int]:
        ck = self.root / "checkpoints" / f"{tag}.done"
        if not ck.exists():
            return set()
        return {int(x) for x in ck.read_text().split()}

    def ensure_empty_rows(self, tag: str, header: list[str]):
        """Create a header-only CSV for an empty sweep."""
        path = self.rows_path(tag)
        if not path.exists():
            with open(path, "w") as fh:
                csv.writer(fh, lineterminator="\n").writerow(header)
            self._register(path, "rows")

    def tags(self) -> list[str]:
        return sorted(p.stem[len("records_"):] for p in self.root.glob("records_*.csv"))

    # -- summaries --------------------------------------------------------------

    def write_summary(self, tag: str, summary: dict):
        path = self.root / f"summary_{tag}.json"
        path.write_text(json.dumps(jsonable(summary), indent=2, sort_keys=True) + "\n")
        self._register(path, "summary")

    def read_summary(self, tag: str) -> dict | None:
        path = self.root / f"summary_{tag}.json"
        return json.loads(path.read_text()) if path.exists() else None

    def write_table(self, name: str, header: list[str], rows: list[list]):
        path = self.root / name
        with open(path, "w") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for r in rows:
                w.writerow([_fmt(v) for v in r])
        self._register(path, "table")
        return path

    # -- binary spools ----------------------------------------------------------

    def write_spool(self, name: str, array: np.ndarray, meta: dict):
        """Raw array bytes plus a JSON sidecar with dtype, shape and provenance."""
        path = self.root / "spools" / f"{name}.bin"
        arr = np.ascontiguousarray(array)
        arr.tofile(path)
        side = {"dtype": str(arr.dtype), "shape": list(arr.shape), "code_version": self.code_version, **meta}
        sidecar = path.with_suffix(".json")
        sidecar.write_text(json.dumps(jsonable(side), indent=2, sort_keys=True) + "\n")
        self._register(path, "spool")
        self._register(sidecar, "spool-meta")
        return path

    def read_spool(self, name: str):
        path = self.root / "spools" / f"{name}.bin"
        if not path.exists():
            return None, None
        meta = json.loads(path.with_suffix(".json").read_text())
        arr = np.fromfile(path, dtype=meta["dtype"]).reshape(meta["shape"])
        return arr, meta

    def append_triples(self, tag: str, index: int, triples: np.ndarray, signs: np.ndarray):
        """Fixed-size binary records: index, then overlap triples, then sign triples."""
        path = self.root / "spools" / f"triples_{tag}.bin"
        with open(path, "ab") as fh:
            fh.write(np.int64(index).tobytes())
            fh.write(np.ascontiguousarray(triples, dtype=np.int32).tobytes())
            fh.write(np.ascontiguousarray(signs, dtype=np.int8).tobytes())
        self._register(path, "spool")

    def read_triples(self, tag: str, count: int) -> dict:
        path = self.root / "spools" / f"triples_{tag}.bin"
        if not path.exists() or count == 0:
            return {}
        size = 8 + count * 3 * 4 + count * 3
        raw = path.read_bytes()
        out = {}
        for off in range(0, len(raw) - size + 1, size):
            idx = int(np.frombuffer(raw, np.int64, 1, off)[0])
            t = np.frombuffer(raw, np.int32, count * 3, off + 8).reshape(count, 3)
            s = np.frombuffer(raw, np.int8, count * 3, off + 8 + count * 12).reshape(count, 3)
            out[idx] = (t.copy(), s.copy())
        return out
