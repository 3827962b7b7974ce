"""Result persistence: atomic CSV/JSON writers, run manifests and plot-data export.

Every file is written to a temporary sibling and moved into place with
``os.replace``, so readers never see a truncated file. Result files carry
no timestamps; those live in the manifest only, so a fixed config gives
byte-identical result files.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import os
import tempfile
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .analysis import FidRecord

MANIFEST_NAME = "manifest.json"
LAYOUTS = ("fig2", "fig3", "fig4", "fig5")
AXIS_COLUMNS = {
    "mw_frequency": "mw_frequency_hz",
    "mw_rabi": "mw_rabi_hz",
    "laser_density": "laser_density_mw_per_mm2",
}


def atomic_write_bytes(path, data: bytes) -> Path:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=path.parent)
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def atomic_write_text(path, text: str) -> Path:
    return atomic_write_bytes(path, text.encode("utf-8"))


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def ensure_writable(directory) -> Path:
    """Create ``directory`` if needed and prove it accepts files.

    Raises:
        OSError: The directory cannot be created or written.
    """
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    if not d.is_dir():
        raise NotADirectoryError(f"output path {d} is not a directory")
    fd, probe = tempfile.mkstemp(prefix=".probe.", dir=d)
    os.close(fd)
    os.unlink(probe)
    return d


def _num(x) -> str:
    x = float(x)
    return "nan" if math.isnan(x) else repr(x)


def _json_safe(obj):
    if isinstance(obj, dict):
        return {str(k): _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return None if not math.isfinite(float(obj)) else float(obj)
    return obj


def dumps(obj) -> str:
    return json.dumps(_json_safe(obj), indent=2, sort_keys=True) + "\n"


def csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_num(v) if isinstance(v, (float, np.floating)) else v for v in row])
    return buf.getvalue()


def read_csv(path) -> tuple[list[str], list[list[str]]]:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"result file not found: {path}")
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


# --- sweep results ------------------------------------------------------------

def write_sweep(result, directory, stem: str, metadata: dict | None = None) -> dict[str, Path]:
    """CSV ``(<axis>, polarization, error_flag)`` plus a JSON sidecar.

    File names are ``<stem>-<fingerprint[:12]>.csv/.json``.
    """
    d = Path(directory)
    base = f"{stem}-{result.fingerprint[:12]}"
    rows = [(float(x), float(p), int(e is not None))
            for x, p, e in zip(result.values, result.polarization, result.errors)]
    csv_path = atomic_write_text(d / f"{base}.csv",
                                 csv_text([AXIS_COLUMNS[result.axis], "polarization", "error_flag"], rows))
    sidecar = {
        "axis": result.axis,
        "fingerprint": result.fingerprint,
        "n_points": len(rows),
        "n_failed": result.n_failed,
        "errors": [{"index": i, "message": e} for i, e in enumerate(result.errors) if e is not None],
        "peaks": result.peaks,
        "summary": result.summary,
        "metadata": metadata or {},
    }
    json_path = atomic_write_text(d / f"{base}.json", dumps(sidecar))
    return {"csv": csv_path, "json": json_path}


def read_sweep(csv_path) -> tuple[str, np.ndarray, np.ndarray, np.ndarray]:
    """Returns (axis column name, axis values, polarization, error flags)."""
    header, rows = read_csv(csv_path)
    arr = np.array([[float(v) for v in r] for r in rows], float).reshape(-1, 3)
    return header[0], arr[:, 0], arr[:, 1], arr[:, 2].astype(int)


def write_trajectory(path, times, columns: dict[str, np.ndarray]) -> Path:
    """CSV ``time_s`` plus one column per named observable."""
    names = list(columns)
    rows = zip(times, *(np.real_if_close(columns[n]) for n in names))
    return atomic_write_text(path, csv_text(["time_s", *names], rows))


# --- FID files ----------------------------------------------------------------

def write_fid(path, fid: FidRecord, metadata: dict | None = None) -> Path:
    """First line ``# {json}`` header, then ``time_s, real, imag``."""
    head = {"sample_interval": fid.sample_interval, "frequency_offset": fid.frequency_offset,
            "n_points": len(fid.samples), **(metadata or {})}
    body = csv_text(["time_s", "real", "imag"],
                    ((float(t), float(z.real), float(z.imag)) for t, z in zip(fid.times, fid.samples)))
    return atomic_write_text(path, "# " + json.dumps(_json_safe(head), sort_keys=True) + "\n" + body)


def read_fid(path) -> tuple[FidRecord, dict]:
    with open(path, encoding="utf-8") as fh:
        first = fh.readline()
        if not first.startswith("# "):
            raise ValueError(f"{path}: missing JSON header line")
        meta = json.loads(first[2:])
        rows = list(csv.reader(fh))
    data = np.array([[float(v) for v in r] for r in rows[1:]], float)
    fid = FidRecord(float(meta["sample_interval"]), data[:, 1] + 1j * data[:, 2],
                    float(meta.get("frequency_offset", 0.0)))
    return fid, meta


def read_odmr(path) -> tuple[np.ndarray, np.ndarray]:
    """Two-column CSV ``frequency_hz, signal`` with a header row."""
    _, rows = read_csv(path)
    arr = np.array([[float(v) for v in r[:2]] for r in rows], float)
    return arr[:, 0], arr[:, 1]


# --- manifest -----------------------------------------------------------------

@dataclass
class RunManifest:
    """Run record: config hash, tool version, timestamps, output checksums.

    ``outputs`` maps file name -> ``{"role": ..., "sha256": ...}``.
    """

    kind: str
    config_hash: str
    version: str
    started: str
    finished: str
    status: str
    outputs: dict = field(default_factory=dict)
    n_failed: int = 0

    def add(self, path, role: str):
        path = Path(path)
        self.outputs[path.name] = {"role": role, "sha256": sha256_file(path)}

    def path_for(self, role: str, directory) -> Path:
        for name, entry in sorted(self.outputs.items()):
            if entry["role"] == role:
                return Path(directory) / name
        raise FileNotFoundError(
            f"no '{role}' output recorded in {Path(directory) / MANIFEST_NAME}")

    def write(self, directory) -> Path:
        return atomic_write_text(Path(directory) / MANIFEST_NAME, dumps(asdict(self)))

    @classmethod
    def read(cls, directory) -> "RunManifest":
        path = Path(directory) / MANIFEST_NAME
        if not path.exists():
            raise FileNotFoundError(f"manifest not found: {path}")
        with open(path, encoding="utf-8") as fh:
            return cls(**json.load(fh))

    def verify(self, directory) -> list[str]:
        """Names of outputs that are missing or whose checksum changed."""
        bad = []
        for name, entry in self.outputs.items():
            p = Path(directory) / name
            if not p.exists() or sha256_file(p) != entry["sha256"]:
                bad.append(name)
        return bad


# --- plot data ----------------------------------------------------------------

def _norm(p: np.ndarray) -> np.ndarray:
    finite = np.isfinite(p)
    peak = np.max(np.abs(p[finite])) if np.any(finite) else 0.0
    return p / peak if peak > 0 else p


def export_plotdata(directory, layout: str, out_dir=None, kappa: float | None = None) -> Path:
    """Tidy per-figure CSV from the results of one run.

    Layouts and columns:

    * ``fig2``: ``mw_frequency_hz, polarization_norm`` (spectrum runs)
    * ``fig3``: ``mw_rabi_hz, mw_power_w, polarization, polarization_norm`` (power sweeps)
    * ``fig4``: ``laser_density_mw_per_mm2, p_nv, p_thermal, p_hyper, p_hyper_norm``
    * ``fig5``: ``subset, n_tones, polarization, ratio`` (multi-tone runs)

    Raises:
        ValueError: Unknown layout.
        FileNotFoundError: The run directory lacks the needed result file;
            the message names the expected path.
    """
    if layout not in LAYOUTS:
        raise ValueError(f"unknown layout {layout!r}; choose from {', '.join(LAYOUTS)}")
    directory = Path(directory)
    manifest = RunManifest.read(directory)
    role = {"fig2": "spectrum", "fig3": "power-sweep", "fig4": "laser-model", "fig5": "multitone"}[layout]
    src = manifest.path_for(role, directory)
    out_dir = ensure_writable(out_dir) if out_dir is not None else directory
    out = out_dir / f"{layout}.csv"
    if layout == "fig2":
        _, x, p, _ = read_sweep(src)
        text = csv_text(["mw_frequency_hz", "polarization_norm"], zip(x, _norm(p)))
    elif layout == "fig3":
        from .engine import power_from_rabi
        from . import constants as C

        _, x, p, _ = read_sweep(src)
        watts = power_from_rabi(x, kappa or C.RABI_PER_SQRT_WATT)
        text = csv_text(["mw_rabi_hz", "mw_power_w", "polarization", "polarization_norm"],
                        zip(x, watts, p, _norm(p)))
    elif layout == "fig4":
        header, rows = read_csv(src)
        arr = np.array([[float(v) for v in r] for r in rows], float)
        text = csv_text(header + ["p_hyper_norm"],
                        (list(r) + [n] for r, n in zip(arr, _norm(arr[:, 3]))))
    else:
        header, rows = read_csv(src)
        col = {h: i for i, h in enumerate(header)}
        text = csv_text(["subset", "n_tones", "polarization", "ratio"],
                        ((r[col["label"]], int(r[col["n_tones"]]), float(r[col["polarization"]]),
                          float(r[col["ratio"]])) for r in rows))
    return atomic_write_text(out, text)
