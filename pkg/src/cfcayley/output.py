"""Plot-ready CSV and JSON outputs.

CSV files hold only deterministic numbers (17 significant digits, ``\\n`` line
endings), so identical inputs give byte-identical files. Wall-clock data goes
to JSON only.
"""

import json
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


def fmt(x):
    return f"{float(x):.17g}"


class OutputError(OSError):
    pass


def _write_text(path, text):
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="\n") as fh:
            fh.write(text)
    except OSError as exc:
        raise OutputError(f"cannot write {path}: {exc.strerror}") from None
    return path


def write_csv(path, header, rows):
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(v if isinstance(v, str) else fmt(v) for v in row))
    return _write_text(path, "\n".join(lines) + "\n")


def write_control(path, u):
    """``t,u_1,...``: one row per step, ``t`` the left end of the step."""
    header = ["t"] + [f"u_{j + 1}" for j in range(u.n_channels)]
    times = u.grid.times[:-1]
    return write_csv(path, header, ([t, *u.samples[:, n]] for n, t in enumerate(times)))


def write_state(path, x, psi):
    psi = np.asarray(psi)
    re, im = psi.real, psi.imag
    return write_csv(path, ["x", "re", "im", "density"], zip(x, re, im, re * re + im * im))


def write_convergence(path, records):
    return write_csv(path, ["iter", "J", "fidelity"], ((str(r.iteration), r.J, r.fidelity) for r in records))


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        return float(fmt(obj))
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, Path):
        return str(obj)
    return obj


def write_json(path, data):
    return _write_text(path, json.dumps(_jsonable(data), indent=2, sort_keys=True) + "\n")


@dataclass
class ResultBundle:
    """Run metadata plus the list of every file written under ``out_dir``."""

    out_dir: Path
    metadata: dict = field(default_factory=dict)
    files: list = field(default_factory=list)
    result: object = None

    def add(self, path):
        rel = os.path.relpath(path, self.out_dir)
        if rel not in self.files:
            self.files.append(rel)
        return path

    def csv(self, name, header, rows):
        return self.add(write_csv(self.out_dir / name, header, rows))

    def control(self, name, u):
        return self.add(write_control(self.out_dir / name, u))

    def state(self, name, x, psi):
        return self.add(write_state(self.out_dir / name, x, psi))

    def convergence(self, name, records):
        return self.add(write_convergence(self.out_dir / name, records))

    def json(self, name, data):
        return self.add(write_json(self.out_dir / name, data))

    def finish(self):
        """Write ``manifest.json`` listing every emitted file."""
        manifest = self.out_dir / "manifest.json"
        files = sorted(self.files + ["manifest.json"])
        write_json(manifest, {**self.metadata, "files": files})
        self.files = files
        return self
