"""File outputs: legacy VTK snapshots, CSV tables, run manifests.

Every artifact names the configuration hash it was produced from, and a
run directory refuses to mix artifacts of different configurations: the
manifest is the gatekeeper, written when a run starts and finalized when
it ends.
"""

import csv
import datetime
import json
import os
import subprocess
import time

import numpy as np

from . import __version__
from .config import config_hash, render_config
from .stepper import DIAGNOSTIC_COLUMNS

# local quadratic dofs are [corners, midside opposite each corner]; the
# legacy quadratic-triangle cell (type 22) wants [corners, m01, m12, m20]
_VTK_LOCAL_ORDER = (0, 1, 2, 5, 3, 4)
_VTK_QUADRATIC_TRIANGLE = 22


class OutputDirError(ValueError):
    """Target directory already holds artifacts of another configuration."""


def default_output_root():
    return os.environ.get("STOCHLANS_OUT", "runs")


def git_describe():
    try:
        out = subprocess.run(
            ["git", "describe", "--always", "--dirty"],
            cwd=os.path.dirname(os.path.abspath(__file__)),
            capture_output=True, text=True, timeout=10)
        if out.returncode == 0:
            return out.stdout.strip()
    except (OSError, subprocess.SubprocessError):
        pass
    return "unknown"


def write_vtk(path, space, fields=None, title=""):
    """Legacy ASCII snapshot of the quadratic mesh with optional data.

    ``fields`` maps names to velocity coefficient vectors (written as
    3-vectors with zero z) or vertex scalar vectors (pressure; averaged
    onto midside nodes, exact for first-degree data).
    """
    mesh = space.mesh
    nodes = space.scalar_nodes
    n = nodes.shape[0]
    cells = space.vel_dofmap[:, _VTK_LOCAL_ORDER]
    with open(path, "w", encoding="ascii") as fh:
        fh.write("# vtk DataFile Version 3.0\n")
        fh.write((title or "stochlans snapshot")[:255] + "\n")
        fh.write("ASCII\nDATASET UNSTRUCTURED_GRID\n")
        fh.write(f"POINTS {n} double\n")
        for x, y in nodes:
            fh.write(f"{x:.17g} {y:.17g} 0\n")
        fh.write(f"CELLS {cells.shape[0]} {cells.shape[0] * 7}\n")
        for row in cells:
            fh.write("6 " + " ".join(str(i) for i in row) + "\n")
        fh.write(f"CELL_TYPES {cells.shape[0]}\n")
        fh.write("\n".join([str(_VTK_QUADRATIC_TRIANGLE)] * cells.shape[0]) + "\n")
        if not fields:
            return
        fh.write(f"POINT_DATA {n}\n")
        for name, data in fields.items():
            data = np.asarray(data, dtype=float)
            if data.size == space.n_velocity:
                ux, uy = space.velocity_components(data)
                fh.write(f"VECTORS {name} double\n")
                for a, b in zip(ux, uy):
                    fh.write(f"{a:.17g} {b:.17g} 0\n")
            elif data.size == space.n_pressure:
                full = np.empty(n)
                full[: space.n_pressure] = data
                if n > space.n_pressure:
                    e = mesh.edges
                    full[space.n_pressure :] = 0.5 * (data[e[:, 0]] + data[e[:, 1]])
                fh.write(f"SCALARS {name} double 1\nLOOKUP_TABLE default\n")
                fh.write("\n".join(f"{v:.17g}" for v in full) + "\n")
            else:
                raise ValueError(f"field {name!r} has unsupported size {data.size}")


def write_diagnostics_csv(path, rows, hash_, extra_comment=""):
    """Per-step diagnostics table prefixed with the configuration hash."""
    with open(path, "w", newline="", encoding="ascii") as fh:
        fh.write(f"# config {hash_}\n")
        if extra_comment:
            fh.write(f"# {extra_comment}\n")
        writer = csv.writer(fh)
        writer.writerow(DIAGNOSTIC_COLUMNS)
        for row in np.atleast_2d(rows):
            writer.writerow([f"{v:.17g}" for v in row])


def read_diagnostics_csv(path):
    """Return ``(config_hash, column_names, data_array)`` for a diagnostics file."""
    hash_ = ""
    with open(path, "r", encoding="ascii") as fh:
        raw = fh.readlines()
    for ln in raw:
        if ln.startswith("# config "):
            hash_ = ln.split()[2]
            break
    reader = csv.reader([ln for ln in raw if not ln.startswith("#")])
    header = next(reader)
    data = np.array([[float(v) for v in row] for row in reader])
    return hash_, header, data


def write_estimates_csv(path, rows, hash_):
    """MC estimate table: label, statistic, mean, se, n, plus context columns."""
    with open(path, "w", newline="", encoding="ascii") as fh:
        fh.write(f"# config {hash_}\n")
        writer = csv.writer(fh)
        writer.writerow(["label", "statistic", "mean", "se", "n_samples"])
        for label, statistic, est in rows:
            writer.writerow([label, statistic, f"{est.mean:.17g}", f"{est.se:.17g}", est.n])


class RunManifest:
    """Append-only JSONL record of one run directory.

    ``open_run`` writes the start line before any work happens, so a
    crashed run leaves evidence; ``finalize`` appends the closing line.
    A directory whose manifest names a different configuration hash is
    refused outright.
    """

    def __init__(self, directory, cfg, command, argv=None):
        self.directory = directory
        self.cfg = cfg
        self.hash = config_hash(cfg)
        self.command = command
        self.argv = list(argv or [])
        self.path = os.path.join(directory, "manifest.jsonl")
        self._t0 = None
        self.outputs = []

    def check_directory(self):
        if not os.path.exists(self.path):
            return
        with open(self.path, "r", encoding="ascii") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                rec = json.loads(line)
                other = rec.get("config_hash")
                if other is not None and other != self.hash:
                    raise OutputDirError(
                        f"directory {self.directory!r} already holds run data for "
                        f"config {other}, refusing to mix with {self.hash}")

    def open_run(self):
        os.makedirs(self.directory, exist_ok=True)
        self.check_directory()
        self._t0 = time.perf_counter()
        self._append({
            "event": "start",
            "command": self.command,
            "config_hash": self.hash,
            "config": render_config(self.cfg),
            "seed": self.cfg.seed,
            "paths": self.cfg.paths,
            "argv": self.argv,
            "version": __version__,
            "git": git_describe(),
            "time": datetime.datetime.now(datetime.timezone.utc).isoformat(),
        })
        return self

    def add_output(self, path):
        self.outputs.append(os.path.basename(path))
        return path

    def finalize(self, status="ok", error=""):
        wall = time.perf_counter() - self._t0 if self._t0 is not None else 0.0
        self._append({
            "event": "finish",
            "command": self.command,
            "config_hash": self.hash,
            "status": status,
            "error": error,
            "outputs": self.outputs,
            "wall_time": wall,
            "time": datetime.datetime.now(datetime.timezone.utc).isoformat(),
        })

    def _append(self, record):
        with open(self.path, "a", encoding="ascii") as fh:
            fh.write(json.dumps(record) + "\n")
            fh.flush()
            os.fsync(fh.fileno())


def read_manifest(directory):
    path = os.path.join(directory, "manifest.jsonl")
    records = []
    with open(path, "r", encoding="ascii") as fh:
        for line in fh:
            line = line.strip()
            if line:
                records.append(json.loads(line))
    return records
