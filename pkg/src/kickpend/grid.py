"""Rectangular (theta, p) fields, the cell-parallel executor and their CSV form."""

from __future__ import annotations

import csv
import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .dynamics import Params
from .errors import DomainError

STATUSES = ("converged", "truncated", "diverged", "escaped", "error", "ok", "unsettled")


def fmt(x: float) -> str:
    """17 significant digits: enough for a lossless float round trip."""
    return format(float(x), ".17g")


def grid_axes(window, resolution):
    """Cell coordinates for ``window = ((th0, th1), (p0, p1))``, endpoints included."""
    (th0, th1), (p0, p1) = window
    n_th, n_p = (int(n) for n in resolution)
    if n_th < 1 or n_p < 1:
        raise DomainError("resolution must be at least 1x1")
    if not (th1 > th0 or n_th == 1) or not (p1 > p0 or n_p == 1):
        raise DomainError("window must be nonempty")
    return np.linspace(th0, th1, n_th), np.linspace(p0, p1, n_p)


def resolve_workers(workers: int) -> int:
    if workers is None or workers <= 0:
        return os.cpu_count() or 1
    return int(workers)


def map_cells(fn, theta_axis, p_axis, workers: int = 0):
    """Evaluate ``fn(theta, p) -> (re, im, status)`` on every cell.

    Rows (fixed p) are the parallel unit. Results land at their own index, so
    the output does not depend on the worker count or completion order. The
    integrator releases the GIL, which is what makes threads worthwhile.
    """
    n_th, n_p = len(theta_axis), len(p_axis)
    values = np.zeros((n_p, n_th), dtype=complex)
    status = np.empty((n_p, n_th), dtype=object)

    def row(j):
        p = float(p_axis[j])
        for i in range(n_th):
            re, im, st = fn(float(theta_axis[i]), p)
            values[j, i] = complex(re, im)
            status[j, i] = st

    n_workers = resolve_workers(workers)
    if n_workers == 1:
        for j in range(n_p):
            row(j)
    else:
        with ThreadPoolExecutor(max_workers=n_workers) as pool:
            list(pool.map(row, range(n_p)))
    return values, status


@dataclass
class GridField:
    """Complex field over a (theta, p) grid; arrays are indexed ``[p, theta]``."""

    theta_axis: np.ndarray
    p_axis: np.ndarray
    values: np.ndarray
    status: np.ndarray
    params: Params | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.theta_axis = np.asarray(self.theta_axis, dtype=float)
        self.p_axis = np.asarray(self.p_axis, dtype=float)
        self.values = np.asarray(self.values, dtype=complex)
        self.status = np.asarray(self.status, dtype=object)
        for ax in (self.theta_axis, self.p_axis):
            if ax.size > 1 and np.any(np.diff(ax) <= 0):
                raise DomainError("grid axes must be strictly increasing")
        shape = (self.p_axis.size, self.theta_axis.size)
        if self.values.shape != shape or self.status.shape != shape:
            raise DomainError("values and status must have shape (n_p, n_theta)")

    @property
    def shape(self):
        return self.values.shape

    def mesh(self):
        return np.meshgrid(self.theta_axis, self.p_axis)

    def mask(self, status: str) -> np.ndarray:
        return self.status == status

    def counts(self) -> dict:
        names, n = np.unique(self.status.astype(str), return_counts=True)
        return {str(a): int(b) for a, b in zip(names, n)}

    def metadata(self) -> dict:
        out = {"resolution": [int(self.theta_axis.size), int(self.p_axis.size)]}
        if self.params is not None:
            out["params"] = {k: getattr(self.params, k) for k in ("mu1", "mu2", "theta_star", "k")}
        out.update(self.meta)
        return out


def _rows(gf: GridField, label: bool):
    for j, p in enumerate(gf.p_axis):
        for i, th in enumerate(gf.theta_axis):
            v = gf.values[j, i]
            st = gf.status[j, i]
            if label:
                yield [fmt(th), fmt(p), fmt(v.imag), st]
            else:
                yield [fmt(th), fmt(p), fmt(v.real), fmt(v.imag), st]


def write_grid(gf: GridField, path, label: bool = False) -> None:
    """CSV plus a ``.json`` sidecar holding the metadata.

    ``label=True`` writes the basin layout ``theta,p,label,status`` with the
    label code taken from the imaginary part.
    """
    path = os.fspath(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["theta", "p", "label", "status"] if label else ["theta", "p", "re", "im", "status"])
        w.writerows(_rows(gf, label))
    with open(os.path.splitext(path)[0] + ".json", "w") as fh:
        json.dump(gf.metadata(), fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")


def _json_default(obj):
    if isinstance(obj, complex):
        return {"re": obj.real, "im": obj.imag}
    if isinstance(obj, np.generic):
        return obj.item()
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def read_grid(path) -> GridField:
    """Inverse of :func:`write_grid` (either layout)."""
    path = os.fspath(path)
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    label = header == ["theta", "p", "label", "status"]
    th = np.array([float(r[0]) for r in body])
    p = np.array([float(r[1]) for r in body])
    theta_axis = np.unique(th)
    p_axis = np.unique(p)
    shape = (p_axis.size, theta_axis.size)
    if label:
        vals = np.array([complex(0.0, float(r[2])) for r in body])
    else:
        vals = np.array([complex(float(r[2]), float(r[3])) for r in body])
    status = np.array([r[-1] for r in body], dtype=object)
    meta = {}
    side = os.path.splitext(path)[0] + ".json"
    if os.path.exists(side):
        with open(side) as fh:
            meta = json.load(fh)
    params = None
    if "params" in meta:
        params = Params(**meta.pop("params"))
    meta.pop("resolution", None)
    if label and "target_p1" in meta:
        # the indicator is not stored in the label layout; rebuild it from the codes
        code = vals.imag
        hit = (code >= 0) & (np.abs(code - meta["target_p1"]) < meta["tol"])
        vals = hit.astype(float) + 1j * code
    return GridField(theta_axis, p_axis, vals.reshape(shape), status.reshape(shape), params, meta)
