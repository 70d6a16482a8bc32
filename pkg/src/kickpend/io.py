"""CSV export of trajectories and kick logs (17 significant digits)."""

from __future__ import annotations

import csv
import os

import numpy as np

from .dynamics import KickEvent, Params, State, Trajectory, energy, wrap
from .grid import fmt

TRAJECTORY_HEADER = ["t", "theta_wrapped", "p", "H"]
EVENT_HEADER = ["t", "side", "p_pre", "p_post"]


def write_trajectory(traj: Trajectory, params: Params, path) -> None:
    th = wrap(traj.theta)
    H = energy(th, traj.p, params)
    with open(os.fspath(path), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRAJECTORY_HEADER)
        for row in zip(np.atleast_1d(traj.t), np.atleast_1d(th), np.atleast_1d(traj.p), np.atleast_1d(H)):
            w.writerow([fmt(x) for x in row])


def write_events(events, path) -> None:
    with open(os.fspath(path), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(EVENT_HEADER)
        for ev in events:
            w.writerow([fmt(ev.time), str(ev.side), fmt(ev.pre.p), fmt(ev.post.p)])


def _read(path, header):
    with open(os.fspath(path), newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != header:
        raise ValueError(f"{path}: expected header {','.join(header)}")
    return rows[1:]


def read_trajectory(path) -> Trajectory:
    """Trajectory with the wrapped angles that were written (H column is derived)."""
    rows = _read(path, TRAJECTORY_HEADER)
    a = np.array([[float(x) for x in r[:3]] for r in rows]).reshape(-1, 3)
    return Trajectory(a[:, 0], a[:, 1], a[:, 2])


def read_events(path, params: Params) -> tuple:
    """Kick log; the guard angle is restored as ``side * theta_star``."""
    out = []
    for r in _read(path, EVENT_HEADER):
        side = int(r[1])
        th = side * params.theta_star
        out.append(KickEvent(float(r[0]), side, State(th, float(r[2])), State(th, float(r[3]))))
    return tuple(out)
