"""Binary snapshot files.

Layout, all little-endian float64::

    [header_len, dim, n_1..n_d, L_1..L_d, normal_axis, time, n_comp, parity_1..parity_c]
    followed by the components in C order.

``header_len`` counts the floats that follow it in the header.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from maxlab.errors import RejectedInput
from maxlab.fields import FieldState, TorusGrid

_LE = "<f8"


def snapshot_bytes(state: FieldState) -> bytes:
    g = state.grid
    comps = state.components
    header = [g.dim, *g.n, *g.length, g.normal_axis, state.time, comps.shape[0], *state.parity]
    head = np.asarray([len(header)] + header, dtype=_LE)
    return head.tobytes() + np.ascontiguousarray(comps, dtype=_LE).tobytes()


def write_snapshot(path, state: FieldState) -> Path:
    path = Path(path)
    path.write_bytes(snapshot_bytes(state))
    return path


def read_snapshot(path) -> FieldState:
    raw = np.frombuffer(Path(path).read_bytes(), dtype=_LE)
    if raw.size < 2:
        raise RejectedInput("snapshot file is truncated")
    hlen = int(raw[0])
    head = raw[1:1 + hlen]
    dim = int(head[0])
    n = tuple(int(v) for v in head[1:1 + dim])
    length = tuple(float(v) for v in head[1 + dim:1 + 2 * dim])
    normal_axis = int(head[1 + 2 * dim])
    time = float(head[2 + 2 * dim])
    ncomp = int(head[3 + 2 * dim])
    parity = tuple(int(v) for v in head[4 + 2 * dim:4 + 2 * dim + ncomp])
    grid = TorusGrid(n, length, normal_axis)
    data = raw[1 + hlen:]
    if data.size != ncomp * grid.size:
        raise RejectedInput("snapshot payload size does not match its header")
    comps = data.reshape((ncomp,) + grid.shape).astype(float)
    return FieldState(grid, comps[:dim], comps[dim:], time, parity)
