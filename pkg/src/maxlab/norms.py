"""Fourier Sobolev norms, Lebesgue norms and the per-run norm record."""

from __future__ import annotations

import copy
import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import simpson, trapezoid

from maxlab.errors import GridMismatch, RejectedInput
from maxlab.fields import FieldState, TorusGrid
from maxlab.spectral import spectral


def _check_finite(f: np.ndarray) -> np.ndarray:
    f = np.asarray(f)
    if not np.all(np.isfinite(f)):
        raise RejectedInput("field contains non-finite samples")
    if np.iscomplexobj(f):
        raise RejectedInput("field must be real")
    return f


def _as_components(f: np.ndarray, grid: TorusGrid) -> np.ndarray:
    if f.shape == grid.shape:
        return f[None]
    if f.shape[-grid.dim:] != grid.shape:
        raise GridMismatch(f"field shape {f.shape} does not match grid {grid.shape}")
    return f.reshape((-1,) + grid.shape)


def fourier_weight(grid: TorusGrid, s: float, homogeneous: bool = False) -> np.ndarray:
    """``<xi>^s`` (or ``|xi|^s`` with the zero mode mapped to 0) on the rfft layout."""
    sp = spectral(grid)
    if homogeneous:
        with np.errstate(divide="ignore"):
            w = np.where(sp.k_abs > 0, sp.k_abs ** float(s), 0.0)
        return w
    return (1.0 + sp.k_abs**2) ** (0.5 * float(s))


def sobolev_norm(f: np.ndarray, s: float, grid: TorusGrid, homogeneous: bool = False) -> float:
    """``(sum_xi <xi>^{2s} |f_hat(xi)|^2)^{1/2}`` normalized so that ``s = 0`` is the L2 norm.

    Vector fields (leading component axis) are summed over components. With
    ``homogeneous=True`` the weight is ``|xi|^s`` and the mean mode is dropped.
    """
    f = _as_components(_check_finite(f), grid)
    sp = spectral(grid)
    w2 = fourier_weight(grid, s, homogeneous) ** 2 * sp.rfft_weights
    total = 0.0
    for comp in f:
        F = sp.fft(comp)
        total += float(np.sum(w2 * (F.real**2 + F.imag**2)))
    return math.sqrt(total * grid.volume) / grid.size


def lq_norm(f: np.ndarray, q: float, grid: TorusGrid) -> float:
    """Quadrature ``L^q`` norm; vector fields use the pointwise Euclidean length."""
    f = _as_components(_check_finite(f), grid)
    if q < 1:
        raise RejectedInput("q must be >= 1")
    mag = np.abs(f[0]) if f.shape[0] == 1 else np.sqrt(np.sum(f**2, axis=0))
    top = float(mag.max())
    if math.isinf(q):
        return top
    if top == 0.0:
        return 0.0
    return top * float(grid.cell_volume * np.sum((mag / top) ** q)) ** (1.0 / q)


def mixed_norm_value(times: np.ndarray, norms: np.ndarray, p: float, rule: str = "trapezoid") -> float:
    """``L^p`` in time of a sampled norm series (``rule``: ``trapezoid`` or ``simpson``)."""
    norms = np.asarray(norms, dtype=float)
    if norms.size == 0:
        return 0.0
    if math.isinf(p):
        return float(norms.max())
    if norms.size == 1:
        return 0.0
    t = np.asarray(times, dtype=float)
    if rule == "simpson" and norms.size >= 3:
        return float(simpson(norms**p, x=t)) ** (1.0 / p)
    if rule not in ("trapezoid", "simpson"):
        raise RejectedInput(f"unknown quadrature rule {rule!r}")
    return float(trapezoid(norms**p, t)) ** (1.0 / p)


def _fmt(x) -> str:
    if isinstance(x, (float, np.floating)):
        return format(float(x), ".17g")
    return str(x)


def _key(v: float) -> str:
    return "inf" if math.isinf(v) else format(float(v), "g")


@dataclass
class NormReport:
    """Per-time-stamp record of norms, energies and charges for one run.

    ``record`` appends one row; :func:`mixed_norm_accumulate` maintains the
    running ``L^p_t L^q_x`` composites in ``mixed``.
    """

    grid: TorusGrid | None = None
    s_list: tuple[float, ...] = (0.0,)
    q_list: tuple[float, ...] = (2.0,)
    times: list = field(default_factory=list)
    sobolev: dict = field(default_factory=dict)
    lq: dict = field(default_factory=dict)
    energy: list = field(default_factory=list)
    charge: list = field(default_factory=list)
    extra: dict = field(default_factory=dict)
    mixed_series: dict = field(default_factory=dict)
    mixed: dict = field(default_factory=dict)

    def _bind(self, grid: TorusGrid) -> None:
        if self.grid is None:
            self.grid = grid
        elif self.grid != grid:
            raise GridMismatch("snapshot grid differs from the report's grid")

    def record(self, state: FieldState, energy: float | None = None, charge: float | None = None,
               **extra: float) -> "NormReport":
        self._bind(state.grid)
        comps = state.components
        self.times.append(float(state.time))
        for s in self.s_list:
            self.sobolev.setdefault(s, []).append(sobolev_norm(comps, s, state.grid))
        for q in self.q_list:
            self.lq.setdefault(q, []).append(lq_norm(comps, q, state.grid))
        self.energy.append(math.nan if energy is None else float(energy))
        self.charge.append(math.nan if charge is None else float(charge))
        for k, v in extra.items():
            self.extra.setdefault(k, []).append(float(v))
        return self

    def columns(self) -> list[tuple[str, list]]:
        cols = [("time", self.times), ("energy", self.energy), ("charge", self.charge)]
        cols += [(f"H^{_key(s)}", self.sobolev[s]) for s in self.s_list if s in self.sobolev]
        cols += [(f"L^{_key(q)}", self.lq[q]) for q in self.q_list if q in self.lq]
        cols += [(k, v) for k, v in self.extra.items()]
        return cols

    def to_csv(self, path=None) -> str:
        cols = self.columns()
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow([c[0] for c in cols])
        for i in range(len(self.times)):
            w.writerow([_fmt(c[1][i]) if i < len(c[1]) else "" for c in cols])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text

    def validate(self) -> None:
        for name, col in self.columns():
            vals = np.asarray([v for v in col if not math.isnan(v)], dtype=float)
            if name in ("time", "charge"):
                continue
            if not np.all(np.isfinite(vals)) or np.any(vals < 0):
                raise RejectedInput(f"column {name} has negative or non-finite entries")


def mixed_norm_accumulate(report: NormReport, snapshot: FieldState, p: float, q: float) -> NormReport:
    """Return a copy of ``report`` with ``snapshot`` folded into the ``(p, q)`` composite.

    Snapshots must arrive at uniform time steps; ``p = inf`` keeps a running maximum.
    """
    if p < 1 or q < 1:
        raise RejectedInput("p and q must be >= 1")
    out = copy.copy(report)
    out.mixed_series = {k: list(v) for k, v in report.mixed_series.items()}
    out.mixed = dict(report.mixed)
    out._bind(snapshot.grid)
    series = out.mixed_series.setdefault((p, q), [])
    t = float(snapshot.time)
    if len(series) >= 1 and t <= series[-1][0]:
        raise RejectedInput("snapshots must be supplied in increasing time order")
    if len(series) >= 2:
        dt0 = series[1][0] - series[0][0]
        if abs((t - series[-1][0]) - dt0) > 1e-9 * max(abs(dt0), 1e-300):
            raise RejectedInput("snapshots must be supplied at uniform time steps")
    series.append((t, lq_norm(snapshot.components, q, snapshot.grid)))
    ts = np.array([a for a, _ in series])
    ns = np.array([b for _, b in series])
    out.mixed[(p, q)] = mixed_norm_value(ts, ns, p)
    return out
