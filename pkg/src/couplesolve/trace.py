"""Run traces and their CSV serialization.

One row per recorded iterate: objective value of the evaluated point, the
running-average objective (averaging algorithm only), objective error against
the centralized optimum (when available), worst coupled-constraint residuals
of the stacked primal, per-constraint dual consensus errors, and the
cumulative message count.  Floats are written with 17 significant digits so a
parse reproduces the in-memory trace exactly; undefined entries are NaN.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class RoundRecord:
    round: int
    phi: float
    phi_hat: float
    obj_err: float
    max_ineq_viol: float
    max_eq_resid: float
    dual_cons_err: tuple[float, ...]
    msgs: int


@dataclass(frozen=True)
class RunTrace:
    n_constraints: int
    records: tuple[RoundRecord, ...]

    def header(self) -> list[str]:
        return (
            ["round", "phi", "phi_hat", "obj_err", "max_ineq_viol", "max_eq_resid"]
            + [f"dual_cons_err_{l}" for l in range(1, self.n_constraints + 1)]
            + ["msgs"]
        )

    def column(self, name: str) -> np.ndarray:
        if name.startswith("dual_cons_err_"):
            l = int(name.rsplit("_", 1)[1])
            return np.array([r.dual_cons_err[l - 1] for r in self.records])
        return np.array([getattr(r, name) for r in self.records])

    def __len__(self) -> int:
        return len(self.records)


def _fmt(x: float) -> str:
    return "%.17g" % x


def trace_lines(trace: RunTrace) -> list[str]:
    lines = [",".join(trace.header())]
    for r in trace.records:
        cells = [str(r.round), _fmt(r.phi), _fmt(r.phi_hat), _fmt(r.obj_err),
                 _fmt(r.max_ineq_viol), _fmt(r.max_eq_resid)]
        cells += [_fmt(v) for v in r.dual_cons_err]
        cells.append(str(r.msgs))
        lines.append(",".join(cells))
    return lines


def emit_trace(trace: RunTrace, path) -> None:
    with open(path, "w") as fh:
        fh.write("\n".join(trace_lines(trace)) + "\n")


def parse_trace(path) -> RunTrace:
    with open(path) as fh:
        lines = [line.strip() for line in fh if line.strip()]
    header = lines[0].split(",")
    n_cons = sum(1 for name in header if name.startswith("dual_cons_err_"))
    records = []
    for line in lines[1:]:
        cells = line.split(",")
        records.append(RoundRecord(
            round=int(cells[0]),
            phi=float(cells[1]),
            phi_hat=float(cells[2]),
            obj_err=float(cells[3]),
            max_ineq_viol=float(cells[4]),
            max_eq_resid=float(cells[5]),
            dual_cons_err=tuple(float(c) for c in cells[6:6 + n_cons]),
            msgs=int(cells[6 + n_cons]),
        ))
    return RunTrace(n_cons, tuple(records))


def records_equal(a: RoundRecord, b: RoundRecord) -> bool:
    """Field-by-field equality treating NaN == NaN as true."""
    def same(u, v):
        return u == v or (isinstance(u, float) and math.isnan(u) and math.isnan(v))

    return (
        a.round == b.round and same(a.phi, b.phi) and same(a.phi_hat, b.phi_hat)
        and same(a.obj_err, b.obj_err)
        and same(a.max_ineq_viol, b.max_ineq_viol)
        and same(a.max_eq_resid, b.max_eq_resid)
        and len(a.dual_cons_err) == len(b.dual_cons_err)
        and all(same(u, v) for u, v in zip(a.dual_cons_err, b.dual_cons_err))
        and a.msgs == b.msgs
    )


def traces_equal(a: RunTrace, b: RunTrace) -> bool:
    return (
        a.n_constraints == b.n_constraints
        and len(a.records) == len(b.records)
        and all(records_equal(u, v) for u, v in zip(a.records, b.records))
    )


def gnuplot_script(csv_path: str, n_constraints: int) -> str:
    """Companion gnuplot script plotting objective decay and residuals."""
    dual_plots = ", ".join(
        f"csv using 1:{7 + l - 1} with lines title 'dual consensus {l}'"
        for l in range(1, n_constraints + 1)
    )
    return "\n".join([
        f"csv = '{csv_path}'",
        "set datafile separator ','",
        "set key autotitle columnhead",
        "set logscale y",
        "set xlabel 'round'",
        "set terminal pngcairo size 900,600",
        f"set output '{csv_path}.objective.png'",
        "plot csv using 1:(abs($4)) with lines title '|objective error|'",
        f"set output '{csv_path}.residuals.png'",
        "plot csv using 1:5 with lines title 'max inequality violation', \\",
        "     csv using 1:6 with lines title 'max equality residual'",
        f"set output '{csv_path}.dual.png'",
        f"plot {dual_plots}",
        "",
    ])
