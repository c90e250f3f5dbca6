"""Delimited output writers with stable column order.

Schemas (documented in the README):

* singular values: ``index,sigma_horizontal,sigma_vertical,ratio_horizontal,
  ratio_vertical`` (blank cells where one spectrum is shorter)
* trajectory: ``t,y1..y<p_out>``
* metrics: ``metric,value`` rows
* sweep: ``p0..,t,error``
* transfer samples: ``family,s1_re,s1_im,...,p0..,<entry cells re/im>``
"""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np


def write_singular_values(report, path):
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["index", "sigma_horizontal", "sigma_vertical",
                    "ratio_horizontal", "ratio_vertical"])
        for idx, sh, sv, rh, rv in report.rows():
            w.writerow([
                idx,
                "" if sh is None else repr(float(sh)),
                "" if sv is None else repr(float(sv)),
                "" if rh is None else repr(float(rh)),
                "" if rv is None else repr(float(rv)),
            ])
    return path


def write_trajectory(traj, path):
    path = Path(path)
    p_out = traj.y.shape[1]
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t"] + [f"y{k + 1}" for k in range(p_out)])
        for t, row in zip(traj.t, traj.y):
            w.writerow([repr(float(t))] + [repr(float(v)) for v in row])
    return path


def write_metrics(metrics: dict, path):
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["metric", "value"])
        for key in sorted(metrics):
            value = metrics[key]
            if np.ndim(value) == 0:
                w.writerow([key, repr(float(value))])
    return path


def write_sweep(sweep, path):
    path = Path(path)
    q = len(sweep.params[0]) if sweep.params else 0
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"p{j}" for j in range(q)] + ["t", "error"])
        for pv, row in zip(sweep.params, sweep.errors):
            for t, e in zip(sweep.t, row):
                w.writerow(
                    [repr(float(v)) for v in pv]
                    + [repr(float(t)), repr(float(e))]
                )
    return path


def tf_header(family: str, arity: int, q: int, shape, compare=False):
    cols = ["family"]
    for j in range(arity):
        cols += [f"s{j + 1}_re", f"s{j + 1}_im"]
    cols += [f"p{j}" for j in range(q)]
    for i in range(shape[0]):
        for j in range(shape[1]):
            cols += [f"f_{i + 1}_{j + 1}_re", f"f_{i + 1}_{j + 1}_im"]
    if compare:
        for i in range(shape[0]):
            for j in range(shape[1]):
                cols += [f"rom_{i + 1}_{j + 1}_re", f"rom_{i + 1}_{j + 1}_im"]
        cols.append("abs_err")
    return cols


def tf_row(family, s_list, p, value, rom_value=None):
    row = [family]
    for s in s_list:
        row += [repr(float(np.real(s))), repr(float(np.imag(s)))]
    row += [repr(float(v)) for v in p]
    for v in np.asarray(value).ravel():
        row += [repr(float(np.real(v))), repr(float(np.imag(v)))]
    if rom_value is not None:
        for v in np.asarray(rom_value).ravel():
            row += [repr(float(np.real(v))), repr(float(np.imag(v)))]
        row.append(repr(float(np.abs(np.asarray(value) - np.asarray(rom_value)).max())))
    return row


def write_tf_rows(header, rows, path):
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)
    return path
