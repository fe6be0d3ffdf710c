"""Comma-separated result tables with a header row and a configuration footer.

Floats are written with 17 significant digits so reading a table back
reproduces the stored values exactly. Footer lines start with ``#`` and hold
``key: value`` pairs, always including ``config-hash``.
"""
from pathlib import Path

import numpy as np

from .process import DamageProcess


def _cell(v):
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return format(float(v), ".17g")


def write_table(path, columns, rows, config_hash, **footer):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [",".join(columns)]
    for row in rows:
        if len(row) != len(columns):
            raise ValueError(f"row has {len(row)} fields, expected {len(columns)}")
        lines.append(",".join(_cell(v) for v in row))
    lines.append(f"# config-hash: {config_hash}")
    for key, value in footer.items():
        lines.append(f"# {key.replace('_', '-')}: {_cell(value) if isinstance(value, float) else value}")
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def read_table(path):
    """Return ``(columns, data, footer)``; ``data`` is a float array (rows x columns)."""
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    columns = lines[0].split(",")
    body, footer = [], {}
    for line in lines[1:]:
        if line.startswith("#"):
            key, _, value = line[1:].partition(":")
            footer[key.strip()] = value.strip()
        elif line.strip():
            body.append([float(v) for v in line.split(",")])
    data = np.array(body, dtype=float).reshape(len(body), len(columns))
    return columns, data, footer


def process_rows(p: DamageProcess):
    c = p.coeffs.reshape(p.basis.n_t, -1, p.basis.n_y)
    for it in range(c.shape[0]):
        for ix in range(c.shape[1]):
            for iy in range(c.shape[2]):
                yield (it, ix, iy, c[it, ix, iy])


def write_process(path, p: DamageProcess, config_hash, **footer):
    return write_table(path, ("i_t", "i_x", "i_y", "coeff"), process_rows(p), config_hash, **footer)


def read_process(path, basis, g_max):
    _, data, _ = read_table(path)
    c = np.zeros((basis.n_t, int(np.prod(basis.n_x)), basis.n_y))
    idx = data[:, :3].astype(int)
    c[idx[:, 0], idx[:, 1], idx[:, 2]] = data[:, 3]
    return DamageProcess(basis, c.reshape(basis.shape), g_max)


def field_columns(dim, value_names):
    coords = ("x",) if dim == 1 else ("x", "y_coord")
    return ("t",) + coords + tuple(value_names)


def field_rows(times, coords, *fields):
    """Rows ``(t, x..., fields...)`` with time outermost; each field is ``(M+1, n_nodes, k)``."""
    for m, t in enumerate(times):
        for j, x in enumerate(coords):
            row = [t, *x]
            for f in fields:
                row.extend(np.atleast_1d(f[m, j]))
            yield row


def write_state(path, state, mesh, config_hash, **footer):
    dim = mesh.dim
    comps = ("u",) if dim == 1 else ("u_x", "u_y")
    u = state.u.reshape(len(state.times), mesh.n_nodes, dim)
    d = state.d[:, :, None]
    return write_table(path, field_columns(dim, comps + ("d",)),
                       field_rows(state.times, mesh.coords, u, d), config_hash,
                       sweeps=state.sweeps, **footer)


def write_measurement(path, meas, times, mesh, config_hash, **footer):
    dim = mesh.dim
    comps = ("u",) if dim == 1 else ("u_x", "u_y")
    u = np.asarray(meas.values).reshape(len(times), mesh.n_nodes, dim)
    return write_table(path, field_columns(dim, comps), field_rows(times, mesh.coords, u),
                       config_hash, delta=float(meas.delta), **footer)


def read_measurement(path, dim):
    from .inversion import Measurement

    _, data, footer = read_table(path)
    values = data[:, 1 + dim:].ravel()
    return Measurement(values, float(footer["delta"]))
