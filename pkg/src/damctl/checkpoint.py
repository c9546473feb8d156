"""Binary trajectory checkpoints.

Layout: 8-byte magic, little-endian uint32 header length, a UTF-8 JSON
header, then one block per time step holding the int64 step index, the
float64 time step and the header's fields as float64 arrays in order.
"""
from __future__ import annotations

import io
import json
import struct

import numpy as np

from ._io import atomic_write_bytes

MAGIC = b"DAMTRJ01"
ROLES = ("state", "adjoint", "linearized", "control")


class CheckpointError(ValueError):
    pass


def write_checkpoint(path, role: str, tau: float, fields: dict, meta: dict | None = None) -> None:
    """Write arrays of shape ``(M+1, ...)`` sharing the leading step axis."""
    if role not in ROLES:
        raise CheckpointError(f"unknown role {role!r}")
    names = list(fields)
    arrays = [np.ascontiguousarray(fields[n], dtype="<f8") for n in names]
    if not arrays:
        raise CheckpointError("no fields to write")
    n_steps = arrays[0].shape[0]
    if any(a.shape[0] != n_steps for a in arrays):
        raise CheckpointError("fields disagree on the number of time nodes")
    header = {
        "role": role,
        "fields": [{"name": n, "shape": list(a.shape[1:])} for n, a in zip(names, arrays)],
        "M": n_steps - 1,
        "tau": float(tau),
        "dtype": "float64",
        "meta": meta or {},
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<I", len(blob)))
    buf.write(blob)
    for k in range(n_steps):
        buf.write(struct.pack("<qd", k, float(tau)))
        for a in arrays:
            buf.write(a[k].tobytes())
    atomic_write_bytes(path, buf.getvalue())


def read_checkpoint(path, role: str | None = None):
    """Return ``(header, fields)``; optionally insist on a role tag."""
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:8] != MAGIC:
        raise CheckpointError(f"{path}: not a damctl checkpoint")
    if len(data) < 12:
        raise CheckpointError(f"{path}: truncated header")
    (hlen,) = struct.unpack_from("<I", data, 8)
    try:
        header = json.loads(data[12:12 + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError):
        raise CheckpointError(f"{path}: unreadable header") from None
    if role is not None and header["role"] != role:
        raise CheckpointError(f"{path}: expected role {role!r}, found {header['role']!r}")
    specs = [(f["name"], tuple(f["shape"])) for f in header["fields"]]
    n_steps = header["M"] + 1
    out = {name: np.empty((n_steps,) + shape) for name, shape in specs}
    pos = 12 + hlen
    block = 16 + 8 * sum(int(np.prod(shape)) for _, shape in specs)
    if len(data) != pos + n_steps * block:
        kind = "truncated" if len(data) < pos + n_steps * block else "trailing bytes"
        raise CheckpointError(f"{path}: {kind} (expected {pos + n_steps * block} bytes, found {len(data)})")
    for k in range(n_steps):
        step, tau = struct.unpack_from("<qd", data, pos)
        pos += 16
        if step != k or not np.isclose(tau, header["tau"]):
            raise CheckpointError(f"{path}: corrupt block at step {k}")
        for name, shape in specs:
            size = int(np.prod(shape))
            out[name][k] = np.frombuffer(data, dtype="<f8", count=size, offset=pos).reshape(shape)
            pos += 8 * size
    return header, out


def save_state(path, traj, meta=None):
    write_checkpoint(path, "state", traj.tau, {"u": traj.u, "v": traj.v, "chi": traj.chi}, meta)


def load_state(path, mesh):
    from .state import StateTrajectory

    header, f = read_checkpoint(path, "state")
    if f["chi"].shape[1] != mesh.n_vertices:
        raise CheckpointError(f"{path}: trajectory has {f['chi'].shape[1]} vertices, mesh has {mesh.n_vertices}")
    return StateTrajectory(mesh, header["tau"], f["u"], f["v"], f["chi"])


def save_adjoint(path, adj, meta=None):
    write_checkpoint(path, "adjoint", adj.tau, {"p": adj.p, "q": adj.q}, meta)


def save_control(path, control, tau, meta=None):
    write_checkpoint(path, "control", tau,
                     {"values": control.values, "b_min": control.b_min, "b_max": control.b_max},
                     dict(meta or {}, R=control.R))


def load_control(path):
    from .control import Control

    header, f = read_checkpoint(path, "control")
    return Control(f["values"], f["b_min"], f["b_max"], header["meta"].get("R", np.inf)), header["tau"]
