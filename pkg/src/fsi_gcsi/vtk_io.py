"""Legacy ASCII VTK output of field snapshots, plus a reader for round-trips.

Snapshots carry the deformed configuration: point coordinates are the
reference vertex positions plus the displacement, so a viewer shows the
beam where it actually is. Data arrays live on the Q1 vertex subset of
the Q2 nodes (vertices come first in the node ordering).
"""

from __future__ import annotations

import numpy as np

from . import spaces as spc

_FMT = "%.16e"   # full float64 round-trip precision


def _vector_lines(out: list, arr2: np.ndarray) -> None:
    for vx, vy in arr2:
        out.append(f"{_FMT % vx} {_FMT % vy} {_FMT % 0.0}")


def write_fields(dofmap: spc.DofMap, velocity: np.ndarray,
                 pressure: np.ndarray, displacement: np.ndarray,
                 path, title: str = "fsi-gcsi snapshot") -> None:
    """Write one unstructured-grid snapshot in legacy ASCII VTK.

    velocity and displacement are full Q2 block vectors (x block then y
    block); pressure is the Q1 vector. Point data is written at the mesh
    vertices, cell data carries the fluid/solid subdomain marker.
    """
    mesh = dofmap.mesh
    nvert, nc = mesh.num_vertices, mesh.num_cells
    n2 = dofmap.n2

    def at_vertices(block: np.ndarray) -> np.ndarray:
        return np.stack([block[:n2][:nvert], block[n2:][:nvert]], axis=1)

    disp = at_vertices(displacement)
    velo = at_vertices(velocity)
    pts = mesh.vertices + disp

    out = [
        "# vtk DataFile Version 3.0",
        title,
        "ASCII",
        "DATASET UNSTRUCTURED_GRID",
        f"POINTS {nvert} double",
    ]
    _vector_lines(out, pts)
    out.append(f"CELLS {nc} {5 * nc}")
    for cell in mesh.cells:
        out.append("4 " + " ".join(str(v) for v in cell))
    out.append(f"CELL_TYPES {nc}")
    out.extend(["9"] * nc)   # VTK_QUAD
    out.append(f"POINT_DATA {nvert}")
    out.append("VECTORS velocity double")
    _vector_lines(out, velo)
    out.append("SCALARS pressure double 1")
    out.append("LOOKUP_TABLE default")
    out.extend(_FMT % p for p in pressure[:nvert])
    out.append("VECTORS displacement double")
    _vector_lines(out, disp)
    out.append(f"CELL_DATA {nc}")
    out.append("SCALARS subdomain int 1")
    out.append("LOOKUP_TABLE default")
    out.extend(str(int(s)) for s in mesh.subdomain)
    with open(path, "w", encoding="ascii") as fh:
        fh.write("\n".join(out) + "\n")


def read_fields(path) -> dict:
    """Parse a file written by write_fields back into arrays.

    Returns points (n, 2), cells (nc, 4), point_data with velocity (n, 2),
    pressure (n,), displacement (n, 2), and cell_data with subdomain (nc,).
    Only the fixed layout produced by write_fields is understood.
    """
    with open(path, encoding="ascii") as fh:
        lines = [ln.strip() for ln in fh]
    pos = 0

    def expect(prefix: str) -> list[str]:
        nonlocal pos
        if not lines[pos].startswith(prefix):
            raise ValueError(f"{path}: expected {prefix!r} at line {pos + 1}, "
                             f"got {lines[pos]!r}")
        tok = lines[pos].split()
        pos += 1
        return tok

    def grab(n: int) -> list[str]:
        nonlocal pos
        block = lines[pos:pos + n]
        pos += n
        return block

    expect("# vtk DataFile")
    pos += 1   # title
    expect("ASCII")
    expect("DATASET UNSTRUCTURED_GRID")
    n = int(expect("POINTS")[1])
    pts = np.array([ln.split() for ln in grab(n)], dtype=float)[:, :2]
    nc = int(expect("CELLS")[1])
    cells = np.array([ln.split()[1:] for ln in grab(nc)], dtype=np.int64)
    expect("CELL_TYPES")
    grab(nc)
    expect("POINT_DATA")
    expect("VECTORS velocity")
    velo = np.array([ln.split() for ln in grab(n)], dtype=float)[:, :2]
    expect("SCALARS pressure")
    expect("LOOKUP_TABLE")
    pres = np.array(grab(n), dtype=float)
    expect("VECTORS displacement")
    disp = np.array([ln.split() for ln in grab(n)], dtype=float)[:, :2]
    expect("CELL_DATA")
    expect("SCALARS subdomain")
    expect("LOOKUP_TABLE")
    sub = np.array(grab(nc), dtype=np.int64)
    return {
        "points": pts,
        "cells": cells,
        "point_data": {"velocity": velo, "pressure": pres,
                       "displacement": disp},
        "cell_data": {"subdomain": sub},
    }
