"""File writers: VTK legacy snapshots, CSV time series, JSON reports."""

from __future__ import annotations

import csv
import json

import numpy as np

from .mesh import SurfaceMesh
from .simulator import TimeSeries

__all__ = ["write_vtk", "write_series_csv", "write_json", "dump_json"]


def write_vtk(path, mesh: SurfaceMesh, point_data: dict, title: str = "memrd snapshot"):
    """Write a triangulated surface with nodal scalar fields (legacy ASCII).

    POLYDATA with one SCALARS block per entry of ``point_data``; readable by
    all standard visualization tools.
    """
    n = mesh.n_vertices
    m = mesh.n_triangles
    with open(path, "w", encoding="ascii") as fh:
        fh.write("# vtk DataFile Version 3.0\n")
        fh.write(f"{title}\n")
        fh.write("ASCII\n")
        fh.write("DATASET POLYDATA\n")
        fh.write(f"POINTS {n} double\n")
        for x, y, z in mesh.vertices:
            fh.write(f"{x:.17g} {y:.17g} {z:.17g}\n")
        fh.write(f"POLYGONS {m} {4 * m}\n")
        for i, j, k in mesh.triangles:
            fh.write(f"3 {i} {j} {k}\n")
        fh.write(f"POINT_DATA {n}\n")
        for name, values in point_data.items():
            values = np.asarray(values, dtype=float)
            if values.shape != (n,):
                raise ValueError(f"field {name!r} has shape {values.shape}, expected ({n},)")
            fh.write(f"SCALARS {name} double 1\n")
            fh.write("LOOKUP_TABLE default\n")
            for value in values:
                fh.write(f"{value:.17g}\n")


def write_series_csv(path, series: TimeSeries):
    """Time series columns: t, integral u, integral v, pool, heterogeneity, residual."""
    with open(path, "w", newline="", encoding="ascii") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "int_u", "int_v", "V", "heterogeneity", "residual"])
        for row in zip(series.t, series.int_u, series.int_v, series.pool,
                       series.heterogeneity, series.residual):
            writer.writerow([f"{value:.17g}" for value in row])


def _jsonable(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not JSON serializable: {type(obj)}")


def write_json(path, payload: dict):
    with open(path, "w", encoding="ascii") as fh:
        json.dump(payload, fh, indent=1, default=_jsonable, sort_keys=True)
        fh.write("\n")


def dump_json(payload: dict) -> str:
    return json.dumps(payload, indent=1, default=_jsonable, sort_keys=True)
