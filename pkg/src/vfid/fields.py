"""Gridded full-field kinematic data: grids, strain/stress histories, CSV ingest/emit.

Conventions used throughout the package:
  * fields are stored as (n_rows, n_cols) arrays, row index -> y, column index -> x
  * shear strain components are tensorial (eps_xy = gamma_xy / 2)
  * per-step data stacks along axis 0: (n_steps, n_rows, n_cols)
  * masked-out points carry 0.0 in field arrays and are excluded from all sums
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace

import numpy as np
import pandas as pd

from .errors import ParseError, ShapeError, ValidationError

STRAIN_COLUMNS = ["step", "row", "col", "x_mm", "y_mm", "eps_xx", "eps_yy", "eps_xy"]
LOAD_COLUMNS = ["step", "force_N"]


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class FieldGrid:
    """Regular 2-D measurement grid with mask and specimen thickness.

    Every point represents a spacing_x * spacing_y cell (mid-point rule), so
    point_area is uniform. Coordinates of point (i, j) are
    (origin_x + j*spacing_x, origin_y + i*spacing_y) in mm.
    """

    n_rows: int
    n_cols: int
    spacing_x: float
    spacing_y: float
    origin_x: float
    origin_y: float
    thickness: float
    mask: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.spacing_x <= 0 or self.spacing_y <= 0:
            raise ValidationError("grid spacing must be positive")
        if self.thickness <= 0:
            raise ValidationError("thickness must be positive")
        mask = np.asarray(self.mask, dtype=bool)
        if mask.shape != (self.n_rows, self.n_cols):
            raise ShapeError(
                f"mask shape {mask.shape} != grid ({self.n_rows}, {self.n_cols})"
            )
        object.__setattr__(self, "mask", _readonly(mask))

    @classmethod
    def full(cls, n_rows, n_cols, spacing_x, spacing_y, thickness,
             origin_x=0.0, origin_y=0.0) -> "FieldGrid":
        """Grid with every point valid."""
        return cls(n_rows, n_cols, spacing_x, spacing_y, origin_x, origin_y,
                   thickness, np.ones((n_rows, n_cols), dtype=bool))

    @property
    def point_area(self) -> float:
        return self.spacing_x * self.spacing_y

    @property
    def n_points(self) -> int:
        """Number of valid (unmasked) points."""
        return int(self.mask.sum())

    @property
    def x_coords(self) -> np.ndarray:
        return self.origin_x + np.arange(self.n_cols) * self.spacing_x

    @property
    def y_coords(self) -> np.ndarray:
        return self.origin_y + np.arange(self.n_rows) * self.spacing_y

    @property
    def extent_x(self) -> float:
        """Physical size along x (one cell per point)."""
        return self.n_cols * self.spacing_x

    @property
    def extent_y(self) -> float:
        return self.n_rows * self.spacing_y


def _check_history_arrays(grid: FieldGrid, forces, *fields_):
    forces = np.asarray(forces, dtype=float)
    if forces.ndim != 1 or forces.size == 0:
        raise ShapeError("forces must be a non-empty 1-D array")
    if np.any(forces <= 0):
        raise ValidationError("applied force must be positive at every retained step")
    if forces[0] != forces.min():
        raise ValidationError("step 0 must correspond to the smallest load")
    shape = (forces.size, grid.n_rows, grid.n_cols)
    out = []
    for f in fields_:
        f = np.asarray(f, dtype=float)
        if f.shape != shape:
            raise ShapeError(f"field shape {f.shape} != expected {shape}")
        out.append(_readonly(np.where(grid.mask[None, :, :], f, 0.0)))
    return _readonly(forces), out


@dataclass(frozen=True)
class StrainHistory:
    """Per-step, per-point in-plane strain fields plus the load history."""

    grid: FieldGrid
    eps_xx: np.ndarray = field(repr=False)
    eps_yy: np.ndarray = field(repr=False)
    eps_xy: np.ndarray = field(repr=False)
    forces: np.ndarray = field(repr=False)

    def __post_init__(self):
        forces, (exx, eyy, exy) = _check_history_arrays(
            self.grid, self.forces, self.eps_xx, self.eps_yy, self.eps_xy)
        object.__setattr__(self, "forces", forces)
        object.__setattr__(self, "eps_xx", exx)
        object.__setattr__(self, "eps_yy", eyy)
        object.__setattr__(self, "eps_xy", exy)

    @property
    def n_steps(self) -> int:
        return self.forces.size


@dataclass(frozen=True)
class StressHistory:
    """Reconstructed in-plane stress fields (MPa) with accumulated equivalent
    plastic strain per step."""

    grid: FieldGrid
    sigma_xx: np.ndarray = field(repr=False)
    sigma_yy: np.ndarray = field(repr=False)
    sigma_xy: np.ndarray = field(repr=False)
    eq_plastic: np.ndarray = field(repr=False)
    forces: np.ndarray = field(repr=False)

    def __post_init__(self):
        forces, (sxx, syy, sxy, ep) = _check_history_arrays(
            self.grid, self.forces, self.sigma_xx, self.sigma_yy,
            self.sigma_xy, self.eq_plastic)
        diffs = np.diff(ep, axis=0)
        if diffs.size and diffs.min() < -1e-12:
            raise ValidationError("equivalent plastic strain must be non-decreasing")
        object.__setattr__(self, "forces", forces)
        object.__setattr__(self, "sigma_xx", sxx)
        object.__setattr__(self, "sigma_yy", syy)
        object.__setattr__(self, "sigma_xy", sxy)
        object.__setattr__(self, "eq_plastic", ep)

    @property
    def n_steps(self) -> int:
        return self.forces.size


# ---------------------------------------------------------------------------
# CSV ingest / emit
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GridMeta:
    """Grid metadata supplied by the run configuration for CSV ingestion."""

    spacing_x: float
    spacing_y: float
    thickness: float
    origin_x: float = 0.0
    origin_y: float = 0.0


def _parse_strain_header(line: str, path) -> str:
    tokens = [t.strip() for t in line.strip().split(",")]
    if len(tokens) < len(STRAIN_COLUMNS) + 1:
        raise ParseError(f"{path}:1: header must end with a shear= convention token")
    if tokens[: len(STRAIN_COLUMNS)] != STRAIN_COLUMNS:
        raise ParseError(f"{path}:1: expected columns {','.join(STRAIN_COLUMNS)}")
    conv = tokens[len(STRAIN_COLUMNS)]
    if not conv.startswith("shear="):
        raise ParseError(f"{path}:1: missing shear= convention token")
    conv = conv.split("=", 1)[1]
    if conv not in ("tensorial", "engineering"):
        raise ParseError(f"{path}:1: shear convention must be tensorial or engineering")
    return conv


def ingest_strain_csv(strain_path, load_path, meta: GridMeta) -> StrainHistory:
    """Read per-step strain records and the companion load file.

    The grid mask is derived from point presence: a point must appear in every
    step or in none. Shear values are converted to the tensorial convention if
    the header declares engineering shear.
    """
    with open(load_path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [t.strip() for t in header] != LOAD_COLUMNS:
            raise ParseError(f"{load_path}:1: expected header {','.join(LOAD_COLUMNS)}")
        loads: dict[int, float] = {}
        for ln, rec in enumerate(reader, start=2):
            if not rec:
                continue
            try:
                step, force = int(rec[0]), float(rec[1])
            except (ValueError, IndexError) as exc:
                raise ParseError(f"{load_path}:{ln}: malformed load record") from exc
            loads[step] = force

    records: dict[int, dict[tuple[int, int], tuple[float, float, float]]] = {}
    coords: dict[tuple[int, int], tuple[float, float]] = {}
    with open(strain_path, newline="") as fh:
        reader = csv.reader(fh)
        first = next(reader, None)
        if first is None:
            raise ParseError(f"{strain_path}:1: empty file")
        shear = _parse_strain_header(",".join(first), strain_path)
        for ln, rec in enumerate(reader, start=2):
            if not rec:
                continue
            try:
                step = int(rec[0])
                row, col = int(rec[1]), int(rec[2])
                x, y = float(rec[3]), float(rec[4])
                exx, eyy, exy = float(rec[5]), float(rec[6]), float(rec[7])
            except (ValueError, IndexError) as exc:
                raise ParseError(f"{strain_path}:{ln}: malformed record") from exc
            records.setdefault(step, {})[(row, col)] = (exx, eyy, exy)
            coords[(row, col)] = (x, y)

    if not records:
        raise ParseError(f"{strain_path}: no strain records")
    steps = sorted(records)
    if sorted(loads) != steps:
        raise ShapeError("load steps do not match strain steps")

    point_sets = [set(records[s]) for s in steps]
    if any(ps != point_sets[0] for ps in point_sets[1:]):
        counts = {s: len(records[s]) for s in steps}
        raise ShapeError(f"point set differs across steps (counts per step: {counts})")
    points = point_sets[0]

    n_rows = max(r for r, _ in points) + 1
    n_cols = max(c for _, c in points) + 1
    mask = np.zeros((n_rows, n_cols), dtype=bool)
    for r, c in points:
        mask[r, c] = True

    grid = FieldGrid(n_rows, n_cols, meta.spacing_x, meta.spacing_y,
                     meta.origin_x, meta.origin_y, meta.thickness, mask)
    # coordinate sanity: declared spacing/origin must reproduce stored x/y
    for (r, c), (x, y) in coords.items():
        if abs(x - (meta.origin_x + c * meta.spacing_x)) > 1e-6 * max(1.0, meta.spacing_x) \
                or abs(y - (meta.origin_y + r * meta.spacing_y)) > 1e-6 * max(1.0, meta.spacing_y):
            raise ValidationError(
                f"point ({r},{c}) coordinates ({x},{y}) inconsistent with grid metadata")

    shape = (len(steps), n_rows, n_cols)
    exx = np.zeros(shape)
    eyy = np.zeros(shape)
    exy = np.zeros(shape)
    for k, s in enumerate(steps):
        for (r, c), (a, b, g) in records[s].items():
            exx[k, r, c] = a
            eyy[k, r, c] = b
            exy[k, r, c] = g
    if shear == "engineering":
        exy *= 0.5

    forces = np.array([loads[s] for s in steps], dtype=float)
    return StrainHistory(grid, exx, eyy, exy, forces)


def emit_strain_csv(history: StrainHistory, strain_path, load_path) -> None:
    """Write a StrainHistory in the same format ingest_strain_csv reads.

    Values are formatted with %.17g so a read-back reproduces them bit for bit.
    """
    grid = history.grid
    rows, cols = np.nonzero(grid.mask)
    x = grid.origin_x + cols * grid.spacing_x
    y = grid.origin_y + rows * grid.spacing_y
    frames = []
    for t in range(history.n_steps):
        frames.append(pd.DataFrame({
            "step": t,
            "row": rows,
            "col": cols,
            "x_mm": x,
            "y_mm": y,
            "eps_xx": history.eps_xx[t, rows, cols],
            "eps_yy": history.eps_yy[t, rows, cols],
            "eps_xy": history.eps_xy[t, rows, cols],
        }))
    table = pd.concat(frames, ignore_index=True)
    with open(strain_path, "w", newline="") as fh:
        fh.write(",".join(STRAIN_COLUMNS) + ",shear=tensorial\n")
        table.to_csv(fh, header=False, index=False, float_format="%.17g",
                     lineterminator="\n")
    with open(load_path, "w", newline="") as fh:
        fh.write(",".join(LOAD_COLUMNS) + "\n")
        for t, f in enumerate(history.forces):
            fh.write(f"{t},{f:.17g}\n")


# ---------------------------------------------------------------------------
# Region operations
# ---------------------------------------------------------------------------

def crop_region(history: StrainHistory, x_min: float, x_max: float) -> StrainHistory:
    """Restrict the history to columns whose x-coordinate lies in [x_min, x_max]."""
    if x_min >= x_max:
        raise ValidationError("x_min must be below x_max")
    grid = history.grid
    keep = (grid.x_coords >= x_min) & (grid.x_coords <= x_max)
    if not keep.any():
        raise ValidationError(f"no columns fall inside [{x_min}, {x_max}]")
    j0, j1 = np.nonzero(keep)[0][[0, -1]]
    sub = slice(j0, j1 + 1)
    new_grid = FieldGrid(grid.n_rows, j1 + 1 - j0, grid.spacing_x, grid.spacing_y,
                         grid.origin_x + j0 * grid.spacing_x, grid.origin_y,
                         grid.thickness, grid.mask[:, sub])
    return StrainHistory(new_grid, history.eps_xx[:, :, sub],
                         history.eps_yy[:, :, sub], history.eps_xy[:, :, sub],
                         history.forces)


def trim_margin(history: StrainHistory, n_points: int) -> StrainHistory:
    """Drop n_points rows/columns from every grid edge (DIC edge-artifact trim)."""
    if n_points == 0:
        return history
    if n_points < 0:
        raise ValidationError("trim count must be non-negative")
    grid = history.grid
    if 2 * n_points >= min(grid.n_rows, grid.n_cols):
        raise ValidationError("trim removes the whole grid")
    s = slice(n_points, -n_points)
    new_grid = FieldGrid(grid.n_rows - 2 * n_points, grid.n_cols - 2 * n_points,
                         grid.spacing_x, grid.spacing_y,
                         grid.origin_x + n_points * grid.spacing_x,
                         grid.origin_y + n_points * grid.spacing_y,
                         grid.thickness, grid.mask[s, s])
    return StrainHistory(new_grid, history.eps_xx[:, s, s], history.eps_yy[:, s, s],
                         history.eps_xy[:, s, s], history.forces)


def von_mises_equivalent_strain(eps_xx, eps_yy, eps_xy) -> np.ndarray:
    """Equivalent strain sqrt(2/3 e:e) with eps_zz = -(eps_xx + eps_yy).

    The incompressible out-of-plane estimate makes the strain tensor
    deviatoric, so the deviator equals the tensor itself. Used for reporting
    plots only; never enters identification.
    """
    exx = np.asarray(eps_xx, dtype=float)
    eyy = np.asarray(eps_yy, dtype=float)
    exy = np.asarray(eps_xy, dtype=float)
    ezz = -(exx + eyy)
    return np.sqrt((2.0 / 3.0) * (exx**2 + eyy**2 + ezz**2 + 2.0 * exy**2))


# ---------------------------------------------------------------------------
# Scalar-map CSV helpers (identified parameter maps, metric maps, masks)
# ---------------------------------------------------------------------------

def write_field_csv(path, grid: FieldGrid, values: np.ndarray, name: str = "value") -> None:
    """Write one scalar field over the unmasked points as row,col,x,y,value."""
    values = np.asarray(values)
    if values.shape != (grid.n_rows, grid.n_cols):
        raise ShapeError(f"field shape {values.shape} != grid shape")
    rows, cols = np.nonzero(grid.mask)
    table = pd.DataFrame({
        "row": rows,
        "col": cols,
        "x_mm": grid.origin_x + cols * grid.spacing_x,
        "y_mm": grid.origin_y + rows * grid.spacing_y,
        name: values[rows, cols],
    })
    table.to_csv(path, index=False, float_format="%.17g", lineterminator="\n")


def read_field_csv(path, grid: FieldGrid) -> np.ndarray:
    """Read a scalar field written by write_field_csv back onto the grid.

    Missing points are NaN.
    """
    table = pd.read_csv(path)
    out = np.full((grid.n_rows, grid.n_cols), np.nan)
    r = table["row"].to_numpy(dtype=int)
    c = table["col"].to_numpy(dtype=int)
    if r.size and (r.max() >= grid.n_rows or c.max() >= grid.n_cols):
        raise ShapeError(f"{path}: indices exceed grid shape")
    out[r, c] = table.iloc[:, -1].to_numpy(dtype=float)
    return out
