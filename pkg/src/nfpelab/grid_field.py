"""Uniform cell-centered grids on a box and the fields living on them.

The box is [-L, L]^d with n cells per axis, so every cell has volume h^d
with h = 2L/n.  Values are stored at cell centers.  All reductions go
through numpy's pairwise summation, which keeps them deterministic and
independent of any worker-thread count.
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass, field

import numpy as np

_MAGIC = b"NFPF"
_FORMAT_VERSION = 1
# magic, version, d, reserved, n, L, crc64 slot, trailing pad -> 32 bytes
_HEADER = struct.Struct("<4sBBHIdQ4x")


@dataclass(frozen=True)
class GridSpec:
    """Geometry of a uniform cell-centered grid on [-L, L]^d.

    Parameters
    ----------
    d : int
        Space dimension, 1, 2 or 3.
    n : int
        Cells per axis; even and at least 4 so every axis has interior faces
        on both sides of the center plane.
    L : float
        Half-width of the box.
    """

    d: int
    n: int
    L: float

    def __post_init__(self) -> None:
        if self.d not in (1, 2, 3):
            raise ValueError(f"d must be 1, 2 or 3, got {self.d}")
        if self.n < 4 or self.n % 2 != 0:
            raise ValueError(f"n must be even and >= 4, got {self.n}")
        if not (self.L > 0 and np.isfinite(self.L)):
            raise ValueError(f"L must be positive and finite, got {self.L}")

    @property
    def h(self) -> float:
        """Cell width 2L/n."""
        return 2.0 * self.L / self.n

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.n,) * self.d

    @property
    def cell_volume(self) -> float:
        return self.h**self.d

    def axis_centers(self) -> np.ndarray:
        """Cell-center coordinates along one axis, shape (n,)."""
        return -self.L + (np.arange(self.n) + 0.5) * self.h

    def axis_faces(self) -> np.ndarray:
        """Interior face coordinates along one axis, shape (n-1,)."""
        return -self.L + np.arange(1, self.n) * self.h

    def centers(self) -> np.ndarray:
        """All cell centers as an array of shape (n^d, d), C order."""
        axes = [self.axis_centers()] * self.d
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)


@dataclass
class Field:
    """Cell-centered values on a :class:`GridSpec`."""

    grid: GridSpec
    values: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.shape != self.grid.shape:
            raise ValueError(
                f"values shape {self.values.shape} does not match grid shape {self.grid.shape}"
            )
        if not np.all(np.isfinite(self.values)):
            raise ValueError("field values must be finite")

    def copy(self) -> Field:
        return Field(self.grid, self.values.copy())

    def with_values(self, values: np.ndarray) -> Field:
        """New field on the same grid."""
        return Field(self.grid, values)

    def mass(self) -> float:
        """Integral of the field over the box."""
        return float(np.sum(self.values)) * self.grid.cell_volume

    def norm_l1(self) -> float:
        return float(np.sum(np.abs(self.values))) * self.grid.cell_volume

    def norm_l2(self) -> float:
        return float(np.sqrt(np.sum(self.values**2) * self.grid.cell_volume))

    def norm_lp(self, p: float) -> float:
        if p == np.inf:
            return self.norm_linf()
        if p <= 0:
            raise ValueError(f"p must be positive, got {p}")
        return float(np.sum(np.abs(self.values) ** p) * self.grid.cell_volume) ** (1.0 / p)

    def norm_linf(self) -> float:
        return float(np.max(np.abs(self.values)))


def _index_fractions(grid: GridSpec, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-axis lower cell index and interpolation fraction for each point.

    Points must lie in the closed box.  Inside the outer half-cell ring the
    fraction is clamped, which degrades multilinear interpolation to constant
    extrapolation of the edge-cell value there (and keeps deposited mass in
    the box).
    """
    points = np.asarray(points, dtype=np.float64)
    if grid.d == 1:
        points = np.atleast_1d(points)
        if points.ndim == 1:
            points = points[:, None]
    elif points.ndim == 1:
        points = points[None, :]
    if points.ndim != 2 or points.shape[1] != grid.d:
        raise ValueError(f"points must have {grid.d} coordinates, got shape {points.shape}")
    tol = 1e-12 * max(1.0, grid.L)
    if np.any(np.abs(points) > grid.L + tol):
        worst = float(np.max(np.abs(points)))
        raise ValueError(f"point outside box: |x| up to {worst} exceeds L = {grid.L}")
    s = (points + grid.L) / grid.h - 0.5
    i0 = np.clip(np.floor(s).astype(np.int64), 0, grid.n - 2)
    frac = np.clip(s - i0, 0.0, 1.0)
    return i0, frac


def interpolate(fld: Field, points: np.ndarray) -> np.ndarray:
    """Multilinear interpolation of a field at points inside the box.

    Exact on affine data away from the outer half-cell ring; constant
    extrapolation of the edge value inside that ring.  Raises for points
    outside the closed box.

    Parameters
    ----------
    fld : Field
    points : array, shape (k, d) or (d,)

    Returns
    -------
    array of k interpolated values (scalar array for a single point).
    """
    grid = fld.grid
    pts = np.asarray(points, dtype=np.float64)
    single = pts.ndim == 0 if grid.d == 1 else pts.ndim == 1
    i0, frac = _index_fractions(grid, pts)
    out = np.zeros(i0.shape[0])
    flat = fld.values.ravel()
    strides = np.array([grid.n**k for k in range(grid.d - 1, -1, -1)], dtype=np.int64)
    for corner in range(2**grid.d):
        offs = np.array([(corner >> ax) & 1 for ax in range(grid.d)], dtype=np.int64)
        idx = (i0 + offs) @ strides
        w = np.ones(i0.shape[0])
        for ax in range(grid.d):
            w *= frac[:, ax] if offs[ax] else (1.0 - frac[:, ax])
        out += w * flat[idx]
    return out[0] if single else out


def deposit_mass(grid: GridSpec, points: np.ndarray, weights: np.ndarray) -> Field:
    """Spread point masses onto the grid as a density field.

    Each atom distributes its weight over the 2^d surrounding cell centers
    with multilinear weights (the adjoint of :func:`interpolate`), divided by
    the cell volume.  Total deposited mass equals the sum of the weights
    exactly, including for atoms in the outer half-cell ring, where the
    clamped fractions lump the weight into the edge cell.
    """
    weights = np.atleast_1d(np.asarray(weights, dtype=np.float64))
    i0, frac = _index_fractions(grid, points)
    if i0.shape[0] != weights.shape[0]:
        raise ValueError(f"{i0.shape[0]} points but {weights.shape[0]} weights")
    flat = np.zeros(grid.n**grid.d)
    strides = np.array([grid.n**k for k in range(grid.d - 1, -1, -1)], dtype=np.int64)
    for corner in range(2**grid.d):
        offs = np.array([(corner >> ax) & 1 for ax in range(grid.d)], dtype=np.int64)
        idx = (i0 + offs) @ strides
        w = weights.copy()
        for ax in range(grid.d):
            w = w * (frac[:, ax] if offs[ax] else (1.0 - frac[:, ax]))
        np.add.at(flat, idx, w)
    return Field(grid, flat.reshape(grid.shape) / grid.cell_volume)


def save_field(fld: Field, path: str) -> None:
    """Write a field as little-endian float64 with a 32-byte header.

    Header layout: magic, format version, d, reserved, n, L, CRC32 of the
    payload bytes (stored in a 64-bit slot), pad.
    """
    payload = np.ascontiguousarray(fld.values, dtype="<f8").tobytes()
    header = _HEADER.pack(
        _MAGIC,
        _FORMAT_VERSION,
        fld.grid.d,
        0,
        fld.grid.n,
        fld.grid.L,
        zlib.crc32(payload),
    )
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(payload)


def load_field(path: str) -> Field:
    """Read a field written by :func:`save_field`, validating the checksum."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _HEADER.size:
        raise ValueError(f"{path}: truncated field file ({len(raw)} bytes)")
    magic, version, d, _reserved, n, L, crc = _HEADER.unpack_from(raw)
    if magic != _MAGIC:
        raise ValueError(f"{path}: bad magic {magic!r}")
    if version != _FORMAT_VERSION:
        raise ValueError(f"{path}: unsupported format version {version}")
    grid = GridSpec(d=d, n=n, L=L)
    payload = raw[_HEADER.size :]
    expected = n**d * 8
    if len(payload) != expected:
        raise ValueError(f"{path}: payload is {len(payload)} bytes, expected {expected}")
    if zlib.crc32(payload) != crc:
        raise ValueError(f"{path}: checksum mismatch, file is corrupt")
    values = np.frombuffer(payload, dtype="<f8").astype(np.float64).reshape(grid.shape)
    return Field(grid, values)


def field_to_csv(fld: Field, path: str) -> None:
    """Write one row per cell: integer indices, center coordinates, value.

    Floats are printed with 17 significant digits so reading the file back
    reproduces them bit for bit.
    """
    grid = fld.grid
    idx_names = ["i", "j", "k"][: grid.d]
    coord_names = ["x", "y", "z"][: grid.d]
    centers = grid.centers()
    indices = np.stack(
        np.meshgrid(*[np.arange(grid.n)] * grid.d, indexing="ij"), axis=-1
    ).reshape(-1, grid.d)
    flat = fld.values.ravel()
    with open(path, "w", newline="") as fh:
        fh.write(",".join(idx_names + coord_names + ["value"]) + "\n")
        for row in range(flat.shape[0]):
            cells = [str(int(v)) for v in indices[row]]
            cells += [format(v, ".17g") for v in centers[row]]
            cells.append(format(flat[row], ".17g"))
            fh.write(",".join(cells) + "\n")
