"""Point and point-cloud types, dataset generation, and file I/O.

Coordinates are 32-bit floats end to end so that byte-denominated traffic
accounting stays exact. Clouds are immutable after construction and safe to
share across concurrent simulator runs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgument, ParseError, ValidationError

POINT_BYTES = 12  # 3 x f32


def point3(x: float, y: float, z: float) -> np.ndarray:
    """Build a single validated point as a (3,) float32 array."""
    p = np.array([x, y, z], dtype=np.float32)
    if not np.all(np.isfinite(p)):
        raise ValidationError(f"non-finite coordinate in point ({x}, {y}, {z})")
    return p


def _as_f32_points(points: np.ndarray, what: str) -> np.ndarray:
    pts = np.ascontiguousarray(points, dtype=np.float32)
    if pts.ndim != 2 or pts.shape[1] != 3:
        raise InvalidArgument(f"{what} must have shape (n, 3), got {points.shape}")
    if pts.shape[0] < 1:
        raise InvalidArgument(f"{what} must contain at least one point")
    if not np.all(np.isfinite(pts)):
        bad = int(np.argwhere(~np.isfinite(pts).all(axis=1))[0][0])
        raise ValidationError(f"non-finite coordinate in {what} at index {bad}")
    pts.setflags(write=False)
    return pts


@dataclass(frozen=True)
class PointCloud:
    """An ordered set of 3D points; point order is the canonical index space."""

    points: np.ndarray
    id: str = "cloud"

    def __post_init__(self):
        object.__setattr__(self, "points", _as_f32_points(self.points, "point cloud"))

    def __len__(self) -> int:
        return int(self.points.shape[0])


@dataclass(frozen=True)
class QueryBatch:
    """Ordered search queries; ``self_query`` marks a cloud querying itself.

    In self-query mode query i corresponds to cloud point i, which controls
    self-match exclusion and the replication donor for empty result rows.
    """

    queries: np.ndarray
    self_query: bool = False

    def __post_init__(self):
        object.__setattr__(self, "queries", _as_f32_points(self.queries, "query batch"))

    def __len__(self) -> int:
        return int(self.queries.shape[0])

    @staticmethod
    def from_cloud(cloud: PointCloud) -> "QueryBatch":
        return QueryBatch(cloud.points, self_query=True)


GENERATOR_KINDS = ("uniform-cube", "gaussian-clusters", "grid")


def generate_cloud(kind: str, n: int, seed: int = 0) -> PointCloud:
    """Deterministically generate a synthetic cloud.

    uniform-cube draws n points in [0,1)^3; gaussian-clusters scatters
    max(1, n // 1000) cluster centers in the unit cube and samples points
    around them; grid emits the first n lattice points of the smallest cubic
    lattice spanning [0,1]^3, in lexicographic (x, y, z) order.
    """
    if n < 1:
        raise InvalidArgument(f"cannot generate a cloud of {n} points")
    if kind == "uniform-cube":
        rng = np.random.default_rng(seed)
        pts = rng.random((n, 3), dtype=np.float32)
    elif kind == "gaussian-clusters":
        rng = np.random.default_rng(seed)
        k = max(1, n // 1000)
        centers = rng.random((k, 3))
        assign = rng.integers(0, k, size=n)
        pts = (centers[assign] + rng.normal(0.0, 0.03, size=(n, 3))).astype(np.float32)
    elif kind == "grid":
        side = max(1, math.ceil(n ** (1.0 / 3.0)))
        while side**3 < n:  # guard ceil() rounding on cube numbers
            side += 1
        axis = np.linspace(0.0, 1.0, side, dtype=np.float32) if side > 1 else np.zeros(1, np.float32)
        grid = np.stack(np.meshgrid(axis, axis, axis, indexing="ij"), axis=-1).reshape(-1, 3)
        pts = grid[:n]
    else:
        raise InvalidArgument(f"unknown generator kind {kind!r}; expected one of {GENERATOR_KINDS}")
    return PointCloud(pts, id=f"{kind}-n{n}-s{seed}")


def morton_sort(cloud: PointCloud) -> PointCloud:
    """Reorder a cloud along a 10-bit-per-axis Morton curve.

    Spatially coherent point order is how scan and mesh datasets usually
    arrive; consecutive queries then traverse overlapping tree regions.
    """
    p = cloud.points.astype(np.float64)
    lo = p.min(axis=0)
    span = p.max(axis=0) - lo
    span[span == 0] = 1.0
    cells = np.clip(((p - lo) / span * 1024).astype(np.int64), 0, 1023)

    def spread(x):
        x = (x | (x << 16)) & 0x030000FF
        x = (x | (x << 8)) & 0x0300F00F
        x = (x | (x << 4)) & 0x030C30C3
        x = (x | (x << 2)) & 0x09249249
        return x

    key = spread(cells[:, 0]) | (spread(cells[:, 1]) << 1) | (spread(cells[:, 2]) << 2)
    order = np.argsort(key, kind="stable")
    return PointCloud(cloud.points[order], id=f"{cloud.id}-morton")


def load_cloud(path: str, fmt: str | None = None) -> PointCloud:
    """Load a cloud from ``*.xyz`` text or ``*.f32le`` packed binary."""
    fmt = fmt or _infer_format(path)
    if fmt == "xyz-text":
        return _load_xyz(path)
    if fmt == "f32le-raw":
        return _load_f32le(path)
    raise InvalidArgument(f"unknown cloud format {fmt!r}")


def save_cloud(cloud: PointCloud, path: str, fmt: str | None = None) -> None:
    fmt = fmt or _infer_format(path)
    if fmt == "xyz-text":
        with open(path, "w") as f:
            for x, y, z in cloud.points:
                f.write(f"{x:.9g} {y:.9g} {z:.9g}\n")
    elif fmt == "f32le-raw":
        with open(path, "wb") as f:
            f.write(cloud.points.astype("<f4").tobytes())
    else:
        raise InvalidArgument(f"unknown cloud format {fmt!r}")


def _infer_format(path: str) -> str:
    if str(path).endswith(".xyz"):
        return "xyz-text"
    if str(path).endswith(".f32le"):
        return "f32le-raw"
    raise InvalidArgument(f"cannot infer cloud format from {path!r}; pass fmt explicitly")


def _load_xyz(path: str) -> PointCloud:
    rows = []
    with open(path) as f:
        for lineno, raw in enumerate(f, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) != 3:
                raise ParseError(
                    f"expected 3 coordinates, found {len(parts)}", line=lineno
                )
            try:
                vals = [float(p) for p in parts]
            except ValueError as e:
                raise ParseError(f"bad float: {e}", line=lineno) from None
            if not all(math.isfinite(v) for v in vals):
                raise ValidationError(f"non-finite coordinate at line {lineno}")
            rows.append(vals)
    if not rows:
        raise ParseError("file holds no points", line=1)
    return PointCloud(np.array(rows, dtype=np.float32), id=str(path))


def _load_f32le(path: str) -> PointCloud:
    with open(path, "rb") as f:
        blob = f.read()
    if len(blob) == 0 or len(blob) % POINT_BYTES != 0:
        raise ParseError(
            f"length {len(blob)} is not a positive multiple of {POINT_BYTES}",
            byte=len(blob) - (len(blob) % POINT_BYTES),
        )
    pts = np.frombuffer(blob, dtype="<f4").reshape(-1, 3)
    if not np.all(np.isfinite(pts)):
        bad = int(np.argwhere(~np.isfinite(pts).all(axis=1))[0][0])
        raise ValidationError(f"non-finite coordinate in record {bad}")
    return PointCloud(pts, id=str(path))
