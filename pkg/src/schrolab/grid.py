"""Box domains, uniform interior grids, nested regions and boundary patches.

Every field in the package lives on one of two layouts:

* interior arrays of shape ``grid.shape`` (nodes ``1..N_j`` along each axis),
* boundary vectors of length ``grid.n_boundary``: the face-interior nodes of
  each face, faces ordered ``x1-, x1+, x2-, x2+, ...`` and each face raveled
  in C order over its transverse axes.

Edge and corner lattice nodes are never used by the second-order stencils and
carry no unknowns.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np


@dataclass(frozen=True)
class BoxDomain:
    """Axis-aligned box ``prod_j (0, L_j)``."""

    side_lengths: tuple[float, ...]

    def __post_init__(self):
        sides = tuple(float(s) for s in self.side_lengths)
        object.__setattr__(self, "side_lengths", sides)
        if len(sides) not in (2, 3):
            raise ValueError(f"dimension must be 2 or 3, got {len(sides)}")
        if not all(math.isfinite(s) and s > 0 for s in sides):
            raise ValueError(f"side lengths must be positive, got {sides}")

    @property
    def dim(self) -> int:
        return len(self.side_lengths)

    @property
    def volume(self) -> float:
        return float(np.prod(self.side_lengths))


@dataclass(frozen=True)
class Face:
    axis: int
    side: int  # 0 for x_j = 0, 1 for x_j = L_j

    @property
    def label(self) -> str:
        return f"x{self.axis + 1}{'-+'[self.side]}"

    @property
    def normal_sign(self) -> int:
        return 1 if self.side else -1

    @classmethod
    def parse(cls, label: str) -> "Face":
        label = label.strip()
        if len(label) < 3 or label[0] != "x" or label[-1] not in "-+":
            raise ValueError(f"bad face label {label!r}; expected e.g. 'x1-' or 'x3+'")
        return cls(int(label[1:-1]) - 1, "-+".index(label[-1]))


@dataclass(frozen=True)
class Grid:
    box: BoxDomain
    counts: tuple[int, ...]
    spacing: tuple[float, ...] = field(init=False)

    def __post_init__(self):
        counts = tuple(int(c) for c in self.counts)
        object.__setattr__(self, "counts", counts)
        object.__setattr__(
            self, "spacing", tuple(L / (n + 1) for L, n in zip(self.box.side_lengths, counts))
        )
        offsets, size = {}, 0
        for face in self.faces:
            offsets[face] = size
            size += int(np.prod(self.face_shape(face)))
        object.__setattr__(self, "_offsets", offsets)
        object.__setattr__(self, "_n_boundary", size)

    # -- interior layout ------------------------------------------------
    @property
    def dim(self) -> int:
        return self.box.dim

    @property
    def shape(self) -> tuple[int, ...]:
        return self.counts

    @property
    def lattice_shape(self) -> tuple[int, ...]:
        return tuple(n + 2 for n in self.counts)

    @property
    def size(self) -> int:
        return int(np.prod(self.counts))

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    def coords(self, axis: int) -> np.ndarray:
        return np.arange(1, self.counts[axis] + 1) * self.spacing[axis]

    def lattice_coords(self, axis: int) -> np.ndarray:
        return np.arange(self.counts[axis] + 2) * self.spacing[axis]

    def mesh(self) -> list[np.ndarray]:
        return np.meshgrid(*(self.coords(a) for a in range(self.dim)), indexing="ij")

    def interior_to_lattice(self, index: Sequence[int]) -> tuple[int, ...]:
        return tuple(int(i) + 1 for i in index)

    def lattice_to_interior(self, index: Sequence[int]) -> tuple[int, ...]:
        out = tuple(int(i) - 1 for i in index)
        if any(not 0 <= i < n for i, n in zip(out, self.counts)):
            raise IndexError(f"lattice index {tuple(index)} is not an interior node")
        return out

    def inner(self, u: np.ndarray, v: np.ndarray) -> complex:
        """Discrete L2 inner product (u, v) = sum u conj(v) prod h."""
        return np.vdot(v, u) * self.cell_volume

    def l2_norm(self, u: np.ndarray) -> float:
        return float(np.sqrt(np.sum(np.abs(u) ** 2) * self.cell_volume))

    # -- boundary layout ------------------------------------------------
    @property
    def faces(self) -> tuple[Face, ...]:
        return tuple(Face(a, s) for a in range(self.dim) for s in (0, 1))

    def transverse_axes(self, face: Face) -> tuple[int, ...]:
        return tuple(a for a in range(self.dim) if a != face.axis)

    def face_shape(self, face: Face) -> tuple[int, ...]:
        return tuple(self.counts[a] for a in self.transverse_axes(face))

    def face_spacing(self, face: Face) -> tuple[float, ...]:
        return tuple(self.spacing[a] for a in self.transverse_axes(face))

    def face_slice(self, face: Face) -> slice:
        start = self._offsets[face]
        return slice(start, start + int(np.prod(self.face_shape(face))))

    @property
    def n_boundary(self) -> int:
        return self._n_boundary

    def boundary_weights(self) -> np.ndarray:
        w = np.empty(self.n_boundary)
        for face in self.faces:
            w[self.face_slice(face)] = np.prod(self.face_spacing(face))
        return w

    def boundary_points(self) -> np.ndarray:
        """Coordinates of boundary nodes, shape (n_boundary, dim)."""
        pts = np.empty((self.n_boundary, self.dim))
        for face in self.faces:
            axes = self.transverse_axes(face)
            tm = np.meshgrid(*(self.coords(a) for a in axes), indexing="ij")
            block = pts[self.face_slice(face)]
            block[:, face.axis] = face.side * self.box.side_lengths[face.axis]
            for a, c in zip(axes, tm):
                block[:, a] = c.ravel()
        return pts

    def boundary_trace(self, func) -> np.ndarray:
        """Evaluate ``func(*coords)`` on the boundary nodes."""
        pts = self.boundary_points()
        return np.asarray(func(*pts.T))

    def face_view(self, boundary: np.ndarray, face: Face) -> np.ndarray:
        return boundary[self.face_slice(face)].reshape(self.face_shape(face))

    def _lattice_face_index(self, face: Face, depth: int = 0):
        idx: list[object] = [slice(1, n + 1) for n in self.counts]
        n = self.counts[face.axis]
        idx[face.axis] = depth if face.side == 0 else n + 1 - depth
        return tuple(idx)

    def pad(self, interior: np.ndarray, boundary: np.ndarray | None = None) -> np.ndarray:
        """Embed an interior field (and optional boundary values) in the full lattice.

        Edge and corner nodes are set to zero.
        """
        dtype = np.result_type(interior, boundary if boundary is not None else 0.0)
        out = np.zeros(self.lattice_shape, dtype=dtype)
        out[tuple(slice(1, n + 1) for n in self.counts)] = interior
        if boundary is not None:
            for face in self.faces:
                out[self._lattice_face_index(face)] = self.face_view(boundary, face)
        return out

    def lattice_layer(self, lattice: np.ndarray, depth: int) -> np.ndarray:
        """Boundary-ordered vector of lattice values ``depth`` layers in from each face."""
        parts = [lattice[self._lattice_face_index(f, depth)].ravel() for f in self.faces]
        return np.concatenate(parts)

    def interior_layer(self, interior: np.ndarray, depth: int) -> np.ndarray:
        """Like :meth:`lattice_layer` for interior arrays; depth 1 is next to the face."""
        return self.lattice_layer(self.pad(interior), depth)

    def torus_counts(self) -> tuple[int, ...]:
        """Node counts of the periodic embedding with side 2 L_j."""
        return tuple(2 * (n + 1) for n in self.counts)

    def save(self, path, field_values: np.ndarray) -> None:
        from .io import write_field

        write_field(path, field_values, self)


def build_grid(box: BoxDomain | Sequence[float], resolution: Sequence[int]) -> Grid:
    """Uniform grid with ``resolution[j]`` interior nodes along axis j."""
    if not isinstance(box, BoxDomain):
        box = BoxDomain(tuple(box))
    res = tuple(resolution)
    if len(res) != box.dim:
        raise ValueError(f"resolution {res} does not match dimension {box.dim}")
    for r in res:
        if int(r) != r or r < 3:
            raise ValueError(f"every resolution must be an integer >= 3, got {res}")
    return Grid(box, tuple(int(r) for r in res))


# ---------------------------------------------------------------------------
# Regions


@dataclass(frozen=True)
class RegionPartition:
    """Inner region M0 (union of boxes), buffer M0' and the complement M1.

    Index ranges are inclusive lattice indices ``(lo, hi)`` per axis.
    """

    grid: Grid
    boxes: tuple[tuple[tuple[int, int], ...], ...]
    margin: int

    @property
    def buffer_boxes(self):
        m = self.margin
        return tuple(tuple((lo - m, hi + m) for lo, hi in b) for b in self.boxes)

    def _mask(self, boxes) -> np.ndarray:
        mask = np.zeros(self.grid.shape, dtype=bool)
        for b in boxes:
            mask[tuple(slice(lo - 1, hi) for lo, hi in b)] = True
        return mask

    @property
    def inner_mask(self) -> np.ndarray:
        return self._mask(self.boxes)

    @property
    def buffer_mask(self) -> np.ndarray:
        return self._mask(self.buffer_boxes)

    @property
    def complement_mask(self) -> np.ndarray:
        """Interior nodes of M1 = M minus Int(M0)."""
        return ~self.inner_mask


def _connected(mask: np.ndarray) -> bool:
    """Flood fill with face (4/6) connectivity."""
    nodes = np.argwhere(mask)
    if len(nodes) == 0:
        return False
    seen = np.zeros_like(mask)
    start = tuple(nodes[0])
    seen[start] = True
    queue = deque([start])
    count = 1
    shape = mask.shape
    while queue:
        node = queue.popleft()
        for axis in range(mask.ndim):
            for step in (-1, 1):
                nb = list(node)
                nb[axis] += step
                if not 0 <= nb[axis] < shape[axis]:
                    continue
                nb = tuple(nb)
                if mask[nb] and not seen[nb]:
                    seen[nb] = True
                    count += 1
                    queue.append(nb)
    return count == len(nodes)


def carve_regions(
    grid: Grid,
    inner: Sequence[Sequence[float]] | Sequence[Sequence[Sequence[float]]],
    margin_layers: int = 1,
) -> RegionPartition:
    """Build M0 from one sub-box ``[(a_1, b_1), ...]`` or a list of them.

    Nodes with ``a_j <= x_j <= b_j`` belong to M0. M0' is M0 dilated by
    ``margin_layers`` grid layers.
    """
    if margin_layers < 1:
        raise ValueError("margin_layers must be >= 1")
    arr = np.asarray(inner, dtype=float)
    if arr.ndim == 2:
        arr = arr[None]
    if arr.ndim != 3 or arr.shape[1:] != (grid.dim, 2):
        raise ValueError(f"inner must be (dim, 2) bounds or a list of them, got shape {arr.shape}")

    boxes = []
    tol = 1e-9
    for b in arr:
        ranges = []
        for axis, (a, c) in enumerate(b):
            L, h = grid.box.side_lengths[axis], grid.spacing[axis]
            if not (0 < a < c < L):
                raise ValueError(
                    f"inner box {b.tolist()} touches the boundary or is empty along axis {axis + 1}"
                )
            lo = math.ceil(a / h - tol)
            hi = math.floor(c / h + tol)
            if hi < lo:
                raise ValueError(f"inner box {b.tolist()} contains no grid node along axis {axis + 1}")
            ranges.append((lo, hi))
        boxes.append(tuple(ranges))

    part = RegionPartition(grid, tuple(boxes), int(margin_layers))
    if not _connected(part.complement_mask):
        raise ValueError("M1 = M \\ Int(M0) is disconnected")
    need = 2 * margin_layers
    for b in part.boxes:
        for axis, (lo, hi) in enumerate(b):
            n = grid.counts[axis]
            # layers strictly between M0 and the boundary face
            if lo - 1 < need or n - hi < need:
                raise ValueError(
                    f"M0 needs at least {need} grid layers to every face (axis {axis + 1}: "
                    f"{lo - 1} and {n - hi})"
                )
    return part


def smoothstep(t: np.ndarray) -> np.ndarray:
    """Quintic smoothstep, C2 at both ends, clamped to [0, 1]."""
    t = np.clip(t, 0.0, 1.0)
    return t * t * t * (t * (6 * t - 15) + 10)


def _box_ramp(index: np.ndarray, lo: int, hi: int, width: int) -> np.ndarray:
    dist = np.maximum(lo - index, 0) + np.maximum(index - hi, 0)
    return 1.0 - smoothstep(dist / width)


def smooth_window(grid: Grid, partition: RegionPartition) -> np.ndarray:
    """Cutoff equal to 1 on M0, 0 outside M0', quintic ramp across the margin."""
    psi = np.zeros(grid.shape)
    idx = [np.arange(1, n + 1) for n in grid.counts]
    m = partition.margin
    for b in partition.boxes:
        factors = [_box_ramp(i, lo, hi, m) for i, (lo, hi) in zip(idx, b)]
        psi = np.maximum(psi, _outer(factors))
    return psi


def characteristic(partition: RegionPartition) -> np.ndarray:
    return partition.inner_mask.astype(float)


def _outer(factors: Sequence[np.ndarray]) -> np.ndarray:
    out = factors[0]
    for f in factors[1:]:
        out = np.multiply.outer(out, f)
    return out


# ---------------------------------------------------------------------------
# Boundary patches


@dataclass(frozen=True)
class PatchPiece:
    face: Face
    ranges: tuple[tuple[int, int], ...]  # half-open face-array index ranges per transverse axis

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(b - a for a, b in self.ranges)


@dataclass(frozen=True)
class BoundaryPatch:
    grid: Grid
    pieces: tuple[PatchPiece, ...]

    def __post_init__(self):
        if not self.pieces:
            raise ValueError("a boundary patch must be nonempty")
        faces = [p.face for p in self.pieces]
        if len(set(faces)) != len(faces):
            raise ValueError("at most one rectangle per face")

    def piece_indices(self, piece: PatchPiece) -> np.ndarray:
        """Boundary-vector indices of a piece, C order over its rectangle."""
        g = self.grid
        fshape = g.face_shape(piece.face)
        local = np.arange(int(np.prod(fshape))).reshape(fshape)
        block = local[tuple(slice(a, b) for a, b in piece.ranges)]
        return g.face_slice(piece.face).start + block.ravel()

    @property
    def indices(self) -> np.ndarray:
        return np.concatenate([self.piece_indices(p) for p in self.pieces])

    @property
    def weights(self) -> np.ndarray:
        return self.grid.boundary_weights()[self.indices]

    @property
    def mask(self) -> np.ndarray:
        m = np.zeros(self.grid.n_boundary, dtype=bool)
        m[self.indices] = True
        return m

    @property
    def size(self) -> int:
        return len(self.indices)

    @property
    def area(self) -> float:
        return float(self.weights.sum())

    def describe(self) -> dict:
        return {p.face.label: [list(r) for r in p.ranges] for p in self.pieces}


def make_patch(
    grid: Grid, spec: Mapping[str, Sequence[Sequence[float]] | None] | Sequence[str] | str
) -> BoundaryPatch:
    """Patch from ``{face_label: None | [(lo, hi) per transverse axis]}``.

    Bounds are physical coordinates; ``None`` selects the whole face. A list of
    labels or ``"all"`` selects whole faces.
    """
    if isinstance(spec, str):
        spec = [f.label for f in grid.faces] if spec == "all" else [spec]
    if not isinstance(spec, Mapping):
        spec = {label: None for label in spec}
    pieces = []
    for label, bounds in spec.items():
        face = Face.parse(label)
        if face.axis >= grid.dim:
            raise ValueError(f"face {label} does not exist in dimension {grid.dim}")
        axes = grid.transverse_axes(face)
        if bounds is None:
            ranges = tuple((0, grid.counts[a]) for a in axes)
        else:
            if len(bounds) != len(axes):
                raise ValueError(f"face {label} needs {len(axes)} coordinate ranges")
            ranges = []
            for a, (lo, hi) in zip(axes, bounds):
                x = grid.coords(a)
                sel = np.nonzero((x >= lo - 1e-9) & (x <= hi + 1e-9))[0]
                if len(sel) == 0:
                    raise ValueError(f"face {label}: range ({lo}, {hi}) holds no node")
                ranges.append((int(sel[0]), int(sel[-1]) + 1))
            ranges = tuple(ranges)
        pieces.append(PatchPiece(face, ranges))
    return BoundaryPatch(grid, tuple(pieces))


def boundary_window(inner: BoundaryPatch, outer: BoundaryPatch) -> np.ndarray:
    """Boundary cutoff: 1 on ``inner``, 0 off ``outer``, quintic ramp in between.

    ``inner`` must sit inside ``outer`` with at least one node layer to spare on
    every side where ``outer`` does not reach the face edge.
    """
    grid = inner.grid
    out_by_face = {p.face: p for p in outer.pieces}
    psi = np.zeros(grid.n_boundary)
    for p in inner.pieces:
        q = out_by_face.get(p.face)
        if q is None:
            raise ValueError(f"inner patch face {p.face.label} is not part of the outer patch")
        factors = []
        for (a0, b0), (a, b), n in zip(p.ranges, q.ranges, grid.face_shape(p.face)):
            # half-open ranges; inner nodes a0..b0-1, outer a..b-1
            if a0 < a or b0 > b:
                raise ValueError(f"inner patch leaves the outer patch on face {p.face.label}")
            if (a > 0 and a0 - a < 1) or (b < n and b - b0 < 1):
                raise ValueError(
                    f"inner patch must be strictly inside the outer patch on face {p.face.label}"
                )
            i = np.arange(n)
            lo_w = a0 - (a - 1)
            hi_w = (b + 1) - (b0 - 1) - 1
            dist_lo = np.maximum(a0 - i, 0) / lo_w
            dist_hi = np.maximum(i - (b0 - 1), 0) / hi_w
            ramp = 1.0 - smoothstep(np.maximum(dist_lo, dist_hi))
            ramp[(i < a) | (i >= b)] = 0.0
            factors.append(ramp)
        grid.face_view(psi, p.face)[...] = _outer(factors)
    return psi
