"""Geometric and material data model.

The computational domain is a polygonal partition: contiguous, non-overlapping
polygonal subdomains, each owning a single point placed at its centroid. All
degrees of freedom live at these points (2 per point), so the system size is
fixed by the partition and never changes when cracks are introduced.

Faces are the polygon edges: an interior face is shared by exactly two
subdomains (ordered so the lower id is side 1, with the unit normal pointing
from side 1 into side 2), a boundary face by exactly one (normal pointing out
of the domain). Named node/edge sets carry boundary-condition and damage-zone
tags from the mesh file.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "MeshError",
    "Material",
    "InterfaceMaterial",
    "Subdomain",
    "InteriorFace",
    "BoundaryFace",
    "FaceSet",
    "Partition",
    "polygon_area",
    "polygon_centroid",
    "point_in_polygon",
    "characteristic_length",
    "elasticity_matrix",
    "load_mesh",
    "parse_mesh",
]


class MeshError(Exception):
    """Invalid mesh file or broken partition topology/geometry."""


# ---------------------------------------------------------------------------
# Materials
# ---------------------------------------------------------------------------

PLANE_STRAIN = "plane_strain"
PLANE_STRESS = "plane_stress"


@dataclass(frozen=True)
class Material:
    """Isotropic linear elastic bulk material.

    Parameters
    ----------
    E : float
        Young's modulus (Pa).
    nu : float
        Poisson's ratio; must satisfy 0 <= nu < 0.5 (the incompressible
        limit is rejected because the plane-strain stiffness blows up).
    analysis_mode : str
        ``"plane_strain"`` (default) or ``"plane_stress"``.
    body_force : (2,) array
        Constant body force per unit volume (N/m^3), default zero.
    """

    E: float
    nu: float
    analysis_mode: str = PLANE_STRAIN
    body_force: np.ndarray = field(default_factory=lambda: np.zeros(2))

    def __post_init__(self):
        if not self.E > 0.0:
            raise ValueError(f"Young's modulus must be positive, got {self.E}")
        if not (0.0 <= self.nu < 0.5):
            raise ValueError(f"Poisson's ratio must lie in [0, 0.5), got {self.nu}")
        if self.analysis_mode not in (PLANE_STRAIN, PLANE_STRESS):
            raise ValueError(f"unknown analysis mode {self.analysis_mode!r}")
        object.__setattr__(self, "body_force", np.asarray(self.body_force, dtype=float))
        if self.body_force.shape != (2,):
            raise ValueError("body_force must be a 2-vector")


@dataclass(frozen=True)
class InterfaceMaterial:
    """Interface strength/energy pair plus the penalty parameter.

    ``lam`` is the dimensionless penalty multiplier; the face stiffness is
    ``alpha = lam * E / h_s``. Values far outside [1e-2, 1e2] still run but
    trigger a warning (small destabilizes the weak continuity enforcement,
    large reintroduces conditioning problems).
    """

    t_c: float
    G_c: float
    lam: float = 1.0
    softening: str = "linear"

    def __post_init__(self):
        if not self.t_c > 0.0:
            raise ValueError(f"interface strength must be positive, got {self.t_c}")
        if not self.G_c > 0.0:
            raise ValueError(f"fracture energy must be positive, got {self.G_c}")
        if self.softening != "linear":
            raise ValueError(f"only linear softening is supported, got {self.softening!r}")
        if not self.lam > 0.0:
            raise ValueError(f"penalty parameter must be positive, got {self.lam}")
        if not (1e-2 <= self.lam <= 1e2):
            warnings.warn(
                f"penalty parameter lambda={self.lam:g} is outside the admissible "
                "range [1e-2, 1e2]; results may be unreliable",
                stacklevel=2,
            )


def elasticity_matrix(mat: Material) -> np.ndarray:
    """3x3 stiffness matrix in Voigt order (11, 22, 12) with engineering shear."""
    E, nu = mat.E, mat.nu
    if mat.analysis_mode == PLANE_STRAIN:
        c = E / ((1.0 + nu) * (1.0 - 2.0 * nu))
        D = c * np.array(
            [
                [1.0 - nu, nu, 0.0],
                [nu, 1.0 - nu, 0.0],
                [0.0, 0.0, (1.0 - 2.0 * nu) / 2.0],
            ]
        )
    else:
        c = E / (1.0 - nu**2)
        D = c * np.array(
            [
                [1.0, nu, 0.0],
                [nu, 1.0, 0.0],
                [0.0, 0.0, (1.0 - nu) / 2.0],
            ]
        )
    return D


# ---------------------------------------------------------------------------
# Partition entities
# ---------------------------------------------------------------------------


@dataclass
class Subdomain:
    """Polygonal cell owning one point (placed at the polygon centroid)."""

    id: int
    vertices: np.ndarray  # (k, 2), counter-clockwise
    point_id: int
    area: float
    h_s: float


@dataclass
class InteriorFace:
    """Edge shared by two subdomains; ``owners = (E1, E2)`` with E1 < E2.

    ``normal`` is the unit normal pointing from E1 into E2; it fixes the sign
    of the jump operator. ``endpoints`` follow E1's counter-clockwise
    traversal of the edge.
    """

    id: int
    endpoints: np.ndarray  # (2, 2)
    owners: tuple[int, int]
    normal: np.ndarray  # (2,)
    length: float


@dataclass
class BoundaryFace:
    """Edge owned by a single subdomain; ``normal`` points out of the domain."""

    id: int
    endpoints: np.ndarray
    owner: int
    normal: np.ndarray
    length: float


@dataclass
class FaceSet:
    """Resolved edge set: face ids split by face kind."""

    interior: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))
    boundary: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))


@dataclass
class Partition:
    """Immutable discretization: points, subdomains, faces, named sets."""

    points: np.ndarray  # (n, 2) one per subdomain
    subdomains: list[Subdomain]
    interior_faces: list[InteriorFace]
    boundary_faces: list[BoundaryFace]
    node_sets: dict[str, np.ndarray] = field(default_factory=dict)
    edge_sets: dict[str, FaceSet] = field(default_factory=dict)
    nodes: np.ndarray | None = None  # raw polygon vertices from the mesh file

    @property
    def n_points(self) -> int:
        return self.points.shape[0]

    @property
    def n_dofs(self) -> int:
        return 2 * self.points.shape[0]

    def face_set(self, name: str) -> FaceSet:
        try:
            return self.edge_sets[name]
        except KeyError:
            raise KeyError(
                f"edge set {name!r} not found; available: {sorted(self.edge_sets)}"
            ) from None


# ---------------------------------------------------------------------------
# Polygon helpers
# ---------------------------------------------------------------------------


def polygon_area(vertices: np.ndarray) -> float:
    """Signed shoelace area; positive for counter-clockwise loops."""
    v = np.asarray(vertices, dtype=float)
    x, y = v[:, 0], v[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def polygon_centroid(vertices: np.ndarray) -> np.ndarray:
    """Area centroid of a simple polygon (CCW or CW)."""
    v = np.asarray(vertices, dtype=float)
    x, y = v[:, 0], v[:, 1]
    xn, yn = np.roll(x, -1), np.roll(y, -1)
    cross = x * yn - xn * y
    a = 0.5 * np.sum(cross)
    cx = np.sum((x + xn) * cross) / (6.0 * a)
    cy = np.sum((y + yn) * cross) / (6.0 * a)
    return np.array([cx, cy])


def point_in_polygon(point: np.ndarray, vertices: np.ndarray) -> bool:
    """Strict interior test (ray casting); points on the boundary fail."""
    px, py = float(point[0]), float(point[1])
    v = np.asarray(vertices, dtype=float)
    n = len(v)
    inside = False
    for i in range(n):
        x1, y1 = v[i]
        x2, y2 = v[(i + 1) % n]
        # on-edge check against the strictness requirement
        dx, dy = x2 - x1, y2 - y1
        t = ((px - x1) * dx + (py - y1) * dy) / (dx * dx + dy * dy)
        if 0.0 <= t <= 1.0:
            qx, qy = x1 + t * dx, y1 + t * dy
            if abs(qx - px) < 1e-14 and abs(qy - py) < 1e-14:
                return False
        if (y1 > py) != (y2 > py):
            x_cross = x1 + (py - y1) * dx / dy
            if px < x_cross:
                inside = not inside
    return inside


def _polygon_is_simple(vertices: np.ndarray) -> bool:
    """Check no two non-adjacent edges intersect (small polygons only)."""
    v = np.asarray(vertices, dtype=float)
    n = len(v)

    def seg_intersect(p1, p2, p3, p4):
        d1 = np.cross(p4 - p3, p1 - p3)
        d2 = np.cross(p4 - p3, p2 - p3)
        d3 = np.cross(p2 - p1, p3 - p1)
        d4 = np.cross(p2 - p1, p4 - p1)
        return ((d1 > 0) != (d2 > 0)) and ((d3 > 0) != (d4 > 0))

    for i in range(n):
        for j in range(i + 1, n):
            if j == i or (j + 1) % n == i or (i + 1) % n == j:
                continue
            if seg_intersect(v[i], v[(i + 1) % n], v[j], v[(j + 1) % n]):
                return False
    return True


def characteristic_length(sub: Subdomain) -> float:
    """Subdomain characteristic length, sqrt(area)."""
    return float(np.sqrt(sub.area))


# ---------------------------------------------------------------------------
# Mesh file parsing
# ---------------------------------------------------------------------------


class _TokenStream:
    """Whitespace tokens with line tracking for error messages."""

    def __init__(self, text: str):
        self.tokens: list[tuple[str, int]] = []
        for lineno, line in enumerate(text.splitlines(), start=1):
            body = line.split("#", 1)[0]
            for tok in body.split():
                self.tokens.append((tok, lineno))
        self.pos = 0

    def __bool__(self) -> bool:
        return self.pos < len(self.tokens)

    @property
    def lineno(self) -> int:
        if self.pos < len(self.tokens):
            return self.tokens[self.pos][1]
        return self.tokens[-1][1] if self.tokens else 0

    def next(self, what: str) -> str:
        if self.pos >= len(self.tokens):
            raise MeshError(f"unexpected end of file while reading {what}")
        tok, _ = self.tokens[self.pos]
        self.pos += 1
        return tok

    def next_int(self, what: str) -> int:
        tok = self.next(what)
        try:
            return int(tok)
        except ValueError:
            raise MeshError(f"line {self.lineno}: expected integer {what}, got {tok!r}") from None

    def next_float(self, what: str) -> float:
        tok = self.next(what)
        try:
            return float(tok)
        except ValueError:
            raise MeshError(f"line {self.lineno}: expected number {what}, got {tok!r}") from None


def parse_mesh(text: str) -> Partition:
    """Parse mesh text into a validated :class:`Partition`.

    Format (``#`` starts a comment anywhere)::

        fpmmesh 1
        <n_nodes> <n_cells>
        <id> <x> <y>              # one line per node
        <id> <k> <v1> ... <vk>    # one line per cell, CCW vertex ids
        nodeset <name> <count>    # followed by <count> node ids
        edgeset <name> <count>    # followed by <count> (cell_id local_edge) pairs
    """
    ts = _TokenStream(text)

    magic = ts.next("file magic")
    version = ts.next("format version")
    if magic != "fpmmesh" or version != "1":
        raise MeshError(f"line {ts.lineno}: not an fpmmesh-1 file (got {magic!r} {version!r})")

    n_nodes = ts.next_int("node count")
    n_cells = ts.next_int("cell count")
    if n_nodes < 3 or n_cells < 1:
        raise MeshError(f"implausible mesh sizes: {n_nodes} nodes, {n_cells} cells")

    nodes = np.zeros((n_nodes, 2))
    node_index: dict[int, int] = {}
    for i in range(n_nodes):
        nid = ts.next_int("node id")
        if nid in node_index:
            raise MeshError(f"line {ts.lineno}: duplicate node id {nid}")
        node_index[nid] = i
        nodes[i, 0] = ts.next_float("node x")
        nodes[i, 1] = ts.next_float("node y")

    cells: list[np.ndarray] = []  # vertex indices into `nodes`
    cell_index: dict[int, int] = {}
    for i in range(n_cells):
        lineno = ts.lineno
        cid = ts.next_int("cell id")
        if cid in cell_index:
            raise MeshError(f"line {lineno}: duplicate cell id {cid}")
        cell_index[cid] = i
        k = ts.next_int("cell vertex count")
        if k < 3:
            raise MeshError(f"line {lineno}: cell {cid} has fewer than 3 vertices")
        verts = np.zeros(k, dtype=int)
        for j in range(k):
            vid = ts.next_int("cell vertex id")
            if vid not in node_index:
                raise MeshError(f"line {ts.lineno}: cell {cid} references unknown node {vid}")
            verts[j] = node_index[vid]
        if len(set(verts.tolist())) != k:
            raise MeshError(f"line {lineno}: cell {cid} repeats a vertex")
        cells.append(verts)

    raw_node_sets: dict[str, np.ndarray] = {}
    raw_edge_sets: dict[str, list[tuple[int, int]]] = {}
    while ts:
        kind = ts.next("set keyword")
        if kind == "nodeset":
            name = ts.next("nodeset name")
            count = ts.next_int("nodeset size")
            ids = np.zeros(count, dtype=int)
            for j in range(count):
                nid = ts.next_int("nodeset entry")
                if nid not in node_index:
                    raise MeshError(f"line {ts.lineno}: nodeset {name!r} references unknown node {nid}")
                ids[j] = node_index[nid]
            raw_node_sets[name] = ids
        elif kind == "edgeset":
            name = ts.next("edgeset name")
            count = ts.next_int("edgeset size")
            entries = []
            for j in range(count):
                cid = ts.next_int("edgeset cell id")
                le = ts.next_int("edgeset local edge")
                if cid not in cell_index:
                    raise MeshError(f"line {ts.lineno}: edgeset {name!r} references unknown cell {cid}")
                ci = cell_index[cid]
                if not (0 <= le < len(cells[ci])):
                    raise MeshError(
                        f"line {ts.lineno}: edgeset {name!r} local edge {le} out of range for cell {cid}"
                    )
                entries.append((ci, le))
            raw_edge_sets[name] = entries
        else:
            raise MeshError(f"line {ts.lineno}: expected 'nodeset' or 'edgeset', got {kind!r}")

    return _build_partition(nodes, cells, raw_node_sets, raw_edge_sets)


def _build_partition(
    nodes: np.ndarray,
    cells: list[np.ndarray],
    raw_node_sets: dict[str, np.ndarray],
    raw_edge_sets: dict[str, list[tuple[int, int]]],
) -> Partition:
    n_cells = len(cells)
    subdomains: list[Subdomain] = []
    points = np.zeros((n_cells, 2))

    for i, verts in enumerate(cells):
        poly = nodes[verts]
        area = polygon_area(poly)
        if area < 0.0:
            # accept clockwise input, store CCW
            verts = verts[::-1]
            cells[i] = verts
            poly = nodes[verts]
            area = -area
        if area <= 0.0 or area < 1e-300:
            raise MeshError(f"cell {i}: degenerate polygon (zero area)")
        if not _polygon_is_simple(poly):
            raise MeshError(f"cell {i}: self-intersecting polygon")
        centroid = polygon_centroid(poly)
        if not point_in_polygon(centroid, poly):
            raise MeshError(f"cell {i}: centroid does not lie strictly inside the polygon")
        points[i] = centroid
        subdomains.append(
            Subdomain(id=i, vertices=poly.copy(), point_id=i, area=area, h_s=float(np.sqrt(area)))
        )

    # edge -> owning (cell, local_edge) incidences, keyed by node-id pair
    edge_use: dict[tuple[int, int], list[tuple[int, int]]] = {}
    for ci, verts in enumerate(cells):
        k = len(verts)
        for le in range(k):
            a, b = int(verts[le]), int(verts[(le + 1) % k])
            key = (a, b) if a < b else (b, a)
            edge_use.setdefault(key, []).append((ci, le))

    interior_faces: list[InteriorFace] = []
    boundary_faces: list[BoundaryFace] = []
    face_of_edge: dict[tuple[int, int], tuple[str, int]] = {}

    for key in sorted(edge_use):
        users = edge_use[key]
        if len(users) > 2:
            raise MeshError(
                f"non-manifold face between nodes {key}: shared by {len(users)} cells"
            )
        if len(users) == 2:
            (ca, la), (cb, lb) = users
            e1, le1 = (ca, la) if ca < cb else (cb, lb)
            e2 = cb if ca < cb else ca
            if ca == cb:
                raise MeshError(f"cell {ca} shares an edge with itself (nodes {key})")
            verts = cells[e1]
            a = nodes[verts[le1]]
            b = nodes[verts[(le1 + 1) % len(verts)]]
            d = b - a
            length = float(np.hypot(d[0], d[1]))
            if length <= 0.0:
                raise MeshError(f"zero-length face between nodes {key}")
            normal = np.array([d[1], -d[0]]) / length  # outward of E1 = into E2
            interior_faces.append(
                InteriorFace(
                    id=len(interior_faces),
                    endpoints=np.array([a, b]),
                    owners=(e1, e2),
                    normal=normal,
                    length=length,
                )
            )
            face_of_edge[key] = ("interior", interior_faces[-1].id)
        else:
            (ci, le) = users[0]
            verts = cells[ci]
            a = nodes[verts[le]]
            b = nodes[verts[(le + 1) % len(verts)]]
            d = b - a
            length = float(np.hypot(d[0], d[1]))
            if length <= 0.0:
                raise MeshError(f"zero-length face between nodes {key}")
            normal = np.array([d[1], -d[0]]) / length
            boundary_faces.append(
                BoundaryFace(
                    id=len(boundary_faces),
                    endpoints=np.array([a, b]),
                    owner=ci,
                    normal=normal,
                    length=length,
                )
            )
            face_of_edge[key] = ("boundary", boundary_faces[-1].id)

    edge_sets: dict[str, FaceSet] = {}
    for name, entries in raw_edge_sets.items():
        interior_ids, boundary_ids = [], []
        for ci, le in entries:
            verts = cells[ci]
            a, b = int(verts[le]), int(verts[(le + 1) % len(verts)])
            key = (a, b) if a < b else (b, a)
            kind, fid = face_of_edge[key]
            (interior_ids if kind == "interior" else boundary_ids).append(fid)
        edge_sets[name] = FaceSet(
            interior=np.array(sorted(set(interior_ids)), dtype=int),
            boundary=np.array(sorted(set(boundary_ids)), dtype=int),
        )

    return Partition(
        points=points,
        subdomains=subdomains,
        interior_faces=interior_faces,
        boundary_faces=boundary_faces,
        node_sets=raw_node_sets,
        edge_sets=edge_sets,
        nodes=nodes,
    )


def load_mesh(path) -> Partition:
    """Read and validate an ``fpmmesh 1`` text file."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise MeshError(f"cannot read mesh file {path}: {exc}") from exc
    try:
        return parse_mesh(text)
    except MeshError as exc:
        raise MeshError(f"{path}: {exc}") from None
