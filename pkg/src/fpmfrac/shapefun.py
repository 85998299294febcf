"""Per-subdomain trial functions.

Each subdomain carries a linear trial field anchored at its point:

    u_h(x) = u0 + [[h, 0], [0, h]] @ [a1; a2],   h = x - x0

where the gradient pair ``a = [a1; a2]`` is recovered from the displacements
of the point and its face neighbors by an (unweighted) least-squares
generalized finite difference fit. Stacking the support displacements into
``u = [u^0; u^1; ...; u^m]`` gives the linear maps

    a = C u           (gradient operator, 4 x 2(m+1))
    u_h(x) = N(x) u   (shape matrix, affine in x)
    eps = B u         (strain matrix, constant per subdomain)

Supports shrink when faces are severed by cracks. Column layout (and hence
the global DOF footprint) is frozen at construction: severed neighbors keep
their columns, zeroed, so global sparsity patterns never change.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .model import Partition

__all__ = [
    "IsolatedPointError",
    "SupportGraph",
    "ShapeTables",
    "gradient_operator",
    "strain_matrix",
    "shape_matrix",
    "rebuild_support",
]

# relative singular-value cutoff for the rank-revealing GFD solve
RANK_RTOL = 1e-10


class IsolatedPointError(Exception):
    """Support cannot resolve a 2D gradient (too few or collinear neighbors)."""


# ---------------------------------------------------------------------------
# Support graph
# ---------------------------------------------------------------------------


@dataclass
class SupportGraph:
    """Face-neighbor supports with per-face severed flags.

    ``neighbors[i]`` / ``faces[i]`` list, in ascending face id order, the
    points sharing a face with point i and the face ids. Severing a face
    removes the pair from each other's *active* support but leaves the
    stored lists (and thus DOF layouts) untouched.
    """

    neighbors: list[np.ndarray]
    faces: list[np.ndarray]
    severed: np.ndarray  # (n_interior_faces,) bool

    @classmethod
    def build(cls, partition: Partition) -> "SupportGraph":
        n = partition.n_points
        nbrs: list[list[int]] = [[] for _ in range(n)]
        fids: list[list[int]] = [[] for _ in range(n)]
        for f in partition.interior_faces:
            e1, e2 = f.owners
            nbrs[e1].append(e2)
            fids[e1].append(f.id)
            nbrs[e2].append(e1)
            fids[e2].append(f.id)
        return cls(
            neighbors=[np.array(v, dtype=int) for v in nbrs],
            faces=[np.array(v, dtype=int) for v in fids],
            severed=np.zeros(len(partition.interior_faces), dtype=bool),
        )

    def active_mask(self, i: int) -> np.ndarray:
        return ~self.severed[self.faces[i]]

    def active_neighbors(self, i: int) -> np.ndarray:
        return self.neighbors[i][self.active_mask(i)]

    def sever(self, face_id: int, owners: tuple[int, int]) -> list[int]:
        """Mark a face severed; returns the stale subdomain ids (empty if no-op)."""
        if self.severed[face_id]:
            return []
        self.severed[face_id] = True
        return list(owners)


def rebuild_support(graph: SupportGraph, partition: Partition, face_id: int) -> list[int]:
    """Sever ``face_id`` in the support graph.

    Returns the ids of the two owner subdomains whose shape tables are now
    stale. Severing an already-severed face is a no-op and returns [].
    """
    return graph.sever(face_id, partition.interior_faces[face_id].owners)


# ---------------------------------------------------------------------------
# Gradient / shape / strain operators
# ---------------------------------------------------------------------------


def _gfd_fit(offsets: np.ndarray) -> np.ndarray:
    """Least-squares gradient weights G (2 x m) for difference rows ``offsets``.

    Raises IsolatedPointError when the offsets do not span 2D.
    """
    m = offsets.shape[0]
    if m < 2:
        raise IsolatedPointError(f"support has {m} neighbor(s); need at least 2")
    U, s, Vt = np.linalg.svd(offsets, full_matrices=False)
    rank = int(np.sum(s > RANK_RTOL * s[0])) if s[0] > 0.0 else 0
    if rank < 2:
        raise IsolatedPointError("support offsets are collinear (rank-deficient)")
    return (Vt.T * (1.0 / s)) @ U.T


def gradient_operator(p0: int, support: np.ndarray, coords: np.ndarray) -> np.ndarray:
    """Gradient operator C (4 x 2(m+1)) for point ``p0`` with the given support.

    Rows are (du1/dx1, du1/dx2, du2/dx1, du2/dx2); columns follow the stacked
    support vector [u^0, u^1, ..., u^m] with (u1, u2) interleaved. Exact for
    displacement fields linear in x.
    """
    support = np.asarray(support, dtype=int)
    offsets = coords[support] - coords[p0]
    G = _gfd_fit(offsets)  # (2, m)
    m = len(support)
    C = np.zeros((4, 2 * (m + 1)))
    gsum = G.sum(axis=1)
    C[0:2, 0] = -gsum
    C[2:4, 1] = -gsum
    C[0:2, 2::2] = G
    C[2:4, 3::2] = G
    return C


def strain_matrix(C: np.ndarray) -> np.ndarray:
    """Constant strain matrix B (3 x 2(m+1)) in Voigt order (11, 22, 12)."""
    B = np.zeros((3, C.shape[1]))
    B[0] = C[0]
    B[1] = C[3]
    B[2] = C[1] + C[2]
    return B


def shape_matrix(C: np.ndarray, x0: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Shape matrix N(x) (2 x 2(m+1)); N(x0) extracts exactly u^0."""
    N = np.zeros((2, C.shape[1]))
    N[0, 0] = 1.0
    N[1, 1] = 1.0
    h = np.asarray(x, dtype=float) - x0
    N[0] += h @ C[0:2]
    N[1] += h @ C[2:4]
    return N


# ---------------------------------------------------------------------------
# Tables over the whole partition
# ---------------------------------------------------------------------------


@dataclass
class ShapeTables:
    """Gradient, shape and strain operators for every subdomain.

    The support list and DOF map of each subdomain are frozen at build time
    (the pristine one-ring); :meth:`rebuild` refreshes C and B after support
    surgery, zeroing the columns of severed neighbors.
    """

    partition: Partition
    support_ids: list[np.ndarray]  # [self, nbr...] per subdomain, fixed
    dofs: list[np.ndarray]  # (2W,) global dof indices, fixed
    C: list[np.ndarray]
    B: list[np.ndarray]
    isolated: np.ndarray = field(default=None)  # (n,) bool

    @classmethod
    def build(cls, partition: Partition, graph: SupportGraph) -> "ShapeTables":
        n = partition.n_points
        support_ids, dofs, Cs, Bs = [], [], [], []
        isolated = np.zeros(n, dtype=bool)
        for i in range(n):
            ids = np.concatenate(([i], graph.neighbors[i]))
            support_ids.append(ids)
            d = np.empty(2 * len(ids), dtype=int)
            d[0::2] = 2 * ids
            d[1::2] = 2 * ids + 1
            dofs.append(d)
            C, iso = _tables_for(partition, graph, i, ids)
            Cs.append(C)
            Bs.append(strain_matrix(C))
            isolated[i] = iso
        return cls(partition, support_ids, dofs, Cs, Bs, isolated)

    def rebuild(self, stale: list[int], graph: SupportGraph) -> None:
        for i in stale:
            C, iso = _tables_for(self.partition, graph, i, self.support_ids[i])
            self.C[i] = C
            self.B[i] = strain_matrix(C)
            self.isolated[i] = iso

    def shape_at(self, sub_id: int, x: np.ndarray) -> np.ndarray:
        return shape_matrix(self.C[sub_id], self.partition.points[sub_id], x)


def _tables_for(
    partition: Partition, graph: SupportGraph, i: int, support_ids: np.ndarray
) -> tuple[np.ndarray, bool]:
    """C for subdomain i embedded at fixed width; isolated points get C = 0."""
    width = 2 * len(support_ids)
    active = graph.active_mask(i)
    act_ids = graph.neighbors[i][active]
    try:
        C_act = gradient_operator(i, act_ids, partition.points)
    except IsolatedPointError:
        return np.zeros((4, width)), True
    C = np.zeros((4, width))
    # columns: 0,1 -> self; neighbor k of the *original* list -> 2(k+1), 2(k+1)+1
    C[:, 0:2] = C_act[:, 0:2]
    col = 2
    for k, keep in enumerate(active):
        if keep:
            C[:, 2 * (k + 1) : 2 * (k + 1) + 2] = C_act[:, col : col + 2]
            col += 2
    return C, False
