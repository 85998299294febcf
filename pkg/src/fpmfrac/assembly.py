"""Global sparse system assembly.

The discrete operator combines three ingredient blocks:

* point stiffness, one ``area * B^T D B`` block per subdomain (the strain
  matrix is constant, so one-point quadrature is exact);
* face stiffness from the interior penalty flux, integrated with 2-point
  Gauss per face (exact for the quadratic ``[N]^T alpha [N]`` integrand),
  scaled per quadrature point by ``(1-d)`` or replaced by the consistent
  damage tangent on loading points;
* one-sided boundary flux blocks enforcing Dirichlet data weakly
  (``t_b = sigma.n - alpha_b (u - ubar)``, the same incomplete-penalty
  structure as the interior faces, applied per constrained component).

The matrix dimension is always ``2 x n_points`` and the sparsity pattern is
frozen at construction from the pristine support graph: cracking only zeroes
values. All heavy per-iteration work is batched numpy over padded per-entity
block tensors; a precomputed triplet->CSR reduction turns the block values
into a matrix without re-sorting indices every call.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import sparse

from .interface import (
    BrittlenessError,
    CRACK_EPS,
    InterfaceState,
    SofteningConstants,
    update_damage,
)
from .model import Material, Partition, elasticity_matrix
from .shapefun import ShapeTables, SupportGraph

__all__ = ["DirichletBC", "TractionBC", "TripletPattern", "Discretization"]

_GAUSS2 = np.array([-1.0, 1.0]) / np.sqrt(3.0)  # 2-point rule on [-1, 1]
N_QP = 2


@dataclass
class DirichletBC:
    """Weakly enforced displacement data on a boundary face set.

    ``components`` selects which displacement components are constrained;
    ``value`` is the prescribed displacement at load factor 1 (scaled by the
    solver's factor at run time): either a constant 2-vector or a callable
    ``x -> (2,)`` for spatially varying data.
    """

    name: str
    faces: np.ndarray
    components: np.ndarray  # (2,) bool
    value: object  # (2,) float or callable(x) -> (2,)

    def eval_at(self, x: np.ndarray) -> np.ndarray:
        if callable(self.value):
            return np.asarray(self.value(x), dtype=float)
        return np.asarray(self.value, dtype=float)


@dataclass
class TractionBC:
    """Prescribed traction (at load factor 1) on a boundary face set."""

    name: str
    faces: np.ndarray
    value: object  # (2,) float or callable(x) -> (2,)

    def eval_at(self, x: np.ndarray) -> np.ndarray:
        if callable(self.value):
            return np.asarray(self.value(x), dtype=float)
        return np.asarray(self.value, dtype=float)


class TripletPattern:
    """Fixed COO->CSR reduction: sort/merge once, reuse for every assembly."""

    def __init__(self, rows: np.ndarray, cols: np.ndarray, n: int):
        order = np.lexsort((cols, rows))
        r = rows[order]
        c = cols[order]
        new_group = np.ones(len(r), dtype=bool)
        if len(r) > 1:
            new_group[1:] = (r[1:] != r[:-1]) | (c[1:] != c[:-1])
        starts = np.flatnonzero(new_group)
        self.order = order
        self.starts = starts
        self.indices = c[starts].astype(np.int32)
        counts = np.zeros(n + 1, dtype=np.int64)
        np.add.at(counts, r[starts] + 1, 1)
        self.indptr = np.cumsum(counts).astype(np.int32)
        self.n = n

    def assemble(self, vals: np.ndarray) -> sparse.csr_array:
        data = np.add.reduceat(vals[self.order], self.starts)
        return sparse.csr_array((data, self.indices, self.indptr), shape=(self.n, self.n))


def _normal_projector(normal: np.ndarray) -> np.ndarray:
    """Voigt stress -> traction matrix for a unit normal."""
    n1, n2 = normal
    return np.array([[n1, 0.0, n2], [0.0, n2, n1]])


class Discretization:
    """Precomputed operators and assembly routines for one model.

    Parameters
    ----------
    partition, material, iface :
        Geometry and constitutive data. ``iface`` is the
        :class:`~fpmfrac.model.InterfaceMaterial`.
    dirichlet, tractions :
        Boundary-condition patches (face sets resolved to ids).
    damage_faces :
        Interior face ids allowed to damage; ``None`` means all of them.
    lam_boundary :
        Penalty multiplier for the weak Dirichlet flux; defaults to
        ``10 * iface.lam``.
    """

    def __init__(
        self,
        partition: Partition,
        material: Material,
        iface,
        dirichlet: list[DirichletBC] = (),
        tractions: list[TractionBC] = (),
        damage_faces: np.ndarray | None = None,
        lam_boundary: float | None = None,
    ):
        self.partition = partition
        self.material = material
        self.iface = iface
        self.D = elasticity_matrix(material)
        self.n_dofs = partition.n_dofs
        self.graph = SupportGraph.build(partition)
        self.tables = ShapeTables.build(partition, self.graph)

        n = partition.n_points
        self.areas = np.array([s.area for s in partition.subdomains])
        self.h_s = np.array([s.h_s for s in partition.subdomains])

        # --- padded per-subdomain layout -------------------------------
        self.Wp = max(len(d) for d in self.tables.dofs)
        self.sub_dofs = np.zeros((n, self.Wp), dtype=int)
        self.sub_valid = np.zeros((n, self.Wp), dtype=bool)
        for i, d in enumerate(self.tables.dofs):
            self.sub_dofs[i, : len(d)] = d
            self.sub_valid[i, : len(d)] = True

        # --- interior face data ----------------------------------------
        faces = partition.interior_faces
        F = len(faces)
        self.n_faces = F
        self.owners = np.array([f.owners for f in faces], dtype=int).reshape(F, 2)
        self.normals = np.array([f.normal for f in faces]).reshape(F, 2)
        self.lengths = np.array([f.length for f in faces])
        self.qp_w = np.repeat((self.lengths / N_QP)[:, None], N_QP, axis=1)  # (F, Q)
        mids = np.array([0.5 * (f.endpoints[0] + f.endpoints[1]) for f in faces]).reshape(F, 2)
        tangents = np.array([(f.endpoints[1] - f.endpoints[0]) for f in faces]).reshape(F, 2)
        self.qp_x = mids[:, None, :] + 0.5 * _GAUSS2[None, :, None] * tangents[:, None, :]
        self.face_mids = mids

        if F:
            h_face = np.minimum(self.h_s[self.owners[:, 0]], self.h_s[self.owners[:, 1]])
            self.alpha = iface.lam * material.E / h_face
        else:
            self.alpha = np.zeros(0)

        self.damageable = np.zeros(F, dtype=bool)
        if damage_faces is None:
            self.damageable[:] = True
        elif len(damage_faces):
            self.damageable[np.asarray(damage_faces, dtype=int)] = True

        # per-face softening constants (alpha varies with face size)
        with np.errstate(divide="ignore"):
            tau_c = iface.t_c / np.sqrt(self.alpha) if F else np.zeros(0)
        H = 1.0 - tau_c**2 / (2.0 * iface.G_c)
        bad = self.damageable & (H <= 0.0)
        if np.any(bad):
            worst = int(np.argmax(tau_c**2 * bad))
            raise BrittlenessError(
                f"face {worst}: elastic onset energy {tau_c[worst] ** 2 / 2:.6g} J/m^2 "
                f"is not below G_c = {iface.G_c:.6g}; raise the penalty parameter lambda"
            )
        self.law = SofteningConstants(
            tau_c=tau_c[:, None],
            H=np.where(H > 0.0, H, 0.5)[:, None],  # placeholder on undamageable faces
            delta_c=(iface.t_c / self.alpha)[:, None] if F else np.zeros((0, 1)),
            delta_f=2.0 * iface.G_c / iface.t_c,
            alpha=self.alpha[:, None] if F else np.zeros((0, 1)),
            t_c=iface.t_c,
            G_c=iface.G_c,
        )
        self.r0 = tau_c

        # union DOF layout per face
        self.Wc = 0
        union_dofs: list[np.ndarray] = []
        self._side_cols: list[tuple[np.ndarray, np.ndarray]] = []
        for f in range(F):
            e1, e2 = self.owners[f]
            d1, d2 = self.tables.dofs[e1], self.tables.dofs[e2]
            union, inv = np.unique(np.concatenate([d1, d2]), return_inverse=True)
            union_dofs.append(union)
            self._side_cols.append((inv[: len(d1)], inv[len(d1) :]))
            self.Wc = max(self.Wc, len(union))
        self.face_dofs = np.zeros((F, self.Wc), dtype=int)
        for f, u in enumerate(union_dofs):
            self.face_dofs[f, : len(u)] = u

        # --- boundary patches -------------------------------------------
        self.dirichlet = list(dirichlet)
        self.tractions = list(tractions)
        self.lam_boundary = 10.0 * iface.lam if lam_boundary is None else lam_boundary
        self._resolve_boundary()

        # --- dense block tensors (values refreshed after support surgery)
        self._refresh_tensors(np.arange(n))

        # --- frozen sparsity pattern ------------------------------------
        # Padded block slots point at DOF 0; keeping them in the pattern
        # (even with zero values) would give row/column 0 catastrophic LU
        # fill-in, so they are masked out of the triplet stream instead.
        rows, cols, keeps = [], [], []
        r = np.repeat(self.sub_dofs, self.Wp, axis=1).ravel()
        c = np.tile(self.sub_dofs, (1, self.Wp)).ravel()
        k = (self.sub_valid[:, :, None] & self.sub_valid[:, None, :]).ravel()
        rows.append(r)
        cols.append(c)
        keeps.append(k)
        if F:
            face_valid = np.zeros((F, self.Wc), dtype=bool)
            for f, u in enumerate(union_dofs):
                face_valid[f, : len(u)] = True
            r = np.repeat(self.face_dofs, self.Wc, axis=1).ravel()
            c = np.tile(self.face_dofs, (1, self.Wc)).ravel()
            k = (face_valid[:, :, None] & face_valid[:, None, :]).ravel()
            rows.append(r)
            cols.append(c)
            keeps.append(k)
        if len(self.bnd_faces):
            bd = self.sub_dofs[self.bnd_owner]
            bv = self.sub_valid[self.bnd_owner]
            r = np.repeat(bd, self.Wp, axis=1).ravel()
            c = np.tile(bd, (1, self.Wp)).ravel()
            k = (bv[:, :, None] & bv[:, None, :]).ravel()
            rows.append(r)
            cols.append(c)
            keeps.append(k)
        self._keep = np.concatenate(keeps)
        self.pattern = TripletPattern(
            np.concatenate(rows)[self._keep], np.concatenate(cols)[self._keep], self.n_dofs
        )

    # ------------------------------------------------------------------
    # boundary resolution
    # ------------------------------------------------------------------

    @staticmethod
    def _face_qps(bfaces, ids):
        n = len(ids)
        lengths = np.array([bfaces[f].length for f in ids])
        w = np.repeat((lengths / N_QP)[:, None], N_QP, axis=1)
        mids = np.array([0.5 * (bfaces[f].endpoints[0] + bfaces[f].endpoints[1]) for f in ids]).reshape(n, 2)
        tang = np.array([bfaces[f].endpoints[1] - bfaces[f].endpoints[0] for f in ids]).reshape(n, 2)
        qp = mids[:, None, :] + 0.5 * _GAUSS2[None, :, None] * tang[:, None, :]
        return w, qp

    def _resolve_boundary(self):
        bfaces = self.partition.boundary_faces
        names = [bc.name for bc in self.dirichlet]
        if len(names) != len(set(names)):
            raise ValueError(f"Dirichlet patch names must be unique, got {names}")

        sel: dict[int, np.ndarray] = {}
        claimed: dict[int, list] = {}
        patch_faces: list[np.ndarray] = []
        for bc in self.dirichlet:
            ids = np.asarray(bc.faces, dtype=int)
            patch_faces.append(ids)
            for fid in ids:
                fid = int(fid)
                if fid not in sel:
                    sel[fid] = np.zeros(2, dtype=bool)
                    claimed[fid] = [None, None]
                for comp in range(2):
                    if not bc.components[comp]:
                        continue
                    if sel[fid][comp]:
                        raise ValueError(
                            f"conflicting Dirichlet data: boundary face {fid} component "
                            f"{comp} constrained by both {claimed[fid][comp]!r} and {bc.name!r}"
                        )
                    sel[fid][comp] = True
                    claimed[fid][comp] = bc.name

        self.bnd_faces = np.array(sorted(sel), dtype=int)
        nb = len(self.bnd_faces)
        self._bnd_row_of = {int(f): i for i, f in enumerate(self.bnd_faces)}
        self._patch_rows = [
            np.array([self._bnd_row_of[int(f)] for f in ids], dtype=int) for ids in patch_faces
        ]
        self.bnd_sel = np.array([sel[int(f)] for f in self.bnd_faces], dtype=float).reshape(nb, 2)
        self.bnd_owner = np.array([bfaces[f].owner for f in self.bnd_faces], dtype=int)
        self.bnd_normal = np.array([bfaces[f].normal for f in self.bnd_faces]).reshape(nb, 2)
        self.bnd_w, self.bnd_qp = self._face_qps(bfaces, self.bnd_faces)
        self.alpha_b = (
            self.lam_boundary * self.material.E / self.h_s[self.bnd_owner]
            if nb
            else np.zeros(0)
        )
        # prescribed displacement at factor 1, per quadrature point (component-masked)
        self.bnd_ubar = np.zeros((nb, N_QP, 2))
        for bc, ids in zip(self.dirichlet, patch_faces):
            comps = np.asarray(bc.components, dtype=bool)
            for fid in ids:
                row = self._bnd_row_of[int(fid)]
                for q in range(N_QP):
                    v = bc.eval_at(self.bnd_qp[row, q])
                    self.bnd_ubar[row, q, comps] = v[comps]

        # traction faces
        tr_faces: list[int] = []
        for bc in self.tractions:
            tr_faces.extend(int(f) for f in np.asarray(bc.faces, dtype=int))
        self.tr_faces = np.array(tr_faces, dtype=int)
        nt = len(self.tr_faces)
        self.tr_owner = np.array([bfaces[f].owner for f in self.tr_faces], dtype=int)
        self.tr_w, self.tr_qp = self._face_qps(bfaces, self.tr_faces)
        self.tr_val = np.zeros((nt, N_QP, 2))
        row = 0
        for bc in self.tractions:
            for _ in np.asarray(bc.faces, dtype=int):
                for q in range(N_QP):
                    self.tr_val[row, q] = bc.eval_at(self.tr_qp[row, q])
                row += 1

    # ------------------------------------------------------------------
    # tensor refresh (initial build and after support surgery)
    # ------------------------------------------------------------------

    def _padded_C(self, i: int) -> np.ndarray:
        C = np.zeros((4, self.Wp))
        Ci = self.tables.C[i]
        C[:, : Ci.shape[1]] = Ci
        return C

    def _padded_B(self, i: int) -> np.ndarray:
        B = np.zeros((3, self.Wp))
        Bi = self.tables.B[i]
        B[:, : Bi.shape[1]] = Bi
        return B

    def _shape_at(self, i: int, x: np.ndarray) -> np.ndarray:
        """Padded shape matrix N(x) (2, Wp) of subdomain i."""
        C = self._C_pad[i]
        N = np.zeros((2, self.Wp))
        N[0, 0] = 1.0
        N[1, 1] = 1.0
        h = x - self.partition.points[i]
        N[0] += h @ C[0:2]
        N[1] += h @ C[2:4]
        return N

    def _refresh_tensors(self, stale_subs: np.ndarray):
        """(Re)build block tensors for the given subdomains and their faces."""
        n = self.partition.n_points
        first = not hasattr(self, "_C_pad")
        if first:
            self._C_pad = np.zeros((n, 4, self.Wp))
            self._B_pad = np.zeros((n, 3, self.Wp))
            self._ke_vals = np.zeros((n, self.Wp, self.Wp))
            self._J = np.zeros((self.n_faces, N_QP, 2, self.Wc))
            self._avgT = np.zeros((self.n_faces, 2, self.Wc))
            nb, nt = len(self.bnd_faces), len(self.tr_faces)
            self._Nb = np.zeros((nb, N_QP, 2, self.Wp))
            self._Tb = np.zeros((nb, 2, self.Wp))
            self._kb_vals = np.zeros((nb, self.Wp, self.Wp))
            self._Nt = np.zeros((nt, N_QP, 2, self.Wp))

        stale_subs = np.asarray(stale_subs, dtype=int)
        stale_set = set(stale_subs.tolist())
        for i in stale_subs:
            self._C_pad[i] = self._padded_C(i)
            self._B_pad[i] = self._padded_B(i)
        BD = self._B_pad[stale_subs]  # (s, 3, Wp)
        self._ke_vals[stale_subs] = (
            np.einsum("siw,ij,sjv->swv", BD, self.D, BD) * self.areas[stale_subs, None, None]
        )

        if self.n_faces:
            if first:
                stale_faces = np.arange(self.n_faces)
            else:
                touched = np.isin(self.owners, stale_subs).any(axis=1)
                stale_faces = np.flatnonzero(touched)
            for f in stale_faces:
                e1, e2 = self.owners[f]
                c1, c2 = self._side_cols[f]
                ne = _normal_projector(self.normals[f])
                T1 = ne @ self.D @ self._B_pad[e1][:, : len(c1)]
                T2 = ne @ self.D @ self._B_pad[e2][:, : len(c2)]
                avgT = np.zeros((2, self.Wc))
                np.add.at(avgT, (slice(None), c1), 0.5 * T1)
                np.add.at(avgT, (slice(None), c2), 0.5 * T2)
                self._avgT[f] = avgT
                for q in range(N_QP):
                    N1 = self._shape_at(e1, self.qp_x[f, q])[:, : len(c1)]
                    N2 = self._shape_at(e2, self.qp_x[f, q])[:, : len(c2)]
                    J = np.zeros((2, self.Wc))
                    np.add.at(J, (slice(None), c1), N1)
                    np.add.at(J, (slice(None), c2), -N2)
                    self._J[f, q] = J
            # elastic per-qp stiffness kernels: w_q (alpha J^T J - J^T avgT)
            if first:
                self._face_el = np.zeros((self.n_faces, N_QP, self.Wc, self.Wc))
            Jf = self._J[stale_faces]
            Af = self._avgT[stale_faces]
            jj = np.einsum("fqiw,fqiv->fqwv", Jf, Jf)
            ja = np.einsum("fqiw,fiv->fqwv", Jf, Af)
            self._face_el[stale_faces] = self.qp_w[stale_faces, :, None, None] * (
                self.alpha[stale_faces, None, None, None] * jj - ja
            )

        # boundary tensors for faces owned by stale subdomains
        for row, fid in enumerate(self.bnd_faces):
            owner = self.bnd_owner[row]
            if not first and owner not in stale_set:
                continue
            ne = _normal_projector(self.bnd_normal[row])
            self._Tb[row] = ne @ self.D @ self._B_pad[owner]
            for q in range(N_QP):
                self._Nb[row, q] = self._shape_at(owner, self.bnd_qp[row, q])
            S = np.diag(self.bnd_sel[row])
            kb = np.zeros((self.Wp, self.Wp))
            for q in range(N_QP):
                Nq = self._Nb[row, q]
                kb += self.bnd_w[row, q] * (
                    self.alpha_b[row] * Nq.T @ S @ Nq - Nq.T @ S @ self._Tb[row]
                )
            self._kb_vals[row] = kb
        for row, fid in enumerate(self.tr_faces):
            owner = self.tr_owner[row]
            if not first and owner not in stale_set:
                continue
            for q in range(N_QP):
                self._Nt[row, q] = self._shape_at(owner, self.tr_qp[row, q])

    # ------------------------------------------------------------------
    # state-dependent evaluation
    # ------------------------------------------------------------------

    def pristine_state(self) -> InterfaceState:
        return InterfaceState.pristine(self.n_faces, N_QP, self.r0)

    def strains(self, u: np.ndarray) -> np.ndarray:
        return np.einsum("niw,nw->ni", self._B_pad, u[self.sub_dofs])

    def stresses(self, u: np.ndarray) -> np.ndarray:
        return self.strains(u) @ self.D.T

    def face_traces(self, u: np.ndarray):
        """Jumps [u] and average tractions {sigma.n} at all face qps."""
        uf = u[self.face_dofs]  # (F, Wc)
        jumps = np.einsum("fqiw,fw->fqi", self._J, uf)
        avg_t = np.einsum("fiw,fw->fi", self._avgT, uf)[:, None, :].repeat(N_QP, axis=1)
        return jumps, avg_t

    def flux(self, u: np.ndarray):
        """Undamaged flux t*, conjugate delta and energy norm tau at all qps."""
        jumps, avg_t = self.face_traces(u)
        a = self.alpha[:, None, None]
        t_star = avg_t - a * jumps
        delta = t_star / a
        tau = np.linalg.norm(t_star, axis=-1) / np.sqrt(self.alpha)[:, None]
        return jumps, t_star, delta, tau

    def update_interface(self, u: np.ndarray, state: InterfaceState) -> InterfaceState:
        """Damage update (in place) from the current displacement field."""
        if not self.n_faces:
            return state
        jumps, t_star, delta, tau = self.flux(u)
        d_new, r_new, loading = update_damage(tau, state.d, state.r, self.law)
        dmg = self.damageable[:, None]
        state.d = np.where(dmg, d_new, state.d)
        state.r = np.where(dmg, r_new, state.r)
        state.loading = loading & dmg
        state.cracked = state.cracked | (state.d >= 1.0 - CRACK_EPS)
        state.tau = tau
        state.delta = delta
        state.jump = jumps
        scale = np.where(state.cracked, 0.0, 1.0 - state.d)
        state.t_damaged = scale[..., None] * t_star
        return state

    # ------------------------------------------------------------------
    # assembly
    # ------------------------------------------------------------------

    def _face_vals(self, state: InterfaceState, tangent: bool) -> np.ndarray:
        """Per-face stiffness blocks (F, Wc, Wc), secant or consistent tangent."""
        if not self.n_faces:
            return np.zeros((0, self.Wc, self.Wc))
        scale = np.where(state.cracked, 0.0, 1.0 - state.d)  # (F, Q)
        vals = np.einsum("fq,fqwv->fwv", scale, self._face_el)
        if not tangent:
            return vals
        act = np.flatnonzero((state.loading & ~state.cracked & (state.tau > 0.0)).any(axis=1))
        for f in act:
            corr = np.zeros((self.Wc, self.Wc))
            for q in range(N_QP):
                if not state.loading[f, q] or state.cracked[f, q] or state.tau[f, q] <= 0.0:
                    continue
                dlt = state.delta[f, q]
                h = (1.0 - self.law.H[f, 0] * state.d[f, q]) ** 2 / (
                    self.law.tau_c[f, 0] * self.law.H[f, 0]
                )
                fac = self.alpha[f] ** 2 * h / state.tau[f, q]
                vJ = dlt @ self._J[f, q]  # (Wc,)
                vA = (dlt @ self._avgT[f]) / self.alpha[f]
                corr += self.qp_w[f, q] * fac * np.outer(vJ, vJ - vA)
            vals[f] -= corr
        return vals

    def _assemble(self, ke, face_vals, kb) -> sparse.csr_array:
        parts = [ke.ravel()]
        if self.n_faces:
            parts.append(face_vals.ravel())
        if len(self.bnd_faces):
            parts.append(kb.ravel())
        return self.pattern.assemble(np.concatenate(parts)[self._keep])

    def assemble_point_stiffness(self) -> sparse.csr_array:
        """K_e alone (zero face/boundary blocks), on the frozen pattern."""
        return self._assemble(
            self._ke_vals,
            np.zeros((self.n_faces, self.Wc, self.Wc)),
            np.zeros_like(self._kb_vals),
        )

    def assemble_face_stiffness(self, state: InterfaceState) -> sparse.csr_array:
        """K_h alone: (1-d)-scaled secant face blocks."""
        return self._assemble(
            np.zeros_like(self._ke_vals), self._face_vals(state, tangent=False), np.zeros_like(self._kb_vals)
        )

    def boundary_stiffness(self) -> sparse.csr_array:
        return self._assemble(
            np.zeros_like(self._ke_vals), np.zeros((self.n_faces, self.Wc, self.Wc)), self._kb_vals
        )

    def assemble_stiffness(self, state: InterfaceState) -> sparse.csr_array:
        """Secant operator K = K_e + K_h + K_boundary."""
        return self._assemble(self._ke_vals, self._face_vals(state, tangent=False), self._kb_vals)

    def assemble_tangent(self, state: InterfaceState) -> sparse.csr_array:
        """Consistent tangent K_hat; equals the secant K when nothing loads."""
        return self._assemble(self._ke_vals, self._face_vals(state, tangent=True), self._kb_vals)

    def external_load(self, factor: float) -> np.ndarray:
        """F_ext at the given load factor (tractions, body force, ubar flux)."""
        F = np.zeros(self.n_dofs)
        f_body = self.material.body_force
        if np.any(f_body):
            contrib = self.areas[:, None] * f_body[None, :]
            np.add.at(F, 2 * np.arange(self.partition.n_points), contrib[:, 0])
            np.add.at(F, 2 * np.arange(self.partition.n_points) + 1, contrib[:, 1])
        if len(self.tr_faces):
            tbar = factor * self.tr_val
            vec = np.einsum("bqiw,bqi->bw", self._Nt, self.tr_w[..., None] * tbar)
            np.add.at(F, self.sub_dofs[self.tr_owner], vec)
        if len(self.bnd_faces):
            ub = factor * self.bnd_sel[:, None, :] * self.bnd_ubar  # (Nb, Q, 2)
            ab = self.alpha_b[:, None, None]
            vec = np.einsum("bqiw,bqi->bw", self._Nb, self.bnd_w[..., None] * ab * ub)
            np.add.at(F, self.sub_dofs[self.bnd_owner], vec)
        return F

    def internal_load(self, u: np.ndarray, state: InterfaceState) -> np.ndarray:
        """F_int: bulk stress divergence minus face and boundary flux terms."""
        F = np.zeros(self.n_dofs)
        stress = self.stresses(u)
        vec = np.einsum("niw,ni->nw", self._B_pad, self.areas[:, None] * stress)
        np.add.at(F, self.sub_dofs, vec)
        if self.n_faces:
            vec = np.einsum("fqiw,fqi->fw", self._J, self.qp_w[..., None] * state.t_damaged)
            np.subtract.at(F, self.face_dofs, vec)
        if len(self.bnd_faces):
            tb_u = self._boundary_flux_upart(u)  # (Nb, Q, 2), already S-selected
            vec = np.einsum("bqiw,bqi->bw", self._Nb, self.bnd_w[..., None] * tb_u)
            np.subtract.at(F, self.sub_dofs[self.bnd_owner], vec)
        return F

    def _boundary_flux_upart(self, u: np.ndarray) -> np.ndarray:
        """S (sigma.n - alpha_b u) at Dirichlet qps (the u-dependent flux part)."""
        ub = u[self.sub_dofs[self.bnd_owner]]  # (Nb, Wp)
        tr = np.einsum("biw,bw->bi", self._Tb, ub)[:, None, :].repeat(N_QP, axis=1)
        uq = np.einsum("bqiw,bw->bqi", self._Nb, ub)
        return self.bnd_sel[:, None, :] * (tr - self.alpha_b[:, None, None] * uq)

    def boundary_flux(self, u: np.ndarray, factor: float) -> np.ndarray:
        """Full weak Dirichlet flux S (sigma.n - alpha_b (u - ubar)) at qps."""
        tb = self._boundary_flux_upart(u)
        ub = factor * self.bnd_sel[:, None, :] * self.bnd_ubar
        return tb + self.alpha_b[:, None, None] * ub

    def external_work_increment(
        self, u_prev: np.ndarray, f_prev: float, u_new: np.ndarray, f_new: float
    ) -> float:
        """Trapezoidal external work between two converged states.

        Sums the work of the weak Dirichlet flux through the prescribed
        displacement increment, of prescribed tractions through the boundary
        displacement increment, and of the body force.
        """
        w = 0.0
        if len(self.bnd_faces):
            tb = 0.5 * (self.boundary_flux(u_prev, f_prev) + self.boundary_flux(u_new, f_new))
            du_bar = (f_new - f_prev) * self.bnd_sel[:, None, :] * self.bnd_ubar
            w += float(np.sum(self.bnd_w[..., None] * tb * du_bar))
        if len(self.tr_faces):
            t_avg = 0.5 * (f_prev + f_new) * self.tr_val
            dq = np.einsum(
                "bqiw,bw->bqi", self._Nt, (u_new - u_prev)[self.sub_dofs[self.tr_owner]]
            )
            w += float(np.sum(self.tr_w[..., None] * t_avg * dq))
        f_body = self.material.body_force
        if np.any(f_body):
            du_pts = (u_new - u_prev).reshape(-1, 2)
            w += float(np.sum(self.areas[:, None] * f_body[None, :] * du_pts))
        return w

    def reactions(self, u: np.ndarray, factor: float) -> dict[str, np.ndarray]:
        """Integrated boundary flux per Dirichlet patch (force per thickness)."""
        out: dict[str, np.ndarray] = {}
        if not len(self.bnd_faces):
            return out
        tb = self.boundary_flux(u, factor)
        per_face = np.einsum("bq,bqi->bi", self.bnd_w, tb)
        for bc, rows in zip(self.dirichlet, self._patch_rows):
            out[bc.name] = per_face[rows].sum(axis=0)
        return out

    # ------------------------------------------------------------------
    # support surgery
    # ------------------------------------------------------------------

    def sever_faces(self, face_ids) -> list[int]:
        """Sever faces in the support graph and refresh affected tensors."""
        stale: list[int] = []
        for fid in np.atleast_1d(np.asarray(face_ids, dtype=int)):
            stale.extend(self.graph.sever(int(fid), tuple(self.owners[fid])))
        if stale:
            stale = sorted(set(stale))
            self.tables.rebuild(stale, self.graph)
            self._refresh_tensors(np.array(stale, dtype=int))
        return stale

    def restore_supports(self, severed_snapshot: np.ndarray) -> None:
        """Roll the severed flags back to a snapshot (undo failed-step severs)."""
        changed = np.flatnonzero(self.graph.severed != severed_snapshot)
        if not len(changed):
            return
        self.graph.severed = severed_snapshot.copy()
        stale = sorted(set(self.owners[changed].ravel().tolist()))
        self.tables.rebuild(stale, self.graph)
        self._refresh_tensors(np.array(stale, dtype=int))

    # ------------------------------------------------------------------
    # energy bookkeeping
    # ------------------------------------------------------------------

    def stored_energy(self, u: np.ndarray, state: InterfaceState, factor: float) -> float:
        """Recoverable energy: bulk strain energy + secant face/boundary parts."""
        strain = self.strains(u)
        stress = strain @ self.D.T
        e_bulk = 0.5 * float(np.sum(self.areas * np.sum(stress * strain, axis=1)))
        e_face = 0.0
        if self.n_faces:
            e_face = -0.5 * float(
                np.sum(self.qp_w[..., None] * state.t_damaged * state.jump)
            )
        e_bnd = 0.0
        if len(self.bnd_faces):
            tb = self.boundary_flux(u, factor)
            ub = factor * self.bnd_sel[:, None, :] * self.bnd_ubar
            uq = np.einsum("bqiw,bw->bqi", self._Nb, u[self.sub_dofs[self.bnd_owner]])
            gap = ub - self.bnd_sel[:, None, :] * uq
            e_bnd = 0.5 * float(np.sum(self.bnd_w[..., None] * tb * gap))
        return e_bulk + e_face + e_bnd
