import numpy as np
from fpmfrac import (
    parse_mesh, Material, InterfaceMaterial, Discretization, DirichletBC, solver,
)
from scratch_smoke import rect_mesh_text

part = parse_mesh(rect_mesh_text(2, 4, 1.0, 2.0))
mat = Material(E=10.0, nu=0.0)
ifm = InterfaceMaterial(t_c=1.0, G_c=0.2, lam=1.0)
bot = part.face_set("bottom").boundary
top = part.face_set("top").boundary
mid = part.face_set("midplane").interior
dir_bcs = [
    DirichletBC("bottom", bot, np.array([True, True]), np.array([0.0, 0.0])),
    DirichletBC("top", top, np.array([True, True]), np.array([0.0, 1.0])),
]
disc = Discretization(part, mat, ifm, dirichlet=dir_bcs, damage_faces=mid)
cfg = solver.SolverConfig(schedule=np.array([0.2, 0.25, 0.3]), tol=1e-10)

st = solver.initial_state(disc)
for f in cfg.schedule:
    st = solver.nr_iterate(disc, st, float(f), cfg)
    jumps, t_star, delta, tau = disc.flux(st.u)
    F_int = disc.internal_load(st.u, st.iface)
    F_ext = disc.external_load(st.factor)
    print(f"factor {st.factor}: iters {st.iterations} res {np.linalg.norm(F_ext-F_int):.2e}")
    print("  d(mid):", st.iface.d[mid].ravel())
    print("  t*_y(mid):", t_star[mid][:, :, 1].ravel())
    print("  t*d_y(mid):", st.iface.t_damaged[mid][:, :, 1].ravel())
    print("  sigma22 per cell:", st.stress[:, 1])
    print("  reactions top:", st.reactions["top"], "bottom:", st.reactions["bottom"])
    print("  u_y points:", st.u[1::2])
    # faces not damageable: check their fluxes
    others = [f.id for f in part.interior_faces if f.id not in mid and abs(f.normal[1]) > 0.5]
    print("  other horiz faces t*_y:", t_star[others][:, :, 1].ravel())
