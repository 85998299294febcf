"""Throwaway smoke test of the core pipeline (deleted before delivery)."""
import numpy as np
from fpmfrac import (
    parse_mesh, Material, InterfaceMaterial, Discretization, DirichletBC,
    solver,
)


def rect_mesh_text(nx, ny, w, h):
    lines = ["fpmmesh 1", f"{(nx+1)*(ny+1)} {nx*ny}"]
    def nid(i, j):
        return j * (nx + 1) + i
    for j in range(ny + 1):
        for i in range(nx + 1):
            lines.append(f"{nid(i,j)} {i*w/nx:.17g} {j*h/ny:.17g}")
    cid = 0
    for j in range(ny):
        for i in range(nx):
            lines.append(f"{cid} 4 {nid(i,j)} {nid(i+1,j)} {nid(i+1,j+1)} {nid(i,j+1)}")
            cid += 1
    bot = [(i, 0) for i in range(nx)]
    top = [(nx*(ny-1)+i, 2) for i in range(nx)]
    lines.append(f"edgeset bottom {nx}")
    lines += [f"{c} {e}" for c, e in bot]
    lines.append(f"edgeset top {nx}")
    lines += [f"{c} {e}" for c, e in top]
    mid = [(nx*(ny//2-1)+i, 2) for i in range(nx)]
    lines.append(f"edgeset midplane {nx}")
    lines += [f"{c} {e}" for c, e in mid]
    return "\n".join(lines) + "\n"


part = parse_mesh(rect_mesh_text(2, 4, 1.0, 2.0))
print("subdomains:", len(part.subdomains), "interior faces:", len(part.interior_faces),
      "boundary faces:", len(part.boundary_faces), "dofs:", part.n_dofs)
assert len(part.subdomains) == 8 and len(part.interior_faces) == 10 and part.n_dofs == 16

mat = Material(E=10.0, nu=0.0)
ifm = InterfaceMaterial(t_c=1.0, G_c=0.2, lam=1.0)

# ---- patch test: affine exact solution via Dirichlet on the whole boundary
A = np.array([[0.013, 0.004], [-0.007, 0.021]])
b = np.array([0.003, -0.001])
exact = lambda x: A @ x + b

all_b = np.arange(len(part.boundary_faces))
disc_p = Discretization(
    part, mat, ifm,
    dirichlet=[DirichletBC("all", all_b, np.array([True, True]), exact)],
)
cfg = solver.SolverConfig(schedule=np.array([1.0]), tol=1e-10)
st = solver.run_schedule(disc_p, cfg)[-1]
u_exact = np.array([exact(p) for p in part.points]).ravel()
err = np.linalg.norm(st.u - u_exact) / np.linalg.norm(u_exact)
print("patch error:", err, "iterations:", st.iterations)
assert err < 1e-10, err

# ---- mode I rig
bot = part.face_set("bottom").boundary
top = part.face_set("top").boundary
mid = part.face_set("midplane").interior
dir_bcs = [
    DirichletBC("bottom", bot, np.array([True, True]), np.array([0.0, 0.0])),
    DirichletBC("top", top, np.array([True, True]), np.array([0.0, 1.0])),
]
disc = Discretization(part, mat, ifm, dirichlet=dir_bcs, damage_faces=mid)
print("alpha:", disc.alpha[0], "tau_c:", disc.law.tau_c[0,0], "H:", disc.law.H[0,0],
      "delta_c:", disc.law.delta_c[0,0], "delta_f:", disc.law.delta_f)

cfg = solver.SolverConfig(schedule=np.linspace(0, 0.5, 401)[1:], tol=1e-8)
hist = {"t": [], "d": [], "P": [], "u": [], "delta": []}
def rec(s):
    f = mid[0]
    hist["t"].append(s.iface.t_damaged[f, 0, 1])
    hist["delta"].append(s.iface.delta[f, 0, 1])
    hist["d"].append(s.iface.d[f, 0])
    hist["P"].append(s.reactions["top"][1])
    hist["u"].append(s.factor)

states = solver.run_schedule(disc, cfg, on_step=rec)
t = np.array(hist["t"]); d = np.array(hist["d"]); P = np.array(hist["P"])
print("peak normal flux t*d:", t.max(), " (expect 1.0)")
print("final d:", d[-1], "cracked:", states[-1].iface.face_cracked[mid])
print("peak reaction:", P.max(), " (expect ~1.0 = t_c * width)")
Gd = states[-1].iface.G_diss[mid]
print("G_diss per area at qps:", Gd, " (expect 0.2)")
total_len = sum(part.interior_faces[f].length for f in mid)
total_E = states[-1].dissipated
print("total dissipated energy:", total_E, "per unit length:", total_E/total_len)
print("iterations per step: max", max(s.iterations for s in states))
# energy audit
w = states[-1].work_ext
stored = disc.stored_energy(states[-1].u, states[-1].iface, states[-1].factor)
print("work:", w, "stored:", stored, "dissipated:", total_E, "closure:", w - stored - total_E)
