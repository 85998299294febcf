"""Nonlinear driver: Newton-Raphson stepping, peak loads, crack growth.

A load step solves ``K_hat du = F_ext - F_int`` repeatedly, updating trial
stress/strain fields and the per-face damage state after every solve, until
the accumulated-increment ratio ``|du_n| / |Du|`` drops below tolerance (a
purely elastic step short-circuits on its machine-zero residual and converges
in one iteration). Faces whose quadrature points all reach d = 1 during a
step are severed from the support graph inside the step and the shape tables
rebuilt before the next solve.

The quasi-static failure analysis mimics lab practice: ramp the load until no
equilibrium with all faces at d < 1 exists (halving the increment on each
non-convergence down to a floor identifies the critical state), record the
peak, cut the most damaged face, unload, repeat. Crack growth is therefore a
sequence of peak-load problems on progressively weaker structures, each one
restarted from rest.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse.linalg import spsolve

from .assembly import Discretization
from .interface import InterfaceState, dissipation_increment

__all__ = [
    "SolverConfig",
    "StepState",
    "NonConvergenceError",
    "SolverError",
    "PeakResult",
    "CrackEvent",
    "CrackGrowthReport",
    "initial_state",
    "nr_iterate",
    "run_schedule",
    "find_peak_load",
    "insert_crack",
    "crack_growth_simulation",
    "save_checkpoint",
    "load_checkpoint",
]

RESIDUAL_SHORTCUT = 1e-11  # relative residual treated as already-converged


class SolverError(Exception):
    """Unrecoverable solver failure (singular system, bad configuration)."""


class NonConvergenceError(Exception):
    """Newton loop exhausted its iteration budget (or the solve blew up).

    Carries the id of the interior face with the largest sub-unity damage at
    the failed state; the peak-load search uses it as the crack candidate.
    """

    def __init__(self, message: str, max_damage_face: int | None = None, iterations: int = 0):
        super().__init__(message)
        self.max_damage_face = max_damage_face
        self.iterations = iterations


@dataclass
class SolverConfig:
    """Newton/stepping controls.

    ``schedule`` lists monotonically increasing load factors (the prescribed
    displacement and traction magnitudes are multiplied by the factor).
    ``min_increment`` is the bisection floor for the peak-load search; the
    default is 1e-4 times the first schedule increment.
    """

    schedule: np.ndarray = field(default_factory=lambda: np.linspace(0.0, 1.0, 21)[1:])
    tol: float = 1e-6
    max_iterations: int = 50
    min_increment: float | None = None
    crack_events_max: int = 200
    residual_fraction: float = 0.05

    def __post_init__(self):
        self.schedule = np.atleast_1d(np.asarray(self.schedule, dtype=float))
        if not self.tol > 0.0:
            raise ValueError("tolerance must be positive")
        if len(self.schedule) == 0 or np.any(np.diff(self.schedule) <= 0.0):
            raise ValueError("load schedule must be strictly increasing")
        if self.min_increment is not None and not self.min_increment > 0.0:
            raise ValueError("min_increment must be positive")

    def floor_increment(self) -> float:
        if self.min_increment is not None:
            return self.min_increment
        return 1e-4 * self.schedule[0]


@dataclass
class StepState:
    """Converged snapshot: displacement, bulk fields, interface state."""

    u: np.ndarray
    strain: np.ndarray
    stress: np.ndarray
    iface: InterfaceState
    factor: float = 0.0
    reactions: dict = field(default_factory=dict)
    iterations: int = 0
    ratio_history: list = field(default_factory=list)
    work_ext: float = 0.0  # external work along the current loading path
    dissipated: float = 0.0  # total face dissipation along the current path
    index: int = 0

    def copy(self) -> "StepState":
        return StepState(
            u=self.u.copy(),
            strain=self.strain.copy(),
            stress=self.stress.copy(),
            iface=self.iface.copy(),
            factor=self.factor,
            reactions={k: v.copy() for k, v in self.reactions.items()},
            iterations=self.iterations,
            ratio_history=list(self.ratio_history),
            work_ext=self.work_ext,
            dissipated=self.dissipated,
            index=self.index,
        )


def initial_state(disc: Discretization) -> StepState:
    """Unloaded pristine state (factor 0, zero fields, undamaged faces)."""
    n = disc.partition.n_points
    return StepState(
        u=np.zeros(disc.n_dofs),
        strain=np.zeros((n, 3)),
        stress=np.zeros((n, 3)),
        iface=disc.pristine_state(),
    )


def _external_work_increment(disc: Discretization, prev: StepState, new: StepState) -> float:
    """Trapezoidal work of prescribed displacements, tractions and body force."""
    return disc.external_work_increment(prev.u, prev.factor, new.u, new.factor)


def _dissipation_energy_increment(disc: Discretization, d_old: np.ndarray, d_new: np.ndarray) -> float:
    """Envelope-exact dissipation (in energy units) between damage snapshots."""
    if not disc.n_faces:
        return 0.0
    inc = dissipation_increment(d_old, d_new, disc.law)
    return float(np.sum(disc.qp_w * inc))


def _max_subunity_damage_face(iface: InterfaceState) -> int | None:
    """Face with the largest damage below one; ties go to the lowest face id."""
    if iface.d.size == 0:
        return None
    d_face = np.where(iface.d >= 1.0, -np.inf, iface.d).max(axis=1)
    d_face = np.where(iface.face_cracked, -np.inf, d_face)
    if not np.any(np.isfinite(d_face)):
        return None
    best = float(np.max(d_face))
    if best <= 0.0:
        return None
    return int(np.flatnonzero(d_face == best)[0])


def nr_iterate(
    disc: Discretization, state: StepState, factor: float, cfg: SolverConfig
) -> StepState:
    """One load step to the target factor; returns the converged snapshot.

    Raises :class:`NonConvergenceError` after ``max_iterations``; the support
    graph is restored to the entry state so the caller can retry with a
    smaller increment.
    """
    sever_snapshot = disc.graph.severed.copy()
    u = state.u.copy()
    iface = state.iface.copy()
    du_acc = np.zeros_like(u)
    F_ext = disc.external_load(factor)
    ratios: list[float] = []

    try:
        for n in range(1, cfg.max_iterations + 1):
            K = disc.assemble_tangent(iface)
            F_int = disc.internal_load(u, iface)
            rhs = F_ext - F_int
            with np.errstate(all="ignore"):
                du = spsolve(K.tocsc(), rhs)
            if not np.all(np.isfinite(du)):
                raise NonConvergenceError(
                    f"linear solve produced non-finite increments at factor {factor:g}",
                    max_damage_face=_max_subunity_damage_face(iface),
                    iterations=n,
                )
            du_acc += du
            u = state.u + du_acc

            disc.update_interface(u, iface)
            # Damaged neighbors must stop seeing each other's DOFs: from onset
            # on, the pair interacts only through the damaged flux. Without
            # this the shared supports keep carrying load across the
            # softening interface and the cohesive response is polluted.
            newly_damaged = (
                (iface.d.max(axis=1) > 0.0) & ~disc.graph.severed & disc.damageable
            )
            severed_now = bool(np.any(newly_damaged))
            if severed_now:
                disc.sever_faces(np.flatnonzero(newly_damaged))
                disc.update_interface(u, iface)  # traces changed with the supports

            denom = float(np.linalg.norm(du_acc))
            ratio = float(np.linalg.norm(du)) / denom if denom > 0.0 else 0.0
            ratios.append(ratio)

            F_int_new = disc.internal_load(u, iface)
            res = float(np.linalg.norm(F_ext - F_int_new))
            ref = max(float(np.linalg.norm(F_ext)), float(np.linalg.norm(F_int_new)), 1e-300)
            if severed_now:
                continue  # force another pass on the modified supports
            if (n >= 2 and ratio <= cfg.tol) or res <= RESIDUAL_SHORTCUT * ref or denom == 0.0:
                strain = disc.strains(u)
                new = StepState(
                    u=u,
                    strain=strain,
                    stress=strain @ disc.D.T,
                    iface=iface,
                    factor=factor,
                    reactions=disc.reactions(u, factor),
                    iterations=n,
                    ratio_history=ratios,
                    index=state.index + 1,
                )
                d_inc = _dissipation_energy_increment(disc, state.iface.d, iface.d)
                iface.G_diss = state.iface.G_diss + dissipation_increment(
                    state.iface.d, iface.d, disc.law
                )
                new.work_ext = state.work_ext + _external_work_increment(disc, state, new)
                new.dissipated = state.dissipated + d_inc
                return new
    except NonConvergenceError:
        disc.restore_supports(sever_snapshot)
        raise

    disc.restore_supports(sever_snapshot)
    raise NonConvergenceError(
        f"no convergence in {cfg.max_iterations} iterations at factor {factor:g} "
        f"(last ratio {ratios[-1]:.3e})",
        max_damage_face=_max_subunity_damage_face(iface),
        iterations=cfg.max_iterations,
    )


def run_schedule(
    disc: Discretization,
    cfg: SolverConfig,
    state: StepState | None = None,
    on_step=None,
) -> list[StepState]:
    """Run every schedule factor in order; returns all converged snapshots."""
    state = initial_state(disc) if state is None else state
    out = []
    for f in cfg.schedule:
        state = nr_iterate(disc, state, float(f), cfg)
        if on_step is not None:
            on_step(state)
        out.append(state)
    return out


@dataclass
class PeakResult:
    """Outcome of one peak-load search."""

    peak_load: float
    peak_factor: float
    peak_state: StepState
    last_state: StepState
    critical_face: int | None
    status: str  # "critical" or "no peak within schedule"
    history: list  # (factor, load) tuples of every converged step


def find_peak_load(
    disc: Discretization,
    cfg: SolverConfig,
    measure,
    state: StepState | None = None,
    on_step=None,
) -> PeakResult:
    """Ramp the load to the critical state and report the peak.

    ``measure`` maps a converged :class:`StepState` to the scalar load (e.g.
    a reaction component). Increment halving on non-convergence continues
    until the increment is below the configured floor; the structure is then
    at its critical state and the face with the largest damage (< 1) is the
    crack candidate.
    """
    state = initial_state(disc) if state is None else state
    floor = cfg.floor_increment()
    history: list[tuple[float, float]] = []
    peak_state = state
    peak = -np.inf
    status = "no peak within schedule"

    targets = [f for f in cfg.schedule if f > state.factor]
    k = 0
    increment = None
    while True:
        if increment is None:
            if k >= len(targets):
                break
            f_next = float(targets[k])
        else:
            f_next = state.factor + increment
        try:
            state = nr_iterate(disc, state, f_next, cfg)
        except NonConvergenceError:
            inc = (f_next - state.factor) / 2.0
            if inc < floor:
                status = "critical"
                break
            increment = inc
            continue
        load = float(measure(state))
        history.append((state.factor, load))
        if load > peak:
            peak = load
            peak_state = state
        if on_step is not None:
            on_step(state)
        if increment is None:
            k += 1

    if not history:
        return PeakResult(
            0.0, state.factor, state, state, _max_subunity_damage_face(state.iface), status, history
        )
    return PeakResult(
        peak_load=peak,
        peak_factor=peak_state.factor,
        peak_state=peak_state,
        last_state=state,
        critical_face=_max_subunity_damage_face(state.iface),
        status=status,
        history=history,
    )


def insert_crack(disc: Discretization, state: StepState, face_id: int) -> StepState:
    """Set d = 1 across a face, sever its support link, dissipate the rest.

    Idempotent on already-cracked faces. Every other interface state and the
    DOF layout are untouched.
    """
    if state.iface.face_cracked[face_id]:
        return state
    new = state.copy()
    tau_c = float(disc.law.tau_c[face_id, 0])
    H = float(disc.law.H[face_id, 0])
    d_old = new.iface.d[face_id]  # (Q,)
    tau_f = tau_c / (1.0 - H)
    per_area = 0.5 * (tau_c / (1.0 - H * d_old)) * tau_f * (1.0 - d_old)
    new.iface.G_diss[face_id] += per_area
    new.dissipated += float(np.sum(disc.qp_w[face_id] * per_area))
    new.iface.d[face_id] = 1.0
    new.iface.r[face_id] = np.maximum(new.iface.r[face_id], tau_f)
    new.iface.cracked[face_id] = True
    new.iface.t_damaged[face_id] = 0.0
    new.iface.loading[face_id] = False
    disc.sever_faces([face_id])
    return new


def _unloaded(disc: Discretization, state: StepState) -> StepState:
    """Reset to rest, keeping the interface damage history."""
    new = initial_state(disc)
    new.iface = state.iface.copy()
    new.index = state.index
    return new


@dataclass
class CrackEvent:
    index: int
    face_id: int | None
    crack_length: float  # total cracked length BEFORE this event's peak
    peak_load: float
    peak_factor: float
    status: str


@dataclass
class CrackGrowthReport:
    events: list  # CrackEvent per peak-load search
    cracked_faces: list  # face ids in insertion order
    curves: list  # per event, list of (factor, load) converged points
    states: list  # last converged StepState per event
    wall_time: float = 0.0


def crack_growth_simulation(
    disc: Discretization,
    cfg: SolverConfig,
    measure,
    on_event=None,
) -> CrackGrowthReport:
    """Repeated peak-load search + crack insertion until residual strength.

    Stops when the peak load drops below ``residual_fraction`` of the intact
    peak, when ``crack_events_max`` events have been inserted, or when no
    failure occurs within the schedule.
    """
    t0 = time.perf_counter()
    events: list[CrackEvent] = []
    cracked: list[int] = []
    curves: list[list[tuple[float, float]]] = []
    states: list[StepState] = []
    state = initial_state(disc)
    crack_length = 0.0
    intact_peak = None

    for k in range(cfg.crack_events_max + 1):
        result = find_peak_load(disc, cfg, measure, state=state)
        events.append(
            CrackEvent(
                index=k,
                face_id=result.critical_face,
                crack_length=crack_length,
                peak_load=result.peak_load,
                peak_factor=result.peak_factor,
                status=result.status,
            )
        )
        curves.append(result.history)
        states.append(result.last_state)
        if on_event is not None:
            on_event(events[-1], result)
        if intact_peak is None:
            intact_peak = result.peak_load
        if result.status != "critical":
            break  # survived the whole schedule: nothing left to crack
        if result.critical_face is None:
            break
        if result.peak_load < cfg.residual_fraction * intact_peak:
            break
        if k == cfg.crack_events_max:
            break
        face = result.critical_face
        state = insert_crack(disc, result.last_state, face)
        cracked.append(face)
        crack_length += disc.lengths[face]
        state = _unloaded(disc, state)

    return CrackGrowthReport(
        events=events,
        cracked_faces=cracked,
        curves=curves,
        states=states,
        wall_time=time.perf_counter() - t0,
    )


# ---------------------------------------------------------------------------
# Checkpointing
# ---------------------------------------------------------------------------


def save_checkpoint(path, state: StepState, cracked_faces: list[int]) -> None:
    """Write a restartable snapshot (npz) of a converged state."""
    np.savez_compressed(
        path,
        u=state.u,
        strain=state.strain,
        stress=state.stress,
        factor=np.array(state.factor),
        index=np.array(state.index),
        work_ext=np.array(state.work_ext),
        dissipated=np.array(state.dissipated),
        cracked_faces=np.array(cracked_faces, dtype=int),
        iface_d=state.iface.d,
        iface_r=state.iface.r,
        iface_cracked=state.iface.cracked,
        iface_G=state.iface.G_diss,
    )


def load_checkpoint(disc: Discretization, path) -> tuple[StepState, list[int]]:
    """Rebuild a StepState on a fresh discretization and re-apply its cracks."""
    data = np.load(path)
    state = initial_state(disc)
    state.u = data["u"]
    state.strain = data["strain"]
    state.stress = data["stress"]
    state.factor = float(data["factor"])
    state.index = int(data["index"])
    state.work_ext = float(data["work_ext"])
    state.dissipated = float(data["dissipated"])
    state.iface.d = data["iface_d"]
    state.iface.r = data["iface_r"]
    state.iface.cracked = data["iface_cracked"]
    state.iface.G_diss = data["iface_G"]
    cracked = [int(f) for f in data["cracked_faces"]]
    if cracked:
        disc.sever_faces(cracked)
    disc.update_interface(state.u, state.iface)
    return state, cracked
