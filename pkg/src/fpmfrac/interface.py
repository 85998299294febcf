"""Interior-face mechanics: numerical flux, penalty, and the debonding law.

Neighboring subdomains are glued weakly through the incomplete interior
penalty flux

    t* = {sigma . n} - alpha [u]

with jump [w] = w|1 - w|2 and average {w} = (w|1 + w|2)/2 taken in the face's
owner order. The isotropic penalty ``alpha = lam E / h_s`` doubles as an
interfacial stiffness, so the flux has the meaning of the traction carried by
the face.

Debonding is a scalar damage law on the flux conjugate ``delta = t*/alpha``:
the energy norm ``tau = sqrt(alpha) |delta|`` drives a threshold ``r``
(Kuhn-Tucker loading/unloading), and with linear softening the damage is
closed-form,

    d = (1/H) (1 - tau_c / tau),    H = 1 - tau_c^2 / (2 G_c),

which makes the transmitted traction ``(1-d) t*`` trace the classic triangle:
onset at |t*| = t_c, complete separation once the dissipated energy per unit
face area reaches G_c. The damaged face then carries no flux at all.

All scalar formulas here broadcast over numpy arrays, so the solver can
update every face quadrature point in one shot.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "BrittlenessError",
    "CRACK_EPS",
    "SofteningConstants",
    "InterfaceState",
    "jump_and_average",
    "penalty_tensor",
    "undamaged_flux",
    "conjugate_delta",
    "energy_norm",
    "softening_constants",
    "update_damage",
    "damage_tangent",
    "damaged_flux",
    "envelope_tau",
    "dissipation_increment",
    "accumulate_dissipation",
]

# damage at or above 1 - CRACK_EPS counts as a through crack; keeps the
# evolution modulus h = (1-Hd)^2/(tau_c H) finite
CRACK_EPS = 1e-9


class BrittlenessError(Exception):
    """Interface would store more elastic energy than G_c at damage onset."""


def jump_and_average(w_1, w_2):
    """Jump ``w|1 - w|2`` and average ``(w|1 + w|2)/2`` of one-sided traces."""
    w_1 = np.asarray(w_1, dtype=float)
    w_2 = np.asarray(w_2, dtype=float)
    return w_1 - w_2, 0.5 * (w_1 + w_2)


def penalty_tensor(lam: float, E: float, h_s: float) -> float:
    """Isotropic face penalty ``alpha = lam E / h_s`` (Pa/m)."""
    if lam <= 0.0:
        raise ValueError("penalty parameter must be positive (zero destabilizes the flux)")
    if E <= 0.0 or h_s <= 0.0:
        raise ValueError("modulus and characteristic length must be positive")
    return lam * E / h_s


def traction_from_voigt(sigma, normal):
    """Traction ``sigma . n`` from Voigt stress (s11, s22, s12); broadcasts."""
    sigma = np.asarray(sigma, dtype=float)
    n = np.asarray(normal, dtype=float)
    t1 = sigma[..., 0] * n[..., 0] + sigma[..., 2] * n[..., 1]
    t2 = sigma[..., 2] * n[..., 0] + sigma[..., 1] * n[..., 1]
    return np.stack([t1, t2], axis=-1)


def undamaged_flux(normal, sigma_1, sigma_2, u_1, u_2, alpha):
    """IIPG flux ``t* = {sigma . n} - alpha [u]`` at a face quadrature point.

    ``sigma_i`` are one-sided Voigt stresses, ``u_i`` one-sided displacement
    traces, sides ordered by the face's owner convention; ``normal`` points
    from side 1 into side 2.
    """
    jump_u, _ = jump_and_average(u_1, u_2)
    _, avg_t = jump_and_average(
        traction_from_voigt(sigma_1, normal), traction_from_voigt(sigma_2, normal)
    )
    a = np.asarray(alpha, dtype=float)
    if a.ndim:
        a = a[..., None]
    return avg_t - a * jump_u


def conjugate_delta(t_star, alpha):
    """Flux conjugate ``delta = t*/alpha``."""
    t_star = np.asarray(t_star, dtype=float)
    return t_star / (np.asarray(alpha)[..., None] if np.ndim(alpha) else alpha)


def energy_norm(delta, alpha):
    """Energy norm ``tau = sqrt(2 Psi0) = sqrt(alpha) |delta|``."""
    delta = np.asarray(delta, dtype=float)
    return np.sqrt(np.asarray(alpha)) * np.linalg.norm(delta, axis=-1)


# ---------------------------------------------------------------------------
# Linear softening closure
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SofteningConstants:
    """Derived constants of the linear softening law for one penalty value."""

    tau_c: float  # critical energy norm (initial damage threshold r0)
    H: float  # softening constant, 0 < H < 1
    delta_c: float  # conjugate magnitude at damage onset, t_c/alpha
    delta_f: float  # conjugate magnitude at full failure, 2 G_c/t_c
    alpha: float
    t_c: float
    G_c: float


def softening_constants(t_c: float, G_c: float, alpha: float) -> SofteningConstants:
    """Build the softening constants; rejects over-brittle configurations.

    Requires ``G_c > t_c^2 / (2 alpha)``: otherwise the elastic energy stored
    at onset already exceeds the fracture energy (H <= 0) and no softening
    branch exists. The fix is to raise the penalty parameter lambda.
    """
    delta_c = t_c / alpha
    tau_c = t_c / np.sqrt(alpha)
    delta_f = 2.0 * G_c / t_c
    H = 1.0 - tau_c**2 / (2.0 * G_c)
    if H <= 0.0:
        raise BrittlenessError(
            f"interface stores t_c^2/(2 alpha) = {t_c**2 / (2 * alpha):.6g} J/m^2 at onset, "
            f"which is not below G_c = {G_c:.6g}; raise the penalty parameter lambda "
            f"(need lambda E/h_s > {t_c**2 / (2 * G_c):.6g})"
        )
    return SofteningConstants(
        tau_c=float(tau_c),
        H=float(H),
        delta_c=float(delta_c),
        delta_f=float(delta_f),
        alpha=float(alpha),
        t_c=float(t_c),
        G_c=float(G_c),
    )


def update_damage(tau_trial, d_old, r_old, consts: SofteningConstants):
    """Damage update for trial energy norms; broadcasts over arrays.

    Returns ``(d_new, r_new, loading)``. Below the threshold nothing moves
    (secant unloading/reloading); above it the closed-form damage applies,
    clamped to be non-decreasing and at most 1.
    """
    tau_trial = np.asarray(tau_trial, dtype=float)
    d_old = np.asarray(d_old, dtype=float)
    r_old = np.asarray(r_old, dtype=float)
    loading = tau_trial > r_old
    with np.errstate(divide="ignore", invalid="ignore"):
        d_env = (1.0 - consts.tau_c / tau_trial) / consts.H
    d_new = np.where(loading, np.clip(d_env, d_old, 1.0), d_old)
    r_new = np.where(loading, tau_trial, r_old)
    if d_new.ndim == 0:
        return float(d_new), float(r_new), bool(loading)
    return d_new, r_new, loading


def damage_tangent(delta, d, tau, alpha, consts: SofteningConstants, loading):
    """Consistent tangent dt*d/ddelta (..., 2, 2).

    Secant ``(1-d) alpha I`` off the loading branch; on it, the rank-one
    softening correction ``-(h/tau) (alpha delta) x (alpha delta)`` with
    ``h = (1-Hd)^2/(tau_c H)`` is subtracted. Cracked points return zero.
    """
    scalar = np.ndim(delta) == 1
    delta = np.atleast_2d(np.asarray(delta, dtype=float))
    d = np.atleast_1d(np.asarray(d, dtype=float))
    tau = np.atleast_1d(np.asarray(tau, dtype=float))
    loading = np.atleast_1d(loading)
    eye = np.eye(2)
    C = (1.0 - d)[..., None, None] * alpha * eye
    active = loading & (d < 1.0 - CRACK_EPS) & (tau > 0.0)
    if np.any(active):
        h = (1.0 - consts.H * d) ** 2 / (consts.tau_c * consts.H)
        with np.errstate(divide="ignore", invalid="ignore"):
            f = alpha**2 * h / tau  # (h/tau) applied to the (alpha delta) dyad
        dyad = delta[..., :, None] * delta[..., None, :]
        C = C - np.where(active[..., None, None], f[..., None, None] * dyad, 0.0)
    C = np.where((d >= 1.0 - CRACK_EPS)[..., None, None], 0.0, C)
    return C[0] if scalar else C


def damaged_flux(t_star, d):
    """Damaged flux ``(1-d) t*``; vanishes on cracked points."""
    t_star = np.asarray(t_star, dtype=float)
    d = np.asarray(d, dtype=float)
    scale = np.where(d >= 1.0 - CRACK_EPS, 0.0, 1.0 - d)
    return scale[..., None] * t_star if t_star.ndim > np.ndim(d) else scale * t_star


# ---------------------------------------------------------------------------
# Dissipation bookkeeping
# ---------------------------------------------------------------------------


def envelope_tau(d, consts: SofteningConstants):
    """Energy norm on the softening envelope, ``tau = tau_c / (1 - H d)``."""
    return consts.tau_c / (1.0 - consts.H * np.asarray(d, dtype=float))


def dissipation_increment(d_old, d_new, consts: SofteningConstants):
    """Exact envelope dissipation between two committed damage values.

    Integrating ``Psi0 dd`` along the softening envelope gives
    ``(tau(d1) tau(d2) / 2) (d2 - d1)`` exactly for the hyperbolic tau(d),
    so the accumulated total is G_c at complete failure regardless of how
    coarsely the damage path was stepped.
    """
    return 0.5 * envelope_tau(d_old, consts) * envelope_tau(d_new, consts) * (
        np.asarray(d_new, dtype=float) - np.asarray(d_old, dtype=float)
    )


def accumulate_dissipation(t_samples, delta_samples) -> float:
    """Dissipated energy per unit face area from a sampled flux history.

    Takes ordered samples of the damaged flux (scalar, e.g. its normal
    component or magnitude) and of the matching conjugate component, and
    accumulates work minus the recoverable part:

        G = sum_k (t_k delta_{k+1} - t_{k+1} delta_k) / 2

    This is the trapezoidal path integral of ``t d(delta)`` with the secant
    energy change removed; it is exact on piecewise-linear paths, returns 0
    for purely elastic load/unload cycles, and G_c for monotonic failure.
    """
    t = np.asarray(t_samples, dtype=float)
    delta = np.asarray(delta_samples, dtype=float)
    if t.shape != delta.shape:
        raise ValueError("flux and conjugate sample arrays must have the same shape")
    if len(t) < 2:
        return 0.0
    return float(0.5 * np.sum(t[:-1] * delta[1:] - t[1:] * delta[:-1]))


# ---------------------------------------------------------------------------
# Per-quadrature-point state for all faces
# ---------------------------------------------------------------------------


@dataclass
class InterfaceState:
    """Struct-of-arrays damage state, one entry per face quadrature point.

    ``d`` and ``r`` are non-decreasing in time by construction; a face is
    treated as through-cracked (flux dropped, support severed) only when all
    of its quadrature points are cracked.
    """

    d: np.ndarray  # (F, Q)
    r: np.ndarray  # (F, Q)
    cracked: np.ndarray  # (F, Q) bool
    G_diss: np.ndarray  # (F, Q) J/m^2
    loading: np.ndarray  # (F, Q) bool, branch of the last update
    tau: np.ndarray  # (F, Q)
    delta: np.ndarray  # (F, Q, 2)
    t_damaged: np.ndarray  # (F, Q, 2)
    jump: np.ndarray  # (F, Q, 2)

    @classmethod
    def pristine(cls, n_faces: int, n_qp: int, r0) -> "InterfaceState":
        r = np.empty((n_faces, n_qp))
        r[:] = np.asarray(r0).reshape(-1, 1) if np.ndim(r0) else r0
        return cls(
            d=np.zeros((n_faces, n_qp)),
            r=r,
            cracked=np.zeros((n_faces, n_qp), dtype=bool),
            G_diss=np.zeros((n_faces, n_qp)),
            loading=np.zeros((n_faces, n_qp), dtype=bool),
            tau=np.zeros((n_faces, n_qp)),
            delta=np.zeros((n_faces, n_qp, 2)),
            t_damaged=np.zeros((n_faces, n_qp, 2)),
            jump=np.zeros((n_faces, n_qp, 2)),
        )

    def copy(self) -> "InterfaceState":
        return InterfaceState(
            d=self.d.copy(),
            r=self.r.copy(),
            cracked=self.cracked.copy(),
            G_diss=self.G_diss.copy(),
            loading=self.loading.copy(),
            tau=self.tau.copy(),
            delta=self.delta.copy(),
            t_damaged=self.t_damaged.copy(),
            jump=self.jump.copy(),
        )

    @property
    def face_cracked(self) -> np.ndarray:
        return self.cracked.all(axis=1)
