"""Adversary models acting on the sensor-to-estimator channel.

Threat-model fidelity matters here: the eavesdropper and the FDI attacker are
constructed from plant-level knowledge {A, B, C, L} only and never see the
masker parameters.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NotHurwitzError
from .models import LtiPlant
from .numerics import Trajectory, as_matrix, as_vector, is_hurwitz, rk4_step


@dataclass(frozen=True)
class NoAttack:
    """Channel passes the transmitted signal through unchanged."""


@dataclass(frozen=True)
class EavesdropAttack:
    """Passive interception: the adversary runs its own observer on the channel.

    ``L_bar`` must make ``A - L_bar C`` Hurwitz (checked when the observer is
    built).
    """

    L_bar: np.ndarray


@dataclass(frozen=True)
class ReplayAttack:
    """Record the channel for ``tau`` seconds before ``t_start``, then play it back."""

    tau: float
    t_start: float

    def __post_init__(self):
        if self.tau <= 0:
            raise ValueError("tau must be positive")
        if self.t_start < 0:
            raise ValueError("t_start must be nonnegative")


@dataclass(frozen=True)
class FdiAttack:
    """Additive injection ``a = C dxhat + phi(t)`` engineered to stay stealthy.

    The free signal is stored as ``direction * M * shape(t)`` with
    ``|shape| <= 1``, so ``||phi(t)|| <= M`` holds by construction.
    ``shape`` is ``"constant"`` (worst case, the stealth boundary is sharp) or
    ``"sin"`` with frequency ``freq_hz``.
    """

    M: float
    t_start: float
    direction: np.ndarray
    shape: str = "constant"
    freq_hz: float = 0.5

    def __post_init__(self):
        if self.M <= 0:
            raise ValueError("M must be positive")
        if self.t_start < 0:
            raise ValueError("t_start must be nonnegative")
        if self.shape not in ("constant", "sin"):
            raise ValueError("shape must be 'constant' or 'sin'")
        d = as_vector(self.direction, name="direction")
        nrm = np.linalg.norm(d)
        if nrm == 0:
            raise ValueError("direction must be nonzero")
        object.__setattr__(self, "direction", d / nrm)

    def phi(self, t: float) -> np.ndarray:
        """The bounded free signal at time ``t`` (measured from attack onset)."""
        if self.shape == "constant":
            s = 1.0
        else:
            s = np.sin(2.0 * np.pi * self.freq_hz * t)
        return self.M * s * self.direction


AttackSpec = NoAttack | EavesdropAttack | ReplayAttack | FdiAttack


@dataclass
class EavesdropperObserver:
    """The adversary's plant observer, driven by whatever the channel carries."""

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    L_bar: np.ndarray
    xhat_a: np.ndarray

    def derivative(self, chan: np.ndarray, u: np.ndarray, xhat_a=None) -> np.ndarray:
        x = self.xhat_a if xhat_a is None else xhat_a
        return self.A @ x + self.B @ u + self.L_bar @ (chan - self.C @ x)

    def step(self, chan: np.ndarray, u: np.ndarray, dt: float) -> np.ndarray:
        """Advance one RK4 step with the channel value and input held over the step."""
        self.xhat_a = rk4_step(lambda t, x: self.derivative(chan, u, x), 0.0, self.xhat_a, dt)
        return self.xhat_a


def make_eavesdropper(plant: LtiPlant, L_bar) -> EavesdropperObserver:
    """Build the eavesdropper's observer; ``A - L_bar C`` must be Hurwitz."""
    L_bar = as_matrix(L_bar, rows=plant.n_x, cols=plant.n_y, name="L_bar")
    if not is_hurwitz(plant.A - L_bar @ plant.C):
        raise NotHurwitzError("A - L_bar C is not Hurwitz; the eavesdropper observer diverges")
    return EavesdropperObserver(A=plant.A, B=plant.B, C=plant.C, L_bar=L_bar,
                                xhat_a=np.zeros(plant.n_x))


def eavesdrop_error_bound(plant: LtiPlant, L_bar, eps: float) -> float:
    """Guaranteed ceiling on the eavesdropping error under a masking signal of
    norm at most ``eps``: ``2 lam_max(S)^2 ||L_bar|| eps / lam_min(S)`` with S
    solving ``S (A - L_bar C) + (A - L_bar C)' S = -I``."""
    from .numerics import solve_lyapunov

    if eps < 0:
        raise ValueError("eps must be nonnegative")
    L_bar = as_matrix(L_bar, rows=plant.n_x, cols=plant.n_y, name="L_bar")
    A_cl = plant.A - L_bar @ plant.C
    S = solve_lyapunov(A_cl)
    lam = np.linalg.eigvalsh(S)
    return float(2.0 * lam[-1] ** 2 * np.linalg.norm(L_bar, 2) / lam[0] * eps)


def replay_channel(recording: Trajectory, tau: float, t_start: float,
                   t: float, live: np.ndarray) -> np.ndarray:
    """Channel output under replay: the recorded sample at ``t - tau`` inside
    the replay window ``[t_start, t_start + tau]``, the live value elsewhere.

    The lookup is nearest-step on the recording's uniform grid.  The recording
    must cover ``[t_start - tau, t_start]``.
    """
    if t < 0:
        raise ValueError("t must be nonnegative")
    t0 = float(recording.times[0])
    t1 = float(recording.times[-1])
    if t0 > t_start - tau + 0.5 * recording.dt or t1 < t_start - 0.5 * recording.dt:
        raise ValueError(
            f"recording [{t0:.6g}, {t1:.6g}] does not cover the window "
            f"[{t_start - tau:.6g}, {t_start:.6g}]")
    if t_start <= t <= t_start + tau:
        return recording.nearest(t - tau)
    return np.asarray(live, dtype=float)


@dataclass
class FdiAttackerState:
    """The FDI attacker's internal estimation-difference model (zero at onset)."""

    delta_xhat: np.ndarray

    @classmethod
    def at_onset(cls, n_x: int) -> "FdiAttackerState":
        return cls(delta_xhat=np.zeros(n_x))


def fdi_step(state: FdiAttackerState, A, C, L, phi_t, dt: float) -> np.ndarray:
    """Emit the injection ``a = C dxhat + phi_t`` and advance the internal model.

    The internal model integrates ``dxhat' = (A - L C) dxhat + L a`` one RK4
    step with ``a`` held over the step.  Only unmasked-system knowledge
    {A, C, L} enters; the attacker never sees the masker.
    """
    A = as_matrix(A, name="A")
    C = as_matrix(C, cols=A.shape[0], name="C")
    L = as_matrix(L, rows=A.shape[0], cols=C.shape[0], name="L")
    phi_t = as_vector(phi_t, size=C.shape[0], name="phi_t")
    a = C @ state.delta_xhat + phi_t
    A_cl = A - L @ C
    La = L @ a
    state.delta_xhat = rk4_step(lambda t, d: A_cl @ d + La, 0.0, state.delta_xhat, dt)
    return a


def stealthiness_metric(attacked, clean) -> tuple[float, np.ndarray]:
    """Sup over the attack window of ``||z_attacked(t) - z_clean(t)||``.

    Both traces must share the time grid and differ only by the attack.
    Returns the supremum together with the full ``||delta z||`` time series
    (over the whole grid, not just the window).
    """
    if attacked.times.shape != clean.times.shape or \
            np.any(attacked.times != clean.times):
        raise ValueError("traces do not share a time grid")
    if attacked.z.shape != clean.z.shape:
        raise ValueError("traces have mismatched innovation dimensions")
    dz = np.linalg.norm(attacked.z - clean.z, axis=1)
    atk = attacked.attack
    if isinstance(atk, ReplayAttack):
        w0, w1 = atk.t_start, atk.t_start + atk.tau
    elif isinstance(atk, FdiAttack):
        w0, w1 = atk.t_start, float(attacked.times[-1])
    else:
        w0, w1 = float(attacked.times[0]), float(attacked.times[-1])
    sel = (attacked.times >= w0) & (attacked.times <= w1)
    sup = float(np.max(dz[sel])) if np.any(sel) else 0.0
    return sup, dz
