"""Deterministic closed-loop scenario engine.

One fixed-step co-simulation advances plant, masker, estimator, and any
attacker state machines on a shared grid; the channel transform is applied
inside the derivative so a run is a single pass.  Two runs of the same
scenario produce bit-identical traces.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from .attacks import AttackSpec, EavesdropAttack, FdiAttack, NoAttack, ReplayAttack
from .errors import DivergedRunError, NotHurwitzError
from .models import ChaoticMask, ExtendedSystem, LtiPlant, build_extended, saturate
from .numerics import as_matrix, as_vector, is_hurwitz
from .synthesis import ObserverGain

#: Steady-state tolerance for the replay premise (plant and observer at rest).
TOL_SS = 1e-6

#: State norm beyond which a run is declared diverged.
DIVERGENCE_NORM = 1e9

#: Threshold floor substituted when a clean trace has identically zero innovation.
NU_FLOOR = 1e-12


@dataclass
class Scenario:
    """A fully specified closed-loop experiment.

    With ``mask`` set the estimator is the extended observer (gain from
    ``observer``); without it the plain estimator with gain ``L_plain`` runs.
    ``L_plain`` is also the attacker-side system knowledge (eavesdropper
    default gain, FDI internal model), so it is required whenever an attack
    needs it.  ``x_ref``/``u_eq`` switch on the constant-reference control law
    ``u = u_eq - K (xhat - x_ref)``.
    """

    plant: LtiPlant
    controller_K: np.ndarray
    x0: np.ndarray
    xhat0: np.ndarray
    mask: ChaoticMask | None = None
    observer: ObserverGain | None = None
    L_plain: np.ndarray | None = None
    xi0: np.ndarray | None = None
    xihat0: np.ndarray | None = None
    detector_nu: float | None = None
    attack: AttackSpec = dataclasses.field(default_factory=NoAttack)
    x_ref: np.ndarray | None = None
    u_eq: np.ndarray | None = None
    control_enabled: bool = True
    dt: float = 1e-3
    t_end: float = 60.0
    t_settle: float = 30.0
    name: str = ""

    def __post_init__(self):
        p = self.plant
        self.controller_K = as_matrix(self.controller_K, rows=p.n_u, cols=p.n_x, name="K")
        self.x0 = as_vector(self.x0, size=p.n_x, name="x0")
        self.xhat0 = as_vector(self.xhat0, size=p.n_x, name="xhat0")
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if not (0.0 <= self.t_settle < self.t_end):
            raise ValueError("t_settle must lie in [0, t_end)")
        if self.detector_nu is not None and self.detector_nu < 0:
            raise ValueError("detector_nu must be nonnegative")
        if self.control_enabled and not is_hurwitz(p.A - p.B @ self.controller_K):
            raise NotHurwitzError("A - B K is not Hurwitz; the loop cannot settle")
        if self.mask is not None:
            if self.observer is None:
                raise ValueError("a masked scenario needs a certified observer gain")
            if self.mask.sigma is None:
                raise ValueError("mask must be calibrated (sigma unset)")
            n_xi = self.mask.n_xi
            self.xi0 = as_vector(self.xi0, size=n_xi, name="xi0")
            self.xihat0 = np.zeros(n_xi) if self.xihat0 is None \
                else as_vector(self.xihat0, size=n_xi, name="xihat0")
            if self.observer.L.shape != (n_xi + p.n_x, p.n_y):
                raise ValueError("observer gain has the wrong shape for this plant/mask pair")
        else:
            if self.L_plain is None:
                raise ValueError("an unmasked scenario needs the plain estimator gain L_plain")
        if self.L_plain is not None:
            self.L_plain = as_matrix(self.L_plain, rows=p.n_x, cols=p.n_y, name="L_plain")
        if self.x_ref is not None:
            self.x_ref = as_vector(self.x_ref, size=p.n_x, name="x_ref")
        if self.u_eq is not None:
            self.u_eq = as_vector(self.u_eq, size=p.n_u, name="u_eq")
        if isinstance(self.attack, ReplayAttack):
            if self.attack.t_start < self.attack.tau:
                raise ValueError("replay needs a full recording window before onset "
                                 "(t_start >= tau)")

    @property
    def masked(self) -> bool:
        return self.mask is not None


def clean_twin(scenario: Scenario) -> Scenario:
    """The same experiment with the attack removed."""
    return dataclasses.replace(scenario, attack=NoAttack(),
                               name=scenario.name + "-clean" if scenario.name else "clean")


@dataclass
class SimTrace:
    """Complete deterministic output of one scenario run (shared uniform grid)."""

    times: np.ndarray
    x: np.ndarray
    xhat: np.ndarray
    y: np.ndarray
    ybold: np.ndarray
    chan: np.ndarray
    z: np.ndarray
    u: np.ndarray
    g: np.ndarray
    alarm: np.ndarray
    err_norm: np.ndarray
    masked: bool
    attack: AttackSpec
    dt: float
    t_settle: float
    nu: float | None = None
    xi: np.ndarray | None = None
    xihat: np.ndarray | None = None
    eav_xhat: np.ndarray | None = None
    eav_err: np.ndarray | None = None
    fdi_phi: np.ndarray | None = None
    steady_premise_ok: bool | None = None
    name: str = ""

    def post_settle(self, series: np.ndarray) -> np.ndarray:
        return series[self.times >= self.t_settle]

    def to_csv(self, path) -> None:
        """One row per step; floats at 17 significant digits for replayability."""
        cols: list[tuple[str, np.ndarray]] = [("t", self.times)]

        def add_block(prefix, arr):
            for j in range(arr.shape[1]):
                cols.append((f"{prefix}_{j + 1}", arr[:, j]))

        add_block("x", self.x)
        if self.xi is not None:
            add_block("xi", self.xi)
        add_block("xhat", self.xhat)
        if self.xihat is not None:
            add_block("xihat", self.xihat)
        add_block("y", self.y)
        add_block("ybold", self.ybold)
        add_block("chan", self.chan)
        add_block("z", self.z)
        cols.append(("g", self.g))
        cols.append(("alarm", self.alarm.astype(float)))
        cols.append(("err_norm", self.err_norm))
        header = ",".join(name for name, _ in cols)
        data = np.column_stack([c for _, c in cols])
        np.savetxt(path, data, fmt="%.17g", delimiter=",", header=header, comments="")

    @property
    def first_alarm_time(self) -> float | None:
        idx = np.flatnonzero(self.alarm)
        return float(self.times[idx[0]]) if idx.size else None


def run_scenario(s: Scenario) -> SimTrace:
    """Single-pass fixed-step co-simulation of a scenario.

    Raises :class:`DivergedRunError` when the stacked state norm passes 1e9.
    """
    p = s.plant
    n_x, n_u, n_y = p.n_x, p.n_u, p.n_y
    dt = s.dt
    n_steps = int(round(s.t_end / dt))
    times = np.arange(n_steps + 1) * dt

    masked = s.masked
    if masked:
        ext = build_extended(p, s.mask)
        n_xi = s.mask.n_xi
        Lext = s.observer.L
        Abold, Bbold, Cbold = ext.Abold, ext.Bbold, ext.Cbold
        sigma = s.mask.sigma
        phi_map = s.mask.phi
        Phi, Lam = s.mask.Phi, s.mask.Lambda
    else:
        n_xi = 0

    A, B, C, K = p.A, p.B, p.C, s.controller_K
    Lp = s.L_plain
    x_ref = s.x_ref if s.x_ref is not None else np.zeros(n_x)
    u_eq = s.u_eq if s.u_eq is not None else np.zeros(n_u)

    # State layout: x | xi | estimator | eavesdropper | fdi attacker model.
    i_x = slice(0, n_x)
    i_xi = slice(n_x, n_x + n_xi)
    n_obs = (n_xi + n_x) if masked else n_x
    i_obs = slice(n_x + n_xi, n_x + n_xi + n_obs)
    off = n_x + n_xi + n_obs
    atk = s.attack
    has_eav = isinstance(atk, EavesdropAttack)
    has_fdi = isinstance(atk, FdiAttack)
    is_replay = isinstance(atk, ReplayAttack)
    if has_eav:
        L_bar = as_matrix(atk.L_bar, rows=n_x, cols=n_y, name="L_bar")
        if not is_hurwitz(A - L_bar @ C):
            raise NotHurwitzError("eavesdropper gain does not stabilize A - L_bar C")
        i_eav = slice(off, off + n_x)
        off += n_x
    if has_fdi:
        if Lp is None:
            raise ValueError("the FDI attacker needs the plain gain L_plain as system knowledge")
        A_fdi = A - Lp @ C
        i_fdi = slice(off, off + n_x)
        off += n_x
    n_state = off

    # Recorded transmitted signal, one sample per accepted step (the channel tap).
    record = np.empty((n_steps + 1, n_y))

    def transmit(xvec, xivec):
        y = C @ xvec
        if masked:
            return y, y + Lam @ xivec
        return y, y

    def channel(t, ybold_val, svec):
        if is_replay and atk.t_start <= t <= atk.t_start + atk.tau:
            idx = int(round((t - atk.tau) / dt))
            return record[idx]
        if has_fdi and t >= atk.t_start:
            a = C @ svec[i_fdi] + atk.phi(t - atk.t_start)
            return ybold_val + a
        return ybold_val

    def derivative(t, svec):
        ds = np.zeros(n_state)
        xvec = svec[i_x]
        obs = svec[i_obs]
        if masked:
            xhat_plant = obs[n_xi:]
        else:
            xhat_plant = obs
        if s.control_enabled:
            u = u_eq - K @ (xhat_plant - x_ref)
        else:
            u = np.zeros(n_u)
        y, ybold_val = transmit(xvec, svec[i_xi] if masked else None)
        chan = channel(t, ybold_val, svec)
        ds[i_x] = A @ xvec + B @ u
        if masked:
            xivec = svec[i_xi]
            ds[i_xi] = Phi @ xivec + phi_map(xivec)
            innov = chan - Cbold @ obs
            dobs = Abold @ obs + Bbold @ u + Lext @ innov
            dobs[:n_xi] += phi_map(saturate(obs[:n_xi], sigma))
            ds[i_obs] = dobs
        else:
            ds[i_obs] = A @ obs + B @ u + Lp @ (chan - C @ obs)
        if has_eav:
            xe = svec[i_eav]
            ds[i_eav] = A @ xe + B @ u + L_bar @ (chan - C @ xe)
        if has_fdi and t >= atk.t_start:
            d = svec[i_fdi]
            a = C @ d + atk.phi(t - atk.t_start)
            ds[i_fdi] = A_fdi @ d + Lp @ a
        return ds

    # Assemble the initial stacked state.
    state = np.zeros(n_state)
    state[i_x] = s.x0
    if masked:
        state[i_xi] = s.xi0
        state[i_obs] = np.concatenate([s.xihat0, s.xhat0])
    else:
        state[i_obs] = s.xhat0

    # Output buffers.
    out_x = np.empty((n_steps + 1, n_x))
    out_xhat = np.empty((n_steps + 1, n_x))
    out_y = np.empty((n_steps + 1, n_y))
    out_chan = np.empty((n_steps + 1, n_y))
    out_z = np.empty((n_steps + 1, n_y))
    out_u = np.empty((n_steps + 1, n_u))
    out_err = np.empty(n_steps + 1)
    out_xi = np.empty((n_steps + 1, n_xi)) if masked else None
    out_xihat = np.empty((n_steps + 1, n_xi)) if masked else None
    out_eav = np.empty((n_steps + 1, n_x)) if has_eav else None
    out_phi = np.empty((n_steps + 1, n_y)) if has_fdi else None

    sixth = dt / 6.0
    half = 0.5 * dt
    for k in range(n_steps + 1):
        t = k * dt
        xvec = state[i_x]
        obs = state[i_obs]
        y, ybold_val = transmit(xvec, state[i_xi] if masked else None)
        record[k] = ybold_val
        chan = channel(t, ybold_val, state)
        if masked:
            yhat = Cbold @ obs
            truth = np.concatenate([state[i_xi], xvec])
            err = float(np.linalg.norm(truth - obs))
            xhat_plant = obs[n_xi:]
        else:
            yhat = C @ obs
            err = float(np.linalg.norm(xvec - obs))
            xhat_plant = obs
        z = chan - yhat
        u = (u_eq - K @ (xhat_plant - x_ref)) if s.control_enabled else np.zeros(n_u)

        out_x[k] = xvec
        out_xhat[k] = xhat_plant
        out_y[k] = y
        out_chan[k] = chan
        out_z[k] = z
        out_u[k] = u
        out_err[k] = err
        if masked:
            out_xi[k] = state[i_xi]
            out_xihat[k] = obs[:n_xi]
        if has_eav:
            out_eav[k] = state[i_eav]
        if has_fdi:
            out_phi[k] = atk.phi(t - atk.t_start) if t >= atk.t_start else 0.0

        if k == n_steps:
            break
        # Classical RK4 step on the full stacked state.
        k1 = derivative(t, state)
        k2 = derivative(t + half, state + half * k1)
        k3 = derivative(t + half, state + half * k2)
        k4 = derivative(t + dt, state + dt * k3)
        state = state + sixth * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.all(np.isfinite(state)) or np.linalg.norm(state) > DIVERGENCE_NORM:
            raise DivergedRunError(t + dt)

    ybold_all = record
    g = np.einsum("ij,ij->i", out_z, out_z)
    nu = s.detector_nu
    alarm = (g > nu) if nu is not None else np.zeros(n_steps + 1, dtype=bool)

    premise = None
    if is_replay:
        pre = (times >= atk.t_start - 1.0) & (times < atk.t_start)
        premise = bool(np.max(np.linalg.norm(out_z[pre], axis=1)) < TOL_SS)

    return SimTrace(times=times, x=out_x, xhat=out_xhat, y=out_y, ybold=ybold_all,
                    chan=out_chan, z=out_z, u=out_u, g=g, alarm=alarm,
                    err_norm=out_err, masked=masked, attack=atk, dt=dt,
                    t_settle=s.t_settle, nu=nu, xi=out_xi, xihat=out_xihat,
                    eav_xhat=out_eav,
                    eav_err=(np.linalg.norm(out_x - out_eav, axis=1) if has_eav else None),
                    fdi_phi=out_phi, steady_premise_ok=premise, name=s.name)


def detect(trace: SimTrace, nu: float) -> tuple[np.ndarray, float | None]:
    """Pointwise detector ``z'z > nu`` (strict); returns the alarm series and
    the first-alarm time (None when no alarm)."""
    if nu < 0:
        raise ValueError("nu must be nonnegative")
    alarm = trace.g > nu
    idx = np.flatnonzero(alarm)
    first = float(trace.times[idx[0]]) if idx.size else None
    return alarm, first


def calibrate_threshold(clean: SimTrace, safety: float) -> float:
    """Threshold from an attack-free run: ``safety`` times the post-settle peak
    of the detection statistic, floored at 1e-12 for degenerate traces."""
    if not isinstance(clean.attack, NoAttack):
        raise ValueError("calibration needs an attack-free trace")
    if safety <= 1:
        raise ValueError("safety factor must exceed 1")
    g_max = float(np.max(clean.post_settle(clean.g)))
    return max(safety * g_max, NU_FLOOR)


@dataclass(frozen=True)
class EstimationMetrics:
    terminal_error: float
    sup_error_after_settle: float
    rate: float | None       # fitted exponential decay rate, None when undefined
    r_squared: float | None


def estimation_metrics(trace: SimTrace) -> EstimationMetrics:
    """Terminal/sup estimation error and a log-linear fit of the decay segment."""
    err = trace.err_norm
    terminal = float(err[-1])
    sup_settle = float(np.max(trace.post_settle(err)))
    # Decay segment: from the start until the error first reaches the noise
    # floor (or the settle time), excluding exact zeros.
    floor = 1e-10
    below = np.flatnonzero(err < floor)
    end = int(below[0]) if below.size else int(np.searchsorted(trace.times, trace.t_settle))
    end = max(end, 0)
    sel = err[:end] > 0
    if np.count_nonzero(sel) < 10:
        return EstimationMetrics(terminal, sup_settle, None, None)
    t = trace.times[:end][sel]
    log_e = np.log(err[:end][sel])
    slope, intercept = np.polyfit(t, log_e, 1)
    fit = slope * t + intercept
    ss_res = float(np.sum((log_e - fit) ** 2))
    ss_tot = float(np.sum((log_e - np.mean(log_e)) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else None
    return EstimationMetrics(terminal, sup_settle, float(-slope), r2)


def equilibrium_for(plant: LtiPlant, K, x_ref) -> tuple[np.ndarray, np.ndarray]:
    """Feedforward input and exact closed-loop equilibrium for a reference state.

    ``u_eq`` is the least-squares solution of ``B u = -A x_ref``; the returned
    state solves the closed-loop equilibrium under ``u = u_eq - K (x - x_ref)``
    exactly, so initializing there keeps the innovation at zero.
    """
    K = as_matrix(K, rows=plant.n_u, cols=plant.n_x, name="K")
    x_ref = as_vector(x_ref, size=plant.n_x, name="x_ref")
    u_eq, *_ = np.linalg.lstsq(plant.B, -plant.A @ x_ref, rcond=None)
    A_cl = plant.A - plant.B @ K
    x_star = np.linalg.solve(A_cl, -plant.B @ (u_eq + K @ x_ref))
    return x_star, u_eq
