"""Trajectory certifications: energy balances, regret bounds, recurrence,
divergence-free structure, and phase-volume preservation.

Every check compares two independently computed quantities (an integrated
supply against a stored energy, a simulated sup against a closed-form bound)
and reports residuals with explicit tolerances instead of asserting.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .dynamics import DynamicSpec, has_escort, storage, _convert
from .games import validate_constant_sum, verify_nash, ConstantSumError
from .integrate import (
    IntegratorConfig,
    SystemSpec,
    Trajectory,
    _open_loop_piecewise,
    payoff_from_q,
    reduced_payoff_field,
)

__all__ = [
    "EnergyBalanceReport",
    "ConstantOfMotionReport",
    "RegretReport",
    "RecurrenceReport",
    "VolumeReport",
    "AdversarialSweep",
    "check_energy_balance",
    "check_constant_of_motion",
    "regret_report",
    "lossless_regret_residual",
    "recurrence_report",
    "divergence_residual",
    "volume_drift",
    "box_corners",
    "game_supply_series",
    "adversarial_regret_sweep",
]


# ---------------------------------------------------------------------------
# energy balances
# ---------------------------------------------------------------------------

@dataclass
class EnergyBalanceReport:
    residual: np.ndarray        # L(q(t)) - L(q0) - integrated supply
    max_abs: float
    max_signed: float
    tolerance: float
    verdict: str                # lossless | passive | violated
    shift: np.ndarray

    @property
    def ok(self):
        return self.verdict != "violated"


def _agent_supply(traj: Trajectory, i: int, shift: np.ndarray) -> np.ndarray:
    """Integral of <x_i - shift, p_i>: the collected-payoff quadrature minus
    the exact shift term (q is itself the integral of p)."""
    dq = traj.q[i] - traj.q[i][0]
    return (traj.collected[i] - traj.collected[i][0]) - dq @ shift


def check_energy_balance(
    traj: Trajectory,
    agent: int = 0,
    shift=None,
    tol: float = 1e-6,
    storage_fn: Callable[[np.ndarray], np.ndarray] | None = None,
) -> EnergyBalanceReport:
    """Certify L(q(t)) = L(q0) + integral of <x - shift, p> along a run.

    ``storage_fn`` overrides the canonical energy (useful as a negative
    control). Lossless verdict when the residual stays within +-tol,
    passive when it only stays below +tol.
    """
    dyn = traj.dynamics[agent]
    n = traj.q[agent].shape[1]
    shift = np.zeros(n) if shift is None else np.asarray(shift, dtype=float)
    if storage_fn is None:
        series = np.asarray(storage(dyn, traj.q[agent], shift).value)
    else:
        series = np.asarray([storage_fn(qrow) for qrow in traj.q[agent]])
    residual = (series - series[0]) - _agent_supply(traj, agent, shift)
    max_abs = float(np.abs(residual).max())
    max_signed = float(residual.max())
    if max_abs <= tol:
        verdict = "lossless"
    elif max_signed <= tol:
        verdict = "passive"
    else:
        verdict = "violated"
    return EnergyBalanceReport(residual, max_abs, max_signed, tol, verdict, shift)


@dataclass
class ConstantOfMotionReport:
    series: np.ndarray          # H(t), sum of per-agent storages at the shift
    initial: float
    max_drift: float
    rel_drift: float
    tolerance: float
    ok: bool


def check_constant_of_motion(
    traj: Trajectory,
    shift_profile: Sequence[np.ndarray],
    tol_rel: float = 1e-3,
    nash_tol: float = 1e-9,
    constant_sum_tol: float | None = None,
) -> ConstantOfMotionReport:
    """Total storage against a fully mixed equilibrium shift is conserved.

    The hypotheses are enforced, not assumed: the game must validate as
    constant-sum (``constant_sum_tol`` widens the default for matrices read
    from text), the shift must verify as a fully mixed equilibrium, and
    every agent must be q-state.
    """
    if traj.game is None:
        raise ValueError("constant-of-motion checks need a closed-loop trajectory")
    if any(has_escort(d) for d in traj.dynamics):
        raise ValueError("constant-of-motion checks need q-state agents")
    if constant_sum_tol is None:
        rep = validate_constant_sum(traj.game)
    else:
        rep = validate_constant_sum(traj.game, tol=constant_sum_tol)
    if not rep.ok:
        raise ConstantSumError(
            f"edge pair {rep.pair} violates the constant-sum identity by {rep.violation:g}"
        )
    verdict = verify_nash(traj.game, shift_profile, tol=nash_tol)
    if not verdict.is_nash or not verdict.is_fully_mixed:
        raise ValueError(
            "the shift profile must be a fully mixed Nash equilibrium "
            f"(gaps {verdict.gaps}, fully mixed {verdict.is_fully_mixed})"
        )
    H = np.zeros(len(traj.t))
    for i in range(traj.num_agents):
        H = H + traj.storage_series(i, shift_profile[i])
    drift = float(np.abs(H - H[0]).max())
    rel = drift / max(abs(float(H[0])), 1e-300)
    return ConstantOfMotionReport(H, float(H[0]), drift, rel, tol_rel, rel <= tol_rel)


# ---------------------------------------------------------------------------
# regret
# ---------------------------------------------------------------------------

@dataclass
class RegretReport:
    agent: int
    regret: np.ndarray          # (S,) running max over actions
    per_action: np.ndarray      # (S, n)
    bound: float                # max_j storage at unit shift e_j, at q0
    sup: float
    slack: float                # bound - sup
    tolerance: float
    ok: bool


def regret_report(traj: Trajectory, tol: float = 1e-4) -> list[RegretReport]:
    """Running regret per agent with the storage bound at the initial state."""
    out = []
    for i in range(traj.num_agents):
        per_action = traj.regret_per_action(i)
        running = per_action.max(axis=1)
        if has_escort(traj.dynamics[i]):
            bound = float("nan")
            ok = True
        else:
            n = per_action.shape[1]
            q0 = traj.q[i][0]
            bound = max(
                float(storage(traj.dynamics[i], q0, np.eye(n)[j]).value) for j in range(n)
            )
            ok = bool(running.max() <= bound + tol)
        out.append(
            RegretReport(
                agent=i,
                regret=running,
                per_action=per_action,
                bound=bound,
                sup=float(running.max()),
                slack=bound - float(running.max()),
                tolerance=tol,
                ok=ok,
            )
        )
    return out


def lossless_regret_residual(traj: Trajectory, agent: int = 0) -> float:
    """Max deviation of regret against action j from the storage drop
    L_j(q0) - L_j(q(t)); zero in exact arithmetic for lossless dynamics."""
    dyn = traj.dynamics[agent]
    if has_escort(dyn):
        raise ValueError("the identity needs a q-state dynamic")
    q = traj.q[agent]
    n = q.shape[1]
    worst = 0.0
    for j in range(n):
        Lj = np.asarray(storage(dyn, q, np.eye(n)[j]).value)
        Rj = traj.regret_per_action(agent)[:, j]
        worst = max(worst, float(np.abs(Rj - (Lj[0] - Lj)).max()))
    return worst


# ---------------------------------------------------------------------------
# recurrence
# ---------------------------------------------------------------------------

@dataclass
class RecurrenceReport:
    epsilon: float
    dead_time: float
    distance: np.ndarray            # (S,) Euclidean distance to the start
    events: list[tuple[float, float]]   # (t, distance) strict sampled minima < epsilon
    count: int
    min_distance: float
    stationary: bool


def recurrence_report(traj: Trajectory, epsilon: float, dead_time: float = 1.0) -> RecurrenceReport:
    """Return events of the strategy profile toward its starting point.

    Events are strict local minima of the sampled distance series falling
    below ``epsilon``, ignoring an initial dead-time window so the departure
    itself is never counted. A series that never leaves the epsilon ball is
    flagged stationary and reports no events.
    """
    xh = traj.xhat()
    d = np.linalg.norm(xh - xh[0], axis=1)
    if d.max() < epsilon:
        return RecurrenceReport(epsilon, dead_time, d, [], 0, float(d.max()), True)
    interior = (d[1:-1] < d[:-2]) & (d[1:-1] < d[2:])
    idx = np.nonzero(interior)[0] + 1
    idx = idx[traj.t[idx] >= dead_time]
    events = [(float(traj.t[i]), float(d[i])) for i in idx if d[i] < epsilon]
    considered = d[traj.t >= dead_time]
    min_distance = float(considered.min()) if considered.size else float(d.min())
    return RecurrenceReport(epsilon, dead_time, d, events, len(events), min_distance, False)


# ---------------------------------------------------------------------------
# divergence and volume
# ---------------------------------------------------------------------------

def divergence_residual(
    system: SystemSpec,
    qhat: np.ndarray,
    step: float = 1e-5,
    payoff_fn: Callable[[np.ndarray], np.ndarray] | None = None,
) -> float:
    """Central-difference estimate of sum_ij d p_ij / d q_ij at a point.

    The graphical structure makes each payoff independent of the same
    agent's own state, so the true value is identically zero; the returned
    absolute residual is pure finite-difference noise. ``payoff_fn``
    overrides the map for constructed counterexamples.
    """
    if payoff_fn is None:
        payoff_fn = payoff_from_q(system)
    qhat = np.asarray(qhat, dtype=float)
    N = qhat.shape[-1]
    eye = np.eye(N)
    plus = payoff_fn(qhat[None, :] + step * eye)
    minus = payoff_fn(qhat[None, :] - step * eye)
    diag = (np.diagonal(plus) - np.diagonal(minus)) / (2.0 * step)
    return float(abs(diag.sum()))


def box_corners(center: np.ndarray, edge: float) -> np.ndarray:
    """Affine simplex spanning a small box: the center plus one corner per
    coordinate direction, rows shaped (dim + 1, dim)."""
    center = np.asarray(center, dtype=float)
    D = center.shape[0]
    return np.vstack([center, center + edge * np.eye(D)])


@dataclass
class VolumeReport:
    ratio: float
    drift: float                 # |ratio - 1|
    initial_volume: float
    final_volume: float
    horizon: float
    dt: float


def volume_drift(
    system: SystemSpec,
    corners: np.ndarray,
    cfg: IntegratorConfig,
    extra_field: Callable[[np.ndarray], np.ndarray] | None = None,
) -> VolumeReport:
    """Evolve an affine simplex of reduced states and compare its volume.

    The reduced closed loop is divergence-free, so the exact flow preserves
    volume; the reported drift is linearization plus integrator error and
    has to shrink with the box edge. ``extra_field`` adds a perturbation to
    the right-hand side (a dissipative term makes a negative control).
    """
    corners = np.asarray(corners, dtype=float)
    K, D = corners.shape
    if K != D + 1:
        raise ValueError(f"need dim+1 corners, got {K} for dimension {D}")
    e0 = corners[1:] - corners[0]
    v0 = abs(float(np.linalg.det(e0)))
    if v0 <= 0:
        raise ValueError("initial simplex is degenerate")
    base = reduced_payoff_field(system)
    if extra_field is None:
        rhs = base
    else:
        def rhs(Q):
            return base(Q) + extra_field(Q)
    Q = corners.copy()
    dt = cfg.dt
    for _ in range(cfg.steps):
        k1 = rhs(Q)
        k2 = rhs(Q + (0.5 * dt) * k1)
        k3 = rhs(Q + (0.5 * dt) * k2)
        k4 = rhs(Q + dt * k3)
        Q = Q + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
    vT = abs(float(np.linalg.det(Q[1:] - Q[0])))
    ratio = vT / v0
    return VolumeReport(ratio, abs(ratio - 1.0), v0, vT, cfg.horizon, cfg.dt)


# ---------------------------------------------------------------------------
# game-side supply along a trajectory
# ---------------------------------------------------------------------------

def game_supply_series(traj: Trajectory, shift_profile: Sequence[np.ndarray]) -> np.ndarray:
    """Integral of <x-hat - shift, -p-hat> on the sample grid; identically
    zero when the shift is a fully mixed equilibrium of a constant-sum game."""
    if traj.game is None:
        raise ValueError("needs a closed-loop trajectory")
    out = np.zeros(len(traj.t))
    for i in range(traj.num_agents):
        dq = traj.q[i] - traj.q[i][0]
        out = out + dq @ np.asarray(shift_profile[i], dtype=float)
        out = out - (traj.collected[i] - traj.collected[i][0])
    return out


# ---------------------------------------------------------------------------
# adversarial open-loop sweep
# ---------------------------------------------------------------------------

@dataclass
class AdversarialSweep:
    num_signals: int
    horizon: float
    dt: float
    segment: float
    bound: float
    sup_regret: np.ndarray         # (B,)
    worst_slack: float             # min over signals of bound - sup
    max_identity_residual: float   # regret vs storage-drop identity
    ok: bool = field(init=False)
    tolerance: float = 1e-4

    def __post_init__(self):
        self.ok = bool(self.sup_regret.max() <= self.bound + self.tolerance)


def adversarial_regret_sweep(
    dynamic: DynamicSpec,
    n_actions: int,
    num_signals: int,
    rng: np.random.Generator,
    horizon: float = 50.0,
    dt: float = 1e-3,
    segment: float = 0.5,
    q0: np.ndarray | None = None,
    record_every: float = 0.1,
    tol: float = 1e-4,
) -> AdversarialSweep:
    """Drive one dynamic with a batch of random piecewise-constant payoff
    signals (values uniform in [-1, 1]) and certify the regret bound and the
    regret/storage-drop identity at every recorded sample.

    All signals integrate in lockstep as one batched run; a single-signal
    run through ``simulate_open_loop`` reproduces any row bit-identically.
    """
    if has_escort(dynamic):
        raise ValueError("the sweep needs a q-state dynamic")
    num_segments = int(round(horizon / segment))
    steps_per_seg = int(round(segment / dt))
    if abs(steps_per_seg * dt - segment) > 1e-9 * segment:
        raise ValueError("dt must divide the segment length")
    values = rng.uniform(-1.0, 1.0, size=(num_signals, num_segments, n_actions))
    q0 = np.zeros(n_actions) if q0 is None else np.asarray(q0, dtype=float)
    q0b = np.broadcast_to(q0, (num_signals, n_actions)).copy()
    stride = max(1, int(round(record_every / dt)))
    t, qs, ws, _ = _open_loop_piecewise(
        lambda qq: _convert(dynamic, qq), values, q0b, dt, steps_per_seg, stride,
        total_steps=num_segments * steps_per_seg,
    )
    eye = np.eye(n_actions)
    L = np.stack(
        [np.asarray(storage(dynamic, qs, eye[j]).value) for j in range(n_actions)],
        axis=-1,
    )  # (B, S, n)
    dq = qs - qs[:, :1, :]
    regret_j = dq - ws[..., None]
    residual = float(np.abs(regret_j - (L[:, :1, :] - L)).max())
    sup = regret_j.max(axis=(1, 2))
    bound = float(L[0, 0, :].max())
    return AdversarialSweep(
        num_signals=num_signals,
        horizon=horizon,
        dt=dt,
        segment=segment,
        bound=bound,
        sup_regret=sup,
        worst_slack=float((bound - sup).min()),
        max_identity_residual=residual,
        tolerance=tol,
    )
