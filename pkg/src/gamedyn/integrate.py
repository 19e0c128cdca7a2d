"""Fixed-step RK4 integration of the coupled game/learning feedback loop.

Two closed-loop state styles coexist: q-state agents advance cumulative
payoffs and emit strategies through their conversion map, escort agents
advance strategies directly and halt if they reach the simplex boundary.
Open-loop integration drives a single learning operator with an external
payoff signal, which is how the regret and energy-balance certifications
exercise adversarial inputs.

Running payoff integrals are carried inside the RK4 state (an extra
quadrature variable per agent), so they share the integrator's fourth-order
accuracy instead of being post-processed from the sample grid.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .dynamics import (
    DynamicSpec,
    EscortLeaf,
    FtrlLeaf,
    Entropy,
    HalfL2,
    _convert,
    escort_derivative,
    has_escort,
    invert_convert,
    storage,
)
from .games import GameSpec, GameDimensionError

__all__ = [
    "IntegratorConfig",
    "AgentSpec",
    "SystemSpec",
    "Trajectory",
    "PiecewiseConstantSignal",
    "simulate",
    "simulate_open_loop",
    "reduce_coordinates",
    "embed_coordinates",
    "payoff_from_q",
    "reduced_payoff_field",
]

ESCORT_GUARD = 1e-12


@dataclass(frozen=True)
class IntegratorConfig:
    dt: float
    horizon: float
    record_stride: int = 1

    def __post_init__(self):
        if not (self.dt > 0):
            raise ValueError("dt must be positive")
        # a zero horizon is allowed and records only the initial sample
        if self.horizon != 0.0 and self.dt > self.horizon:
            raise ValueError("dt must not exceed the horizon")
        if self.record_stride < 1:
            raise ValueError("record_stride must be at least 1")

    @property
    def steps(self):
        return int(round(self.horizon / self.dt))


@dataclass(frozen=True)
class AgentSpec:
    """One agent: a dynamic plus exactly one initial-condition style.

    q-state dynamics take ``q0`` directly or resolve it from a desired
    interior strategy ``x0`` (closed form for entropy and half-L2, convex
    inversion otherwise). Escort dynamics require an interior ``x0``.
    """

    dynamic: DynamicSpec
    q0: np.ndarray | None = None
    x0: np.ndarray | None = None

    def __post_init__(self):
        if (self.q0 is None) == (self.x0 is None):
            raise ValueError("give exactly one of q0, x0 per agent")
        for name in ("q0", "x0"):
            v = getattr(self, name)
            if v is not None:
                object.__setattr__(self, name, np.asarray(v, dtype=float))


@dataclass(frozen=True)
class SystemSpec:
    game: GameSpec
    agents: tuple[AgentSpec, ...]

    def __post_init__(self):
        object.__setattr__(self, "agents", tuple(self.agents))
        if len(self.agents) != self.game.num_agents:
            raise GameDimensionError(
                f"{len(self.agents)} agent specs for a {self.game.num_agents}-agent game"
            )
        q0, x0, is_escort = [], [], []
        for i, (spec, n) in enumerate(zip(self.agents, self.game.action_counts)):
            esc = has_escort(spec.dynamic)
            is_escort.append(esc)
            given = spec.q0 if spec.q0 is not None else spec.x0
            if given.shape != (n,):
                raise GameDimensionError(
                    f"agent {i} initial vector has shape {given.shape}, expected ({n},)",
                    agents=(i,),
                )
            if esc:
                if not isinstance(spec.dynamic, EscortLeaf):
                    # combinations are defined through conversion maps, which
                    # escort dynamics do not have
                    raise ValueError(
                        f"agent {i}: escort dynamics cannot appear inside combinations"
                    )
                if spec.x0 is None:
                    raise ValueError(f"agent {i}: escort dynamics need an interior x0")
                if np.any(spec.x0 <= ESCORT_GUARD) or abs(spec.x0.sum() - 1.0) > 1e-9:
                    raise ValueError(f"agent {i}: escort x0 must be strictly interior")
                x0.append(spec.x0.copy())
                q0.append(None)
            else:
                if spec.q0 is not None:
                    q = spec.q0.copy()
                elif isinstance(spec.dynamic, FtrlLeaf) and isinstance(spec.dynamic.regularizer, Entropy):
                    q = np.log(spec.x0)
                elif isinstance(spec.dynamic, FtrlLeaf) and isinstance(spec.dynamic.regularizer, HalfL2):
                    q = spec.x0.copy()
                else:
                    q = invert_convert(spec.dynamic, spec.x0)
                q0.append(q)
                x0.append(None)
        object.__setattr__(self, "_q0", tuple(q0))
        object.__setattr__(self, "_x0", tuple(x0))
        object.__setattr__(self, "_is_escort", tuple(is_escort))

    @property
    def dynamics(self):
        return tuple(a.dynamic for a in self.agents)

    @property
    def all_q_state(self):
        return not any(self._is_escort)

    def initial_q(self, i):
        return self._q0[i]


@dataclass
class Trajectory:
    """Sampled closed- or open-loop run.

    ``q`` holds cumulative payoffs per agent (for escort agents these are
    auxiliary integrals started at zero, carried so regret is still
    well-defined). ``collected`` is the running integral of <x_i, p_i>.
    """

    t: np.ndarray
    q: list[np.ndarray]
    x: list[np.ndarray]
    p: list[np.ndarray]
    collected: list[np.ndarray]
    dynamics: tuple[DynamicSpec, ...]
    config: IntegratorConfig
    game: GameSpec | None = None
    reduced: bool = False
    boundary_hit: bool = False

    @property
    def num_agents(self):
        return len(self.x)

    def xhat(self):
        return np.concatenate(self.x, axis=1)

    def action_payoff_integrals(self, i):
        """Per-action cumulative payoff sum_0^t p_j, exact from the ODE state."""
        if self.reduced:
            raise ValueError("per-action integrals are not available in reduced coordinates")
        return self.q[i] - self.q[i][0]

    def regret_per_action(self, i):
        return self.action_payoff_integrals(i) - self.collected[i][:, None]

    def regret(self, i):
        """Gap to the best fixed action in hindsight, per sample."""
        return self.regret_per_action(i).max(axis=1)

    def storage_series(self, i, shift):
        if has_escort(self.dynamics[i]):
            raise ValueError("escort agents carry no q state, storage is undefined")
        return np.asarray(storage(self.dynamics[i], self.q[i], shift).value)

    def write_csv(self, path, shifts=None):
        """Delimited export: t, q, x, p columns per agent.action, then per-agent
        storage (at the given shifts, zero by default) and running regret.
        Floats carry 17 significant digits so re-runs compare bit-identically.
        """
        cols = ["t"]
        series = [self.t]
        for label, block in (("q", self.q), ("x", self.x), ("p", self.p)):
            for i, arr in enumerate(block):
                for j in range(arr.shape[1]):
                    cols.append(f"{label}[{i + 1}.{j + 1}]")
                    series.append(arr[:, j])
        for i in range(self.num_agents):
            cols.append(f"storage[{i + 1}]")
            if has_escort(self.dynamics[i]):
                series.append(np.full_like(self.t, np.nan))
            else:
                sh = np.zeros(self.q[i].shape[1]) if shifts is None else np.asarray(shifts[i])
                series.append(self.storage_series(i, sh))
        for i in range(self.num_agents):
            cols.append(f"regret[{i + 1}]")
            if self.reduced:
                series.append(np.full_like(self.t, np.nan))
            else:
                series.append(self.regret(i))
        with open(path, "w") as fh:
            fh.write(",".join(cols) + "\n")
            for row in zip(*series):
                fh.write(",".join(f"{v:.17g}" for v in row) + "\n")


# ---------------------------------------------------------------------------
# coordinate reduction
# ---------------------------------------------------------------------------

def reduce_coordinates(qs: Sequence[np.ndarray]) -> list[np.ndarray]:
    """Per-agent (q_1 - q_n, ..., q_{n-1} - q_n), removing the shared-offset
    direction so orbits live in a space where boundedness is meaningful."""
    return [np.asarray(q)[..., :-1] - np.asarray(q)[..., -1:] for q in qs]


def embed_coordinates(qrs: Sequence[np.ndarray]) -> list[np.ndarray]:
    """Inverse embedding: append a zero last coordinate per agent."""
    out = []
    for qr in qrs:
        qr = np.asarray(qr, dtype=float)
        pad = np.zeros(qr.shape[:-1] + (1,))
        out.append(np.concatenate([qr, pad], axis=-1))
    return out


def payoff_from_q(system: SystemSpec) -> Callable[[np.ndarray], np.ndarray]:
    """Map from concatenated cumulative payoffs to concatenated payoffs.

    Requires every agent to be q-state. Broadcasts over leading axes; used
    by the divergence and volume certifications.
    """
    if not system.all_q_state:
        raise ValueError("payoff_from_q needs q-state dynamics for every agent")
    game = system.game
    dyns = system.dynamics
    block_t = game.block_matrix().T

    def phat(qhat):
        qhat = np.asarray(qhat, dtype=float)
        xs = [
            _convert(dyns[i], qhat[..., game.slice_of(i)])
            for i in range(game.num_agents)
        ]
        return np.concatenate(xs, axis=-1) @ block_t

    return phat


def reduced_payoff_field(system: SystemSpec) -> Callable[[np.ndarray], np.ndarray]:
    """Right-hand side of the reduced closed loop, batched over leading axes."""
    if not system.all_q_state:
        raise ValueError("reduced coordinates need q-state dynamics for every agent")
    game = system.game
    dyns = system.dynamics
    counts = game.action_counts
    block_t = game.block_matrix().T
    roff = np.concatenate([[0], np.cumsum([n - 1 for n in counts])])

    def rhs(qr):
        qr = np.asarray(qr, dtype=float)
        xs = []
        for i, n in enumerate(counts):
            blk = qr[..., roff[i]:roff[i + 1]]
            pad = np.zeros(blk.shape[:-1] + (1,))
            xs.append(_convert(dyns[i], np.concatenate([blk, pad], axis=-1)))
        phat = np.concatenate(xs, axis=-1) @ block_t
        outs = []
        for i in range(len(counts)):
            pi = phat[..., game.slice_of(i)]
            outs.append(pi[..., :-1] - pi[..., -1:])
        return np.concatenate(outs, axis=-1)

    return rhs


# ---------------------------------------------------------------------------
# closed loop
# ---------------------------------------------------------------------------

class _ClosedLoopOde:
    """Flat-state RK4 system: agent blocks, then escort aux integrals, then
    one collected-payoff quadrature variable per agent."""

    def __init__(self, system: SystemSpec, reduced: bool):
        if reduced and not system.all_q_state:
            raise ValueError("reduced integration supports q-state agents only")
        self.system = system
        self.reduced = reduced
        game = system.game
        m = game.num_agents
        self.counts = game.action_counts
        self.block_t = game.block_matrix().T
        sizes = []
        for i, n in enumerate(self.counts):
            if system._is_escort[i]:
                sizes.append(n)
            else:
                sizes.append(n - 1 if reduced else n)
        self.main = []
        off = 0
        for s in sizes:
            self.main.append(slice(off, off + s))
            off += s
        self.aux = []
        for i, n in enumerate(self.counts):
            if system._is_escort[i]:
                self.aux.append(slice(off, off + n))
                off += n
            else:
                self.aux.append(None)
        self.w = slice(off, off + m)
        self.size = off + m
        # identical q-state agents convert as one batched call per stage
        self.uniform = (
            system.all_q_state
            and len(set(self.counts)) == 1
            and all(d == system.dynamics[0] for d in system.dynamics)
        )
        self.n0 = self.counts[0]

    def initial_state(self):
        y = np.zeros(self.size)
        for i in range(len(self.counts)):
            if self.system._is_escort[i]:
                y[self.main[i]] = self.system._x0[i]
            else:
                q = self.system.initial_q(i)
                y[self.main[i]] = (q[:-1] - q[-1]) if self.reduced else q
        return y

    def strategies(self, y):
        xs = []
        for i, n in enumerate(self.counts):
            blk = y[self.main[i]]
            if self.system._is_escort[i]:
                xs.append(np.clip(blk, 1e-300, None))
            elif self.reduced:
                xs.append(_convert(self.system.dynamics[i], np.concatenate([blk, [0.0]])))
            else:
                xs.append(_convert(self.system.dynamics[i], blk))
        return xs

    def rhs(self, y):
        m, n = len(self.counts), self.n0
        if self.uniform:
            if self.reduced:
                blocks = y[: m * (n - 1)].reshape(m, n - 1)
                Q = np.concatenate([blocks, np.zeros((m, 1))], axis=1)
            else:
                Q = y[: m * n].reshape(m, n)
            X = _convert(self.system.dynamics[0], Q)
            xhat = X.ravel()
            phat = xhat @ self.block_t
            P = phat.reshape(m, n)
            dy = np.empty(self.size)
            if self.reduced:
                dy[: m * (n - 1)] = (P[:, :-1] - P[:, -1:]).ravel()
            else:
                dy[: m * n] = phat
            dy[self.w] = (X * P).sum(axis=1)
            return dy, xhat, phat
        xs = self.strategies(y)
        xhat = np.concatenate(xs)
        phat = xhat @ self.block_t
        dy = np.empty(self.size)
        game = self.system.game
        for i in range(len(self.counts)):
            pi = phat[game.slice_of(i)]
            if self.system._is_escort[i]:
                dy[self.main[i]] = escort_derivative(self.system.dynamics[i], xs[i], pi)
                dy[self.aux[i]] = pi
            elif self.reduced:
                dy[self.main[i]] = pi[:-1] - pi[-1]
            else:
                dy[self.main[i]] = pi
            dy[self.w.start + i] = xs[i] @ pi
        return dy, xhat, phat

    def escort_ok(self, y):
        for i in range(len(self.counts)):
            if self.system._is_escort[i] and np.any(y[self.main[i]] < ESCORT_GUARD):
                return False
        return True


def simulate(system: SystemSpec, cfg: IntegratorConfig, reduced: bool = False) -> Trajectory:
    """Integrate the feedback loop with zero external perturbation.

    The run is a pure function of (system, cfg): repeated calls produce
    bit-identical trajectories. If an escort agent reaches the guard band
    around the simplex boundary the trajectory is truncated at the last
    valid sample and flagged.
    """
    ode = _ClosedLoopOde(system, reduced)
    y = ode.initial_state()
    dt, steps, stride = cfg.dt, cfg.steps, cfg.record_stride

    rec_t, rec_y, rec_x, rec_p = [], [], [], []
    boundary_hit = False
    for step in range(steps + 1):
        k1, xhat, phat = ode.rhs(y)
        if step % stride == 0 or step == steps:
            rec_t.append(step * dt)
            rec_y.append(y.copy())
            rec_x.append(xhat)
            rec_p.append(phat)
        if step == steps:
            break
        k2 = ode.rhs(y + (0.5 * dt) * k1)[0]
        k3 = ode.rhs(y + (0.5 * dt) * k2)[0]
        k4 = ode.rhs(y + dt * k3)[0]
        y_next = y + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not ode.escort_ok(y_next):
            boundary_hit = True
            break
        y = y_next

    t = np.array(rec_t)
    ys = np.array(rec_y)
    xh = np.array(rec_x)
    ph = np.array(rec_p)
    game = system.game
    q, x, p, collected = [], [], [], []
    for i in range(game.num_agents):
        sl = game.slice_of(i)
        x.append(xh[:, sl])
        p.append(ph[:, sl])
        if system._is_escort[i]:
            q.append(ys[:, ode.aux[i]])
        elif reduced:
            q.append(np.concatenate([ys[:, ode.main[i]], np.zeros((len(t), 1))], axis=1))
        else:
            q.append(ys[:, ode.main[i]])
        collected.append(ys[:, ode.w.start + i])
    return Trajectory(
        t=t, q=q, x=x, p=p, collected=collected,
        dynamics=system.dynamics, config=cfg, game=game,
        reduced=reduced, boundary_hit=boundary_hit,
    )


# ---------------------------------------------------------------------------
# open loop
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PiecewiseConstantSignal:
    """Payoff signal holding each row of ``values`` on consecutive intervals
    of length ``segment``; constant at the last value beyond the end."""

    values: np.ndarray  # (num_segments, n)
    segment: float

    def __post_init__(self):
        object.__setattr__(self, "values", np.asarray(self.values, dtype=float))
        if self.values.ndim != 2:
            raise ValueError("values must have shape (num_segments, n)")
        if not self.segment > 0:
            raise ValueError("segment length must be positive")

    def __call__(self, t):
        idx = min(int(t / self.segment), len(self.values) - 1)
        return self.values[idx]


def _open_loop_piecewise(convert_fn, values, q0, dt, steps_per_seg, stride, total_steps=None):
    """Shared batched core for piecewise-constant signals.

    values: (B, S, n); q0: (B, n). Within a segment the payoff is constant,
    so the q-path is exactly linear and the collected-payoff quadrature
    reduces RK4 to Simpson weights on <x(q), p>.
    """
    B, S, n = values.shape
    if total_steps is None:
        total_steps = S * steps_per_seg
    q = q0.copy()
    w = np.zeros(B)
    rec_q, rec_w, rec_t, rec_p = [q.copy()], [w.copy()], [0.0], [values[:, 0, :].copy()]
    step_count = 0
    for s in range(S):
        p = values[:, s, :]
        for _ in range(steps_per_seg):
            k1 = (p * convert_fn(q)).sum(axis=-1)
            k2 = (p * convert_fn(q + (0.5 * dt) * p)).sum(axis=-1)
            k4 = (p * convert_fn(q + dt * p)).sum(axis=-1)
            w = w + (dt / 6.0) * (k1 + 4.0 * k2 + k4)
            q = q + dt * p
            step_count += 1
            if step_count % stride == 0 or step_count == total_steps:
                rec_q.append(q.copy())
                rec_w.append(w.copy())
                rec_t.append(step_count * dt)
                nxt = min(s if step_count % steps_per_seg else s + 1, S - 1)
                rec_p.append(values[:, nxt, :].copy())
            if step_count == total_steps:
                break
        if step_count == total_steps:
            break
    t = np.array(rec_t)
    uniq = np.concatenate([[True], np.diff(t) > 0])
    t = t[uniq]
    qs = np.array(rec_q)[uniq]
    ws = np.array(rec_w)[uniq]
    ps = np.array(rec_p)[uniq]
    return t, qs.swapaxes(0, 1), ws.swapaxes(0, 1), ps.swapaxes(0, 1)


def simulate_open_loop(
    dynamic: DynamicSpec,
    payoff_signal: Callable[[float], np.ndarray] | PiecewiseConstantSignal,
    q0: np.ndarray,
    cfg: IntegratorConfig,
) -> Trajectory:
    """Drive one q-state learning operator with an external payoff signal.

    Piecewise-constant signals are integrated segment-aligned (the step size
    must divide the segment length), which keeps the payoff integral free of
    sampling error at the jumps. Arbitrary callables are integrated with
    stage-time evaluation and should be smooth for full accuracy.
    """
    if has_escort(dynamic):
        raise ValueError("open-loop integration is defined for q-state dynamics")
    q0 = np.asarray(q0, dtype=float)
    n = q0.shape[-1]
    dt, steps, stride = cfg.dt, cfg.steps, cfg.record_stride

    if isinstance(payoff_signal, PiecewiseConstantSignal):
        per = payoff_signal.segment / dt
        if abs(per - round(per)) > 1e-9 or round(per) < 1:
            raise ValueError("dt must divide the signal segment length")
        per = int(round(per))
        total_segments = int(np.ceil(steps / per))
        vals = payoff_signal.values
        if total_segments > len(vals):
            vals = np.concatenate(
                [vals, np.repeat(vals[-1:], total_segments - len(vals), axis=0)], axis=0
            )
        vals = vals[:total_segments][None, ...]
        t, qs, ws, ps = _open_loop_piecewise(
            lambda qq: _convert(dynamic, qq), vals, q0[None, :], dt, per, stride,
            total_steps=steps,
        )
        q, w, p = qs[0], ws[0], ps[0]
        x = _convert(dynamic, q)
    else:
        q = q0.copy()
        w = 0.0
        rec = []
        for step in range(steps + 1):
            tcur = step * dt
            if step % stride == 0 or step == steps:
                rec.append((tcur, q.copy(), w))
            if step == steps:
                break

            def rhs(qv, tv):
                pv = np.asarray(payoff_signal(tv), dtype=float)
                return pv, pv @ _convert(dynamic, qv)

            p1, dw1 = rhs(q, tcur)
            p2, dw2 = rhs(q + (0.5 * dt) * p1, tcur + 0.5 * dt)
            p3, dw3 = rhs(q + (0.5 * dt) * p2, tcur + 0.5 * dt)
            p4, dw4 = rhs(q + dt * p3, tcur + dt)
            q = q + (dt / 6.0) * (p1 + 2 * p2 + 2 * p3 + p4)
            w = w + (dt / 6.0) * (dw1 + 2 * dw2 + 2 * dw3 + dw4)
        t = np.array([r[0] for r in rec])
        q = np.array([r[1] for r in rec])
        w = np.array([r[2] for r in rec])
        x = _convert(dynamic, q)
        p = np.array([np.asarray(payoff_signal(tv), dtype=float) for tv in t])

    return Trajectory(
        t=t, q=[q], x=[x], p=[p], collected=[np.asarray(w)],
        dynamics=(dynamic,), config=cfg, game=None,
    )
