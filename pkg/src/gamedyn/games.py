"""Graphical games on agent graphs: payoff evaluation and structural checks.

A game couples m agents through pairwise edge matrices. Agent i receives the
payoff vector  p_i = sum_k A[i,k] @ x_k  over all opponents k. The structural
hypotheses needed by the conservation and recurrence machinery (constant-sum
edges, fully mixed equilibrium) are verified numerically, never assumed.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

__all__ = [
    "GameSpec",
    "GameDimensionError",
    "ConstantSumError",
    "ConstantSumReport",
    "NashVerdict",
    "payoff",
    "payoff_concat",
    "validate_constant_sum",
    "verify_nash",
    "game_operator_supply",
    "rock_paper_scissors",
    "cyclic_matching_pennies",
    "uniform_profile",
    "random_profile",
    "concat_profile",
    "split_profile",
    "game_from_dict",
    "game_to_dict",
    "load_game",
]

CONSTANT_SUM_TOL = 1e-12
SIMPLEX_TOL = 1e-9


class GameDimensionError(ValueError):
    """A strategy or matrix does not match the declared action counts."""

    def __init__(self, message, agents=None):
        super().__init__(message)
        self.agents = agents


class ConstantSumError(ValueError):
    """Raised when an operation requires a validated constant-sum game."""


@dataclass(frozen=True)
class GameSpec:
    """A graphical game: per-agent action counts plus pairwise edge matrices.

    ``edges`` maps ordered agent pairs (i, k), i != k, to matrices of shape
    (n_i, n_k). Pairs without a matrix act as zero matrices, so sparse
    interaction graphs need only list the edges that exist. Instances are
    immutable after construction and safe to share across workers.
    """

    action_counts: tuple[int, ...]
    edges: dict[tuple[int, int], np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        counts = tuple(int(n) for n in self.action_counts)
        if len(counts) < 1 or any(n < 1 for n in counts):
            raise GameDimensionError(f"action counts must be positive, got {counts}")
        object.__setattr__(self, "action_counts", counts)
        clean = {}
        for (i, k), mat in self.edges.items():
            if i == k:
                raise GameDimensionError(f"self edge ({i},{i}) is not allowed", agents=(i, k))
            if not (0 <= i < len(counts) and 0 <= k < len(counts)):
                raise GameDimensionError(f"edge ({i},{k}) references unknown agents", agents=(i, k))
            arr = np.asarray(mat, dtype=float)
            want = (counts[i], counts[k])
            if arr.shape != want:
                raise GameDimensionError(
                    f"edge ({i},{k}) matrix has shape {arr.shape}, expected {want}",
                    agents=(i, k),
                )
            arr = arr.copy()
            arr.setflags(write=False)
            clean[(i, k)] = arr
        object.__setattr__(self, "edges", clean)

        offsets = np.concatenate([[0], np.cumsum(counts)])
        object.__setattr__(self, "_offsets", offsets)
        total = int(offsets[-1])
        block = np.zeros((total, total))
        m = len(counts)
        for i in range(m):
            for k in range(m):
                if i != k and (i, k) in clean:
                    block[offsets[i]:offsets[i + 1], offsets[k]:offsets[k + 1]] = clean[(i, k)]
        block.setflags(write=False)
        object.__setattr__(self, "_block", block)

    @property
    def num_agents(self):
        return len(self.action_counts)

    @property
    def total_actions(self):
        return int(self._offsets[-1])

    def slice_of(self, i):
        return slice(int(self._offsets[i]), int(self._offsets[i + 1]))

    def matrix(self, i, k):
        """Edge matrix A[i,k]; zero matrix when the pair is absent."""
        if (i, k) in self.edges:
            return self.edges[(i, k)]
        return np.zeros((self.action_counts[i], self.action_counts[k]))

    def block_matrix(self):
        """All edge matrices assembled into one (N, N) map from x-hat to p-hat."""
        return self._block


def concat_profile(profile: Sequence[np.ndarray]) -> np.ndarray:
    return np.concatenate([np.asarray(x, dtype=float) for x in profile], axis=-1)


def split_profile(game: GameSpec, vec: np.ndarray) -> list[np.ndarray]:
    return [vec[..., game.slice_of(i)] for i in range(game.num_agents)]


def _check_profile(game, profile, tol=SIMPLEX_TOL):
    if len(profile) != game.num_agents:
        raise GameDimensionError(
            f"profile has {len(profile)} agents, game has {game.num_agents}"
        )
    for i, x in enumerate(profile):
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != game.action_counts[i]:
            raise GameDimensionError(
                f"agent {i} strategy has {x.shape[-1]} entries, "
                f"expected {game.action_counts[i]}",
                agents=(i,),
            )
        if np.any(x < -tol) or np.any(np.abs(x.sum(axis=-1) - 1.0) > tol):
            raise ValueError(f"agent {i} strategy is not on the probability simplex")


def payoff(game: GameSpec, profile: Sequence[np.ndarray]) -> list[np.ndarray]:
    """Per-agent payoff vectors p_i = sum_{k != i} A[i,k] @ x_k."""
    _check_profile(game, profile)
    phat = payoff_concat(game, concat_profile(profile))
    return split_profile(game, phat)


def payoff_concat(game: GameSpec, xhat: np.ndarray) -> np.ndarray:
    """Payoff map on concatenated strategies; broadcasts over leading axes."""
    return xhat @ game.block_matrix().T


@dataclass(frozen=True)
class ConstantSumReport:
    ok: bool
    constants: dict[tuple[int, int], float]
    violation: float = 0.0
    pair: tuple[int, int] | None = None
    entry: tuple[int, int] | None = None

    def __bool__(self):
        return self.ok


def validate_constant_sum(game: GameSpec, tol: float = CONSTANT_SUM_TOL) -> ConstantSumReport:
    """Check A[i,k][j,l] + A[k,i][l,j] = c for every unordered pair {i,k}.

    On success the report carries the pair constants c. On failure it carries
    the spread max-min of the paired sums of the worst pair and the 1-based
    entry attaining the largest deviation from the midpoint constant.
    """
    constants = {}
    m = game.num_agents
    for i in range(m):
        for k in range(i + 1, m):
            if (i, k) not in game.edges and (k, i) not in game.edges:
                constants[(i, k)] = 0.0
                continue
            sums = game.matrix(i, k) + game.matrix(k, i).T
            lo, hi = sums.min(), sums.max()
            c = 0.5 * (lo + hi)
            if hi - lo > 2 * tol:
                j, l = np.unravel_index(np.abs(sums - c).argmax(), sums.shape)
                return ConstantSumReport(
                    ok=False,
                    constants=constants,
                    violation=float(hi - lo),
                    pair=(i, k),
                    entry=(int(j) + 1, int(l) + 1),
                )
            constants[(i, k)] = float(c)
    return ConstantSumReport(ok=True, constants=constants)


@dataclass(frozen=True)
class NashVerdict:
    is_nash: bool
    is_fully_mixed: bool
    gaps: np.ndarray  # per-agent best-response gap

    def __bool__(self):
        return self.is_nash


def verify_nash(game: GameSpec, candidate: Sequence[np.ndarray], tol: float = 1e-9) -> NashVerdict:
    """Deviation-gap test: max_j p_i[j] - <x_i, p_i> <= tol for every agent."""
    _check_profile(game, candidate)
    pays = payoff(game, candidate)
    gaps = np.array([
        float(p.max() - x @ p) for x, p in zip(candidate, pays)
    ])
    fully_mixed = all(np.all(np.asarray(x) > 0) for x in candidate)
    return NashVerdict(is_nash=bool(np.all(gaps <= tol)), is_fully_mixed=fully_mixed, gaps=gaps)


def game_operator_supply(
    game: GameSpec,
    profile: Sequence[np.ndarray] | np.ndarray,
    shift: Sequence[np.ndarray] | np.ndarray,
    tol: float = CONSTANT_SUM_TOL,
):
    """Instantaneous supply rate <x-hat - shift, -p-hat(x-hat)> of the game side.

    Zero for every profile when the shift is a fully mixed Nash equilibrium of
    a constant-sum game, nonnegative when the shift is any Nash equilibrium.
    Accepts batched concatenated profiles with leading axes.
    """
    report = validate_constant_sum(game, tol)
    if not report.ok:
        raise ConstantSumError(
            f"edge pair {report.pair} violates the constant-sum identity by "
            f"{report.violation:g} at entry {report.entry}"
        )
    xhat = profile if isinstance(profile, np.ndarray) else concat_profile(profile)
    shat = shift if isinstance(shift, np.ndarray) else concat_profile(shift)
    phat = payoff_concat(game, xhat)
    return -((xhat - shat) * phat).sum(axis=-1)


# ---------------------------------------------------------------------------
# built-in games
# ---------------------------------------------------------------------------

def rock_paper_scissors(win: float = 1.0, loss: float = 1.0) -> GameSpec:
    """Two-agent zero-sum rock-paper-scissors.

    The default is the classical 0/+-1 form. Asymmetric stakes (win != loss)
    keep the game zero-sum with the uniform profile as fully mixed
    equilibrium; they change the orbit frequencies, which matters for
    recurrence experiments on finite horizons.
    """
    a = np.array([
        [0.0, -loss, win],
        [win, 0.0, -loss],
        [-loss, win, 0.0],
    ])
    return GameSpec((3, 3), {(0, 1): a, (1, 0): -a.T})


def cyclic_matching_pennies() -> GameSpec:
    """Three agents, two actions, matching-pennies edges around a cycle."""
    eye = np.eye(2)
    return GameSpec(
        (2, 2, 2),
        {
            (0, 1): eye, (1, 2): eye, (2, 0): eye,
            (1, 0): -eye, (2, 1): -eye, (0, 2): -eye,
        },
    )


def uniform_profile(game: GameSpec) -> list[np.ndarray]:
    return [np.full(n, 1.0 / n) for n in game.action_counts]


def random_profile(game: GameSpec, rng: np.random.Generator, batch: int | None = None):
    """Dirichlet(1) strategies for every agent; batched when ``batch`` is set."""
    size = None if batch is None else batch
    return [rng.dirichlet(np.ones(n), size=size) for n in game.action_counts]


# ---------------------------------------------------------------------------
# JSON wire format
# ---------------------------------------------------------------------------

def game_to_dict(game: GameSpec) -> dict:
    return {
        "action_counts": list(game.action_counts),
        "edges": [
            {"from": i, "to": k, "matrix": game.edges[(i, k)].tolist()}
            for (i, k) in sorted(game.edges)
        ],
    }


def game_from_dict(obj: dict) -> GameSpec:
    """Build a game from {"action_counts": [...], "edges": [{from,to,matrix}]}.

    Matrices are row-major; absent pairs default to zero matrices.
    """
    if "action_counts" not in obj:
        raise GameDimensionError("game object lacks 'action_counts'")
    edges = {}
    for e in obj.get("edges", []):
        key = (int(e["from"]), int(e["to"]))
        if key in edges:
            raise GameDimensionError(f"duplicate edge {key}", agents=key)
        edges[key] = np.asarray(e["matrix"], dtype=float)
    return GameSpec(tuple(int(n) for n in obj["action_counts"]), edges)


def load_game(path) -> GameSpec:
    with open(path) as fh:
        return game_from_dict(json.load(fh))
