"""Learning dynamics as maps from cumulative payoffs to simplex strategies.

A dynamic is a tree: regularized-leader leaves (entropy, half squared norm,
or a custom separable regularizer), escort leaves (interior ODEs on the
simplex), and convex-combination nodes that average the children's outputs.
Every q-state dynamic carries an energy function whose gradient is exactly
the strategy map; ``storage`` evaluates that energy against a shift vector,
which is the bookkeeping the conservation and regret checks consume.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence, Union

import numpy as np

__all__ = [
    "Entropy",
    "HalfL2",
    "SeparablePart",
    "SeparableCustom",
    "FtrlLeaf",
    "EscortLeaf",
    "Combination",
    "DynamicSpec",
    "StorageValue",
    "entropy",
    "half_l2",
    "mix",
    "escort",
    "escort_function",
    "convert",
    "storage",
    "storage_gradient",
    "zero_shift_energy",
    "regularizer_value",
    "escort_derivative",
    "escort_to_ftrl",
    "invert_convert",
    "project_simplex",
    "softmax",
    "has_escort",
    "dynamic_from_config",
    "dynamic_to_config",
]

WEIGHT_TOL = 1e-12
_BISECT_TOL = 1e-13


# ---------------------------------------------------------------------------
# regularizers
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Entropy:
    """h(x) = sum x_j log x_j; the strategy map is the logit choice."""


@dataclass(frozen=True)
class HalfL2:
    """h(x) = 1/2 sum x_j^2; the strategy map is Euclidean simplex projection."""


@dataclass(frozen=True)
class SeparablePart:
    """One coordinate of a separable regularizer.

    ``value``, ``deriv`` and ``deriv_inv`` must be vectorized over numpy
    arrays and reentrant. ``deriv_inv`` extends the inverse of ``deriv``
    to the whole real line by clipping into [0, 1].
    """

    value: Callable[[np.ndarray], np.ndarray]
    deriv: Callable[[np.ndarray], np.ndarray]
    deriv_inv: Callable[[np.ndarray], np.ndarray]
    name: str = "custom"


@dataclass(frozen=True)
class SeparableCustom:
    parts: tuple[SeparablePart, ...]

    def __post_init__(self):
        object.__setattr__(self, "parts", tuple(self.parts))
        # strict convexity spot check: the derivative must increase on (0,1)
        probes = np.linspace(0.05, 0.95, 7)
        for j, part in enumerate(self.parts):
            dv = np.asarray(part.deriv(probes), dtype=float)
            if np.any(np.diff(dv) <= 0):
                raise ValueError(
                    f"separable part {j} ({part.name}) is not strictly convex "
                    "on sampled interior points"
                )


Regularizer = Union[Entropy, HalfL2, SeparableCustom]


# ---------------------------------------------------------------------------
# dynamic tree
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FtrlLeaf:
    regularizer: Regularizer


@dataclass(frozen=True)
class EscortLeaf:
    """Escort field x_j' = phi_j(x_j) * (p_j - weighted mean of p)."""

    phis: tuple["EscortFunction", ...]


@dataclass(frozen=True)
class Combination:
    weights: tuple[float, ...]
    children: tuple["DynamicSpec", ...]

    def __post_init__(self):
        w = tuple(float(v) for v in self.weights)
        if len(w) != len(self.children) or len(w) == 0:
            raise ValueError("combination needs one weight per child")
        if any(v <= 0 for v in w):
            raise ValueError(f"combination weights must be strictly positive, got {w}")
        if abs(sum(w) - 1.0) > WEIGHT_TOL:
            raise ValueError(f"combination weights must sum to 1, got sum {sum(w)!r}")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "children", tuple(self.children))
        widths = {n for n in (_intrinsic_width(c) for c in self.children) if n is not None}
        if len(widths) > 1:
            raise ValueError(f"combination children disagree on the action count: {sorted(widths)}")


def _intrinsic_width(dynamic):
    """Action count a node is pinned to, or None for count-agnostic leaves."""
    if isinstance(dynamic, EscortLeaf):
        return len(dynamic.phis)
    if isinstance(dynamic, FtrlLeaf) and isinstance(dynamic.regularizer, SeparableCustom):
        return len(dynamic.regularizer.parts)
    if isinstance(dynamic, Combination):
        for c in dynamic.children:
            n = _intrinsic_width(c)
            if n is not None:
                return n
    return None


DynamicSpec = Union[FtrlLeaf, EscortLeaf, Combination]


@dataclass(frozen=True)
class EscortFunction:
    name: str
    fn: Callable[[np.ndarray], np.ndarray]

    def __call__(self, x):
        return self.fn(x)


def entropy() -> FtrlLeaf:
    return FtrlLeaf(Entropy())


def half_l2() -> FtrlLeaf:
    return FtrlLeaf(HalfL2())


def mix(*pairs: tuple[float, DynamicSpec]) -> Combination:
    """Convex combination node from (weight, child) pairs."""
    return Combination(tuple(w for w, _ in pairs), tuple(c for _, c in pairs))


def escort_function(name: str) -> EscortFunction:
    """Built-in escort families: 'identity', 'constant', 'power:k'."""
    if name == "identity":
        return EscortFunction("identity", lambda x: np.asarray(x, dtype=float))
    if name == "constant":
        return EscortFunction("constant", lambda x: np.ones_like(np.asarray(x, dtype=float)))
    if name.startswith("power:"):
        k = float(name.split(":", 1)[1])
        return EscortFunction(name, lambda x, _k=k: np.asarray(x, dtype=float) ** _k)
    raise ValueError(f"unknown escort function family {name!r}")


def escort(names: str | Sequence[str], n: int | None = None) -> EscortLeaf:
    if isinstance(names, str):
        if n is None:
            raise ValueError("escort(name) with a single family needs the action count n")
        names = [names] * n
    return EscortLeaf(tuple(escort_function(s) for s in names))


def has_escort(dynamic: DynamicSpec) -> bool:
    if isinstance(dynamic, EscortLeaf):
        return True
    if isinstance(dynamic, Combination):
        return any(has_escort(c) for c in dynamic.children)
    return False


def _require_q_state(dynamic, op):
    if has_escort(dynamic):
        raise ValueError(f"{op} is undefined for escort dynamics (they carry no q state)")


# ---------------------------------------------------------------------------
# strategy maps
# ---------------------------------------------------------------------------

def softmax(q: np.ndarray) -> np.ndarray:
    """Logit map with max shift, safe for |q| up to overflow range."""
    q = np.asarray(q, dtype=float)
    z = q - q.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def project_simplex(q: np.ndarray) -> np.ndarray:
    """Euclidean projection onto the probability simplex, sort based.

    Exact argmax of <q, x> - 0.5 ||x||^2 over the simplex; broadcasts over
    leading axes.
    """
    q = np.asarray(q, dtype=float)
    n = q.shape[-1]
    u = np.sort(q, axis=-1)[..., ::-1]
    css = np.cumsum(u, axis=-1) - 1.0
    ind = np.arange(1, n + 1)
    rho = np.count_nonzero(u - css / ind > 0, axis=-1)
    lam = np.take_along_axis(css, rho[..., None] - 1, axis=-1)[..., 0] / rho
    return np.maximum(q - lam[..., None], 0.0)


def _separable_convert(reg: SeparableCustom, q: np.ndarray) -> np.ndarray:
    n = len(reg.parts)
    if q.shape[-1] != n:
        raise ValueError(f"q has {q.shape[-1]} coordinates, regularizer has {n}")

    def total(lam):
        s = np.zeros(lam.shape)
        for j, part in enumerate(reg.parts):
            s = s + np.clip(part.deriv_inv(q[..., j] - lam), 0.0, 1.0)
        return s

    # bracket the multiplier, then bisect; total(lam) is nonincreasing in lam
    lo = q.min(axis=-1) - 1.0
    hi = q.max(axis=-1) + 1.0
    for _ in range(200):
        bad = total(lo) < 1.0
        if not bad.any():
            break
        lo = np.where(bad, lo - 2 * (hi - lo), lo)
    for _ in range(200):
        bad = total(hi) > 1.0
        if not bad.any():
            break
        hi = np.where(bad, hi + 2 * (hi - lo), hi)
    for _ in range(120):
        mid = 0.5 * (lo + hi)
        high = total(mid) > 1.0
        lo = np.where(high, mid, lo)
        hi = np.where(high, hi, mid)
        if np.max(hi - lo) < _BISECT_TOL:
            break
    lam = 0.5 * (lo + hi)
    x = np.stack(
        [np.clip(part.deriv_inv(q[..., j] - lam), 0.0, 1.0) for j, part in enumerate(reg.parts)],
        axis=-1,
    )
    # the multiplier is resolved to ~1e-13; renormalize the tiny closure slack
    return x / x.sum(axis=-1, keepdims=True)


def convert(dynamic: DynamicSpec, q: np.ndarray) -> np.ndarray:
    """Strategy map q -> x on the simplex; broadcasts over leading axes of q."""
    q = np.asarray(q, dtype=float)
    if not np.all(np.isfinite(q)):
        raise ValueError("q must be finite")
    _require_q_state(dynamic, "convert")
    return _convert(dynamic, q)


def _convert(dynamic, q):
    if isinstance(dynamic, FtrlLeaf):
        reg = dynamic.regularizer
        if isinstance(reg, Entropy):
            return softmax(q)
        if isinstance(reg, HalfL2):
            return project_simplex(q)
        return _separable_convert(reg, q)
    if isinstance(dynamic, Combination):
        out = dynamic.weights[0] * _convert(dynamic.children[0], q)
        for w, child in zip(dynamic.weights[1:], dynamic.children[1:]):
            out = out + w * _convert(child, q)
        return out
    raise ValueError("escort dynamics have no conversion map")


def storage_gradient(dynamic: DynamicSpec, q: np.ndarray) -> np.ndarray:
    """Gradient of the zero-shift energy, identical to the strategy map.

    Exposed separately so tests can compare it against finite differences
    of ``storage``.
    """
    return convert(dynamic, q)


# ---------------------------------------------------------------------------
# energy bookkeeping
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class StorageValue:
    value: float | np.ndarray
    shift: np.ndarray

    def __float__(self):
        return float(self.value)


def regularizer_value(dynamic: DynamicSpec, x: np.ndarray):
    """Regularizer h(x) of a leaf, or the weighted sum over a combination.

    Returns +inf where a custom separable part diverges at the boundary.
    """
    _require_q_state(dynamic, "regularizer_value")
    x = np.asarray(x, dtype=float)
    if isinstance(dynamic, Combination):
        return sum(
            w * regularizer_value(c, x) for w, c in zip(dynamic.weights, dynamic.children)
        )
    reg = dynamic.regularizer
    if isinstance(reg, Entropy):
        with np.errstate(divide="ignore", invalid="ignore"):
            terms = np.where(x > 0, x * np.log(np.where(x > 0, x, 1.0)), 0.0)
        return terms.sum(axis=-1)
    if isinstance(reg, HalfL2):
        return 0.5 * (x * x).sum(axis=-1)
    total = 0.0
    for j, part in enumerate(reg.parts):
        total = total + part.value(x[..., j])
    return total


def zero_shift_energy(dynamic: DynamicSpec, q: np.ndarray):
    """Convex-conjugate energy E(q) = <q, f(q)> - h(f(q)); batched over q."""
    q = np.asarray(q, dtype=float)
    _require_q_state(dynamic, "storage")
    return _energy(dynamic, q)


def _energy(dynamic, q):
    if isinstance(dynamic, Combination):
        return sum(w * _energy(c, q) for w, c in zip(dynamic.weights, dynamic.children))
    reg = dynamic.regularizer
    if isinstance(reg, Entropy):
        m = q.max(axis=-1)
        return m + np.log(np.exp(q - m[..., None]).sum(axis=-1))
    x = _convert(dynamic, q)
    return (q * x).sum(axis=-1) - regularizer_value(dynamic, x)


def _check_shift(shift, n):
    shift = np.asarray(shift, dtype=float)
    if shift.shape != (n,):
        raise ValueError(f"shift must have shape ({n},), got {shift.shape}")
    if np.all(shift == 0.0):
        return shift
    if np.any(shift < 0):
        raise ValueError("shift entries must be nonnegative unless the shift is exactly zero")
    if abs(shift.sum() - 1.0) > 1e-9:
        raise ValueError("nonzero shifts must lie on the probability simplex")
    return shift


def storage(dynamic: DynamicSpec, q: np.ndarray, shift) -> StorageValue:
    """Energy at ``q`` against a shift: E(q) - <q, shift> + h(shift).

    The zero shift returns the raw energy E(q). Simplex shifts give the
    nonnegative form whose time derivative along any payoff signal equals
    <x - shift, p>. Combinations evaluate each child at the same shift and
    take the weighted sum.
    """
    q = np.asarray(q, dtype=float)
    _require_q_state(dynamic, "storage")
    shift = _check_shift(shift, q.shape[-1])
    if np.all(shift == 0.0):
        value = _energy(dynamic, q)
    else:
        value = _energy(dynamic, q) - q @ shift + regularizer_value(dynamic, shift)
    return StorageValue(value=value, shift=shift)


# ---------------------------------------------------------------------------
# escort dynamics
# ---------------------------------------------------------------------------

def escort_derivative(phis, x: np.ndarray, p: np.ndarray) -> np.ndarray:
    """Velocity of the escort field at an interior point.

    x_j' = phi_j(x_j) * (p_j - sum_l phi_l(x_l) p_l / sum_l phi_l(x_l)).
    The components sum to zero, so the field is tangent to the simplex.
    """
    if isinstance(phis, EscortLeaf):
        phis = phis.phis
    x = np.asarray(x, dtype=float)
    p = np.asarray(p, dtype=float)
    if np.any(x <= 0):
        raise ValueError("escort dynamics are defined on the interior of the simplex")
    w = np.stack([phi(x[..., j]) for j, phi in enumerate(phis)], axis=-1)
    if np.any(w <= 0):
        raise ValueError("escort functions must be positive on the interior")
    mean = (w * p).sum(axis=-1, keepdims=True) / w.sum(axis=-1, keepdims=True)
    return w * (p - mean)


def escort_to_ftrl(phis, grid_eps: float = 1e-12) -> FtrlLeaf:
    """Separable regularizer whose leader dynamic matches the escort field.

    Uses h_j'' = 1/phi_j with both integration constants anchored at 1/n:
    h_j(1/n) = 0 and h_j'(1/n) = 0. The derivative and its inverse are
    produced by adaptive quadrature and root bracketing, so the returned
    callables favor accuracy over speed.
    """
    from scipy.integrate import quad
    from scipy.optimize import brentq

    if isinstance(phis, EscortLeaf):
        phis = phis.phis
    n = len(phis)
    anchor = 1.0 / n
    for phi in phis:
        probes = np.linspace(1e-6, 1 - 1e-6, 41)
        if np.any(phi(probes) <= 0):
            raise ValueError(f"escort function {getattr(phi, 'name', phi)!r} is not positive on (0,1)")

    def make_part(phi):
        def hpp(s):
            return 1.0 / float(phi(np.asarray(s, dtype=float)))

        def hp_scalar(x):
            x = float(x)
            if x == anchor:
                return 0.0
            val, _ = quad(hpp, anchor, x, limit=200)
            return val

        def h_scalar(x):
            # Cauchy repeated integration: one quadrature instead of a nested one
            x = float(x)
            if x == anchor:
                return 0.0
            val, _ = quad(lambda s: (x - s) * hpp(s), anchor, x, limit=200)
            return val

        lo_wall, hi_wall = grid_eps, 1.0 - grid_eps

        def hp_inv_scalar(y):
            y = float(y)
            if y <= hp_scalar(lo_wall):
                return 0.0
            if y >= hp_scalar(hi_wall):
                return 1.0
            return brentq(lambda s: hp_scalar(s) - y, lo_wall, hi_wall, xtol=1e-14)

        name = getattr(phi, "name", "custom")
        return SeparablePart(
            value=np.vectorize(h_scalar, otypes=[float]),
            deriv=np.vectorize(hp_scalar, otypes=[float]),
            deriv_inv=np.vectorize(hp_inv_scalar, otypes=[float]),
            name=f"escort[{name}]",
        )

    return FtrlLeaf(SeparableCustom(tuple(make_part(phi) for phi in phis)))


# ---------------------------------------------------------------------------
# inverse strategy map
# ---------------------------------------------------------------------------

def invert_convert(dynamic: DynamicSpec, x_target: np.ndarray, tol: float = 1e-13) -> np.ndarray:
    """A cumulative-payoff vector q with convert(q) = x_target (interior x).

    The representative with q_n = 0 is returned; any translate along the
    all-ones direction maps to the same strategy. Entropy and half-L2 leaves
    use closed forms, everything else minimizes the convex gap
    E(q) - <q, x_target> and polishes with damped fixed-point steps.
    """
    from scipy.optimize import minimize

    _require_q_state(dynamic, "invert_convert")
    x_target = np.asarray(x_target, dtype=float)
    if np.any(x_target <= 0):
        raise ValueError("only interior strategies are invertible")
    n = x_target.shape[-1]
    if isinstance(dynamic, FtrlLeaf) and isinstance(dynamic.regularizer, Entropy):
        q = np.log(x_target)
        return q - q[-1]
    if isinstance(dynamic, FtrlLeaf) and isinstance(dynamic.regularizer, HalfL2):
        return x_target - x_target[-1]

    def embed(qr):
        return np.concatenate([qr, [0.0]])

    def fun(qr):
        q = embed(qr)
        return float(_energy(dynamic, q) - q @ x_target)

    def jac(qr):
        q = embed(qr)
        return (_convert(dynamic, q) - x_target)[:-1]

    qr0 = np.log(x_target)
    qr0 = (qr0 - qr0[-1])[:-1]
    res = minimize(fun, qr0, jac=jac, method="BFGS", options={"gtol": 1e-12, "maxiter": 500})
    q = embed(res.x)
    for _ in range(10000):
        gap = _convert(dynamic, q) - x_target
        if np.abs(gap).max() < tol:
            break
        q = q - 0.5 * gap
    return q - q[-1]


# ---------------------------------------------------------------------------
# config wire format
# ---------------------------------------------------------------------------

def dynamic_from_config(obj) -> DynamicSpec:
    """Parse the JSON tree form of a dynamic.

    Accepted shapes: "entropy", "half_l2", {"ftrl": name},
    {"escort": family-or-list}, {"combine": [{"w": w, ...child...}, ...]}.
    """
    if isinstance(obj, str):
        return _ftrl_by_name(obj)
    if not isinstance(obj, dict):
        raise ValueError(f"cannot parse dynamic from {obj!r}")
    if "combine" in obj:
        weights, children = [], []
        for item in obj["combine"]:
            if "w" not in item:
                raise ValueError("every combination child needs a weight 'w'")
            weights.append(float(item["w"]))
            child = {k: v for k, v in item.items() if k != "w"}
            children.append(dynamic_from_config(child))
        return Combination(tuple(weights), tuple(children))
    if "ftrl" in obj:
        return _ftrl_by_name(obj["ftrl"])
    if "escort" in obj:
        fam = obj["escort"]
        if isinstance(fam, str):
            n = obj.get("n")
            if n is None:
                raise ValueError("escort with a single family needs an action count 'n'")
            return escort(fam, int(n))
        return escort(list(fam))
    raise ValueError(f"cannot parse dynamic from {obj!r}")


def _ftrl_by_name(name):
    if name == "entropy":
        return entropy()
    if name == "half_l2":
        return half_l2()
    raise ValueError(f"unknown ftrl regularizer {name!r}")


def dynamic_to_config(dynamic: DynamicSpec):
    if isinstance(dynamic, FtrlLeaf):
        reg = dynamic.regularizer
        if isinstance(reg, Entropy):
            return {"ftrl": "entropy"}
        if isinstance(reg, HalfL2):
            return {"ftrl": "half_l2"}
        raise ValueError("custom separable regularizers have no config form")
    if isinstance(dynamic, EscortLeaf):
        return {"escort": [phi.name for phi in dynamic.phis]}
    out = []
    for w, child in zip(dynamic.weights, dynamic.children):
        entry = dynamic_to_config(child)
        entry = {"w": w, **entry}
        out.append(entry)
    return {"combine": out}
