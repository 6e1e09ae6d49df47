"""Household model, ground-set layout and exact evaluation of the disaggregation cost.

Ground set layout is time-major: element ``(appliance i, local state n, time t)``
lives at flat index ``t * N + offset[i] + n`` (all indices 0-based), so an
indicator vector reshaped to ``(T, N)`` gives one column ``z_t`` per time.

Two cost conventions are exposed:

* set cost ``f(S) = g(S) - h(S)`` with no constant term, which the solver uses;
* residual cost (watts^2 least-squares fit minus smoothness reward), which
  differs from the set cost by exactly ``sum(y**2)``.

The quadratic forms ``1' (I_T kron B^r) 1`` and ``1' (D kron Lambda) 1`` are
never materialized; everything goes through ``beta . z_t`` dot products and
neighbour comparisons.
"""

from __future__ import annotations

import dataclasses
import itertools
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

WEIGHT_SUM_TOL = 1e-9
MAX_BRUTEFORCE_N = 14


def _frozen(a, dtype=float) -> np.ndarray:
    arr = np.array(a, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class ApplianceModel:
    """Finite-state appliance: consumption levels, line weights, smoothness weight.

    ``mu`` is stored sorted ascending so state indices are consumption-ordered.
    """

    name: str
    mu: np.ndarray
    weights: np.ndarray
    lam: float = 1.0

    def __post_init__(self):
        mu = np.sort(np.asarray(self.mu, dtype=float).ravel())
        w = np.asarray(self.weights, dtype=float).ravel()
        if mu.size < 2:
            raise ValueError(f"appliance {self.name!r}: needs at least 2 states, got {mu.size}")
        if not np.all(np.isfinite(mu)) or np.any(mu < 0):
            raise ValueError(f"appliance {self.name!r}: consumption levels must be finite and >= 0")
        if w.size < 1 or np.any(w < 0) or np.any(w > 1):
            raise ValueError(f"appliance {self.name!r}: connectivity weights must lie in [0, 1]")
        if abs(w.sum() - 1.0) > WEIGHT_SUM_TOL:
            raise ValueError(f"appliance {self.name!r}: connectivity weights sum to {w.sum()!r}, not 1")
        if not np.isfinite(self.lam) or self.lam < 0:
            raise ValueError(f"appliance {self.name!r}: smoothness weight must be >= 0")
        object.__setattr__(self, "mu", _frozen(mu))
        object.__setattr__(self, "weights", _frozen(w))
        object.__setattr__(self, "lam", float(self.lam))

    @property
    def num_states(self) -> int:
        return int(self.mu.size)


@dataclass(frozen=True)
class HouseholdModel:
    appliances: tuple[ApplianceModel, ...]
    num_lines: int

    def __post_init__(self):
        apps = tuple(self.appliances)
        if not apps:
            raise ValueError("household model needs at least one appliance")
        if self.num_lines < 1:
            raise ValueError("num_lines must be >= 1")
        for a in apps:
            if a.weights.size != self.num_lines:
                raise ValueError(
                    f"appliance {a.name!r} has {a.weights.size} line weights, model has {self.num_lines} lines"
                )
        names = [a.name for a in apps]
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate appliance names: {names}")
        object.__setattr__(self, "appliances", apps)

    @property
    def num_appliances(self) -> int:
        return len(self.appliances)

    @property
    def sizes(self) -> np.ndarray:
        return np.array([a.num_states for a in self.appliances], dtype=np.int64)

    @property
    def offsets(self) -> np.ndarray:
        return np.concatenate([[0], np.cumsum(self.sizes)[:-1]]).astype(np.int64)

    @property
    def width(self) -> int:
        """N, the number of (appliance, state) pairs at one time."""
        return int(self.sizes.sum())

    @property
    def names(self) -> list[str]:
        return [a.name for a in self.appliances]

    def weight_matrix(self) -> np.ndarray:
        """L x R connectivity weights."""
        return np.stack([a.weights for a in self.appliances])

    def with_lambda(self, lam: float) -> "HouseholdModel":
        apps = tuple(ApplianceModel(a.name, a.mu, a.weights, lam) for a in self.appliances)
        return HouseholdModel(apps, self.num_lines)

    # -- JSON ---------------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "num_lines": int(self.num_lines),
            "appliances": [
                {
                    "name": a.name,
                    "mu": [float(v) for v in a.mu],
                    "weights": [float(v) for v in a.weights],
                    "lambda": a.lam,
                }
                for a in self.appliances
            ],
        }

    @classmethod
    def from_dict(cls, doc: dict, default_lambda: float = 1.0) -> "HouseholdModel":
        if not isinstance(doc, dict):
            raise ValueError("model document must be a JSON object")
        unknown = set(doc) - {"num_lines", "appliances"}
        if unknown:
            raise ValueError(f"unknown model fields: {sorted(unknown)}")
        try:
            num_lines = doc["num_lines"]
            raw_apps = doc["appliances"]
        except KeyError as e:
            raise ValueError(f"model document missing field {e.args[0]!r}") from None
        apps = []
        for k, entry in enumerate(raw_apps):
            unknown = set(entry) - {"name", "mu", "weights", "lambda"}
            if unknown:
                raise ValueError(f"appliance #{k}: unknown fields {sorted(unknown)}")
            for req in ("name", "mu", "weights"):
                if req not in entry:
                    raise ValueError(f"appliance #{k}: missing field {req!r}")
            apps.append(ApplianceModel(str(entry["name"]), entry["mu"], entry["weights"],
                                       entry.get("lambda", default_lambda)))
        return cls(tuple(apps), int(num_lines))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    @classmethod
    def from_json(cls, text: str, default_lambda: float = 1.0) -> "HouseholdModel":
        return cls.from_dict(json.loads(text), default_lambda)

    def save(self, path) -> None:
        Path(path).write_text(self.to_json())

    @classmethod
    def load(cls, path, default_lambda: float = 1.0) -> "HouseholdModel":
        return cls.from_json(Path(path).read_text(), default_lambda)


@dataclass(frozen=True)
class AggregateSeries:
    """T x R per-line aggregate power readings, optionally timestamped."""

    values: np.ndarray
    timestamps: np.ndarray | None = None

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim == 1:
            v = v[:, None]
        if v.ndim != 2 or v.shape[0] < 1 or v.shape[1] < 1:
            raise ValueError(f"aggregate values must be a non-empty T x R matrix, got shape {v.shape}")
        object.__setattr__(self, "values", _frozen(v))
        if self.timestamps is not None:
            ts = np.asarray(self.timestamps, dtype=np.int64).ravel()
            if ts.size != v.shape[0]:
                raise ValueError(f"{ts.size} timestamps for {v.shape[0]} samples")
            if ts.size > 1 and np.any(np.diff(ts) <= 0):
                raise ValueError("timestamps must be strictly increasing")
            object.__setattr__(self, "timestamps", _frozen(ts, np.int64))

    @property
    def horizon(self) -> int:
        return int(self.values.shape[0])

    @property
    def num_lines(self) -> int:
        return int(self.values.shape[1])


@dataclass(frozen=True)
class StateAssignment:
    """One state per (appliance, time): an L x T integer matrix of local state indices."""

    states: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.states)
        if s.ndim != 2:
            raise ValueError(f"state matrix must be L x T, got shape {s.shape}")
        object.__setattr__(self, "states", _frozen(s, np.int64))

    def __eq__(self, other):
        if not isinstance(other, StateAssignment):
            return NotImplemented
        return self.states.shape == other.states.shape and bool(np.array_equal(self.states, other.states))

    def __hash__(self):
        return hash((self.states.shape, self.states.tobytes()))


@dataclass(frozen=True)
class ProblemInstance:
    """A household model bound to a measurement window.

    ``beta[r]`` concatenates ``w_i^r * mu_i``; ``cbar[n, t] = sum_r 2 y_t^r beta[r, n]``;
    ``lambda_diag`` is the diagonal of Lambda.
    """

    model: HouseholdModel
    y: np.ndarray
    beta: np.ndarray
    cbar: np.ndarray
    lambda_diag: np.ndarray
    timestamps: np.ndarray | None = field(default=None)

    @property
    def horizon(self) -> int:
        return int(self.y.shape[0])

    @property
    def width(self) -> int:
        return int(self.beta.shape[1])

    @property
    def num_lines(self) -> int:
        return int(self.beta.shape[0])

    @property
    def ground_size(self) -> int:
        return self.width * self.horizon

    @property
    def lambdas(self) -> np.ndarray:
        return np.array([a.lam for a in self.model.appliances])

    def state_beta(self, i: int) -> np.ndarray:
        """R x N_i block of beta belonging to appliance ``i``."""
        off = self.model.offsets[i]
        return self.beta[:, off:off + self.model.sizes[i]]


def build_instance(model: HouseholdModel, agg: AggregateSeries | np.ndarray) -> ProblemInstance:
    if not isinstance(agg, AggregateSeries):
        agg = AggregateSeries(agg)
    y = agg.values
    if y.shape[1] != model.num_lines:
        raise ValueError(
            f"line axis mismatch: aggregate has {y.shape[1]} line columns, model has {model.num_lines} lines"
        )
    beta = np.concatenate([np.outer(a.weights, a.mu) for a in model.appliances], axis=1)
    cbar = 2.0 * beta.T @ y.T
    lam = np.repeat([a.lam for a in model.appliances], model.sizes)
    return ProblemInstance(model, _frozen(y), _frozen(beta), _frozen(cbar), _frozen(lam), agg.timestamps)


# -- ground-set indexing -------------------------------------------------------


def flat_index(model: HouseholdModel, appliance, state, t):
    """Flat ground-set index of ``(appliance, local state, time)``; vectorizes."""
    return np.asarray(t) * model.width + model.offsets[np.asarray(appliance)] + np.asarray(state)


def unflat_index(model: HouseholdModel, j):
    """Inverse of :func:`flat_index`: returns ``(appliance, local state, time)``."""
    j = np.asarray(j)
    t, n = np.divmod(j, model.width)
    appliance = np.searchsorted(model.offsets, n, side="right") - 1
    return appliance, n - model.offsets[appliance], t


def check_feasible(inst: ProblemInstance, s: StateAssignment) -> None:
    L, T = inst.model.num_appliances, inst.horizon
    if s.states.shape != (L, T):
        raise ValueError(f"assignment has shape {s.states.shape}, expected ({L}, {T})")
    sizes = inst.model.sizes[:, None]
    if np.any(s.states < 0) or np.any(s.states >= sizes):
        raise ValueError("assignment selects a state index outside an appliance's state range")


def assignment_to_indices(inst: ProblemInstance, s: StateAssignment) -> np.ndarray:
    """Flat indices of the L*T selected elements, ordered by (t, appliance)."""
    L, T = s.states.shape
    t = np.repeat(np.arange(T), L)
    i = np.tile(np.arange(L), T)
    return flat_index(inst.model, i, s.states.T.ravel(), t)


def assignment_to_indicator(inst: ProblemInstance, s: StateAssignment) -> np.ndarray:
    ind = np.zeros(inst.ground_size, dtype=bool)
    ind[assignment_to_indices(inst, s)] = True
    return ind


def indicator_to_assignment(inst: ProblemInstance, indicator) -> StateAssignment:
    """Recover the assignment from a feasible indicator; raises if not in the partition family."""
    z = np.asarray(indicator, dtype=bool).reshape(inst.horizon, inst.width)
    model = inst.model
    states = np.empty((model.num_appliances, inst.horizon), dtype=np.int64)
    for i, (off, n) in enumerate(zip(model.offsets, model.sizes)):
        block = z[:, off:off + n]
        if np.any(block.sum(axis=1) != 1):
            raise ValueError(f"indicator selects other than one state for appliance {i} at some time")
        states[i] = block.argmax(axis=1)
    return StateAssignment(states)


# -- evaluation ------------------------------------------------------------------


def line_signal(inst: ProblemInstance, states: np.ndarray) -> np.ndarray:
    """``beta^r . z_t`` for a batch of assignments: states (..., L, T) -> (..., R, T)."""
    states = np.asarray(states)
    out = np.zeros(states.shape[:-2] + (inst.num_lines, states.shape[-1]))
    for i in range(inst.model.num_appliances):
        b = inst.state_beta(i)  # R x N_i
        out += np.moveaxis(b[:, states[..., i, :]], 0, -2)
    return out


def smooth_matches(inst: ProblemInstance, states: np.ndarray) -> np.ndarray:
    """``sum_i lambda_i * #{t : s(i,t) == s(i,t+1)}`` for a batch of assignments."""
    states = np.asarray(states)
    same = states[..., :, 1:] == states[..., :, :-1]
    return (same.sum(axis=-1) * inst.lambdas).sum(axis=-1)


def set_cost_batch(inst: ProblemInstance, states: np.ndarray) -> np.ndarray:
    """Set cost f for a batch of L x T state matrices (no feasibility check)."""
    sig = line_signal(inst, states)
    data = (sig * (sig - 2.0 * inst.y.T)).sum(axis=(-2, -1))
    return data - smooth_matches(inst, states)


def eval_set_cost(inst: ProblemInstance, s: StateAssignment) -> tuple[float, float, float]:
    """Return ``(f, g, h)`` at a feasible assignment, with ``f = g - h``."""
    check_feasible(inst, s)
    sig = line_signal(inst, s.states)
    g = -float(smooth_matches(inst, s.states))
    h = float((sig * (2.0 * inst.y.T - sig)).sum())
    return g - h, g, h


def eval_residual_cost(inst: ProblemInstance, s: StateAssignment) -> float:
    """Least-squares fit over all lines minus the smoothness reward (watts^2)."""
    check_feasible(inst, s)
    sig = line_signal(inst, s.states)
    return float(((inst.y.T - sig) ** 2).sum() - smooth_matches(inst, s.states))


def energy_offset(inst: ProblemInstance) -> float:
    """``sum_{r,t} y^r_t ** 2``: residual cost minus set cost."""
    return float((inst.y ** 2).sum())


# Arbitrary subsets of the ground set (not necessarily feasible).


def g_of_sets(inst: ProblemInstance, indicators) -> np.ndarray:
    """Smoothness part g over a batch of indicator vectors (..., N*T)."""
    z = np.asarray(indicators, dtype=float)
    z = z.reshape(z.shape[:-1] + (inst.horizon, inst.width))
    pairs = z[..., 1:, :] * z[..., :-1, :]
    return -(pairs * inst.lambda_diag).sum(axis=(-2, -1))


def h_of_sets(inst: ProblemInstance, indicators) -> np.ndarray:
    """Data part h over a batch of indicator vectors (..., N*T)."""
    z = np.asarray(indicators, dtype=float)
    z = z.reshape(z.shape[:-1] + (inst.horizon, inst.width))
    sig = z @ inst.beta.T  # (..., T, R)
    lin = (z * inst.cbar.T).sum(axis=(-2, -1))
    return lin - (sig ** 2).sum(axis=(-2, -1))


def f_of_sets(inst: ProblemInstance, indicators) -> np.ndarray:
    return g_of_sets(inst, indicators) - h_of_sets(inst, indicators)


# -- submodularity -------------------------------------------------------------------


@dataclass(frozen=True)
class SubmodularityCheck:
    ok: bool
    witness: tuple[frozenset, frozenset, int] | None = None
    violation: float = 0.0

    def __bool__(self):
        return self.ok


def all_subsets(n: int) -> np.ndarray:
    """Boolean (2**n, n) matrix; row k is the indicator of the bitmask k."""
    k = np.arange(2 ** n, dtype=np.int64)
    return ((k[:, None] >> np.arange(n)) & 1).astype(bool)


def set_function_table(fn: Callable, n: int, vectorized: bool = False) -> np.ndarray:
    """Values of ``fn`` on all 2**n subsets, indexed by bitmask."""
    subsets = all_subsets(n)
    if vectorized:
        return np.asarray(fn(subsets), dtype=float)
    return np.array([fn(frozenset(np.flatnonzero(row).tolist())) for row in subsets], dtype=float)


def _mask_to_set(mask: int) -> frozenset:
    return frozenset(b for b in range(mask.bit_length()) if mask >> b & 1)


def is_submodular_bruteforce(fn: Callable, n: int, vectorized: bool = False,
                             rtol: float = 1e-12) -> SubmodularityCheck:
    """Exhaustive diminishing-returns test on a ground set of size ``n <= 14``.

    ``fn`` takes a frozenset of element ids (or, with ``vectorized=True``, a
    boolean ``(batch, n)`` indicator matrix). Uses the equivalent pairwise form
    ``f(X+u) + f(X+v) >= f(X+u+v) + f(X)`` for all X and u, v outside X; a
    failure is reported as the triple ``(X, X + {u}, v)``.
    """
    if n > MAX_BRUTEFORCE_N:
        raise ValueError(f"ground set of size {n} too large for enumeration (max {MAX_BRUTEFORCE_N})")
    table = set_function_table(fn, n, vectorized)
    tol = rtol * max(1.0, float(np.abs(table).max()) if table.size else 1.0)
    masks = np.arange(2 ** n, dtype=np.int64)
    worst, witness = 0.0, None
    for u, v in itertools.combinations(range(n), 2):
        bu, bv = 1 << u, 1 << v
        x = masks[(masks & (bu | bv)) == 0]
        slack = table[x | bu] + table[x | bv] - table[x | bu | bv] - table[x]
        k = int(np.argmin(slack))
        if slack[k] < -tol and slack[k] < worst:
            worst = float(slack[k])
            X = _mask_to_set(int(x[k]))
            witness = (X, X | {u}, v)
    return SubmodularityCheck(witness is None, witness, -worst)


def quadratic_set_function(A) -> Callable:
    """Vectorized ``X -> 1_X' A 1_X``."""
    A = np.asarray(A, dtype=float)

    def fn(indicators):
        z = np.asarray(indicators, dtype=float)
        return np.einsum("...i,ij,...j->...", z, A, z)

    return fn


def subwindow(inst: ProblemInstance, start: int, stop: int) -> ProblemInstance:
    """The same instance restricted to times ``start:stop`` (all other arrays kept as is)."""
    ts = None if inst.timestamps is None else inst.timestamps[start:stop]
    return dataclasses.replace(inst, y=inst.y[start:stop], cbar=inst.cbar[:, start:stop], timestamps=ts)


def random_assignment(model: HouseholdModel, horizon: int, rng: np.random.Generator) -> StateAssignment:
    sizes = model.sizes
    states = np.floor(rng.random((model.num_appliances, horizon)) * sizes[:, None]).astype(np.int64)
    return StateAssignment(np.minimum(states, sizes[:, None] - 1))


def make_model(mus: Sequence, weights: Sequence, lambdas=1.0, names: Sequence[str] | None = None) -> HouseholdModel:
    """Convenience constructor from parallel per-appliance lists."""
    L = len(mus)
    if np.isscalar(lambdas):
        lambdas = [lambdas] * L
    if names is None:
        names = [f"app{i + 1}" for i in range(L)]
    apps = tuple(ApplianceModel(n, m, w, lam) for n, m, w, lam in zip(names, mus, weights, lambdas))
    return HouseholdModel(apps, len(np.atleast_1d(weights[0])))
