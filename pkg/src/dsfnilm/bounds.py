"""Modular bounds of the two submodular parts of the cost.

* ``supergradient_g``: per-element weights of a modular upper bound of g that is
  tight at the anchor set Y (closed form; only the L*T entries in Y can be nonzero).
* ``subgradient_h``: Edmonds greedy vertex of the base polytope of h along the
  chain induced by a permutation whose head enumerates Y (closed form, one
  pass with a per-time running accumulator of ``beta``).

Each closed form has a ``*_naive`` counterpart that evaluates the defining set
function differences directly. Those exist for verification only.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .setfn import (
    ProblemInstance,
    StateAssignment,
    assignment_to_indicator,
    assignment_to_indices,
    check_feasible,
    eval_set_cost,
    g_of_sets,
    h_of_sets,
)

TAIL_POLICIES = ("shuffled", "deterministic")


def permutation_from_set(inst: ProblemInstance, y: StateAssignment, rng_seed: int | None = 0,
                         tail_policy: str = "shuffled") -> np.ndarray:
    """Ground-set permutation whose first L*T entries enumerate Y.

    Head order is (t ascending, appliance ascending). The tail is either the
    remaining indices in ascending order or a seeded shuffle of them.
    """
    check_feasible(inst, y)
    head = assignment_to_indices(inst, y)
    in_y = np.zeros(inst.ground_size, dtype=bool)
    in_y[head] = True
    tail = np.flatnonzero(~in_y)
    if tail_policy == "shuffled":
        tail = np.random.default_rng(rng_seed).permutation(tail)
    elif tail_policy != "deterministic":
        raise ValueError(f"unknown tail policy {tail_policy!r}; expected one of {TAIL_POLICIES}")
    return np.concatenate([head, tail])


def supergradient_g(inst: ProblemInstance, y: StateAssignment) -> np.ndarray:
    check_feasible(inst, y)
    s = y.states
    same = (s[:, 1:] == s[:, :-1]).astype(float)  # L x (T-1)
    neighbours = np.zeros(s.shape)
    neighbours[:, 1:] += same
    neighbours[:, :-1] += same
    u = np.zeros(inst.ground_size)
    u[assignment_to_indices(inst, y)] = -(neighbours * inst.lambdas[:, None]).T.ravel()
    return u


def supergradient_g_naive(inst: ProblemInstance, y: StateAssignment) -> np.ndarray:
    """Definitional form: ``g(Y) - g(Y - j)`` on Y and ``g({j}) - g({})`` off Y."""
    n = inst.ground_size
    ind = assignment_to_indicator(inst, y)
    eye = np.eye(n, dtype=bool)
    g_y = g_of_sets(inst, ind)
    drop = g_y - g_of_sets(inst, ind & ~eye)
    add = g_of_sets(inst, eye) - g_of_sets(inst, np.zeros(n, dtype=bool))
    return np.where(ind, drop, add)


def _check_head(inst: ProblemInstance, y: StateAssignment, pi: np.ndarray) -> None:
    n = inst.ground_size
    if pi.shape != (n,) or not np.array_equal(np.sort(pi), np.arange(n)):
        raise ValueError(f"pi is not a permutation of the {n}-element ground set")
    head = pi[: y.states.size]
    if not np.array_equal(np.sort(head), np.sort(assignment_to_indices(inst, y))):
        raise ValueError("the first L*T entries of pi do not enumerate the anchor set")


def subgradient_h(inst: ProblemInstance, y: StateAssignment, pi) -> np.ndarray:
    check_feasible(inst, y)
    pi = np.asarray(pi, dtype=np.int64)
    _check_head(inst, y, pi)
    N, T = inst.width, inst.horizon
    # Regroup the chain by time, keeping chain order inside each time slot;
    # every slot holds exactly N elements.
    order = pi[np.argsort(pi // N, kind="stable")].reshape(T, N)
    n_loc = order % N
    b = inst.beta[:, n_loc]  # R x T x N
    before = np.cumsum(b, axis=2) - b  # accumulator over earlier chain elements at the same time
    vals = (-(b ** 2) - 2.0 * b * before).sum(axis=0) + inst.cbar[n_loc, np.arange(T)[:, None]]
    v = np.empty(inst.ground_size)
    v[order.ravel()] = vals.ravel()
    return v


def chain_indicators(pi: np.ndarray) -> np.ndarray:
    """Indicators of the chain prefixes S^(0) ... S^(n), shape (n+1, n)."""
    n = pi.size
    pos = np.empty(n, dtype=np.int64)
    pos[pi] = np.arange(n)
    return np.arange(n + 1)[:, None] > pos[None, :]


def subgradient_h_naive(inst: ProblemInstance, y: StateAssignment, pi) -> np.ndarray:
    """Definitional form: ``h(S^(i)) - h(S^(i-1))`` evaluated from scratch on every prefix."""
    pi = np.asarray(pi, dtype=np.int64)
    _check_head(inst, y, pi)
    h_chain = h_of_sets(inst, chain_indicators(pi))
    v = np.empty(inst.ground_size)
    v[pi] = np.diff(h_chain)
    return v


@dataclass(frozen=True)
class ModularBound:
    """Affine modular function ``S -> anchor + sum_{j in S} weights[j]``."""

    weights: np.ndarray
    anchor: float

    def __call__(self, indicators) -> np.ndarray:
        z = np.asarray(indicators, dtype=float)
        return self.anchor + z @ self.weights


def upper_bound_g(inst: ProblemInstance, y: StateAssignment) -> ModularBound:
    u = supergradient_g(inst, y)
    _, g_y, _ = eval_set_cost(inst, y)
    return ModularBound(u, g_y - float(u[assignment_to_indices(inst, y)].sum()))


def lower_bound_h(inst: ProblemInstance, y: StateAssignment, pi) -> ModularBound:
    # h(empty) = 0, so the greedy vertex needs no constant
    return ModularBound(subgradient_h(inst, y, pi), 0.0)


def modular_upper_bound_of_f(inst: ProblemInstance, y: StateAssignment, pi) -> ModularBound:
    """``m_k = u - v`` with the anchor making the bound tight at Y."""
    upper = upper_bound_g(inst, y)
    lower = lower_bound_h(inst, y, pi)
    return ModularBound(upper.weights - lower.weights, upper.anchor - lower.anchor)
