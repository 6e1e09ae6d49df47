"""Invariant battery behind ``dsfnilm verify``.

Every check builds its own seeded instance, so results depend only on the
seed list and can be computed in parallel and merged in seed order.
"""

from __future__ import annotations

import dataclasses
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import bounds, oracle, solver
from .setfn import (
    AggregateSeries,
    ProblemInstance,
    all_subsets,
    assignment_to_indicator,
    build_instance,
    eval_set_cost,
    g_of_sets,
    h_of_sets,
    is_submodular_bruteforce,
    make_model,
    random_assignment,
    subwindow,
)

SIZES = {
    # (appliances, states per appliance, horizon, lines)
    "tiny": dict(L=2, states=(2, 2), T=3, R=2),
    "small": dict(L=3, states=(2, 3, 2), T=6, R=2),
}
EXHAUSTIVE_MAX = 12


def random_instance(rng: np.random.Generator, L: int, states, T: int, R: int,
                    lam_choices=(0.0, 1.0, 2.0)) -> ProblemInstance:
    """Integer levels and readings with dyadic line weights, so most sums are exact in floating point."""
    if len(states) != L:
        raise ValueError(f"{len(states)} state counts for {L} appliances")
    mus = [np.sort(rng.integers(0, 201, size=n)).astype(float) for n in states]
    weights = []
    for _ in range(L):
        cuts = np.sort(rng.integers(0, 5, size=R - 1))
        weights.append(np.diff(np.concatenate([[0], cuts, [4]])) / 4.0)
    lams = rng.choice(lam_choices, size=L)
    model = make_model(mus, weights, lams)
    y = rng.integers(0, 401, size=(T, R)).astype(float)
    return build_instance(model, AggregateSeries(y))


def corrupt_smoothness(inst: ProblemInstance) -> ProblemInstance:
    """Test hook: negate the smoothness diagonal, which breaks submodularity of g when any lambda > 0."""
    return dataclasses.replace(inst, lambda_diag=-inst.lambda_diag)


def _close(a, b, tol=1e-9) -> bool:
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    scale = max(1.0, float(np.abs(a).max(initial=0)), float(np.abs(b).max(initial=0)))
    return bool(np.all(np.abs(a - b) <= tol * scale))


def exhaustive_window(inst: ProblemInstance) -> ProblemInstance:
    """Longest prefix window whose ground set has at most EXHAUSTIVE_MAX elements."""
    T = max(1, min(inst.horizon, EXHAUSTIVE_MAX // inst.width))
    return subwindow(inst, 0, T)


def check_submodular(inst: ProblemInstance) -> str | None:
    w = exhaustive_window(inst)
    n = w.ground_size
    for name, fn in (("g", g_of_sets), ("h", h_of_sets)):
        res = is_submodular_bruteforce(lambda Z, fn=fn: fn(w, Z), n, vectorized=True)
        if not res:
            X, Y, v = res.witness
            return f"{name} not submodular: X={sorted(X)}, Y={sorted(Y)}, v={v}"
    return None


def check_bounds(inst: ProblemInstance, rng: np.random.Generator) -> str | None:
    w = exhaustive_window(inst)
    subsets = all_subsets(w.ground_size)
    Y = random_assignment(w.model, w.horizon, rng)
    ind = assignment_to_indicator(w, Y)
    pi = bounds.permutation_from_set(w, Y, int(rng.integers(2 ** 31)))
    g_all, h_all = g_of_sets(w, subsets), h_of_sets(w, subsets)
    up = bounds.upper_bound_g(w, Y)
    lo = bounds.lower_bound_h(w, Y, pi)
    tol = 1e-9 * max(1.0, float(np.abs(h_all).max()))
    if np.any(g_all > up(subsets) + tol):
        return "modular upper bound of g violated"
    if np.any(h_all < lo(subsets) - tol):
        return "modular lower bound of h violated"
    g_y, h_y = g_of_sets(w, ind), h_of_sets(w, ind)
    if not (_close(up(ind), g_y) and _close(lo(ind), h_y)):
        return "bound not tight at the anchor set"
    chain = bounds.chain_indicators(pi)
    if not _close(lo(chain), h_of_sets(w, chain)):
        return "lower bound does not match h on the chain"
    m = bounds.modular_upper_bound_of_f(w, Y, pi)
    if np.any(g_all - h_all > m(subsets) + tol):
        return "modular upper bound of f violated"
    return None


def check_gradients(inst: ProblemInstance, rng: np.random.Generator) -> str | None:
    Y = random_assignment(inst.model, inst.horizon, rng)
    pi = bounds.permutation_from_set(inst, Y, int(rng.integers(2 ** 31)))
    if not _close(bounds.supergradient_g(inst, Y), bounds.supergradient_g_naive(inst, Y)):
        return "closed-form supergradient differs from definition"
    if not _close(bounds.subgradient_h(inst, Y, pi), bounds.subgradient_h_naive(inst, Y, pi)):
        return "closed-form subgradient differs from definition"
    return None


def check_solver(inst: ProblemInstance, seed: int) -> str | None:
    s, trace = solver.solve(inst, solver.SolverOptions(seed=seed))
    costs = trace.set_costs
    if any(b > a for a, b in zip(costs, costs[1:])):
        return f"set cost increased along the trace: {costs}"
    _, c_vit = oracle.viterbi_optimum(inst)
    try:
        _, c_enum = oracle.enumerate_optimum(inst)
    except ValueError:
        c_enum = None
    if c_enum is not None and c_enum != c_vit:
        return f"oracles disagree: enumeration {c_enum!r} vs dynamic programming {c_vit!r}"
    if eval_set_cost(inst, s)[0] < c_vit:
        return "solver beat the exact optimum"
    return None


CHECKS = ("submodularity", "bounds", "gradients", "solver_vs_oracle")


@dataclass
class SeedResult:
    seed: int
    failures: dict[str, str]


def run_seed(seed: int, size: str = "tiny", corrupt: bool = False) -> SeedResult:
    cfg = SIZES[size]
    rng = np.random.default_rng(seed)
    inst = random_instance(rng, cfg["L"], cfg["states"], cfg["T"], cfg["R"], lam_choices=(1.0, 2.0))
    if corrupt:
        inst = corrupt_smoothness(inst)
    results = {
        "submodularity": check_submodular(inst),
        "bounds": check_bounds(inst, rng),
        "gradients": check_gradients(inst, rng),
        "solver_vs_oracle": check_solver(inst, seed),
    }
    return SeedResult(seed, {k: v for k, v in results.items() if v is not None})


def run_battery(seeds, size: str = "tiny", corrupt: bool = False, workers: int = 1) -> list[SeedResult]:
    seeds = list(seeds)
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            return list(pool.map(run_seed, seeds, [size] * len(seeds), [corrupt] * len(seeds)))
    return [run_seed(s, size, corrupt) for s in seeds]
