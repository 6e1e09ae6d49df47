"""Exact minimizers of the set cost, for verification.

``enumerate_optimum`` scores every feasible assignment with the batched set
cost. ``viterbi_optimum`` exploits the chain structure: the data term is
separable in time and the smoothness term couples only neighbouring times,
so a forward pass over joint per-time states is exact.

Both report the cost by re-evaluating the returned assignment with
:func:`eval_set_cost`, which makes their costs directly comparable.
"""

from __future__ import annotations

import numpy as np

from .setfn import ProblemInstance, StateAssignment, eval_set_cost, set_cost_batch

MAX_ENUMERATION = 2 ** 20
MAX_JOINT_STATES = 4096
_CHUNK = 1 << 15


def joint_states(sizes) -> np.ndarray:
    """All joint per-time states in lexicographic order, shape (M, L)."""
    sizes = [int(n) for n in sizes]
    grids = np.meshgrid(*[np.arange(n) for n in sizes], indexing="ij")
    return np.stack([g.ravel() for g in grids], axis=1)


def enumerate_optimum(inst: ProblemInstance, limit: int = MAX_ENUMERATION) -> tuple[StateAssignment, float]:
    """Brute-force minimum; the first minimizer in lexicographic (time-major) order wins ties."""
    joint = joint_states(inst.model.sizes)
    M, T = joint.shape[0], inst.horizon
    total = M ** T
    if total > limit:
        raise ValueError(f"enumeration needs {M}^{T} = {total} assignments, limit is {limit}")
    best_cost, best = np.inf, None
    for start in range(0, total, _CHUNK):
        codes = np.arange(start, min(start + _CHUNK, total), dtype=np.int64)
        digits = np.empty((codes.size, T), dtype=np.int64)
        rem = codes
        for t in range(T - 1, -1, -1):
            rem, digits[:, t] = np.divmod(rem, M)
        states = np.transpose(joint[digits], (0, 2, 1))  # B x L x T
        costs = set_cost_batch(inst, states)
        k = int(np.argmin(costs))
        if costs[k] < best_cost:
            best_cost, best = costs[k], states[k]
    s = StateAssignment(best)
    return s, eval_set_cost(inst, s)[0]


def viterbi_optimum(inst: ProblemInstance, max_joint: int = MAX_JOINT_STATES) -> tuple[StateAssignment, float]:
    joint = joint_states(inst.model.sizes)
    M = joint.shape[0]
    if M > max_joint:
        raise ValueError(f"{M} joint states per time exceeds the limit of {max_joint}")
    T = inst.horizon
    # per-line signature of every joint state: M x R
    sig = np.zeros((M, inst.num_lines))
    for i in range(inst.model.num_appliances):
        sig += inst.state_beta(i)[:, joint[:, i]].T
    node = (sig ** 2).sum(axis=1)[None, :] - 2.0 * inst.y @ sig.T  # T x M
    edge = np.zeros((M, M))
    for i, lam in enumerate(inst.lambdas):
        edge -= lam * (joint[:, i][:, None] == joint[:, i][None, :])

    score = node[0].copy()
    back = np.empty((T, M), dtype=np.int64)
    for t in range(1, T):
        cand = score[:, None] + edge  # previous x next
        back[t] = cand.argmin(axis=0)
        score = cand[back[t], np.arange(M)] + node[t]
    path = np.empty(T, dtype=np.int64)
    path[-1] = int(score.argmin())
    for t in range(T - 1, 0, -1):
        path[t - 1] = back[t, path[t]]
    s = StateAssignment(joint[path].T)
    return s, eval_set_cost(inst, s)[0]
