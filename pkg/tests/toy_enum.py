"""Frozen toy state space with enumerable transition matrices.

Two particles, two time slices, one spatial dimension, bead positions on a
small grid, junction wraps in {-1, 0, 1}.  Proposals live on the grid, so the
Metropolis kernels of the production weight function can be written down as
explicit stochastic matrices and checked for detailed balance and
stationarity.
"""

import itertools

import numpy as np

from bosecycles.pimc import PathEnsembleState, log_state_weight
from bosecycles.system import SimulationBox

WRAPS = (-1, 0, 1)


def build_states(box: SimulationBox, beta: float, grid, potential):
    """All toy states plus their normalized stationary weights."""
    states = []
    log_w = []
    for beads in itertools.product(grid, repeat=4):
        for perm in ((0, 1), (1, 0)):
            for w0 in WRAPS:
                for w1 in WRAPS:
                    st = PathEnsembleState(
                        box=box, beta=beta,
                        positions=np.array(beads, float).reshape(2, 2, 1),
                        perm=np.array(perm),
                        wrap=np.array([[w0], [w1]]))
                    states.append((beads, perm, w0, w1))
                    log_w.append(log_state_weight(st, potential))
    log_w = np.array(log_w)
    w = np.exp(log_w - log_w.max())
    return states, w / w.sum()


def _index_map(states):
    return {s: i for i, s in enumerate(states)}


def bead_move_matrix(states, pi, grid):
    """Grid analog of the bridge move: single-bead uniform grid proposals."""
    idx = _index_map(states)
    n = len(states)
    P = np.zeros((n, n))
    n_prop = 4 * len(grid)
    for a, (beads, perm, w0, w1) in enumerate(states):
        for slot in range(4):
            for val in grid:
                new_beads = list(beads)
                new_beads[slot] = val
                b = idx[(tuple(new_beads), perm, w0, w1)]
                acc = min(1.0, pi[b] / pi[a]) if pi[a] > 0 else 1.0
                P[a, b] += acc / n_prop
                P[a, a] += (1.0 - acc) / n_prop
    return P


def swap_move_matrix(states, pi):
    """Permutation transposition with positions and wraps frozen."""
    idx = _index_map(states)
    n = len(states)
    P = np.zeros((n, n))
    for a, (beads, perm, w0, w1) in enumerate(states):
        other = (1, 0) if perm == (0, 1) else (0, 1)
        b = idx[(beads, other, w0, w1)]
        acc = min(1.0, pi[b] / pi[a]) if pi[a] > 0 else 1.0
        P[a, b] += acc
        P[a, a] += 1.0 - acc
    return P


def wrap_move_matrix(states, pi):
    """Junction wrap shifts by +-1; proposals leaving the range are rejected."""
    idx = _index_map(states)
    n = len(states)
    P = np.zeros((n, n))
    for a, (beads, perm, w0, w1) in enumerate(states):
        for particle, dz in ((0, 1), (0, -1), (1, 1), (1, -1)):
            wraps = [w0, w1]
            wraps[particle] += dz
            if wraps[particle] not in WRAPS:
                P[a, a] += 0.25
                continue
            b = idx[(beads, perm, wraps[0], wraps[1])]
            acc = min(1.0, pi[b] / pi[a]) if pi[a] > 0 else 1.0
            P[a, b] += acc * 0.25
            P[a, a] += (1.0 - acc) * 0.25
    return P


def detailed_balance_violation(P, pi) -> float:
    flow = pi[:, None] * P
    return float(np.max(np.abs(flow - flow.T)))


def stationarity_violation(P, pi) -> float:
    return float(np.max(np.abs(pi @ P - pi)))
