"""Independent oracle routines shared by the test modules."""

import itertools
import math

import numpy as np

from bosecycles.canonical import cycle_log_weights


def perm_cycle_lengths(perm) -> list[int]:
    """Cycle lengths of a permutation given as a successor tuple."""
    seen = [False] * len(perm)
    out = []
    for start in range(len(perm)):
        if seen[start]:
            continue
        length = 0
        k = start
        while not seen[k]:
            seen[k] = True
            k = perm[k]
            length += 1
        out.append(length)
    return out


def enumeration_log_y(box, beta, n: int) -> float:
    """log Y(n) by summing the cycle weights over all n! permutations."""
    log_c = cycle_log_weights(box, beta, n)
    c = np.exp(log_c)
    total = 0.0
    for perm in itertools.permutations(range(n)):
        w = 1.0
        for ln in perm_cycle_lengths(perm):
            w *= c[ln]
        total += w
    return math.log(total / math.factorial(n))


def enumeration_cycle_density(box, beta, n_particles: int, n: int) -> float:
    """Exact density of particles in length-n cycles by permutation enumeration."""
    log_c = cycle_log_weights(box, beta, n_particles)
    c = np.exp(log_c)
    total = 0.0
    weighted = 0.0
    for perm in itertools.permutations(range(n_particles)):
        w = 1.0
        lengths = perm_cycle_lengths(perm)
        for ln in lengths:
            w *= c[ln]
        total += w
        weighted += w * n * lengths.count(n)
    return weighted / total / box.volume
