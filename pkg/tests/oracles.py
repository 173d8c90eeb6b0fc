"""Reference computations that avoid the library's eigendecomposition.

Each oracle works from the generator directly (matrix series, brute-force
enumeration, general nonsymmetric eigensolvers) so that agreement with the
spectral route is evidence rather than tautology.
"""

import itertools

import numpy as np


def expm_series(Q, t, terms=30):
    """exp(tQ) by Taylor series with scaling and squaring."""
    A = np.asarray(Q, dtype=float) * t
    norm = np.abs(A).sum(axis=1).max() if A.size else 0.0
    squarings = max(0, int(np.ceil(np.log2(norm))) + 1) if norm > 0.5 else 0
    A = A / (2.0**squarings)
    result = np.eye(A.shape[0])
    term = np.eye(A.shape[0])
    for k in range(1, terms + 1):
        term = term @ A / k
        result = result + term
    for _ in range(squarings):
        result = result @ result
    return result


def gap_nonsymmetric(Q):
    """Smallest nonzero eigenvalue of -Q from the general (nonsymmetric) solver."""
    vals = np.sort(np.linalg.eigvals(-np.asarray(Q)).real)
    return vals[1]


def covariance_direct(Q, pi, f, t):
    H = expm_series(Q, t)
    f = np.asarray(f, dtype=float)
    return float(pi @ (f * (H @ f)) - (pi @ f) ** 2)


def flip_direct(Q, pi, f, t):
    H = expm_series(Q, t)
    f = np.asarray(f)
    differ = f[:, None] != f[None, :]
    return float(np.sum(pi[:, None] * H * differ))


def phi_direct(Q, pi, members):
    A = set(members)
    flow = sum(pi[i] * Q[i, j] for i in A for j in range(len(pi)) if j not in A)
    return flow / sum(pi[i] for i in A)


def brute_force_bottleneck(Q, pi, lo=0.0, hi=0.5 + 1e-12):
    """Minimum Phi over subsets with pi(A) in (lo, hi], by itertools."""
    n = len(pi)
    best = None
    for size in range(1, n):
        for members in itertools.combinations(range(n), size):
            mass = sum(pi[i] for i in members)
            if not lo < mass <= hi:
                continue
            value = phi_direct(Q, pi, members)
            if best is None or value < best[0] - 1e-12:
                best = (value, members)
    return best


def min_set_size_for_mass(mass, fraction):
    """Smallest k such that some k-subset carries at least fraction * total."""
    mass = np.asarray(mass)
    target = fraction * mass.sum() - 1e-12 * mass.sum()
    for k in range(1, mass.size + 1):
        if max(sum(mass[list(c)]) for c in itertools.combinations(range(mass.size), k)) >= target:
            return k
    return mass.size
