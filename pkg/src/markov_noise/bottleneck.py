"""Bottleneck ratios, Cheeger checks and the bottleneck flip bound.

``Phi(A) = sum_{i in A, j notin A} pi(i) q_ij / pi(A)`` and
``Phi_* = min { Phi(A) : 0 < pi(A) <= 1/2 }``.  Exact minimisation enumerates
all subsets in vectorised chunks of bitmasks, so it is capped at
:data:`ENUMERATION_CAP` states.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .chain_models import Chain
from .errors import EmptyOrFullSet, NoSubsetInMassWindow, StateSpaceTooLarge
from .noise import DEFAULT_ALPHAS, flip_at_times, fourier_profile
from .spectral import SpectralDecomposition

ENUMERATION_CAP = 24
HALF_SLACK = 1e-12
TIE_TOL = 1e-12
CHUNK_BITS = 16


@dataclass(frozen=True)
class CutReport:
    subset: tuple  # state indices, ascending
    pi_mass: float
    boundary_flow: float
    phi: float
    is_exact_minimum: bool
    search_method: str
    phi_star: float | None = None

    @property
    def gap_to_phi_star(self) -> float | None:
        return None if self.phi_star is None else self.phi - self.phi_star

    def to_dict(self, labels=None) -> dict:
        return {
            "subset": [labels[i] for i in self.subset] if labels is not None else list(self.subset),
            "pi_mass": self.pi_mass,
            "boundary_flow": self.boundary_flow,
            "phi": self.phi,
            "is_exact_minimum": self.is_exact_minimum,
            "search_method": self.search_method,
            "phi_star": self.phi_star,
            "gap_to_phi_star": self.gap_to_phi_star,
        }


def _mask(chain: Chain, subset) -> np.ndarray:
    mask = chain.subset_mask(subset)
    if not mask.any() or mask.all():
        raise EmptyOrFullSet("A must be a nonempty proper subset")
    return mask


def boundary_flow(chain: Chain, subset) -> float:
    mask = _mask(chain, subset)
    F = chain.flow_matrix()
    return float(F[np.ix_(mask, ~mask)].sum())


def phi(chain: Chain, subset) -> float:
    mask = _mask(chain, subset)
    return boundary_flow(chain, mask) / float(chain.pi[mask].sum())


def _report(chain: Chain, mask: np.ndarray, exact: bool, method: str, phi_star=None) -> CutReport:
    flow = boundary_flow(chain, mask)
    mass = float(chain.pi[mask].sum())
    return CutReport(
        tuple(int(i) for i in np.nonzero(mask)[0]),
        mass,
        flow,
        flow / mass,
        exact,
        method,
        phi_star,
    )


def _tiebreak_key(mask_int: int, n: int) -> tuple:
    members = tuple(i for i in range(n) if (mask_int >> i) & 1)
    return (len(members), members)


def _bit_table(n_bits: int) -> np.ndarray:
    ints = np.arange(1 << n_bits, dtype=np.int64)
    return ((ints[:, None] >> np.arange(n_bits, dtype=np.int64)) & 1).astype(float)


class _SubsetScanner:
    """Mass and boundary flow of every subset, one block of low bits at a time.

    A mask splits into low bits ``L`` (the first ``n_low`` states) and high bits
    ``H``; with ``F`` the flow matrix,
    ``flow(A) = out(A) - inner(L) - inner(H) - 2 * L^T F_{low,high} H``,
    so each block costs one matrix-vector product against a shared table.
    """

    def __init__(self, chain: Chain):
        n = chain.n_states
        self.n = n
        self.n_low = min(n, CHUNK_BITS)
        self.n_high = n - self.n_low
        F = chain.flow_matrix()
        pi = np.asarray(chain.pi, dtype=float)
        out = F.sum(axis=1)
        lo, hi = slice(0, self.n_low), slice(self.n_low, n)
        self.bits_low = _bit_table(self.n_low)
        self.bits_high = _bit_table(self.n_high)
        self.mass_low = self.bits_low @ pi[lo]
        self.mass_high = self.bits_high @ pi[hi]
        self.out_low = self.bits_low @ out[lo]
        self.out_high = self.bits_high @ out[hi]
        self.inner_low = np.einsum("ij,ij->i", self.bits_low @ F[lo, lo], self.bits_low)
        self.inner_high = np.einsum("ij,ij->i", self.bits_high @ F[hi, hi], self.bits_high)
        self.cross = F[lo, hi]
        weights = 2.0 ** np.arange(n - 1, -1, -1)
        self.rev_low = self.bits_low @ weights[lo]
        self.rev_high = self.bits_high @ weights[hi]
        self.size_low = self.bits_low.sum(axis=1)
        self.size_high = self.bits_high.sum(axis=1)

    def block(self, h: int, windows):
        bh = self.bits_high[h]
        mass = self.mass_low + self.mass_high[h]
        flow = (
            self.out_low
            + self.out_high[h]
            - self.inner_low
            - self.inner_high[h]
            - 2.0 * (self.bits_low @ (self.cross @ bh))
        )
        valid = np.ones(mass.size, dtype=bool)
        if h == 0:
            valid[0] = False  # empty set
        if h == (1 << self.n_high) - 1:
            valid[-1] = False  # full set
        results = []
        for lo, hi in windows:
            ok = valid & (mass > lo) & (mass <= hi)
            if not ok.any():
                results.append(None)
                continue
            vals = np.where(ok, flow / np.where(ok, mass, 1.0), np.inf)
            best = float(vals.min())
            tied = np.nonzero(vals <= best + TIE_TOL * max(1.0, best))[0]
            size = self.size_low[tied]
            tied = tied[size == size.min()]
            # Equal-size sets: lexicographically smallest index tuple has the
            # largest bit-reversed mask.
            low = int(tied[np.argmax(self.rev_low[tied])])
            results.append((best, (h << self.n_low) | low))
        return results


def _enumerate(
    chain: Chain, windows, max_states: int = ENUMERATION_CAP, threads: int | None = None
) -> list:
    """Minimiser mask of ``Phi`` for each ``(lo, hi]`` window on ``pi(A)``."""
    n = chain.n_states
    if n > max_states:
        raise StateSpaceTooLarge(
            f"{n} states exceeds the enumeration cap of {max_states}", cap=max_states
        )
    scanner = _SubsetScanner(chain)
    highs = range(1 << scanner.n_high)
    threads = threads or int(os.environ.get("MARKOV_NOISE_THREADS", 0)) or os.cpu_count() or 1
    if threads > 1 and len(highs) > 1:
        with ThreadPoolExecutor(threads) as pool:
            blocks = list(pool.map(lambda h: scanner.block(h, windows), highs))
    else:
        blocks = [scanner.block(h, windows) for h in highs]
    masks = []
    for w in range(len(windows)):
        parts = [b[w] for b in blocks if b[w] is not None]
        if not parts:
            masks.append(None)
            continue
        best = min(p[0] for p in parts)
        cutoff = best + TIE_TOL * max(1.0, best)
        winner = min((m for v, m in parts if v <= cutoff), key=lambda m: _tiebreak_key(m, n))
        masks.append(np.array([(winner >> i) & 1 for i in range(n)], dtype=bool))
    return masks


FULL_WINDOW = (0.0, 0.5 + HALF_SLACK)
NONDEGENERATE_WINDOW = (0.25 + HALF_SLACK, 0.5 + HALF_SLACK)


def exact_bottleneck(
    chain: Chain, max_states: int = ENUMERATION_CAP, threads: int | None = None
) -> CutReport:
    """Global minimiser of ``Phi`` over ``0 < pi(A) <= 1/2``.

    Ties go to the smallest set, then to the lexicographically smallest index tuple.
    """
    (mask,) = _enumerate(chain, [FULL_WINDOW], max_states, threads)
    report = _report(chain, mask, True, "enumeration")
    return replace(report, phi_star=report.phi)


def sweep_cut(dec: SpectralDecomposition, chain: Chain) -> CutReport:
    """Best prefix cut of the states ordered by ``psi_1`` (both directions)."""
    psi = dec.eigenvectors[:, dec.gap_index]
    n = chain.n_states
    candidates = []
    for order in (np.argsort(-psi, kind="stable"), np.argsort(psi, kind="stable")):
        mask = np.zeros(n, dtype=bool)
        for size in range(1, n):
            mask[order[size - 1]] = True
            if float(chain.pi[mask].sum()) <= 0.5 + HALF_SLACK:
                candidates.append((phi(chain, mask), mask.copy()))
    best = min(v for v, _ in candidates)
    ties = [m for v, m in candidates if v <= best + TIE_TOL * max(1.0, best)]
    winner = min(ties, key=lambda m: (int(m.sum()), tuple(np.nonzero(m)[0])))
    return _report(chain, winner, False, "sweep")


@dataclass(frozen=True)
class CheegerReport:
    phi_star: float
    lambda1: float
    lower_holds: bool
    upper_holds: bool

    @property
    def holds(self) -> bool:
        return self.lower_holds and self.upper_holds


def cheeger_check(
    chain: Chain, dec: SpectralDecomposition, max_states: int = ENUMERATION_CAP
) -> CheegerReport:
    """``Phi_*^2 <= 2 lambda_1 <= 4 Phi_*``."""
    phi_star = exact_bottleneck(chain, max_states).phi
    lam = dec.spectral_gap
    return CheegerReport(
        phi_star, lam, phi_star**2 <= 2 * lam + 1e-9, 2 * lam <= 4 * phi_star + 1e-9
    )


@dataclass(frozen=True)
class IdentityCheck:
    phi: float
    mean_lambda: float
    match: bool


def spectral_identity_check(dec: SpectralDecomposition, chain: Chain, subset) -> IdentityCheck:
    """``Phi(A)`` against the spectral mean ``E_f[lambda]`` of ``f = 1_A``."""
    mask = _mask(chain, subset)
    value = phi(chain, mask)
    mean_lambda = fourier_profile(dec, mask.astype(float)).mean_lambda
    return IdentityCheck(value, mean_lambda, abs(value - mean_lambda) <= 1e-9 * max(1.0, value))


def nondegenerate_minimizer(
    chain: Chain, max_states: int = ENUMERATION_CAP, threads: int | None = None
) -> CutReport:
    """Best ``Phi(A)`` with ``pi(A)`` in ``(1/4, 1/2]``, reported against ``Phi_*``."""
    full, restricted = _enumerate(chain, [FULL_WINDOW, NONDEGENERATE_WINDOW], max_states, threads)
    if restricted is None:
        raise NoSubsetInMassWindow("no subset has pi(A) in (1/4, 1/2]")
    phi_star = phi(chain, full)
    return _report(chain, restricted, True, "restricted", phi_star=phi_star)


@dataclass(frozen=True, eq=False)
class FlipBoundReport:
    alphas: np.ndarray
    flip: np.ndarray
    bound: np.ndarray  # 2 alpha t_rel pi(A) Phi(A)
    bound_without_factor_two: np.ndarray
    pi_mass: float
    phi: float
    relaxation_time: float

    @property
    def holds(self) -> bool:
        return bool(np.all(self.flip <= self.bound + 1e-12))

    @property
    def violations(self) -> int:
        return int(np.sum(self.flip > self.bound + 1e-12))

    def to_dict(self) -> dict:
        return {
            "pi_mass": self.pi_mass,
            "phi": self.phi,
            "relaxation_time": self.relaxation_time,
            "holds": self.holds,
            "rows": [
                {"alpha": a, "flip": f, "bound": b, "bound_without_factor_two": b1}
                for a, f, b, b1 in zip(
                    self.alphas.tolist(),
                    self.flip.tolist(),
                    self.bound.tolist(),
                    self.bound_without_factor_two.tolist(),
                )
            ],
        }


def flip_bound_check(
    dec: SpectralDecomposition, chain: Chain, subset, alphas=DEFAULT_ALPHAS
) -> FlipBoundReport:
    """``P(1_A(X_0) != 1_A(X_{alpha t_rel})) <= 2 alpha t_rel pi(A) Phi(A)``.

    Both the bound with the reversibility factor 2 and without it are reported.
    """
    mask = _mask(chain, subset)
    alphas = np.atleast_1d(np.asarray(alphas, dtype=float))
    t_rel = dec.relaxation_time
    prof = fourier_profile(dec, mask.astype(float))
    flips = flip_at_times(prof, alphas * t_rel)
    mass = float(chain.pi[mask].sum())
    value = phi(chain, mask)
    single = alphas * t_rel * mass * value
    return FlipBoundReport(alphas, flips, 2.0 * single, single, mass, value, t_rel)


@dataclass(frozen=True)
class AllSubsetsFlipReport:
    subsets_checked: int
    violations: int
    worst_slack: float  # min over (A, alpha) of bound - flip
    worst_subset: tuple

    @property
    def holds(self) -> bool:
        return self.violations == 0


def flip_bound_all_subsets(
    dec: SpectralDecomposition,
    chain: Chain,
    alphas=DEFAULT_ALPHAS,
    max_states: int = 20,
) -> AllSubsetsFlipReport:
    """Run :func:`flip_bound_check` over every nonempty proper subset at once.

    Uses ``2 alpha t_rel pi(A) Phi(A) = 2 alpha t_rel flow(A)`` and evaluates the
    flip probabilities for a block of bitmasks with one matrix product.
    """
    n = chain.n_states
    if n > max_states:
        raise StateSpaceTooLarge(f"{n} states exceeds the cap of {max_states}", cap=max_states)
    alphas = np.atleast_1d(np.asarray(alphas, dtype=float))
    times = alphas * dec.relaxation_time
    growth = -np.expm1(-np.outer(dec.eigenvalues[1:], times))  # (n-1, n_alpha)
    pi = dec.pi
    F = chain.flow_matrix()
    out = F.sum(axis=1)
    weights = pi[:, None] * dec.eigenvectors[:, 1:]
    violations, worst, worst_mask = 0, np.inf, 0
    block = 1 << min(n, 14)
    for start in range(1, (1 << n) - 1, block):
        ints = np.arange(start, min(start + block, (1 << n) - 1), dtype=np.int64)
        B = ((ints[:, None] >> np.arange(n, dtype=np.int64)) & 1).astype(float)
        fhat = B @ weights
        flip = 2.0 * (fhat**2) @ growth
        flow = B @ out - np.einsum("ij,ij->i", B @ F, B)
        bound = 2.0 * flow[:, None] * times[None, :]
        slack = bound - flip
        violations += int(np.sum(slack < -1e-12))
        row_min = slack.min(axis=1)
        j = int(np.argmin(row_min))
        if row_min[j] < worst:
            worst, worst_mask = float(row_min[j]), int(ints[j])
    members = tuple(i for i in range(n) if (worst_mask >> i) & 1)
    return AllSubsetsFlipReport((1 << n) - 2, violations, worst, members)
