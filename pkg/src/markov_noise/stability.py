"""Eigenvector truncations, localization metrics and low-band amplitude probes.

``Psi_k`` denotes the span of eigenvectors with ``lambda_1 <= lambda_i <= k lambda_1``.
Unit vectors in ``Psi_k`` are parametrised by coefficient vectors ``c`` with
``|c| = 1`` since the eigenbasis is pi-orthonormal.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .chain_models import Chain
from .errors import (
    BadNormalization,
    EmptyBand,
    EmptySubspace,
    InvalidParams,
    NoAdmissibleThreshold,
    NotAnAutomorphism,
    TrivialSet,
    ZeroCoefficients,
    ZeroVector,
)
from .noise import DEFAULT_ALPHAS, Observable, flip_at_times, fourier_profile
from .spectral import SpectralDecomposition, band_subspace

AUTOMORPHISM_TOL = 1e-10
LEVEL_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class ThresholdFunction:
    band_k: float
    psi: np.ndarray
    c: float
    indicator: Observable
    coefficients: np.ndarray | None = None


def _unit_combination(dec: SpectralDecomposition, band_k: float, coefficients) -> tuple:
    idx = band_subspace(dec, band_k)
    if not idx:
        raise EmptySubspace("Psi_k is empty", band_k=band_k)
    coef = np.asarray(coefficients, dtype=float)
    if coef.shape != (len(idx),):
        raise InvalidParams(
            "one coefficient per basis vector of Psi_k is required", dim=len(idx)
        )
    norm = float(np.linalg.norm(coef))
    if norm == 0.0:
        raise ZeroCoefficients("coefficients are all zero")
    coef = coef / norm
    return dec.eigenvectors[:, list(idx)] @ coef, coef


def make_threshold_function(
    dec: SpectralDecomposition, band_k: float, coefficients, c: float
) -> ThresholdFunction:
    """``1{psi >= c}`` for the unit vector ``psi`` of ``Psi_k`` given by ``coefficients``."""
    psi, coef = _unit_combination(dec, band_k, coefficients)
    ind = Observable.from_values((psi >= c).astype(float))
    return ThresholdFunction(float(band_k), psi, float(c), ind, coef)


@dataclass(frozen=True)
class ThresholdRow:
    c: float
    mass_above: float
    mass_below: float
    cond_above: bool
    cond_below: bool
    interval_masses: tuple
    interval_sup: float
    flip_at_min_alpha: float | None


@dataclass(frozen=True, eq=False)
class SweepResult:
    best: ThresholdFunction
    best_row: ThresholdRow
    rows: tuple
    delta: float
    g_exponent: float
    alphas: np.ndarray

    def to_dict(self) -> dict:
        return {
            "delta": self.delta,
            "g_exponent": self.g_exponent,
            "alphas": self.alphas.tolist(),
            "best": {
                "c": self.best.c,
                "band_k": self.best.band_k,
                "indicator": self.best.indicator.values.tolist(),
                "flip_at_min_alpha": self.best_row.flip_at_min_alpha,
            },
            "rows": [
                {
                    "c": r.c,
                    "mass_above": r.mass_above,
                    "mass_below": r.mass_below,
                    "cond_i": r.cond_above,
                    "cond_ii": r.cond_below,
                    "cond_iii_sup": r.interval_sup,
                    "flip_at_min_alpha": r.flip_at_min_alpha,
                }
                for r in self.rows
            ],
        }


def _sweep_vector(dec, psi, delta, g_exponent, alphas):
    pi = dec.pi
    levels = np.unique(psi)
    thresholds = np.append(levels, levels[-1] + 1.0)
    t_min = alphas[0] * dec.relaxation_time
    widths = alphas**g_exponent
    rows, candidates = [], []
    for c in thresholds:
        above = psi >= c
        mass_above = float(pi[above].sum())
        mass_below = 1.0 - mass_above
        inside = [float(pi[np.abs(psi - c) <= w].sum()) for w in widths]
        ok_i, ok_ii = mass_above > delta, mass_below > delta
        flip = None
        if ok_i and ok_ii:
            prof = fourier_profile(dec, above.astype(float))
            flip = float(flip_at_times(prof, t_min)[0])
        row = ThresholdRow(
            float(c), mass_above, mass_below, ok_i, ok_ii, tuple(inside), max(inside), flip
        )
        rows.append(row)
        if flip is not None:
            candidates.append((flip, len(candidates), row, above))
    return rows, candidates


def threshold_sweep(
    dec: SpectralDecomposition,
    band_k: float = 1.0,
    delta: float = 0.2,
    g_exponent: float = 1.0 / 3.0,
    alphas=DEFAULT_ALPHAS,
    samples: int = 0,
    seed=None,
) -> SweepResult:
    """Sweep superlevel sets of ``psi_1`` (plus ``samples`` random unit vectors of
    ``Psi_k``) and keep the admissible cut with the smallest flip probability at
    the smallest grid ``alpha``.

    A threshold ``c`` is admissible when both ``P(psi >= c)`` and ``P(psi < c)``
    exceed ``delta``.  Each row also reports the interval masses
    ``P(|psi - c| <= eps^g_exponent)`` for ``eps`` on the alpha grid.
    """
    if not 0 < delta < 0.5:
        raise InvalidParams("delta must lie in (0, 1/2)", delta=delta)
    if not 0 < g_exponent < 0.5:
        raise InvalidParams("g_exponent must lie in (0, 1/2)", g_exponent=g_exponent)
    alphas = np.sort(np.asarray(alphas, dtype=float))
    idx = band_subspace(dec, band_k)
    vectors = [(dec.eigenvectors[:, dec.gap_index], np.eye(len(idx))[0])]
    if samples:
        rng = np.random.default_rng(seed)
        for _ in range(samples):
            coef = rng.standard_normal(len(idx))
            coef /= np.linalg.norm(coef)
            vectors.append((dec.eigenvectors[:, list(idx)] @ coef, coef))

    all_rows, best = [], None
    for vi, (psi, coef) in enumerate(vectors):
        rows, cands = _sweep_vector(dec, psi, delta, g_exponent, alphas)
        if vi == 0:
            all_rows = rows
        for flip, order, row, above in cands:
            key = (flip, vi, order)
            if best is None or key < best[0]:
                best = (key, row, psi, coef, above)
    if best is None:
        raise NoAdmissibleThreshold(
            "no threshold leaves more than delta mass on both sides", delta=delta
        )
    _, row, psi, coef, above = best
    func = ThresholdFunction(
        float(band_k), psi, row.c, Observable.from_values(above.astype(float)), coef
    )
    return SweepResult(func, row, tuple(all_rows), float(delta), float(g_exponent), alphas)


# -- localization ------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class LocalizationReport:
    norm_mode: str
    mass: np.ndarray
    min_L: dict
    achieving_set: dict
    M_w: np.ndarray | None = None

    def to_dict(self, labels=None) -> dict:
        def names(ix):
            return [labels[i] for i in ix] if labels is not None else list(ix)

        return {
            "norm_mode": self.norm_mode,
            "total_mass": float(self.mass.sum()),
            "min_L": {str(d): L for d, L in self.min_L.items()},
            "achieving_set": {str(d): names(s) for d, s in self.achieving_set.items()},
            "M_w": None if self.M_w is None else self.M_w.tolist(),
        }


_NORM_MODES = {"pi": "pi_weighted", "pi_weighted": "pi_weighted", "counting": "counting"}


def localization_report(
    pi,
    deltas=(0.1,),
    *,
    vector=None,
    dec: SpectralDecomposition | None = None,
    band=None,
    norm_mode: str = "pi_weighted",
) -> LocalizationReport:
    """Smallest sets carrying a ``(1 - delta)`` share of a vector's squared mass.

    Pass either ``vector`` or ``dec`` plus ``band`` (indices); for a band the
    per-state mass is summed over the band's eigenvectors.  The descending-mass
    prefix is an optimal set, so ``min_L`` is exact.
    """
    mode = _NORM_MODES.get(norm_mode)
    if mode is None:
        raise InvalidParams("norm_mode must be 'pi_weighted' or 'counting'", norm_mode=norm_mode)
    pi = np.asarray(pi, dtype=float)
    M_w = None
    if vector is not None:
        sq = np.asarray(vector, dtype=float) ** 2
    elif dec is not None and band is not None:
        M_w = band_amplitude_max(dec, band)
        sq = M_w
    else:
        raise InvalidParams("pass a vector or a decomposition with a band")
    mass = pi * sq if mode == "pi_weighted" else sq.copy()
    total = float(mass.sum())
    if total == 0.0:
        raise ZeroVector("vector is identically zero")
    order = np.argsort(-mass, kind="stable")
    prefix = np.cumsum(mass[order])
    min_L, sets = {}, {}
    for d in deltas:
        if not 0 < d < 1:
            raise InvalidParams("delta must lie in (0, 1)", delta=d)
        target = (1.0 - d) * total - LEVEL_TOL * total
        L = int(np.searchsorted(prefix, target, side="left")) + 1
        L = min(L, mass.size)
        min_L[d] = L
        sets[d] = tuple(int(i) for i in order[:L])
    return LocalizationReport(mode, mass, min_L, sets, M_w)


def band_amplitude_max(dec: SpectralDecomposition, band) -> np.ndarray:
    """``M_w = sum_{i in band} psi_i(w)^2``, the max of ``psi(w)^2`` over unit ``psi``
    in the band's span.  Independent of the basis chosen inside the band."""
    band = list(band)
    if not band:
        raise EmptyBand("band has no indices")
    return (dec.eigenvectors[:, band] ** 2).sum(axis=1)


# -- condition (B) probe ---------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ProbeReport:
    k: float
    epsilon: float
    dim: int
    best_probability: float
    witness: np.ndarray
    witness_coefficients: np.ndarray
    exact: bool
    evaluations: int

    def to_dict(self) -> dict:
        return {
            "k": self.k,
            "epsilon": self.epsilon,
            "dim": self.dim,
            "best_probability": self.best_probability,
            "witness_coefficients": self.witness_coefficients.tolist(),
            "exact": self.exact,
            "evaluations": self.evaluations,
        }


def _prob_large(pi, values, epsilon) -> float:
    return float(pi[values**2 >= epsilon * (1.0 - LEVEL_TOL)].sum())


def _probe_plane(pi, a, b, epsilon, budget):
    """Exact maximum of ``P(psi_theta^2 >= eps)`` over ``psi_theta = cos a + sin b``.

    ``psi_theta(w) = r_w cos(theta - phi_w)``; each state contributes a closed arc
    of angles, and the best coverage is attained at some arc endpoint.
    """
    r = np.hypot(a, b)
    phi = np.arctan2(b, a)
    reach = r**2 >= epsilon * (1.0 - LEVEL_TOL)
    half = np.zeros_like(r)
    half[reach] = np.arccos(np.clip(np.sqrt(epsilon) / r[reach], -1.0, 1.0))
    candidates = np.concatenate(
        [phi[reach] - half[reach], phi[reach] + half[reach], np.pi * np.arange(budget) / budget]
    )
    best_p, best_theta = -1.0, 0.0
    for theta in candidates:
        p = _prob_large(pi, np.cos(theta) * a + np.sin(theta) * b, epsilon)
        if p > best_p:
            best_p, best_theta = p, float(theta)
    return best_p, best_theta, candidates.size


def condition_b_probe(
    dec: SpectralDecomposition,
    k: float,
    epsilon: float,
    budget: int = 360,
    seed=None,
) -> ProbeReport:
    """Search unit ``psi`` in ``Psi_k`` maximising ``P_pi(psi(w)^2 >= epsilon)``.

    Exact for ``dim Psi_k <= 2``.  In higher dimension, ``budget`` random unit
    starts are each improved by plane searches against every basis direction;
    the returned probability is attained by the returned witness, so it is a
    lower bound on the supremum.
    """
    if not 0 < epsilon:
        raise InvalidParams("epsilon must be positive", epsilon=epsilon)
    if budget < 1:
        raise InvalidParams("budget must be >= 1", budget=budget)
    idx = list(band_subspace(dec, k))
    basis = dec.eigenvectors[:, idx]
    pi = dec.pi
    d = len(idx)
    if d == 1:
        coef = np.ones(1)
        p = _prob_large(pi, basis[:, 0], epsilon)
        return ProbeReport(float(k), float(epsilon), 1, p, basis[:, 0].copy(), coef, True, 1)
    if d == 2:
        p, theta, evals = _probe_plane(pi, basis[:, 0], basis[:, 1], epsilon, budget)
        coef = np.array([np.cos(theta), np.sin(theta)])
        return ProbeReport(float(k), float(epsilon), 2, p, basis @ coef, coef, True, evals)

    rng = np.random.default_rng(seed)
    best_p, best_coef, evals = -1.0, None, 0
    starts = max(1, budget // max(1, d))
    for _ in range(starts):
        coef = rng.standard_normal(d)
        coef /= np.linalg.norm(coef)
        p_cur = _prob_large(pi, basis @ coef, epsilon)
        evals += 1
        improved = True
        while improved:
            improved = False
            for j in range(d):
                direction = np.zeros(d)
                direction[j] = 1.0
                direction -= (direction @ coef) * coef
                nrm = np.linalg.norm(direction)
                if nrm < 1e-12:
                    continue
                direction /= nrm
                p, theta, n_ev = _probe_plane(
                    pi, basis @ coef, basis @ direction, epsilon, 16
                )
                evals += n_ev
                if p > p_cur + 1e-15:
                    coef = np.cos(theta) * coef + np.sin(theta) * direction
                    coef /= np.linalg.norm(coef)
                    p_cur = _prob_large(pi, basis @ coef, epsilon)
                    improved = True
        if p_cur > best_p:
            best_p, best_coef = p_cur, coef
    witness = basis @ best_coef
    return ProbeReport(
        float(k), float(epsilon), d, _prob_large(pi, witness, epsilon), witness, best_coef, False, evals
    )


# -- delocalization and symmetry ------------------------------------------------------


@dataclass(frozen=True)
class DelocalizationCheck:
    lhs: float
    rhs: float
    holds: bool


def delocalization_bound_check(pi, psi, subset_mask) -> DelocalizationCheck:
    """``E[psi | A]^2 <= P(A^c) / P(A)^2`` for ``psi`` with ``E psi = 0``, ``E psi^2 = 1``."""
    pi = np.asarray(pi, dtype=float)
    psi = np.asarray(psi, dtype=float)
    A = np.asarray(subset_mask, dtype=bool)
    if abs(float(pi @ psi)) > 1e-9 or abs(float(pi @ psi**2) - 1.0) > 1e-9:
        raise BadNormalization("psi must satisfy E[psi] = 0 and E[psi^2] = 1")
    pa = float(pi[A].sum())
    pc = float(pi[~A].sum())
    if not A.any() or A.all() or pa <= 0.0 or pc <= 0.0:
        raise TrivialSet("need 0 < pi(A) < 1")
    lhs = (float(pi[A] @ psi[A]) / pa) ** 2
    rhs = pc / pa**2
    return DelocalizationCheck(lhs, rhs, lhs <= rhs + 1e-10)


def superlevel_sets(psi) -> list:
    """Proper superlevel sets ``{psi >= c}`` over the distinct values of ``psi``."""
    psi = np.asarray(psi)
    sets = []
    for c in np.unique(psi):
        mask = psi >= c
        if mask.any() and not mask.all():
            sets.append(mask)
    return sets


def is_automorphism(chain: Chain, permutation, tol: float = AUTOMORPHISM_TOL) -> bool:
    perm = np.asarray(permutation, dtype=int)
    n = chain.n_states
    if perm.shape != (n,) or sorted(perm.tolist()) != list(range(n)):
        return False
    Q = chain.generator
    return bool(np.max(np.abs(Q[np.ix_(perm, perm)] - Q)) <= tol)


@dataclass(frozen=True)
class AutomorphismReport:
    max_outside_band: float
    pi_mismatch: float
    passed: bool


def automorphism_invariance_check(
    dec: SpectralDecomposition, chain: Chain, permutation
) -> AutomorphismReport:
    """Check that each ``psi_i o phi`` stays inside the eigenspace of ``lambda_i``."""
    if not is_automorphism(chain, permutation):
        raise NotAnAutomorphism("permutation does not preserve the generator")
    perm = np.asarray(permutation, dtype=int)
    pi = dec.pi
    worst = 0.0
    for band in dec.bands:
        B = dec.eigenvectors[:, list(band)]
        moved = B[perm, :]
        coef = B.T @ (pi[:, None] * moved)
        resid = moved - B @ coef
        norms = np.sqrt((pi[:, None] * resid**2).sum(axis=0))
        worst = max(worst, float(norms.max()))
    pi_mismatch = float(np.max(np.abs(pi[perm] - pi)))
    return AutomorphismReport(worst, pi_mismatch, worst <= 1e-8 and pi_mismatch <= 1e-10)
