"""Fourier profiles of observables and noise sensitivity/stability diagnostics.

Everything here works in the pi-orthonormal eigenbasis: with coefficients
``fhat(i) = <f, psi_i>_pi`` the stationary covariance at time ``t`` is
``sum_{i>=1} exp(-lambda_i t) fhat(i)^2``.  Time is measured in units of the
relaxation time throughout, i.e. ``t = alpha * t_rel``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .chain_models import Chain
from .errors import (
    BadSubsetSize,
    DimensionMismatch,
    InvalidParams,
    NonpositiveAlpha,
    NotBoolean,
    NumericalFailure,
)
from .spectral import BAND_TOL, SpectralDecomposition

DEFAULT_ALPHAS = np.logspace(-3, 1, 25)


@dataclass(frozen=True, eq=False)
class Observable:
    values: np.ndarray
    is_boolean: bool

    @classmethod
    def from_values(cls, values) -> "Observable":
        v = np.array(values, dtype=float)
        v.setflags(write=False)
        return cls(v, bool(np.all((v == 0.0) | (v == 1.0))))

    @classmethod
    def indicator(cls, chain: Chain, subset) -> "Observable":
        return cls.from_values(chain.subset_mask(subset).astype(float))

    @classmethod
    def dictator(cls, chain: Chain, coordinate: int) -> "Observable":
        """``f(w) = w(coordinate)`` for chains whose labels are bit strings."""
        try:
            vals = [float(str(s)[coordinate]) for s in chain.states]
        except (IndexError, ValueError):
            raise InvalidParams(
                "dictator needs bit-string state labels", coordinate=coordinate
            ) from None
        return cls.from_values(vals)

    def __len__(self) -> int:
        return self.values.size


@dataclass(frozen=True, eq=False)
class SpectralProfile:
    fhat: np.ndarray
    eigenvalues: np.ndarray
    gap_index: int
    bands: tuple
    is_boolean: bool

    @property
    def mean(self) -> float:
        return float(self.fhat[0])

    @property
    def second_moment(self) -> float:
        return float(np.sum(self.fhat**2))

    @property
    def variance(self) -> float:
        return float(np.sum(self.fhat[1:] ** 2))

    @property
    def spectral_gap(self) -> float:
        return float(self.eigenvalues[self.gap_index])

    @property
    def relaxation_time(self) -> float:
        return 1.0 / self.spectral_gap

    @property
    def band_masses(self) -> np.ndarray:
        sq = self.fhat**2
        return np.array([sq[list(b)].sum() for b in self.bands])

    @property
    def spectral_measure(self) -> np.ndarray | None:
        """``P_f(lambda = lambda_i)``, normalised over all i including 0."""
        total = self.second_moment
        if total == 0.0:
            return None
        return self.fhat**2 / total

    @property
    def mean_lambda(self) -> float | None:
        total = self.second_moment
        if total == 0.0:
            return None
        return float(np.sum(self.eigenvalues * self.fhat**2) / total)

    def to_dict(self) -> dict:
        return {
            "mean": self.mean,
            "variance": self.variance,
            "second_moment": self.second_moment,
            "band_masses": self.band_masses.tolist(),
            "mean_lambda": self.mean_lambda,
            "is_boolean": self.is_boolean,
        }


def fourier_profile(dec: SpectralDecomposition, f) -> SpectralProfile:
    values = f.values if isinstance(f, Observable) else np.asarray(f, dtype=float)
    if values.shape != (dec.n_states,):
        raise DimensionMismatch(
            "observable length does not match the chain",
            length=int(values.size),
            states=dec.n_states,
        )
    fhat = dec.eigenvectors.T @ (dec.pi * values)
    second = float(dec.pi @ values**2)
    if abs(float(np.sum(fhat**2)) - second) > 1e-9 * max(1.0, second):
        raise NumericalFailure("Parseval identity violated", expected=second)
    is_bool = f.is_boolean if isinstance(f, Observable) else Observable.from_values(values).is_boolean
    fhat.setflags(write=False)
    return SpectralProfile(fhat, dec.eigenvalues, dec.gap_index, dec.bands, is_bool)


def _alphas(alphas) -> np.ndarray:
    a = np.atleast_1d(np.asarray(alphas, dtype=float))
    if np.any(a <= 0):
        raise NonpositiveAlpha("alpha values must be positive", alphas=a.tolist())
    return a


def _decay(profile: SpectralProfile, times: np.ndarray) -> np.ndarray:
    # exp(-lambda_i t) for i >= 1, one row per time
    return np.exp(-np.outer(times, profile.eigenvalues[1:]))


def covariance_at_times(profile: SpectralProfile, times) -> np.ndarray:
    """``Cov(f(X_0), f(X_t))`` for absolute times ``t``."""
    t = np.atleast_1d(np.asarray(times, dtype=float))
    return _decay(profile, t) @ profile.fhat[1:] ** 2


def flip_at_times(profile: SpectralProfile, times) -> np.ndarray:
    """``P(f(X_0) != f(X_t))`` for a Boolean ``f`` and absolute times ``t``."""
    if not profile.is_boolean:
        raise NotBoolean("flip probability needs a Boolean observable")
    t = np.atleast_1d(np.asarray(times, dtype=float))
    sq = profile.fhat[1:] ** 2
    # -expm1 keeps 1 - exp(-x) accurate for tiny x
    flip = 2.0 * (-np.expm1(-np.outer(t, profile.eigenvalues[1:]))) @ sq
    # Boolean f has E[f] = E[f^2], so flip = 2 (E[f] - E[f H_t f]).
    same = profile.mean**2 + _decay(profile, t) @ sq
    alt = 2.0 * (profile.mean - same)
    if np.any(np.abs(flip - alt) > 1e-10):
        raise NumericalFailure("flip/covariance identity violated")
    return np.clip(flip, 0.0, 1.0)


def covariance_curve(profile: SpectralProfile, alphas=DEFAULT_ALPHAS) -> list:
    """``[(alpha, Cov(f(X_0), f(X_{alpha t_rel})))]``."""
    a = _alphas(alphas)
    cov = covariance_at_times(profile, a * profile.relaxation_time)
    cov = np.clip(cov, 0.0, profile.variance)
    return list(zip(a.tolist(), cov.tolist()))


def flip_curve(profile: SpectralProfile, alphas=DEFAULT_ALPHAS) -> list:
    """``[(alpha, P(f(X_0) != f(X_{alpha t_rel})))]`` for Boolean ``f``."""
    a = _alphas(alphas)
    return list(zip(a.tolist(), flip_at_times(profile, a * profile.relaxation_time).tolist()))


def _ratio(profile: SpectralProfile) -> np.ndarray:
    return profile.eigenvalues[1:] / profile.spectral_gap


def stability_tail_mass(profile: SpectralProfile, k: float) -> float:
    """Variance mass on eigenvalues ``lambda_i >= k lambda_1``."""
    sel = _ratio(profile) >= k * (1.0 - BAND_TOL)
    return float(np.sum(profile.fhat[1:][sel] ** 2))


def sensitivity_band_mass(profile: SpectralProfile, k: float) -> float:
    """Variance mass on eigenvalues ``lambda_1 <= lambda_i < k lambda_1``."""
    sel = _ratio(profile) < k * (1.0 - BAND_TOL)
    return float(np.sum(profile.fhat[1:][sel] ** 2))


def return_probability(dec: SpectralDecomposition, t: float) -> float:
    """``P(X_0 = X_t)`` with ``X_0 ~ pi``."""
    weights = (dec.pi[:, None] * dec.eigenvectors) ** 2  # pi(w)^2 psi_i(w)^2
    return float(np.exp(-dec.eigenvalues * t) @ weights.sum(axis=0))


def sensitive_existence_gap(dec: SpectralDecomposition) -> float:
    """``P(X_0 = X_{t_rel}) - sum_w pi(w)^2``.

    Evaluated as ``sum_{i>=1} e^{-lambda_i/lambda_1} sum_w pi(w)^2 psi_i(w)^2``,
    which drops the ``i = 0`` term exactly instead of by cancellation.
    """
    weights = ((dec.pi[:, None] * dec.eigenvectors[:, 1:]) ** 2).sum(axis=0)
    return float(np.exp(-dec.eigenvalues[1:] / dec.spectral_gap) @ weights)


def random_subset_indicator(chain: Chain, m: int, seed) -> Observable:
    n = chain.n_states
    if not 0 < m < n:
        raise BadSubsetSize("need 0 < m < |S|", m=m, states=n)
    rng = np.random.default_rng(seed)
    chosen = rng.choice(n, size=m, replace=False)
    values = np.zeros(n)
    values[chosen] = 1.0
    return Observable.from_values(values)


def expected_random_subset_cov(dec: SpectralDecomposition, m: int) -> float:
    """Mean of ``Cov(f(X_0), f(X_{t_rel}))`` over uniformly random m-subsets ``f``."""
    n = dec.n_states
    if not 0 < m < n:
        raise BadSubsetSize("need 0 < m < |S|", m=m, states=n)
    return (n / (n - 1)) * (m * (n - m) / n**2) * sensitive_existence_gap(dec)


def subset_variance_formula(n_states: int, m: int, pi=None) -> float:
    """``m(|S|-m)/|S|^2``, the variance of an m-subset indicator under uniform pi."""
    if pi is not None and not np.allclose(pi, 1.0 / n_states, rtol=0, atol=1e-12):
        warnings.warn("m(|S|-m)/|S|^2 is the variance only for uniform pi", stacklevel=2)
    return m * (n_states - m) / n_states**2


@dataclass(frozen=True)
class SharpnessReport:
    cov_upper: float
    flip_lower: float | None
    cov_exact: float
    flip_exact: float | None
    holds: bool


def sharpness_bounds(profile: SpectralProfile, T: float, alpha: float) -> SharpnessReport:
    """Bounds at time ``alpha T``: ``Cov <= e^{-alpha lambda_1 T}`` and
    ``flip >= 2 (1 - e^{-alpha lambda_1 T}) Var`` (the latter for Boolean f)."""
    if T <= 0 or alpha <= 0:
        raise NonpositiveAlpha("T and alpha must be positive", T=T, alpha=alpha)
    x = alpha * profile.spectral_gap * T
    t = alpha * T
    cov_upper = float(np.exp(-x))
    cov_exact = float(covariance_at_times(profile, t)[0])
    holds = cov_exact <= cov_upper + 1e-12
    flip_lower = flip_exact = None
    if profile.is_boolean:
        flip_lower = float(-2.0 * np.expm1(-x) * profile.variance)
        flip_exact = float(flip_at_times(profile, t)[0])
        holds = holds and flip_exact >= flip_lower - 1e-12
    return SharpnessReport(cov_upper, flip_lower, cov_exact, flip_exact, bool(holds))
