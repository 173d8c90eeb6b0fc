"""pi-orthonormal eigendecomposition of ``-Q`` and derived quantities.

Reversibility makes ``M = D^{1/2} (-Q) D^{-1/2}`` symmetric (``D = diag(pi)``),
so a dense symmetric eigensolver gives real eigenvalues and an orthonormal
basis ``u``; eigenvectors of ``-Q`` are ``psi = D^{-1/2} u`` and satisfy
``sum_w pi(w) psi_i(w) psi_j(w) = delta_ij``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .chain_models import Chain
from .errors import (
    EigensolverFailure,
    NegativeTime,
    NotCentered,
    StateSpaceTooLarge,
    ZeroFunction,
)

BAND_TOL = 1e-9
GAP_TOL = 1e-9
DEFAULT_MAX_STATES = 5000


@dataclass(frozen=True, eq=False)
class SpectralDecomposition:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray  # columns are psi_i
    pi: np.ndarray
    bands: tuple  # tuple of tuples of indices
    gap_index: int

    @property
    def spectral_gap(self) -> float:
        return float(self.eigenvalues[self.gap_index])

    @property
    def relaxation_time(self) -> float:
        return 1.0 / self.spectral_gap

    @property
    def n_states(self) -> int:
        return self.eigenvalues.size

    def psi(self, i: int) -> np.ndarray:
        return self.eigenvectors[:, i]

    def band_of(self, i: int) -> tuple:
        for band in self.bands:
            if i in band:
                return band
        raise IndexError(i)

    def band_eigenvalues(self) -> np.ndarray:
        return np.array([self.eigenvalues[list(b)].mean() for b in self.bands])


def group_bands(eigenvalues: np.ndarray, tol: float = BAND_TOL) -> tuple:
    """Maximal runs of sorted eigenvalues whose neighbours agree within tolerance."""
    bands, current = [], [0]
    for i in range(1, eigenvalues.size):
        a, b = eigenvalues[i - 1], eigenvalues[i]
        if abs(b - a) <= tol * max(1.0, abs(b)):
            current.append(i)
        else:
            bands.append(tuple(current))
            current = [i]
    bands.append(tuple(current))
    return tuple(bands)


def _fix_signs(vectors: np.ndarray) -> np.ndarray:
    idx = np.argmax(np.abs(vectors), axis=0)
    signs = np.sign(vectors[idx, np.arange(vectors.shape[1])])
    signs[signs == 0] = 1.0
    return vectors * signs


def decompose(chain: Chain, max_states: int = DEFAULT_MAX_STATES) -> SpectralDecomposition:
    """Eigendecomposition of ``-Q`` in the ``pi``-weighted inner product."""
    n = chain.n_states
    if n > max_states:
        raise StateSpaceTooLarge(f"{n} states exceeds the cap of {max_states}", cap=max_states)
    pi = np.asarray(chain.pi, dtype=float)
    root = np.sqrt(pi)
    M = -(root[:, None] * chain.generator) / root[None, :]
    M = 0.5 * (M + M.T)
    try:
        vals, U = linalg.eigh(M)
    except linalg.LinAlgError as exc:
        raise EigensolverFailure(str(exc)) from exc
    if not np.all(np.isfinite(vals)):
        raise EigensolverFailure("non-finite eigenvalues")
    psi = _fix_signs(U / root[:, None])
    # The stationary mode is simple for irreducible chains; pin it to exactly 1.
    psi[:, 0] = 1.0

    scale = max(1.0, float(np.abs(vals).max()))
    positive = np.nonzero(vals > GAP_TOL * scale)[0]
    if positive.size == 0 or positive[0] != 1 or abs(vals[0]) > GAP_TOL * scale:
        raise EigensolverFailure(
            "zero eigenvalue is not simple; the chain is not irreducible",
            eigenvalues=vals[:3].tolist(),
        )
    psi.setflags(write=False)
    vals.setflags(write=False)
    pi_ro = pi.copy()
    pi_ro.setflags(write=False)
    return SpectralDecomposition(
        eigenvalues=vals,
        eigenvectors=psi,
        pi=pi_ro,
        bands=group_bands(vals),
        gap_index=int(positive[0]),
    )


def inner(pi: np.ndarray, f: np.ndarray, g: np.ndarray) -> float:
    return float(np.sum(pi * f * g))


def rayleigh_quotient(chain: Chain, f) -> float:
    """``<-Qf, f> / <f, f>`` for a centred, nonzero ``f``."""
    f = np.asarray(f, dtype=float)
    pi = chain.pi
    scale = max(1.0, float(np.abs(f).max()) if f.size else 1.0)
    mean = float(pi @ f)
    if abs(mean) > 1e-10 * scale:
        raise NotCentered("f must have zero mean under pi", mean=mean)
    norm2 = inner(pi, f, f)
    if norm2 == 0.0:
        raise ZeroFunction("f is identically zero")
    return inner(pi, -(chain.generator @ f), f) / norm2


def transition_kernel(dec: SpectralDecomposition, t: float) -> np.ndarray:
    """``H_t = exp(tQ)`` assembled from the eigenpairs."""
    if t < 0:
        raise NegativeTime("t must be nonnegative", t=t)
    n = dec.n_states
    if t == 0:
        return np.eye(n)
    psi = dec.eigenvectors
    H = (psi * np.exp(-dec.eigenvalues * t)) @ psi.T * dec.pi[None, :]
    H[(H < 0) & (H >= -1e-12)] = 0.0
    return H


def band_subspace(dec: SpectralDecomposition, k: float) -> tuple:
    """Indices ``i >= 1`` with ``lambda_1 <= lambda_i <= k lambda_1``."""
    lam1 = dec.spectral_gap
    top = k * lam1 * (1.0 + BAND_TOL)
    vals = dec.eigenvalues
    return tuple(int(i) for i in range(dec.gap_index, dec.n_states) if vals[i] <= top)

