"""Factor-form interaction matrix and the linear demand system it implies.

The interaction matrix is kept in factor form

    Sigma = rho * I + S Gamma S'

with ``S`` an ``N x K`` loading matrix (one column per attribute) and
``Gamma = diag(gamma)`` positive attribute weights.  Demand is
``q = Sigma^{-1} (delta + phi p)`` with ``delta = S b + v``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
from scipy import linalg

__all__ = [
    "FactorStructure",
    "Preferences",
    "NonPositiveUtilityWarning",
    "RankDeficientError",
    "sigma_dense",
    "sigma_inverse",
    "woodbury_solve",
    "delta",
    "demand",
    "demand_jacobian",
    "attributes_from_characteristics",
    "qr_attributes",
    "spectral_factorization",
    "second_moment_structure",
    "fix_column_signs",
]

RANK_TOL = 1e-10


class NonPositiveUtilityWarning(UserWarning):
    """Raised (as a warning) when some initial marginal utility is not positive."""


class RankDeficientError(ValueError):
    pass


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float, copy=True)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class FactorStructure:
    """Interaction matrix ``rho I + S diag(gamma) S'`` held in factor form.

    Parameters
    ----------
    loadings : array_like, shape (N, K)
        Attribute loadings; column ``k`` is the attribute vector ``s_k``.
    weights : array_like, shape (K,)
        Strictly positive attribute weights ``gamma_k``.
    baseline : float
        Idiosyncratic differentiation ``rho > 0``.
    """

    loadings: np.ndarray
    weights: np.ndarray
    baseline: float = 1.0

    def __post_init__(self):
        S = np.asarray(self.loadings, dtype=float)
        if S.ndim == 1:
            S = S[:, None]
        if S.ndim != 2 or S.shape[0] < 1:
            raise ValueError(f"loadings must be an N x K matrix, got shape {S.shape}")
        g = np.atleast_1d(np.asarray(self.weights, dtype=float))
        if g.ndim != 1 or g.shape[0] != S.shape[1]:
            raise ValueError(f"weights has shape {g.shape}, expected ({S.shape[1]},)")
        if np.any(~np.isfinite(g)) or np.any(g <= 0):
            raise ValueError("attribute weights must be finite and strictly positive")
        if not np.all(np.isfinite(S)):
            raise ValueError("loadings must be finite")
        if not (np.isfinite(self.baseline) and self.baseline > 0):
            raise ValueError("baseline rho must be positive")
        object.__setattr__(self, "loadings", _frozen(S))
        object.__setattr__(self, "weights", _frozen(g))
        object.__setattr__(self, "baseline", float(self.baseline))

    @classmethod
    def identity(cls, n_goods: int, baseline: float = 1.0) -> "FactorStructure":
        """The K = 0 structure, ``Sigma = rho I``."""
        return cls(np.zeros((n_goods, 0)), np.zeros(0), baseline)

    @property
    def n_goods(self) -> int:
        return self.loadings.shape[0]

    @property
    def n_attrs(self) -> int:
        return self.loadings.shape[1]

    def restrict(self, goods) -> "FactorStructure":
        """Structure of the market in which only ``goods`` are offered."""
        idx = np.asarray(goods, dtype=int)
        return FactorStructure(self.loadings[idx], self.weights, self.baseline)


@dataclass(frozen=True)
class Preferences:
    """Consumer-side primitives.

    ``attr_weights`` is ``b``, ``price_sensitivity`` is ``phi < 0`` and
    ``attr_cost`` the scalar design cost scale ``c``.  ``noise`` is the
    latent utility term ``v`` (zero when omitted).
    """

    attr_weights: np.ndarray
    price_sensitivity: float
    attr_cost: float = 1.0
    noise: Optional[np.ndarray] = None

    def __post_init__(self):
        object.__setattr__(self, "attr_weights", _frozen(np.atleast_1d(self.attr_weights)))
        if not self.price_sensitivity < 0:
            raise ValueError("price sensitivity phi must be negative")
        if not self.attr_cost > 0:
            raise ValueError("attribute cost c must be positive")
        object.__setattr__(self, "price_sensitivity", float(self.price_sensitivity))
        object.__setattr__(self, "attr_cost", float(self.attr_cost))
        if self.noise is not None:
            object.__setattr__(self, "noise", _frozen(np.atleast_1d(self.noise)))

    def scaled_weights(self, weights) -> np.ndarray:
        """``b_k / sqrt(gamma_k)``, the taste weights in intensity units."""
        return self.attr_weights / np.sqrt(np.asarray(weights, dtype=float))

    def restrict(self, goods) -> "Preferences":
        if self.noise is None:
            return self
        return Preferences(self.attr_weights, self.price_sensitivity, self.attr_cost,
                           self.noise[np.asarray(goods, dtype=int)])


def sigma_dense(fs: FactorStructure) -> np.ndarray:
    """Dense ``rho I + S Gamma S'``."""
    S, g = fs.loadings, fs.weights
    sigma = (S * g) @ S.T
    sigma[np.diag_indices_from(sigma)] += fs.baseline
    # exact symmetry; the product above can differ in the last bit
    return 0.5 * (sigma + sigma.T)


def _capacitance(fs: FactorStructure):
    # K x K matrix rho Gamma^{-1} + S'S, symmetric positive definite
    S = fs.loadings
    cap = S.T @ S
    cap[np.diag_indices_from(cap)] += fs.baseline / fs.weights
    return linalg.cho_factor(cap, lower=True)


def sigma_inverse(fs: FactorStructure) -> np.ndarray:
    """Exact inverse through the K x K Woodbury identity.

    ``Sigma^{-1} = (1/rho) [I - S (rho Gamma^{-1} + S'S)^{-1} S']``
    """
    n, rho = fs.n_goods, fs.baseline
    inv = np.eye(n) / rho
    if fs.n_attrs == 0:
        return inv
    S = fs.loadings
    inv -= S @ linalg.cho_solve(_capacitance(fs), S.T) / rho
    return 0.5 * (inv + inv.T)


def woodbury_solve(fs: FactorStructure, rhs: np.ndarray) -> np.ndarray:
    """``Sigma^{-1} rhs`` without forming the N x N inverse."""
    rhs = np.asarray(rhs, dtype=float)
    if fs.n_attrs == 0:
        return rhs / fs.baseline
    S = fs.loadings
    return (rhs - S @ linalg.cho_solve(_capacitance(fs), S.T @ rhs)) / fs.baseline


def delta(fs: FactorStructure, prefs: Preferences) -> np.ndarray:
    """Initial marginal utilities ``S b + v``.

    Emits :class:`NonPositiveUtilityWarning` when an entry is not positive;
    the pricing layer decides whether that is an error.
    """
    b = prefs.attr_weights
    if b.shape[0] != fs.n_attrs:
        raise ValueError(f"b has {b.shape[0]} entries but the structure has K={fs.n_attrs}")
    d = fs.loadings @ b if fs.n_attrs else np.zeros(fs.n_goods)
    if prefs.noise is not None:
        if prefs.noise.shape[0] != fs.n_goods:
            raise ValueError("noise vector length must equal the number of goods")
        d = d + prefs.noise
    if np.any(d <= 0):
        warnings.warn("some initial marginal utilities are not positive",
                      NonPositiveUtilityWarning, stacklevel=2)
    return d


def demand(fs: FactorStructure, prefs: Preferences, p) -> np.ndarray:
    """Linear demand ``Sigma^{-1}(delta + phi p)``; entries may be negative."""
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", NonPositiveUtilityWarning)
        d = delta(fs, prefs)
    return woodbury_solve(fs, d + prefs.price_sensitivity * np.asarray(p, dtype=float))


def demand_jacobian(fs: FactorStructure, prefs: Preferences) -> np.ndarray:
    """Price Jacobian ``dq/dp = phi Sigma^{-1}``.

    The literature calls the entries of this matrix price "elasticities";
    they are slopes, not log-derivatives.
    """
    return prefs.price_sensitivity * sigma_inverse(fs)


def fix_column_signs(M: np.ndarray) -> np.ndarray:
    """Flip columns so each column's largest-magnitude entry is positive."""
    M = np.array(M, dtype=float, copy=True)
    if M.size == 0:
        return M
    rows = np.argmax(np.abs(M), axis=0)
    signs = np.sign(M[rows, np.arange(M.shape[1])])
    signs[signs == 0] = 1.0
    return M * signs


def qr_attributes(X) -> Tuple[np.ndarray, np.ndarray]:
    """Thin QR ``X = Z R`` with the sign convention applied to ``Z``.

    Raises :class:`RankDeficientError` when the numerical rank of ``X``
    (singular values above ``1e-10 * s_max``) is below its column count.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    n, k = X.shape
    if k > n:
        raise RankDeficientError(f"{k} characteristics but only {n} goods")
    sv = linalg.svdvals(X)
    rank = int(np.sum(sv > RANK_TOL * sv[0])) if sv.size and sv[0] > 0 else 0
    if rank < k:
        raise RankDeficientError(f"characteristics matrix has numerical rank {rank} < {k}")
    Z, R = linalg.qr(X, mode="economic")
    rows = np.argmax(np.abs(Z), axis=0)
    signs = np.sign(Z[rows, np.arange(k)])
    signs[signs == 0] = 1.0
    return Z * signs, R * signs[:, None]


def attributes_from_characteristics(X) -> np.ndarray:
    """Orthonormal attribute matrix ``Z`` spanning the characteristics."""
    return qr_attributes(X)[0]


def spectral_factorization(sigma, baseline: float = 1.0, tol: float = 1e-12) -> FactorStructure:
    """Factor a known SPD interaction matrix as ``rho I + U Gamma U'``.

    Eigen-directions whose eigenvalue does not exceed ``rho`` by more than
    ``tol`` (relative to the largest eigenvalue) are dropped, so the
    reconstruction is exact only when every eigenvalue exceeds ``rho``.
    """
    sigma = np.asarray(sigma, dtype=float)
    if sigma.ndim != 2 or sigma.shape[0] != sigma.shape[1]:
        raise ValueError("sigma must be square")
    scale = max(1.0, float(np.max(np.abs(sigma))))
    if np.max(np.abs(sigma - sigma.T)) > 1e-12 * scale:
        raise ValueError("sigma is not symmetric")
    lam, U = linalg.eigh(0.5 * (sigma + sigma.T))
    if lam[0] <= 0:
        raise ValueError("sigma is not positive definite")
    order = np.argsort(lam)[::-1]
    lam, U = lam[order], U[:, order]
    keep = lam - baseline > tol * max(1.0, lam[0])
    U = fix_column_signs(U[:, keep])
    return FactorStructure(U, lam[keep] - baseline, baseline)


def second_moment_structure(loadings, b, baseline: float = 1.0) -> FactorStructure:
    """Structure with ``gamma_k = b_k^2``, the second moment of ``delta``."""
    b = np.atleast_1d(np.asarray(b, dtype=float))
    return FactorStructure(loadings, b ** 2, baseline)
