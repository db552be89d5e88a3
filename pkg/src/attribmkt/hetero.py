"""Two representative consumers sharing loadings but not tastes or weights.

Consumer ``h`` has ``Sigma_h = I + S Gamma_h S'`` and ``delta_h = S b_h``;
a share ``mu`` of the market is consumer 1.  Market demand is the weighted
sum of the two linear demands,

    Q(p) = a + phi M p,   a = mu Sigma_1^{-1} delta_1 + (1 - mu) Sigma_2^{-1} delta_2,
                          M = mu Sigma_1^{-1} + (1 - mu) Sigma_2^{-1}.

A monopolist facing ``Q`` earns ``-(1/(4 phi)) a' M^{-1} a``.  The
``"combined"`` model instead averages the primitives first and uses the
single-consumer formula on ``(mean delta, mean Sigma)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np
from scipy import linalg

from .demand import FactorStructure, sigma_dense, sigma_inverse
from .optimize import golden_section
from .pricing import ConvergenceError, active_set_equilibrium

__all__ = [
    "ConsumerMix",
    "RhoGrid",
    "mixed_sigma",
    "aggregate_demand",
    "mixed_monopoly_profit",
    "swapped_mix",
    "ratio_parameters",
    "rho_star_monopoly",
    "rho_star_duopoly",
    "DuopolyOutcome",
    "duopoly_equilibrium",
]

MODELS = ("aggregate", "combined")


@dataclass(frozen=True)
class ConsumerMix:
    weight: float
    gamma1: np.ndarray
    gamma2: np.ndarray
    b1: np.ndarray
    b2: np.ndarray
    loadings: np.ndarray
    phi: float = -1.0
    c: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.weight <= 1.0:
            raise ValueError("mixing weight must lie in [0, 1]")
        for name in ("gamma1", "gamma2", "b1", "b2"):
            object.__setattr__(self, name, np.atleast_1d(np.asarray(getattr(self, name), dtype=float)))
        s = np.asarray(self.loadings, dtype=float)
        object.__setattr__(self, "loadings", s if s.ndim == 2 else s[:, None])
        if np.any(self.gamma1 <= 0) or np.any(self.gamma2 <= 0):
            raise ValueError("attribute weights must be positive")
        if not self.phi < 0:
            raise ValueError("phi must be negative")

    def consumer(self, h: int) -> Tuple[FactorStructure, np.ndarray]:
        """Factor structure and ``delta`` of consumer ``h`` (1 or 2)."""
        gamma, b = (self.gamma1, self.b1) if h == 1 else (self.gamma2, self.b2)
        fs = FactorStructure(self.loadings, gamma)
        return fs, self.loadings @ b

    def with_loadings(self, loadings) -> "ConsumerMix":
        return ConsumerMix(self.weight, self.gamma1, self.gamma2, self.b1, self.b2,
                           loadings, self.phi, self.c)


def mixed_sigma(mix: ConsumerMix) -> Tuple[np.ndarray, np.ndarray]:
    """``I + mu S Gamma_1 S' + (1 - mu) S Gamma_2 S'`` and its inverse.

    Shared loadings make this a single factor structure with weights
    ``mu gamma_1 + (1 - mu) gamma_2``.  If some mixed weight is zero the
    inverse falls back to a dense solve.
    """
    mu = mix.weight
    if np.array_equal(mix.gamma1, mix.gamma2):
        weights = mix.gamma1.copy()  # avoid rounding in mu g + (1 - mu) g
    else:
        weights = mu * mix.gamma1 + (1.0 - mu) * mix.gamma2
    keep = weights > 0
    fs = FactorStructure(mix.loadings[:, keep], weights[keep])
    sigma = sigma_dense(fs)
    if np.all(keep):
        return sigma, sigma_inverse(fs)
    return sigma, linalg.inv(sigma)


def aggregate_demand(mix: ConsumerMix, active=None) -> Tuple[np.ndarray, np.ndarray]:
    """``(a, B)`` with market demand ``a + B p`` over the ``active`` goods."""
    n = mix.loadings.shape[0]
    idx = np.arange(n) if active is None else np.asarray(active, dtype=int)
    a = np.zeros(idx.size)
    m = np.zeros((idx.size, idx.size))
    for h, share in ((1, mix.weight), (2, 1.0 - mix.weight)):
        if share == 0:
            continue
        fs, d = mix.consumer(h)
        inv = sigma_inverse(fs.restrict(idx))
        a += share * (inv @ d[idx])
        m += share * inv
    return a, mix.phi * m


def mixed_monopoly_profit(mix: ConsumerMix, model: str = "aggregate") -> float:
    """Monopoly expected profit with two consumer types.

    ``model="aggregate"`` prices against the summed demand ``Q``;
    ``model="combined"`` evaluates
    ``-(1/(4 phi)) dbar' Sbar^{-1} dbar`` with ``dbar`` and ``Sbar`` the
    weighted means of the two consumers' ``delta`` and ``Sigma``.
    """
    phi = mix.phi
    if model == "aggregate":
        a, b_mat = aggregate_demand(mix)
        m = b_mat / phi
        return -float(a @ linalg.solve(m, a, assume_a="pos")) / (4.0 * phi)
    if model == "combined":
        mu = mix.weight
        dbar = mu * (mix.loadings @ mix.b1) + (1.0 - mu) * (mix.loadings @ mix.b2)
        sigma, inv = mixed_sigma(mix)
        return -float(dbar @ inv @ dbar) / (4.0 * phi)
    raise ValueError(f"model must be one of {MODELS}")


def ratio_parameters(b_ratio: float, gamma_ratio: float) -> Tuple[float, float, float, float]:
    """``(b_H, b_L, gamma_H, gamma_L)`` with unit geometric means and the given ratios."""
    rb, rg = math.sqrt(b_ratio), math.sqrt(gamma_ratio)
    return rb, 1.0 / rb, rg, 1.0 / rg


def swapped_mix(b_high, b_low, gamma_high, gamma_low, phi=-1.0, weight=0.5,
                loadings=None) -> ConsumerMix:
    """Consumer 1 likes attribute 1 (``b_H``, ``gamma_H``); consumer 2 is its mirror image."""
    s = np.eye(2) if loadings is None else loadings
    return ConsumerMix(weight, [gamma_high, gamma_low], [gamma_low, gamma_high],
                       [b_high, b_low], [b_low, b_high], s, phi)


# ---------------------------------------------------------------------------
# Vectorized two-good, two-attribute market.  ``rows`` has shape (m, 2, 2):
# a batch of design matrices whose row n is product n's attribute loadings.


def _inv2(mat):
    det = mat[:, 0, 0] * mat[:, 1, 1] - mat[:, 0, 1] * mat[:, 1, 0]
    out = np.empty_like(mat)
    out[:, 0, 0] = mat[:, 1, 1]
    out[:, 1, 1] = mat[:, 0, 0]
    out[:, 0, 1] = -mat[:, 0, 1]
    out[:, 1, 0] = -mat[:, 1, 0]
    return out / det[:, None, None]


def _batch_market(rows, mix: ConsumerMix):
    eye = np.eye(2)[None]
    a = np.zeros(rows.shape[:2])
    m = np.zeros_like(rows)
    dbar = np.zeros(rows.shape[:2])
    sbar = np.zeros_like(rows)
    for share, gamma, b in ((mix.weight, mix.gamma1, mix.b1), (1.0 - mix.weight, mix.gamma2, mix.b2)):
        sigma = eye + np.einsum("mik,k,mjk->mij", rows, gamma, rows)
        d = rows @ b
        inv = _inv2(sigma)
        a += share * np.einsum("mij,mj->mi", inv, d)
        m += share * inv
        dbar += share * d
        sbar += share * sigma
    return a, m, dbar, sbar


def _mirror_rows(rho):
    # rows (cos x, sin x) and (sin x, cos x) with sin 2x = rho: unit columns
    # and unit rows, both with inner product rho
    x = 0.5 * np.arcsin(np.clip(rho, 0.0, 1.0))
    c, s = np.cos(x), np.sin(x)
    return np.stack([np.stack([c, s], -1), np.stack([s, c], -1)], 1)


def _monopoly_batch(rho, mix: ConsumerMix, model: str):
    a, m, dbar, sbar = _batch_market(_mirror_rows(np.atleast_1d(rho)), mix)
    if model == "aggregate":
        val = np.einsum("mi,mij,mj->m", a, _inv2(m), a)
    elif model == "combined":
        val = np.einsum("mi,mij,mj->m", dbar, _inv2(sbar), dbar)
    else:
        raise ValueError(f"model must be one of {MODELS}")
    return -val / (4.0 * mix.phi)


def rho_star_monopoly(b_high, b_low, gamma_high, gamma_low, phi=-1.0, weight=0.5,
                      model: str = "aggregate", n_grid: int = 401, tol: float = 1e-6) -> float:
    """Profit-maximizing inner product of two unit attribute vectors.

    Searches ``rho`` on a uniform grid over [0, 1] and refines the best grid
    point by golden-section search on the neighbouring interval.
    """
    mix = swapped_mix(b_high, b_low, gamma_high, gamma_low, phi, weight)
    grid = np.linspace(0.0, 1.0, n_grid)
    vals = _monopoly_batch(grid, mix, model)
    k = int(np.argmax(vals))
    lo, hi = grid[max(k - 1, 0)], grid[min(k + 1, n_grid - 1)]
    x, fx = golden_section(lambda r: float(_monopoly_batch(r, mix, model)[0]), lo, hi, tol=tol)
    return float(x) if fx >= vals[k] else float(grid[k])


@dataclass(frozen=True)
class DuopolyOutcome:
    angles: Tuple[float, float]
    rho: float
    rounds: int
    profits: Tuple[float, float]


def _duopoly_profit_batch(own_angles, rival_angle, firm, mix: ConsumerMix):
    own = np.atleast_1d(own_angles)
    m = own.size
    rows = np.empty((m, 2, 2))
    rows[:, firm, 0], rows[:, firm, 1] = np.cos(own), np.sin(own)
    rows[:, 1 - firm, 0], rows[:, 1 - firm, 1] = math.cos(rival_angle), math.sin(rival_angle)
    a, minv, _, _ = _batch_market(rows, mix)
    phi = mix.phi
    # single-product closed form on summed demand: (M + diag M) p = -a / phi
    lhs = minv.copy()
    lhs[:, 0, 0] *= 2.0
    lhs[:, 1, 1] *= 2.0
    p = -np.einsum("mij,mj->mi", _inv2(lhs), a) / phi
    q = a + phi * np.einsum("mij,mj->mi", minv, p)
    profit = p[:, firm] * q[:, firm]
    bad = np.flatnonzero(np.any(q <= 0, axis=1))
    for i in bad:
        mix_i = mix.with_loadings(rows[i])
        eq = active_set_equilibrium(lambda act, mx=mix_i: aggregate_demand(mx, act), 2, method="direct")
        profit[i] = eq.profits[firm]
    return profit


def _best_angle(rival_angle, firm, mix, n_grid=401, zoom=41, tol=1e-11):
    lo, hi = 0.0, 0.5 * math.pi
    grid = np.linspace(lo, hi, n_grid)
    vals = _duopoly_profit_batch(grid, rival_angle, firm, mix)
    k = int(np.argmax(vals))
    best, step = grid[k], grid[1] - grid[0]
    while step > tol:
        grid = np.clip(np.linspace(best - step, best + step, zoom), lo, hi)
        vals = _duopoly_profit_batch(grid, rival_angle, firm, mix)
        best = grid[int(np.argmax(vals))]
        step = 2.0 * step / (zoom - 1)
    return float(best)


def duopoly_equilibrium(b_high, b_low, gamma_high, gamma_low, phi=-1.0, weight=0.5,
                        start: Tuple[float, float] = (0.25 * math.pi, 0.25 * math.pi),
                        max_rounds: int = 200, tol: float = 1e-7) -> DuopolyOutcome:
    """Alternating best responses over the two firms' product angles.

    Firm ``n`` sells a unit-intensity product ``(cos a_n, sin a_n)`` and
    picks ``a_n`` in ``[0, pi/2]`` to maximize its price-equilibrium profit.
    The default start has both firms on the diagonal, ``rho = 1``.
    Profit is flat to second order at a best response, so angles are only
    resolved to about sqrt(machine eps); ``tol`` sits above that floor.
    """
    mix = swapped_mix(b_high, b_low, gamma_high, gamma_low, phi, weight)
    angles = list(start)
    change = float("inf")
    for rnd in range(1, max_rounds + 1):
        change = 0.0
        for firm in (0, 1):
            new = _best_angle(angles[1 - firm], firm, mix)
            # a firm only moves for a strict gain; otherwise argmax noise on
            # a flat peak can push the pair off an exact fixed point
            gain = _duopoly_profit_batch([new, angles[firm]], angles[1 - firm], firm, mix)
            if gain[0] <= gain[1] + 1e-13 * abs(gain[1]):
                new = angles[firm]
            change = max(change, abs(new - angles[firm]))
            angles[firm] = new
        if change < tol:
            profits = tuple(float(_duopoly_profit_batch(angles[f], angles[1 - f], f, mix)[0])
                            for f in (0, 1))
            return DuopolyOutcome(tuple(angles), math.cos(angles[0] - angles[1]), rnd, profits)
    raise ConvergenceError("angle best responses did not converge", change)


def rho_star_duopoly(b_high, b_low, gamma_high, gamma_low, phi=-1.0, weight=0.5) -> float:
    return duopoly_equilibrium(b_high, b_low, gamma_high, gamma_low, phi, weight).rho


@dataclass
class RhoGrid:
    """ρ* over ratio axes; ``cells[i, j]`` pairs ``axis1[i]`` (b ratio) with ``axis2[j]`` (γ ratio)."""

    axis1: np.ndarray
    axis2: np.ndarray
    cells: np.ndarray
    label: str = "rho_star"

    def __post_init__(self):
        if self.cells.shape != (len(self.axis1), len(self.axis2)):
            raise ValueError("cells must be len(axis1) x len(axis2)")
        if np.any((self.cells < 0) | (self.cells > 1)):
            raise ValueError("rho* values must lie in [0, 1]")
