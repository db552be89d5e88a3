"""Optimal product design: orientation and intensity of attribute loadings.

A design is described in scaled units ``r_hat_k = sqrt(gamma_k) r_k``.
Its intensity is ``t = ||r_hat||`` and its orientation the unit vector
``d = r_hat / t``.  Taste weights scale the other way,
``b_hat_k = b_k / sqrt(gamma_k)``, so that ``b' r = b_hat' r_hat`` and
``r' Gamma r = t^2``.

Design cost is ``c t^2 / 2`` (a cost matrix ``C = c Gamma`` on the raw
loadings ``r``).  Under that cost the closed-form intensities below are
exact and the profit-maximizing orientation is ``b_hat / ||b_hat||``.  The
rule ``Gamma^{-3/2} b`` is kept as :func:`orientation_rule`; it coincides
with the exact orientation when all weights ``gamma_k`` are equal.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy import linalg

from .optimize import bisection
from .pricing import PriceEquilibrium, Regime

__all__ = [
    "DesignSolution",
    "ExclusivityPartition",
    "effective_taste",
    "orientation_rule",
    "adjusted_orientation",
    "optimal_orientation",
    "monopoly_intensity",
    "monopoly_net_profit",
    "monopoly_design",
    "one_attribute_norm",
    "one_attribute_net_profit",
    "pairwise_profit",
    "alignment_gradient",
    "pairwise_profit_typeset",
    "monopoly_aligned_profit",
    "exclusivity_equilibrium",
    "symmetric_profit",
    "symmetric_foc_lhs",
    "symmetric_intensity",
    "symmetric_design",
    "deviation_profit",
    "symmetric_nash_intensity",
]


def _vec(x) -> np.ndarray:
    return np.atleast_1d(np.asarray(x, dtype=float))


@dataclass(frozen=True)
class DesignSolution:
    """Orientation ``d``, intensity ``t`` and raw loadings ``r = t d / sqrt(gamma)``."""

    orientation: np.ndarray
    intensity: float
    loadings: np.ndarray
    allocation: Optional[np.ndarray] = None
    net_profit: float = 0.0

    def __post_init__(self):
        if self.intensity < 0:
            raise ValueError("intensity must be nonnegative")
        if self.intensity > 0 and abs(np.linalg.norm(self.orientation) - 1.0) > 1e-12:
            raise ValueError("orientation must be a unit vector")
        if self.allocation is not None and abs(np.linalg.norm(self.allocation) - 1.0) > 1e-12:
            raise ValueError("allocation must be a unit vector")

    @classmethod
    def build(cls, orientation, intensity, weights, allocation=None, net_profit=0.0):
        d = _vec(orientation)
        r = intensity * d / np.sqrt(_vec(weights))
        return cls(d, float(intensity), r, allocation, float(net_profit))


@dataclass(frozen=True)
class ExclusivityPartition:
    """``owner[k]`` is the firm that loads attribute ``k``."""

    owner: Tuple[int, ...]
    n_firms: int

    def __post_init__(self):
        owner = tuple(int(o) for o in self.owner)
        if any(o < 0 or o >= self.n_firms for o in owner):
            raise ValueError("owner index out of range")
        object.__setattr__(self, "owner", owner)

    def attributes_of(self, firm: int) -> List[int]:
        return [k for k, o in enumerate(self.owner) if o == firm]


def effective_taste(b, gamma) -> float:
    """``B = sum_k b_k^2 / gamma_k``."""
    b, g = _vec(b), _vec(gamma)
    return float(np.sum(b * b / g))


def _unit(v: np.ndarray, b: np.ndarray) -> np.ndarray:
    norm = np.linalg.norm(v)
    if norm == 0:
        raise ValueError("taste vector b must be nonzero")
    d = v / norm
    return -d if b @ d < 0 else d


def orientation_rule(b, gamma) -> np.ndarray:
    """Normalized ``Gamma^{-3/2} b`` with sign chosen so ``b' d >= 0``."""
    b, g = _vec(b), _vec(gamma)
    return _unit(b / g ** 1.5, b)


def adjusted_orientation(b, gamma, cost) -> np.ndarray:
    """Normalized ``C^{-1} b_hat`` for a per-attribute cost on scaled loadings.

    ``cost`` is a scalar or a length-K vector of cost weights ``C_k`` so
    that design cost is ``sum_k C_k r_hat_k^2 / 2``.  For a scalar cost this
    is :func:`optimal_orientation`.
    """
    b, g = _vec(b), _vec(gamma)
    cost = np.broadcast_to(np.asarray(cost, dtype=float), b.shape)
    if np.any(cost <= 0):
        raise ValueError("costs must be positive")
    return _unit(b / np.sqrt(g) / cost, b)


def optimal_orientation(b, gamma) -> np.ndarray:
    """Profit-maximizing orientation ``b_hat / ||b_hat||`` under cost ``c t^2 / 2``."""
    b, g = _vec(b), _vec(gamma)
    return _unit(b / np.sqrt(g), b)


def _interior_square(taste: float, c: float, phi: float) -> float:
    # (1 + u)^2 = -taste / (2 c phi); weak inequality at the boundary gives 0
    if c >= -taste / (2.0 * phi):
        return 0.0
    return max(0.0, math.sqrt(-taste / (2.0 * c * phi)) - 1.0)


def monopoly_intensity(b, gamma, c: float, phi: float) -> float:
    """Closed-form optimal intensity ``sqrt(max(0, sqrt(-B/(2 c phi)) - 1))``."""
    return math.sqrt(_interior_square(effective_taste(b, gamma), c, phi))


def monopoly_net_profit(t: float, taste: float, c: float, phi: float) -> float:
    """Reduced monopoly objective at intensity ``t`` along the optimal orientation."""
    u = t * t
    return -taste * u / (4.0 * phi * (1.0 + u)) - 0.5 * c * u


def monopoly_design(b, gamma, c: float, phi: float) -> DesignSolution:
    b, g = _vec(b), _vec(gamma)
    t = monopoly_intensity(b, g, c, phi)
    d = optimal_orientation(b, g)
    return DesignSolution.build(d, t, g, None, monopoly_net_profit(t, effective_taste(b, g), c, phi))


def one_attribute_norm(b: float, gamma: float, c: float, phi: float) -> float:
    """Optimal ``||s||`` for a single attribute with cost ``c ||s||^2 / 2``.

    Interior optimum solves ``(1 + gamma u)^2 = -b^2 / (2 c phi)`` in
    ``u = ||s||^2``; zero when ``c >= -b^2 / (2 phi)``.
    """
    u_scaled = _interior_square(float(b) ** 2, c, phi)
    return math.sqrt(u_scaled / float(gamma))


def one_attribute_net_profit(norm: float, b: float, gamma: float, c: float, phi: float) -> float:
    u = norm * norm
    return -(b * b) * u / (4.0 * phi * (1.0 + gamma * u)) - 0.5 * c * u


def _pair_block(b_i, b_j, gamma_i, gamma_j, d, f, inner):
    if d < 0 or f < 0:
        raise ValueError("squared norms must be nonnegative")
    bound = math.sqrt(d * f)
    if inner < 0 or inner > bound * (1 + 1e-12) + 1e-15:
        raise ValueError(f"inner product {inner} outside [0, {bound}]")
    a11, a22 = 1.0 / gamma_i + d, 1.0 / gamma_j + f
    det = a11 * a22 - inner * inner
    w_i, w_j = b_i / gamma_i, b_j / gamma_j
    # z = A^{-1} Gamma^{-1} b through the explicit 2x2 inverse
    z_i = (a22 * w_i - inner * w_j) / det
    z_j = (a11 * w_j - inner * w_i) / det
    return w_i, w_j, z_i, z_j


def pairwise_profit(b_i, b_j, gamma_i, gamma_j, d, f, inner, phi) -> float:
    """Profit contribution of an attribute pair under monopoly pricing.

    With ``G = S'S`` for the pair and ``A = Gamma^{-1} + G``,
    ``b' S' Sigma^{-1} S b = b' Gamma^{-1} b - b' Gamma^{-1} A^{-1} Gamma^{-1} b``;
    the result is that quantity times ``-1/(4 phi)``.
    """
    w_i, w_j, z_i, z_j = _pair_block(b_i, b_j, gamma_i, gamma_j, d, f, inner)
    value = b_i * w_i + b_j * w_j - (w_i * z_i + w_j * z_j)
    return -value / (4.0 * phi)


def alignment_gradient(b_i, b_j, gamma_i, gamma_j, d, f, inner, phi) -> float:
    """Derivative of :func:`pairwise_profit` in the inner product, ``-(1/(4 phi)) 2 z_i z_j``."""
    _, _, z_i, z_j = _pair_block(b_i, b_j, gamma_i, gamma_j, d, f, inner)
    return -2.0 * z_i * z_j / (4.0 * phi)


def pairwise_profit_typeset(b_i, b_j, gamma_i, gamma_j, d, f, inner, phi) -> float:
    """The printed closed form for the pair contribution, kept as a diagnostic.

    It does not agree with :func:`pairwise_profit`; for example with unit
    inputs and ``inner = 0`` it returns 0.375 instead of 0.25.
    """
    det = (1.0 / gamma_i + d) * (1.0 / gamma_j + f) - inner ** 2
    num = (b_i ** 2 * (f / gamma_i + d * (1.0 / gamma_i + 1.0))
           + b_j ** 2 * (d / gamma_j + f * (1.0 / gamma_j + 1.0))
           + 2.0 * b_i * b_j * (1.0 / gamma_i + 1.0 / gamma_j + 1.0) * inner
           + (b_i * gamma_j + b_j * gamma_i) * inner ** 2)
    return -num / det / (4.0 * phi)


def monopoly_aligned_profit(b, gamma, r, phi) -> float:
    """``-(1/(4 phi)) (b'r)^2 / (1 + r' Gamma r)`` for parallel attribute vectors."""
    b, g, r = _vec(b), _vec(gamma), _vec(r)
    return -float(b @ r) ** 2 / (1.0 + float(r @ (g * r))) / (4.0 * phi)


def exclusivity_equilibrium(partition: ExclusivityPartition, b, gamma, c: float, phi: float
                            ) -> Tuple[List[DesignSolution], PriceEquilibrium]:
    """Designs and prices when every attribute is loaded by a single firm.

    Each firm solves a monopoly design problem over its own attributes.
    Goods are independent, so ``q_n = delta_n / (2 (1 + t_n^2))`` and
    ``p_n = -delta_n / (2 phi)``.  A firm owning no attribute has
    ``t_n = 0`` and sells nothing.
    """
    b, g = _vec(b), _vec(gamma)
    if len(partition.owner) != b.shape[0]:
        raise ValueError("partition must assign every attribute")
    n = partition.n_firms
    designs = []
    prices, quantities = np.zeros(n), np.zeros(n)
    for firm in range(n):
        attrs = partition.attributes_of(firm)
        loadings = np.zeros(b.shape[0])
        if not attrs or not np.any(b[attrs]):
            designs.append(DesignSolution(np.zeros(b.shape[0]), 0.0, loadings))
            continue
        sub_b, sub_g = b[attrs], g[attrs]
        taste = effective_taste(sub_b, sub_g)
        t = monopoly_intensity(sub_b, sub_g, c, phi)
        orientation = np.zeros(b.shape[0])
        orientation[attrs] = optimal_orientation(sub_b, sub_g)
        sol = DesignSolution.build(orientation, t, g, None, monopoly_net_profit(t, taste, c, phi))
        designs.append(sol)
        utility = float(b @ sol.loadings)
        prices[firm] = -utility / (2.0 * phi)
        quantities[firm] = utility / (2.0 * (1.0 + t * t))
    active = tuple(int(i) for i in np.flatnonzero(quantities > 0))
    eq = PriceEquilibrium(prices, quantities, prices * quantities, active,
                          Regime.SINGLE_PRODUCT_CLOSED_FORM)
    return designs, eq


def _share_factor(u: float, n: int) -> float:
    return (1.0 + (n - 1) * u) / ((1.0 + n * u) * (2.0 + (n - 1) * u) ** 2)


def symmetric_profit(u: float, taste: float, c: float, phi: float, n: int) -> float:
    """Per-firm net profit when all ``n`` firms share intensity ``sqrt(u)`` along ``b_hat``."""
    return -taste * u * _share_factor(u, n) / phi - 0.5 * c * u


def symmetric_foc_lhs(u: float, taste: float, c: float, phi: float, n: int) -> float:
    """Left side of the symmetric first-order condition in ``u = t^2`` (set equal to 1/2)."""
    num = 3.0 * (n - 1) * u + 2.0 - n * (n - 1) ** 2 * u ** 3
    den = (1.0 + n * u) ** 2 * (2.0 + (n - 1) * u) ** 3
    return -taste / (c * phi) * num / den


def symmetric_intensity(b, gamma, c: float, phi: float, n: int, tol: float = 1e-12) -> float:
    """Root of the symmetric first-order condition, returned as ``t = sqrt(u)``.

    This condition is stationarity of the common per-firm profit when all
    firms move their intensity together.  See
    :func:`symmetric_nash_intensity` for a unilateral deviation.
    """
    if n < 1:
        raise ValueError("need at least one firm")
    taste = effective_taste(b, gamma)
    if c >= -taste / (2.0 * phi):
        return 0.0

    def gap(u):
        return symmetric_foc_lhs(u, taste, c, phi, n) - 0.5

    hi = 1.0
    while gap(hi) >= 0:
        hi *= 2.0
        if hi > 1e12:
            raise RuntimeError("could not bracket the symmetric root")
    return math.sqrt(bisection(gap, 0.0, hi, tol=tol))


def symmetric_design(b, gamma, c: float, phi: float, n: int) -> DesignSolution:
    b, g = _vec(b), _vec(gamma)
    t = symmetric_intensity(b, g, c, phi, n)
    profit = symmetric_profit(t * t, effective_taste(b, g), c, phi, n)
    alloc = np.full(n, 1.0 / math.sqrt(n))
    return DesignSolution.build(optimal_orientation(b, g), t, g, alloc, profit)


def deviation_profit(own: float, others: float, taste: float, c: float, phi: float, n: int) -> float:
    """Net profit of one firm at intensity ``own`` when ``n - 1`` rivals use ``others``.

    All designs point along ``b_hat``, so ``Sigma = I + x x'`` and
    ``delta = sqrt(B) x`` with ``x = (own, others, ..., others)``; prices
    come from the single-product closed form.
    """
    x = np.full(n, float(others))
    x[0] = own
    sigma = np.eye(n) + np.outer(x, x)
    inv = linalg.inv(sigma)
    dvec = math.sqrt(taste) * x
    diag = np.diag(inv)
    p = -linalg.solve(inv + np.diag(diag), inv @ dvec, assume_a="pos") / phi
    q = -phi * diag * p
    return float(p[0] * q[0]) - 0.5 * c * own * own


def symmetric_nash_intensity(b, gamma, c: float, phi: float, n: int) -> float:
    """Symmetric intensity at which no firm gains by changing only its own intensity.

    Solves ``d/d own deviation_profit(own, t) = 0`` at ``own = t`` by
    bisection, using a central difference for the derivative.
    """
    taste = effective_taste(b, gamma)
    if c >= -taste / (2.0 * phi):
        return 0.0

    def marginal(t):
        h = 1e-6 * max(1.0, t)
        return (deviation_profit(t + h, t, taste, c, phi, n)
                - deviation_profit(t - h, t, taste, c, phi, n)) / (2.0 * h)

    lo, hi = 1e-6, 1.0
    while marginal(hi) > 0:
        hi *= 2.0
        if hi > 1e6:
            raise RuntimeError("could not bracket the Nash intensity")
    return bisection(marginal, lo, hi, tol=1e-11)
