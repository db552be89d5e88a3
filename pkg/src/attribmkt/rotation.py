"""Givens-rotation parameterization of a latent attribute rotation.

Coordinates are 0-based throughout: a factor ``(i, j, theta)`` rotates
coordinates ``i < j`` of a ``K``-dimensional space.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence, Tuple

import numpy as np

__all__ = [
    "givens",
    "RotationParams",
    "compose_u",
    "ShrinkageWeights",
    "minv_apply",
    "pair_operator",
    "recover_angle",
    "AngleRecovery",
    "DegeneratePairError",
]

GRAM_TOL = 1e-8


class DegeneratePairError(ValueError):
    pass


def _wrap(theta: float) -> float:
    """Map an angle into (-pi, pi]."""
    w = math.remainder(theta, 2.0 * math.pi)
    return math.pi if w == -math.pi else w


def givens(i: int, j: int, theta: float, k: int) -> np.ndarray:
    """Identity with ``cos`` at (i,i),(j,j), ``sin`` at (i,j) and ``-sin`` at (j,i)."""
    if not (0 <= i < j < k):
        raise ValueError(f"need 0 <= i < j < K, got i={i}, j={j}, K={k}")
    g = np.eye(k)
    c, s = math.cos(theta), math.sin(theta)
    g[i, i] = g[j, j] = c
    g[i, j] = s
    g[j, i] = -s
    return g


@dataclass(frozen=True)
class RotationParams:
    """Ordered Givens factors; the stored order is the multiplication order."""

    angles: Tuple[Tuple[int, int, float], ...]
    dim: int

    def __post_init__(self):
        clean = []
        for i, j, theta in self.angles:
            i, j = int(i), int(j)
            if not (0 <= i < j < self.dim):
                raise ValueError(f"invalid pair ({i}, {j}) for K={self.dim}")
            clean.append((i, j, _wrap(float(theta))))
        object.__setattr__(self, "angles", tuple(clean))

    @classmethod
    def from_vector(cls, thetas: Sequence[float], dim: int) -> "RotationParams":
        """All ``K(K-1)/2`` pairs in lexicographic order, one angle each."""
        pairs = [(i, j) for i in range(dim) for j in range(i + 1, dim)]
        if len(thetas) != len(pairs):
            raise ValueError(f"expected {len(pairs)} angles, got {len(thetas)}")
        return cls(tuple((i, j, t) for (i, j), t in zip(pairs, thetas)), dim)

    def reversed(self) -> "RotationParams":
        return RotationParams(tuple(reversed(self.angles)), self.dim)


def compose_u(params: RotationParams) -> np.ndarray:
    """``U = G_1 G_2 ... G_m`` in the stored order."""
    u = np.eye(params.dim)
    for i, j, theta in params.angles:
        c, s = math.cos(theta), math.sin(theta)
        # right-multiplying by G mixes columns i and j
        col_i, col_j = u[:, i].copy(), u[:, j].copy()
        u[:, i] = c * col_i - s * col_j
        u[:, j] = s * col_i + c * col_j
    return u


@dataclass(frozen=True)
class ShrinkageWeights:
    """``alpha_k = gamma_k / (1 + gamma_k)`` and ``beta_k = 1 - alpha_k``."""

    alphas: np.ndarray

    def __post_init__(self):
        a = np.atleast_1d(np.asarray(self.alphas, dtype=float))
        if np.any(a < 0) or np.any(a >= 1):
            raise ValueError("shrinkage weights must lie in [0, 1)")
        a.flags.writeable = False
        object.__setattr__(self, "alphas", a)

    @classmethod
    def from_gamma(cls, gamma) -> "ShrinkageWeights":
        g = np.atleast_1d(np.asarray(gamma, dtype=float))
        return cls(g / (1.0 + g))

    @property
    def betas(self) -> np.ndarray:
        return 1.0 - self.alphas

    def pair(self, p: int, q: int) -> Tuple[float, float]:
        """``(beta_s, beta_d)`` for the pair ``(p, q)``."""
        bp, bq = self.betas[p], self.betas[q]
        return 0.5 * (bp + bq), 0.5 * (bp - bq)


def minv_apply(alphas, s_theta, v) -> np.ndarray:
    """``(I - sum_k alpha_k s_k s_k') v`` for orthonormal columns ``s_k``."""
    a = np.atleast_1d(np.asarray(alphas, dtype=float))
    s = np.asarray(s_theta, dtype=float)
    v = np.asarray(v, dtype=float)
    gram = s.T @ s
    if np.max(np.abs(gram - np.eye(s.shape[1]))) > GRAM_TOL:
        raise ValueError("columns of S(theta) are not orthonormal")
    return v - s @ (a * (s.T @ v))


def pair_operator(beta_p: float, beta_q: float, theta: float) -> np.ndarray:
    """``beta_s I + beta_d T(theta)``, the restriction of ``M^{-1}`` to a rotated pair."""
    bs, bd = 0.5 * (beta_p + beta_q), 0.5 * (beta_p - beta_q)
    c2, s2 = math.cos(2 * theta), math.sin(2 * theta)
    return bs * np.eye(2) + bd * np.array([[c2, s2], [s2, -c2]])


@dataclass(frozen=True)
class AngleRecovery:
    theta: float
    residual: float
    # the other angle with the same fit, theta shifted by pi/2 of the 2-theta map
    alternate: float


def recover_angle(v2, h2, beta_p: float, beta_q: float) -> AngleRecovery:
    """Least-squares pair angle from ``h = (beta_s I + beta_d T(theta)) v``.

    With ``r = h - beta_s v`` the vector ``J(v)^{-1} r`` points along
    ``beta_d (cos 2 theta, sin 2 theta)``.  Its half-angle, shifted by
    ``pi/2`` when ``beta_d < 0``, is the estimate, reported in
    ``(-pi/2, pi/2]``.  The minimal residual is ``| ||r|| - |beta_d| ||v|| |``.
    """
    v = np.asarray(v2, dtype=float)
    h = np.asarray(h2, dtype=float)
    bs, bd = 0.5 * (beta_p + beta_q), 0.5 * (beta_p - beta_q)
    if bd == 0:
        raise DegeneratePairError("beta_p == beta_q: the pair angle is not identified")
    vv = float(v @ v)
    if vv == 0:
        raise DegeneratePairError("v has zero norm: J(v) is singular")
    r = h - bs * v
    w = np.array([v[0] * r[0] - v[1] * r[1], v[1] * r[0] + v[0] * r[1]]) / vv
    theta = 0.5 * math.atan2(w[1], w[0])
    if bd < 0:
        theta += 0.5 * math.pi
    theta = _half_wrap(theta)
    residual = abs(float(np.linalg.norm(r)) - abs(bd) * math.sqrt(vv))
    return AngleRecovery(theta, residual, _half_wrap(theta + 0.5 * math.pi))


def _half_wrap(theta: float) -> float:
    """Map an angle into (-pi/2, pi/2]."""
    w = math.remainder(theta, math.pi)
    return 0.5 * math.pi if w == -0.5 * math.pi else w
