"""Best-response product design for single-product firms.

Each firm owns one row of the loading matrix ``S`` (its product's raw
attribute loadings).  Holding rivals fixed, a firm takes a few
central-difference gradient-ascent steps on

    profit_n(S) - 1/2 sum_k C_nk gamma_k S_nk^2,

where profit comes from the single-product price equilibrium with the
shutdown rule.  Costs act on scaled loadings ``sqrt(gamma_k) S_nk`` so a
scalar cost ``c`` gives the design cost ``c t^2 / 2`` of the closed forms.
Rounds sweep firms in index order until no design moves more than
``design_tol``.  A firm that ends a step with zero sales exits for good.
"""

from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from .demand import FactorStructure, Preferences
from .design import optimal_orientation, orientation_rule
from .pricing import active_set_equilibrium, factor_system

__all__ = [
    "InitMode",
    "SimConfig",
    "SimResult",
    "Snapshot",
    "firm_objective",
    "market_profits",
    "run_best_response",
    "alignment_report",
    "heterogeneous_orientation_check",
    "OrientationCheck",
]


class InitMode(enum.Enum):
    RANDOM = "random"
    SYMMETRIC = "symmetric"
    CUSTOM = "custom"


@dataclass(frozen=True)
class SimConfig:
    """Hyperparameters and primitives of a best-response run.

    ``cost`` may be a scalar, a length-K vector or an ``n_firms x n_attrs``
    matrix of cost weights on scaled loadings.  With
    ``init=InitMode.SYMMETRIC`` every firm starts at
    ``init_intensity`` along the profit-maximizing orientation; with
    ``InitMode.CUSTOM`` the design is ``init_design``.
    """

    n_firms: int = 6
    n_attrs: int = 4
    b: Tuple[float, ...] = (1.0, 0.8, 0.6, 0.4)
    gamma: Tuple[float, ...] = (1.0, 2.0, 0.5, 1.5)
    phi: float = -1.0
    cost: Union[float, Sequence[float], Sequence[Sequence[float]]] = 0.1
    fd_step: float = 1e-5
    ascent_rate: float = 1e-2
    ascent_steps_per_firm: int = 5
    max_rounds: int = 500
    design_tol: float = 1e-7
    seed: int = 0
    init: InitMode = InitMode.RANDOM
    init_scale: float = 0.1
    init_intensity: float = 0.5
    init_design: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.n_firms < 1 or self.n_attrs < 1:
            raise ValueError("need at least one firm and one attribute")
        b = tuple(float(x) for x in np.atleast_1d(self.b))
        g = tuple(float(x) for x in np.atleast_1d(self.gamma))
        if len(b) != self.n_attrs or len(g) != self.n_attrs:
            raise ValueError("b and gamma must have n_attrs entries")
        if any(x <= 0 for x in g):
            raise ValueError("gamma must be positive")
        if not self.phi < 0:
            raise ValueError("phi must be negative")
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "gamma", g)
        object.__setattr__(self, "init", InitMode(self.init))
        if np.any(self.cost_matrix() <= 0):
            raise ValueError("attribute costs must be positive")
        for name in ("fd_step", "ascent_rate", "design_tol", "init_scale"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.ascent_steps_per_firm < 1 or self.max_rounds < 1:
            raise ValueError("step and round counts must be positive")
        if self.init is InitMode.CUSTOM:
            if self.init_design is None:
                raise ValueError("custom init needs init_design")
            d = np.array(self.init_design, dtype=float)
            if d.shape != (self.n_firms, self.n_attrs):
                raise ValueError("init_design must be n_firms x n_attrs")
            d.flags.writeable = False
            object.__setattr__(self, "init_design", d)

    def cost_matrix(self) -> np.ndarray:
        c = np.asarray(self.cost, dtype=float)
        return np.broadcast_to(c, (self.n_firms, self.n_attrs)).copy()

    @property
    def separable(self) -> bool:
        """True when ``C_nk = kappa_n * c_k`` for some firm and attribute scales."""
        c = self.cost_matrix()
        return np.linalg.matrix_rank(c, tol=1e-12 * np.max(c)) <= 1

    def preferences(self) -> Preferences:
        return Preferences(np.array(self.b), self.phi, float(np.max(self.cost_matrix())))


@dataclass(frozen=True)
class Snapshot:
    round: int
    design: np.ndarray
    profits: np.ndarray
    active: Tuple[int, ...]


@dataclass
class SimResult:
    final_S: np.ndarray
    trajectory: List[Snapshot]
    active: Tuple[int, ...]
    alignment: np.ndarray
    intensities: np.ndarray
    converged: bool
    rounds: int
    last_delta: float
    exited: Tuple[int, ...] = ()
    alignment_exact: np.ndarray = field(default_factory=lambda: np.zeros(0))


def _design_cost(S, cfg: SimConfig, cmat=None) -> np.ndarray:
    cmat = cfg.cost_matrix() if cmat is None else cmat
    return 0.5 * np.sum(cmat * np.asarray(cfg.gamma) * S * S, axis=-1)


def market_profits(S, cfg: SimConfig, alive=None) -> Tuple[np.ndarray, Tuple[int, ...]]:
    """Gross equilibrium profits of all firms at design ``S`` and the active set.

    Only firms in ``alive`` (default all) are offered.
    """
    S = np.asarray(S, dtype=float)
    n = S.shape[0]
    alive = np.arange(n) if alive is None else np.asarray(alive, dtype=int)
    profits = np.zeros(n)
    if alive.size == 0:
        return profits, ()
    fs = FactorStructure(S[alive], np.array(cfg.gamma))
    prefs = Preferences(np.array(cfg.b), cfg.phi)
    eq = active_set_equilibrium(factor_system(fs, prefs), alive.size, method="direct")
    profits[alive] = eq.profits
    return profits, tuple(int(alive[i]) for i in eq.active)


def firm_objective(S, firm: int, cfg: SimConfig, alive=None) -> float:
    """Equilibrium profit of ``firm`` minus its design cost."""
    S = np.asarray(S, dtype=float)
    profits, _ = market_profits(S, cfg, alive)
    return float(profits[firm] - _design_cost(S[firm], cfg, cfg.cost_matrix()[firm]))


def _batch_own_profit(designs, firm_pos, gamma, b, phi):
    """Closed-form single-product profits of one firm for a batch of designs.

    Returns ``nan`` where some quantity is not positive so the caller can
    fall back to the active-set solver.
    """
    m, n, _ = designs.shape
    sigma = np.einsum("mik,k,mjk->mij", designs, gamma, designs)
    sigma += np.eye(n)[None]
    inv = np.linalg.inv(sigma)
    d = designs @ b
    lhs = inv + np.einsum("mi,ij->mij", np.diagonal(inv, axis1=1, axis2=2), np.eye(n))
    rhs = np.einsum("mij,mj->mi", inv, d)
    p = -np.linalg.solve(lhs, rhs[..., None])[..., 0] / phi
    q = -phi * np.diagonal(inv, axis1=1, axis2=2) * p
    out = p[:, firm_pos] * q[:, firm_pos]
    out[np.any(q <= 0, axis=1)] = np.nan
    return out


class _Evaluator:
    def __init__(self, cfg: SimConfig):
        self.cfg = cfg
        self.gamma = np.array(cfg.gamma)
        self.b = np.array(cfg.b)
        self.cmat = cfg.cost_matrix()

    def own_objective(self, S, firm, alive, rows):
        """Objective of ``firm`` when its row is replaced by each of ``rows``."""
        alive = np.asarray(alive, dtype=int)
        pos = int(np.flatnonzero(alive == firm)[0])
        designs = np.repeat(S[alive][None], rows.shape[0], axis=0)
        designs[:, pos] = rows
        gross = _batch_own_profit(designs, pos, self.gamma, self.b, self.cfg.phi)
        for i in np.flatnonzero(np.isnan(gross)):
            trial = S.copy()
            trial[firm] = rows[i]
            gross[i] = market_profits(trial, self.cfg, alive)[0][firm]
        cost = 0.5 * np.sum(self.cmat[firm] * self.gamma * rows * rows, axis=1)
        return gross - cost

    def gradient(self, S, firm, alive):
        k = S.shape[1]
        h = self.cfg.fd_step
        base = S[firm]
        rows = np.repeat(base[None], 2 * k, axis=0)
        idx = np.arange(k)
        rows[idx, idx] += h
        rows[k + idx, idx] -= h
        vals = self.own_objective(S, firm, alive, rows)
        return (vals[:k] - vals[k:]) / (2.0 * h)


def _initial_design(cfg: SimConfig) -> np.ndarray:
    if cfg.init is InitMode.CUSTOM:
        return np.array(cfg.init_design, dtype=float)
    if cfg.init is InitMode.SYMMETRIC:
        d = optimal_orientation(cfg.b, cfg.gamma)
        row = cfg.init_intensity * d / np.sqrt(np.array(cfg.gamma))
        return np.tile(row, (cfg.n_firms, 1))
    rng = np.random.default_rng(cfg.seed)
    # half-normal draws so every firm starts with positive utility
    return np.abs(rng.normal(0.0, cfg.init_scale, size=(cfg.n_firms, cfg.n_attrs)))


def run_best_response(cfg: SimConfig, record_every: int = 1) -> SimResult:
    """Round-robin finite-difference ascent with backtracking and permanent exit.

    Each firm keeps its own step size: it grows by 20% after an accepted
    step and halves when a step would lower the firm's objective (up to
    30 halvings, after which the step is skipped).
    """
    ev = _Evaluator(cfg)
    S = _initial_design(cfg)
    n = cfg.n_firms
    rates = np.full(n, cfg.ascent_rate)
    alive = list(range(n))
    exited: List[int] = []
    trajectory: List[Snapshot] = []

    profits, active = market_profits(S, cfg, alive)
    for firm in [f for f in alive if f not in active]:
        alive.remove(firm)
        exited.append(firm)
        S[firm] = 0.0
    trajectory.append(Snapshot(0, S.copy(), profits - _design_cost(S, cfg), tuple(alive)))

    converged = False
    delta = float("inf")
    rnd = 0
    for rnd in range(1, cfg.max_rounds + 1):
        before = S.copy()
        for firm in range(n):
            if firm not in alive:
                continue
            for _ in range(cfg.ascent_steps_per_firm):
                current = ev.own_objective(S, firm, alive, S[firm][None])[0]
                grad = ev.gradient(S, firm, alive)
                if not np.any(grad):
                    break
                for _ in range(30):
                    trial = S[firm] + rates[firm] * grad
                    value = ev.own_objective(S, firm, alive, trial[None])[0]
                    if value >= current:
                        S[firm] = trial
                        rates[firm] *= 1.2
                        break
                    rates[firm] *= 0.5
            profits, active = market_profits(S, cfg, alive)
            for gone in [f for f in alive if f not in active]:
                alive.remove(gone)
                exited.append(gone)
                S[gone] = 0.0
        delta = float(np.max(np.abs(S - before)))
        if rnd % record_every == 0:
            profits, _ = market_profits(S, cfg, alive)
            trajectory.append(Snapshot(rnd, S.copy(), profits - _design_cost(S, cfg), tuple(alive)))
        if delta < cfg.design_tol:
            converged = True
            break
    if not converged:
        warnings.warn(f"best-response design did not settle in {cfg.max_rounds} rounds "
                      f"(last change {delta:.3e})", RuntimeWarning, stacklevel=2)
    if trajectory[-1].round != rnd:
        profits, _ = market_profits(S, cfg, alive)
        trajectory.append(Snapshot(rnd, S.copy(), profits - _design_cost(S, cfg), tuple(alive)))
    cos, intensity = alignment_report(S, cfg.b, cfg.gamma)
    exact, _ = alignment_report(S, cfg.b, cfg.gamma, target=optimal_orientation(cfg.b, cfg.gamma))
    return SimResult(S, trajectory, tuple(alive), cos, intensity, converged, rnd, delta,
                     tuple(sorted(exited)), exact)


def alignment_report(S, b, gamma, target=None) -> Tuple[np.ndarray, np.ndarray]:
    """Per-row cosine between ``sqrt(gamma) * row`` and a target, and intensity ``||sqrt(gamma) * row||``.

    The target defaults to ``Gamma^{-3/2} b``.  Zero rows get cosine 0.
    """
    S = np.atleast_2d(np.asarray(S, dtype=float))
    g = np.asarray(gamma, dtype=float)
    target = orientation_rule(b, g) if target is None else np.asarray(target, dtype=float)
    target = target / np.linalg.norm(target)
    scaled = S * np.sqrt(g)
    intensity = np.linalg.norm(scaled, axis=1)
    cos = np.zeros(S.shape[0])
    nz = intensity > 0
    cos[nz] = np.clip(scaled[nz] @ target / intensity[nz], -1.0, 1.0)
    return cos, intensity


@dataclass(frozen=True)
class OrientationCheck:
    angles: np.ndarray
    single_attribute: np.ndarray
    targets: np.ndarray


def heterogeneous_orientation_check(result: SimResult, cfg: SimConfig,
                                    reference_intensity: Optional[float] = None) -> OrientationCheck:
    """Angle between each firm's scaled design and ``C_n^{-1} b_hat``.

    A row is flagged as a single-attribute design when one coordinate holds
    more than 95% of its scaled norm and its intensity is below half of
    ``reference_intensity`` (default: the homogeneous-cost monopoly
    intensity at the mean cost).
    """
    from .design import monopoly_intensity

    g = np.array(cfg.gamma)
    b_hat = np.array(cfg.b) / np.sqrt(g)
    cmat = cfg.cost_matrix()
    targets = b_hat / cmat
    targets /= np.linalg.norm(targets, axis=1, keepdims=True)
    scaled = result.final_S * np.sqrt(g)
    norms = np.linalg.norm(scaled, axis=1)
    angles = np.full(cfg.n_firms, np.nan)
    nz = norms > 0
    cos = np.clip(np.sum(scaled[nz] * targets[nz], axis=1) / norms[nz], -1.0, 1.0)
    angles[nz] = np.arccos(cos)
    if reference_intensity is None:
        reference_intensity = monopoly_intensity(cfg.b, cfg.gamma, float(np.mean(cmat)), cfg.phi)
    dominant = np.zeros(cfg.n_firms, dtype=bool)
    dominant[nz] = np.max(np.abs(scaled[nz]), axis=1) > 0.95 * norms[nz]
    flagged = dominant & (norms < 0.5 * reference_intensity) & nz
    return OrientationCheck(angles, flagged, targets)
