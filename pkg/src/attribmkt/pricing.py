"""Price equilibria for the linear demand system.

Three regimes are covered: a multi-product monopolist, single-product
firms via the closed form, and single-product firms via best-response
iteration with a shutdown rule for goods whose residual demand intercept
is not positive.

The iterative solver is written against a small interface: a callable
``system(active) -> (a, B)`` giving the demand ``q_A = a + B p_A`` of
the goods in ``active`` when only those goods are offered.  ``B`` must be
symmetric negative definite.  This lets the same solver price markets with
several consumer types.
"""

from __future__ import annotations

import enum
import itertools
import warnings
from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Tuple

import numpy as np
from scipy import linalg

from .demand import (
    FactorStructure,
    NonPositiveUtilityWarning,
    Preferences,
    delta,
    sigma_inverse,
    woodbury_solve,
)

__all__ = [
    "Regime",
    "PriceEquilibrium",
    "ConvergenceError",
    "NoEquilibriumError",
    "NonViableError",
    "LinearSystem",
    "factor_system",
    "monopoly_equilibrium",
    "monopoly_profit",
    "single_product_equilibrium",
    "iterative_bertrand",
    "active_set_equilibrium",
    "consumer_surplus",
    "reentry_intercepts",
]

LinearSystem = Callable[[np.ndarray], Tuple[np.ndarray, np.ndarray]]


class Regime(enum.Enum):
    MONOPOLY = "monopoly"
    SINGLE_PRODUCT_CLOSED_FORM = "single_product_closed_form"
    SINGLE_PRODUCT_ITERATIVE = "single_product_iterative"


class ConvergenceError(RuntimeError):
    def __init__(self, message: str, residual: float = float("nan")):
        super().__init__(f"{message} (residual {residual:.3e})")
        self.residual = residual


class NoEquilibriumError(ConvergenceError):
    """No active set has positive interior prices and no profitable entrant."""


class NonViableError(ValueError):
    """Some initial marginal utility is not positive."""


@dataclass(frozen=True)
class PriceEquilibrium:
    prices: np.ndarray
    quantities: np.ndarray
    profits: np.ndarray
    active: Tuple[int, ...]
    regime: Regime
    # True when an interior formula produced a negative quantity
    flagged: bool = False
    iterations: int = 0

    @property
    def total_profit(self) -> float:
        return float(np.sum(self.profits))

    @property
    def n_goods(self) -> int:
        return self.prices.shape[0]


def _checked_delta(fs: FactorStructure, prefs: Preferences, strict: bool) -> np.ndarray:
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", NonPositiveUtilityWarning)
        d = delta(fs, prefs)
    if strict and np.any(d <= 0):
        raise NonViableError("initial marginal utilities must be strictly positive")
    return d


def factor_system(fs: FactorStructure, prefs: Preferences) -> LinearSystem:
    """Demand of a sub-market of ``fs``: ``a = Sigma_AA^{-1} delta_A``, ``B = phi Sigma_AA^{-1}``."""
    d = _checked_delta(fs, prefs, strict=False)
    phi = prefs.price_sensitivity

    def system(active: np.ndarray):
        sub = fs.restrict(active)
        inv = sigma_inverse(sub)
        return inv @ d[active], phi * inv

    return system


def monopoly_equilibrium(fs: FactorStructure, prefs: Preferences, withdraw: bool = False) -> PriceEquilibrium:
    """Multi-product monopoly: ``p = -delta/(2 phi)``, ``q = Sigma^{-1} delta / 2``.

    With ``withdraw=False`` negative quantities are reported as they are and
    the result is ``flagged``.  With ``withdraw=True`` the good with the most
    negative quantity is dropped and the monopoly recomputed on the rest
    until every offered quantity is nonnegative.
    """
    d = _checked_delta(fs, prefs, strict=True)
    phi = prefs.price_sensitivity
    n = fs.n_goods
    prices = -d / (2.0 * phi)
    active = np.arange(n)
    q = 0.5 * woodbury_solve(fs, d)
    flagged = bool(np.any(q < 0))
    if withdraw:
        while active.size and np.any(q[active] < 0):
            worst = active[np.argmin(q[active])]
            active = active[active != worst]
            q = np.zeros(n)
            if active.size:
                q[active] = 0.5 * woodbury_solve(fs.restrict(active), d[active])
        p = np.zeros(n)
        p[active] = prices[active]
        prices = p
    return PriceEquilibrium(prices, q, prices * q, tuple(int(i) for i in active),
                            Regime.MONOPOLY, flagged)


def monopoly_profit(fs: FactorStructure, prefs: Preferences) -> float:
    """Monopoly expected profit ``-(1/(4 phi)) delta' Sigma^{-1} delta``.

    No positivity check on ``delta``: goods with zero utility are priced at
    zero and contribute nothing, which is what allocation studies need.
    """
    d = _checked_delta(fs, prefs, strict=False)
    return -float(d @ woodbury_solve(fs, d)) / (4.0 * prefs.price_sensitivity)


def single_product_equilibrium(fs: FactorStructure, prefs: Preferences) -> PriceEquilibrium:
    """Closed form for single-product firms.

    ``p = -(1/phi) (D + Sigma^{-1})^{-1} Sigma^{-1} delta`` with
    ``D = diag(Sigma^{-1})``, and ``q = -phi D p``.  Negative quantities are
    not corrected here; the result is ``flagged`` and
    :func:`iterative_bertrand` should be used instead.
    """
    d = _checked_delta(fs, prefs, strict=True)
    phi = prefs.price_sensitivity
    inv = sigma_inverse(fs)
    diag = np.diag(inv)
    p = -linalg.solve(inv + np.diag(diag), inv @ d, assume_a="pos") / phi
    q = -phi * diag * p
    return PriceEquilibrium(p, q, p * q, tuple(range(fs.n_goods)),
                            Regime.SINGLE_PRODUCT_CLOSED_FORM, bool(np.any(q < 0)))


def _interior_prices(a, B, method, max_iters, tol, damping, start=None):
    """Fixed point of ``p_n = -(a_n + sum_{m != n} B_nm p_m) / (2 B_nn)``."""
    n = a.shape[0]
    if method == "direct":
        return linalg.solve(B + np.diag(np.diag(B)), -a, assume_a="sym"), 1
    if method != "sweep":
        raise ValueError(f"unknown method {method!r}")
    p = np.zeros(n) if start is None else np.array(start, dtype=float)
    diag = np.diag(B)
    change = np.inf
    for it in range(1, max_iters + 1):
        change = 0.0
        for k in range(n):
            intercept = a[k] + B[k] @ p - diag[k] * p[k]
            new = (1 - damping) * p[k] + damping * (-intercept / (2.0 * diag[k]))
            change = max(change, abs(new - p[k]))
            p[k] = new
        if change < tol:
            return p, it
    raise ConvergenceError(f"best-response sweeps did not converge in {max_iters} iterations", change)


def reentry_intercepts(system: LinearSystem, n_goods: int, active: Sequence[int], prices) -> np.ndarray:
    """Residual demand intercept each inactive good would face if it entered.

    Entries for active goods are ``nan``.
    """
    active = np.asarray(sorted(active), dtype=int)
    prices = np.asarray(prices, dtype=float)
    out = np.full(n_goods, np.nan)
    for k in range(n_goods):
        if k in set(active.tolist()):
            continue
        idx = np.append(active, k)
        a, B = system(idx)
        out[k] = a[-1] + B[-1, :-1] @ prices[active]
    return out


EXHAUSTIVE_LIMIT = 12


def _is_equilibrium_set(system, n_goods, active):
    prices = np.zeros(n_goods)
    p_active = np.zeros(0)
    if active.size:
        a, B = system(active)
        p_active = linalg.solve(B + np.diag(np.diag(B)), -a, assume_a="sym")
        if np.any(p_active <= 0):
            return None
        prices[active] = p_active
    entry = reentry_intercepts(system, n_goods, active, prices)
    if np.any(entry > 0):
        return None
    return p_active


def _exhaustive_active_set(system, n_goods, cycled):
    for size in range(n_goods, -1, -1):
        for subset in itertools.combinations(range(n_goods), size):
            active = np.array(subset, dtype=int)
            p_active = _is_equilibrium_set(system, n_goods, active)
            if p_active is not None:
                return active, p_active
    raise NoEquilibriumError(f"shutdown rule cycles through active set {cycled} "
                             "and no active set is an equilibrium")


def active_set_equilibrium(system: LinearSystem, n_goods: int, method: str = "sweep",
                           max_iters: int = 10_000, tol: float = 1e-10, damping: float = 1.0,
                           max_rounds: Optional[int] = None) -> PriceEquilibrium:
    """Single-product price equilibrium with the shutdown rule.

    Interior prices are computed on the current active set.  If some firm
    has a non-positive intercept the one with the lowest price leaves and
    the equilibrium is recomputed.  Once every active firm is viable, shut
    firms whose re-entry intercept has become positive are readmitted, one
    at a time.  If that walk revisits an active set, every subset of at
    most ``EXHAUSTIVE_LIMIT`` goods is checked instead, largest first; when
    none qualifies :class:`NoEquilibriumError` is raised.  Larger markets
    raise :class:`ConvergenceError` on a revisit.
    """
    if not 0 < damping <= 1:
        raise ValueError("damping must lie in (0, 1]")
    active = np.arange(n_goods)
    seen = set()
    total_iters = 0
    rounds = max_rounds if max_rounds is not None else 4 * n_goods + 4
    p_active = np.zeros(0)
    for _ in range(rounds):
        key = tuple(active.tolist())
        if key in seen:
            if n_goods > EXHAUSTIVE_LIMIT:
                raise ConvergenceError(f"shutdown rule cycles through active set {key}")
            active, p_active = _exhaustive_active_set(system, n_goods, key)
            break
        seen.add(key)
        if active.size == 0:
            p_active = np.zeros(0)
            break
        a, B = system(active)
        p_active, its = _interior_prices(a, B, method, max_iters, tol, damping)
        total_iters += its
        if np.any(p_active <= 0):
            active = np.delete(active, int(np.argmin(p_active)))
            continue
        prices = np.zeros(n_goods)
        prices[active] = p_active
        entry = reentry_intercepts(system, n_goods, active, prices)
        if np.any(entry > 0):
            best = int(np.nanargmax(entry))
            active = np.sort(np.append(active, best))
            continue
        break
    else:
        raise ConvergenceError("active set did not settle", float("nan"))

    prices = np.zeros(n_goods)
    q = np.zeros(n_goods)
    if active.size:
        a, B = system(active)
        prices[active] = p_active
        q[active] = a + B @ p_active
    return PriceEquilibrium(prices, q, prices * q, tuple(int(i) for i in active),
                            Regime.SINGLE_PRODUCT_ITERATIVE, False, total_iters)


def iterative_bertrand(fs: FactorStructure, prefs: Preferences, method: str = "sweep",
                       max_iters: int = 10_000, tol: float = 1e-10,
                       damping: float = 1.0) -> PriceEquilibrium:
    """Best-response pricing with shutdown, on the market described by ``fs``.

    ``method="sweep"`` runs Gauss-Seidel best responses in good-index order
    until the largest price change is below ``tol``; ``method="direct"``
    solves the stacked first-order conditions in one linear solve.  Both
    give the same fixed point.
    """
    return active_set_equilibrium(factor_system(fs, prefs), fs.n_goods, method,
                                  max_iters, tol, damping)


def consumer_surplus(fs: FactorStructure, prefs: Preferences, p,
                     active: Optional[Sequence[int]] = None) -> float:
    """``W = (delta + phi p)' Sigma^{-1} (delta + phi p) / 2``.

    If ``active`` is given the surplus is computed in the market where only
    those goods are offered.
    """
    d = _checked_delta(fs, prefs, strict=False)
    p = np.asarray(p, dtype=float)
    if active is not None:
        idx = np.asarray(sorted(active), dtype=int)
        if idx.size == 0:
            return 0.0
        fs, d, p = fs.restrict(idx), d[idx], p[idx]
    x = d + prefs.price_sensitivity * p
    return 0.5 * float(x @ woodbury_solve(fs, x))
