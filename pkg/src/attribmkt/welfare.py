"""Consumer surplus under monopoly and single-product competition.

Both regimes use a one-direction market: every good loads the common unit
vector ``y = 1 / sqrt(N)``, so ``delta = t sqrt(B) y`` and
``Sigma = I + t^2 y y'`` with each regime's own optimal intensity ``t``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .demand import FactorStructure, Preferences
from .design import monopoly_intensity, symmetric_intensity, symmetric_nash_intensity
from .pricing import consumer_surplus, monopoly_equilibrium, single_product_equilibrium

__all__ = ["WelfareCell", "welfare_cell", "reduced_market", "COMPETITION_RULES"]

COMPETITION_RULES = ("foc", "nash")


@dataclass(frozen=True)
class WelfareCell:
    t_monopoly: float
    t_competition: float
    cs_monopoly: float
    cs_competition: float

    @property
    def cs_difference(self) -> float:
        return self.cs_monopoly - self.cs_competition


def reduced_market(t: float, taste: float, n: int, phi: float):
    """Factor structure and preferences of the one-direction market at intensity ``t``."""
    y = np.full((n, 1), 1.0 / math.sqrt(n))
    fs = FactorStructure(y, [t * t])
    return fs, Preferences([t * math.sqrt(taste)], phi)


def _surplus(t, taste, n, phi, regime):
    if t == 0.0:
        return 0.0
    fs, prefs = reduced_market(t, taste, n, phi)
    eq = monopoly_equilibrium(fs, prefs) if regime == "monopoly" else single_product_equilibrium(fs, prefs)
    return consumer_surplus(fs, prefs, eq.prices)


def welfare_cell(taste: float, c: float, phi: float, n: int = 3,
                 competition: str = "foc") -> WelfareCell:
    """Intensities and consumer surplus in both regimes for effective taste ``B``.

    ``competition="foc"`` takes the competitive intensity from the
    symmetric first-order condition; ``"nash"`` uses the unilateral-deviation
    intensity instead.
    """
    if competition not in COMPETITION_RULES:
        raise ValueError(f"competition must be one of {COMPETITION_RULES}")
    if not phi < 0 or not c > 0 or not taste > 0:
        raise ValueError("need phi < 0, c > 0 and B > 0")
    b, g = [math.sqrt(taste)], [1.0]
    t_m = monopoly_intensity(b, g, c, phi)
    if competition == "foc":
        t_c = symmetric_intensity(b, g, c, phi, n)
    else:
        t_c = symmetric_nash_intensity(b, g, c, phi, n)
    return WelfareCell(t_m, t_c, _surplus(t_m, taste, n, phi, "monopoly"),
                       _surplus(t_c, taste, n, phi, "competition"))
