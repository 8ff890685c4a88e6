"""Scaling-regime classification and convergence-rate prediction.

Particles of diameter ~ eps^alpha sit on a cubic lattice of spacing eps and
the fluid viscosity is mu0 * eps^gamma.  The collective friction strength
scales like eps^(alpha + gamma - 3), which sorts parameter points into three
regimes with different macroscopic limits:

* critical (alpha + gamma = 3):      Euler equations plus a linear friction
  term R u ("Euler-Brinkman"),
* subcritical (alpha + gamma > 3):   plain Euler equations,
* supercritical (alpha + gamma < 3): Darcy's law, after rescaling time and
  velocity by eps^(alpha + gamma - 3).

All classifications require the particle Reynolds number to vanish, which
restricts gamma from above; the remaining parameter region is out of scope.

Boundary lines are measure zero, so comparisons are done in exact rational
arithmetic whenever the inputs convert exactly (ints, floats, Fractions,
Decimals all do); only genuinely inexact inputs fall back to a relative
tolerance of 1e-12.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from typing import Optional

from .errors import ParameterDomainError

_REL_TOL = 1e-12


class RegimeLabel(str, Enum):
    CRITICAL = "Critical"
    SUBCRITICAL = "Subcritical"
    SUBCRITICAL_LARGE_VISCOSITY = "SubcriticalNeedsLargeViscosity"
    SUPERCRITICAL = "Supercritical"
    OUT_OF_SCOPE = "OutOfScope"


class LimitSystem(str, Enum):
    EULER_BRINKMAN = "EulerBrinkman"
    EULER = "Euler"
    DARCY = "Darcy"
    NONE = "None"


_LIMIT_OF = {
    RegimeLabel.CRITICAL: LimitSystem.EULER_BRINKMAN,
    RegimeLabel.SUBCRITICAL: LimitSystem.EULER,
    RegimeLabel.SUBCRITICAL_LARGE_VISCOSITY: LimitSystem.EULER,
    RegimeLabel.SUPERCRITICAL: LimitSystem.DARCY,
    RegimeLabel.OUT_OF_SCOPE: LimitSystem.NONE,
}


def _exact(x) -> Optional[Fraction]:
    """Exact rational value of x, or None if x does not convert exactly."""
    try:
        return Fraction(x)
    except (TypeError, ValueError):
        try:
            return Fraction(float(x))
        except (TypeError, ValueError, OverflowError):
            return None


@dataclass(frozen=True)
class RegimeParams:
    """Exponent pair (alpha, gamma), viscosity prefactor mu0, optional spacing eps.

    Particle diameter ~ eps^alpha with alpha > 1; viscosity mu0 * eps^gamma
    with gamma > 0, mu0 > 0; eps in (0, 1) when given.
    """

    alpha: float
    gamma: float
    mu0: float = 1.0
    epsilon: Optional[float] = None

    def __post_init__(self):
        if not self.alpha > 1:
            raise ParameterDomainError(f"alpha must exceed 1, got {self.alpha}")
        if not self.gamma > 0:
            raise ParameterDomainError(f"gamma must be positive, got {self.gamma}")
        if not self.mu0 > 0:
            raise ParameterDomainError(f"mu0 must be positive, got {self.mu0}")
        if self.epsilon is not None and not 0 < self.epsilon < 1:
            raise ParameterDomainError(f"epsilon must lie in (0, 1), got {self.epsilon}")


@dataclass(frozen=True)
class RegimeClass:
    label: RegimeLabel
    limit_system: LimitSystem


@dataclass(frozen=True)
class RatePrediction:
    """Predicted decay exponent of the squared L2 error in eps.

    The exponent is the minimum over the contributing terms.  Pointwise in
    time for the critical/subcritical regimes, space-time for supercritical.
    """

    exponent: float
    contributing_terms: list = field(default_factory=list)


class _Cmp:
    """Comparisons in exact rational arithmetic with a float fallback."""

    def __init__(self, alpha, gamma):
        a, g = _exact(alpha), _exact(gamma)
        self.exact = a is not None and g is not None
        self.a = a if self.exact else float(alpha)
        self.g = g if self.exact else float(gamma)

    def _eq(self, x, y) -> bool:
        if self.exact:
            return x == y
        return abs(x - y) <= _REL_TOL * max(1.0, abs(x), abs(y))

    def eq(self, x, y):
        return self._eq(x, y)

    def lt(self, x, y):
        return (not self._eq(x, y)) and x < y

    def le(self, x, y):
        return self._eq(x, y) or x < y


def classify(params: RegimeParams) -> RegimeClass:
    """Assign the unique regime label of a parameter point.

    Exactly one label applies:

    * Critical:       alpha + gamma = 3 and alpha in (3/2, 3),
    * Subcritical:    alpha > 3/2 and 3 - alpha < gamma <= alpha
                      (flagged as needing large viscosity iff gamma = alpha),
    * Supercritical:  alpha in (1, 3) and 0 < gamma < min(3/2, 3 - alpha),
    * OutOfScope:     everything else (particle Reynolds number not small).
    """
    c = _Cmp(params.alpha, params.gamma)
    a, g = c.a, c.g
    half3 = Fraction(3, 2) if c.exact else 1.5

    if c.eq(a + g, 3) and c.lt(half3, a) and c.lt(a, 3):
        label = RegimeLabel.CRITICAL
    elif c.lt(half3, a) and c.lt(3 - a, g) and c.le(g, a):
        if c.eq(g, a):
            label = RegimeLabel.SUBCRITICAL_LARGE_VISCOSITY
        else:
            label = RegimeLabel.SUBCRITICAL
    elif c.lt(1, a) and c.lt(a, 3) and c.lt(g, half3) and c.lt(g, 3 - a):
        label = RegimeLabel.SUPERCRITICAL
    else:
        label = RegimeLabel.OUT_OF_SCOPE
    return RegimeClass(label, _LIMIT_OF[label])


def particle_reynolds(params: RegimeParams, regime: RegimeClass) -> float:
    """Particle Reynolds number (diameter x velocity / viscosity) at spacing eps.

    eps^(alpha-gamma)/mu0 in the critical and subcritical regimes, where the
    velocity stays order one; eps^(3-2*gamma)/mu0 in the supercritical regime,
    where the friction slows the flow to eps^(3-alpha-gamma).
    """
    if params.epsilon is None:
        raise ParameterDomainError("particle Reynolds number needs epsilon")
    if regime.label is RegimeLabel.OUT_OF_SCOPE:
        raise ParameterDomainError("no Reynolds scaling is assigned out of scope")
    eps, mu0 = params.epsilon, params.mu0
    if regime.label is RegimeLabel.SUPERCRITICAL:
        return eps ** (3 - 2 * params.gamma) / mu0
    return eps ** (params.alpha - params.gamma) / mu0


def predicted_rate(params: RegimeParams) -> RatePrediction:
    """Predicted decay exponent of the squared L2 error for the regime's limit.

    Critical:      min(2a - 3, 6 - 2a)
    Subcritical:   min(2a + 2g - 6, 2a - 3, 2g)
    Supercritical: min((6 - 4g)/3, a - 1, 9 - 3a), in the space-time norm.
    """
    regime = classify(params)
    a, g = float(params.alpha), float(params.gamma)
    if regime.label is RegimeLabel.CRITICAL:
        terms = [("2*alpha-3", 2 * a - 3), ("6-2*alpha", 6 - 2 * a)]
    elif regime.label in (RegimeLabel.SUBCRITICAL, RegimeLabel.SUBCRITICAL_LARGE_VISCOSITY):
        terms = [
            ("2*alpha+2*gamma-6", 2 * a + 2 * g - 6),
            ("2*alpha-3", 2 * a - 3),
            ("2*gamma", 2 * g),
        ]
    elif regime.label is RegimeLabel.SUPERCRITICAL:
        terms = [
            ("(6-4*gamma)/3", (6 - 4 * g) / 3),
            ("alpha-1", a - 1),
            ("9-3*alpha", 9 - 3 * a),
        ]
    else:
        raise ParameterDomainError(
            f"no rate is predicted out of scope (alpha={a}, gamma={g}: "
            "requires gamma < alpha for an order-one flow, or gamma < 3/2 "
            "after supercritical rescaling)"
        )
    exponent = min(e for _, e in terms)
    return RatePrediction(exponent=exponent, contributing_terms=terms)


def regime_diagram(alpha_range, gamma_range, n_alpha: int, n_gamma: int):
    """Classify a product grid in the (alpha, gamma) plane, row-major in alpha.

    Nodes exclude the lower edges (the parameter domain is open there) and
    include the upper ones: alpha_i = amin + i*(amax-amin)/n for i = 1..n.
    Grid must sit inside alpha in (1, 5], gamma in (0, 3].
    """
    amin, amax = alpha_range
    gmin, gmax = gamma_range
    if n_alpha < 1 or n_gamma < 1:
        raise ParameterDomainError("regime diagram grid must be nonempty")
    if not (1 <= amin < amax <= 5 and 0 <= gmin < gmax <= 3):
        raise ParameterDomainError(
            "grid must lie within alpha in (1, 5], gamma in (0, 3]"
        )
    fa_min, fa_max = _exact(amin), _exact(amax)
    fg_min, fg_max = _exact(gmin), _exact(gmax)
    exact = None not in (fa_min, fa_max, fg_min, fg_max)
    rows = []
    for i in range(1, n_alpha + 1):
        if exact:
            a = fa_min + Fraction(i, n_alpha) * (fa_max - fa_min)
        else:
            a = amin + i * (amax - amin) / n_alpha
        for j in range(1, n_gamma + 1):
            if exact:
                g = fg_min + Fraction(j, n_gamma) * (fg_max - fg_min)
            else:
                g = gmin + j * (gmax - gmin) / n_gamma
            cls = classify(RegimeParams(alpha=a, gamma=g))
            rows.append((float(a), float(g), cls))
    return rows


def diagram_to_csv(rows) -> str:
    """Render regime_diagram rows as CSV with a fixed header."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["alpha", "gamma", "label", "limit_system"])
    for a, g, cls in rows:
        writer.writerow([f"{a:.12g}", f"{g:.12g}", cls.label.value, cls.limit_system.value])
    return buf.getvalue()
