"""Executable checks for the auxiliary sequence inequalities and self-bounding bounds.

Sequence inequalities, for nonnegative ``x_1..x_T`` with partial sums ``S_t``:

* ``three_quarter``: ``sum_t x_t / S_t^(1/4) <= 2 S_T^(3/4)`` (terms with ``S_t = 0`` vanish)
* ``four_thirds_lower``: ``sum_t x_t^(4/3) >= 4^(-7/3) x_T^(7/3)``
* ``x_sq_upper``: ``sum_t x_t^2 <= 4 S_T^(3/2)``
* ``four_thirds_upper``: ``sum_t x_t^(4/3) <= 2^(1/6) S_T^(7/6)``

The last three additionally need ``x_1 = 0`` and ``|x_{t+1} - x_t| <= 1``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from banditnet.errors import ContractViolation

REL_TOL = 1e-12
STEP_TOL = 1e-12
SELF_BOUNDING_KINDS = ("three_quarter_log", "three_quarter_and_seven_eighth")


@dataclass(frozen=True)
class LemmaCheck:
    name: str
    applicable: bool
    lhs: float = 0.0
    rhs: float = 0.0
    holds: bool = True


def lemma_oracles(seq) -> dict[str, LemmaCheck]:
    """Evaluate both sides of every applicable inequality; skip the rest."""
    x = np.asarray(seq, dtype=np.float64).ravel()
    out: dict[str, LemmaCheck] = {}
    nonneg = x.size > 0 and bool(np.all(x >= 0))
    if not nonneg:
        for name in ("three_quarter", "four_thirds_lower", "x_sq_upper", "four_thirds_upper"):
            out[name] = LemmaCheck(name, False)
        return out

    s = np.cumsum(x)
    total = float(s[-1])
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(s > 0, x / s ** 0.25, 0.0)
    lhs = float(terms.sum())
    rhs = 2.0 * total ** 0.75
    out["three_quarter"] = LemmaCheck("three_quarter", True, lhs, rhs, lhs <= rhs * (1 + REL_TOL))

    walk = x[0] == 0.0 and bool(np.all(np.abs(np.diff(x)) <= 1.0 + STEP_TOL))
    if not walk:
        for name in ("four_thirds_lower", "x_sq_upper", "four_thirds_upper"):
            out[name] = LemmaCheck(name, False)
        return out

    p43 = float(np.sum(x ** (4.0 / 3.0)))
    low = 4.0 ** (-7.0 / 3.0) * float(x[-1]) ** (7.0 / 3.0)
    out["four_thirds_lower"] = LemmaCheck("four_thirds_lower", True, low, p43, low <= p43 * (1 + REL_TOL))
    sq = float(np.sum(x * x))
    rhs = 4.0 * total ** 1.5
    out["x_sq_upper"] = LemmaCheck("x_sq_upper", True, sq, rhs, sq <= rhs * (1 + REL_TOL))
    rhs = 2.0 ** (1.0 / 6.0) * total ** (7.0 / 6.0)
    out["four_thirds_upper"] = LemmaCheck("four_thirds_upper", True, p43, rhs, p43 <= rhs * (1 + REL_TOL))
    return out


def random_admissible_walk(length: int, rng, max_step: float = 1.0) -> np.ndarray:
    """Start at 0, take uniform steps in ``[-max_step, max_step]``, reflect at 0."""
    steps = rng.uniform(-max_step, max_step, size=length - 1)
    x = np.zeros(length)
    for i, d in enumerate(steps):
        x[i + 1] = abs(x[i] + d)
    return x


def self_bounding_solver(kind: str, f: float, g: float, h: float = 1.0) -> float:
    """Closed-form upper bound on any ``y`` satisfying the self-bounding hypothesis.

    ``three_quarter_log``: ``y <= f + y^(3/4) g log y`` implies
    ``y^(1/4) <= f^(1/4) + g log(2 (f^(1/4) + g)^2)``.

    ``three_quarter_and_seven_eighth``: ``y <= f + y^(3/4) g log y + y^(7/8) h``
    implies ``y^(1/8) <= f^(1/8) + g^(1/2) log(2 (f^(1/8) + g^(1/2) + h)^2) + h``.
    """
    if kind == "three_quarter_log":
        if f < 1 or g < 1:
            raise ContractViolation("self-bounding bound needs f, g >= 1")
        a = f ** 0.25
        return (a + g * math.log(2.0 * (a + g) ** 2)) ** 4
    if kind == "three_quarter_and_seven_eighth":
        if f < 1 or g < 1 or h < 1:
            raise ContractViolation("self-bounding bound needs f, g, h >= 1")
        a = f ** 0.125
        b = math.sqrt(g)
        return (a + b * math.log(2.0 * (a + b + h) ** 2) + h) ** 8
    raise ValueError(f"unknown self-bounding kind {kind!r}; expected one of {SELF_BOUNDING_KINDS}")


def hypothesis_gap(kind: str, y: float, f: float, g: float, h: float = 1.0) -> float:
    """Right side minus left side of the hypothesis; ``>= 0`` means ``y`` satisfies it."""
    ly = math.log(y)
    val = f + y ** 0.75 * g * ly - y
    if kind == "three_quarter_and_seven_eighth":
        val += y ** 0.875 * h
    return val


def largest_hypothesis_root(kind: str, f: float, g: float, h: float = 1.0,
                            log10_max: float = 120.0, grid: int = 40000) -> float:
    """Largest ``y >= 1`` satisfying the hypothesis with equality.

    Scans a log-spaced grid for the last sign change of the hypothesis gap and
    refines it with Brent's method. The gap is eventually negative since every
    power of ``y`` on the right is below one.
    """
    ys = np.logspace(0.0, log10_max, grid)
    vals = np.array([hypothesis_gap(kind, float(y), f, g, h) for y in ys])
    if vals[-1] >= 0:
        raise RuntimeError("hypothesis still satisfied at the end of the scan; enlarge log10_max")
    ok = np.nonzero(vals >= 0)[0]
    if ok.size == 0:
        return 1.0
    i = int(ok[-1])
    return float(brentq(lambda y: hypothesis_gap(kind, y, f, g, h), ys[i], ys[i + 1], xtol=1e-12, rtol=1e-14, maxiter=500))
