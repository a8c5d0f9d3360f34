"""Exponent bookkeeping for the L1-to-Linf smoothing estimate and rate fits.

Everything here is exact arithmetic on exponents plus one least-squares
fit.  The two algebraic identities behind the iteration bookkeeping are
exposed as residuals so a sweep can pin them to rounding level, and the
decay-rate fit turns a trajectory's sup-norm history into a slope that can
be compared with the predicted time power.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class SmoothingParams:
    """Admissible (d, alpha, p0) for the iteration algebra.

    alpha must exceed 1 - 2/d (equivalently (d-2)/d) and p0 must exceed 1.
    The closed iteration lives in d >= 3; d = 2 is allowed here with a
    warning because the identities degenerate ((d-2) factors vanish), and
    d = 1 is rejected for the iteration-specific operations.
    """

    d: int
    alpha: float
    p0: float

    def __post_init__(self) -> None:
        if self.d not in (1, 2, 3):
            raise ValueError(f"d must be 1, 2 or 3, got {self.d}")
        if self.alpha <= 1.0 - 2.0 / self.d:
            raise ValueError(
                f"alpha = {self.alpha} inadmissible: need alpha > 1 - 2/d = {1 - 2 / self.d}"
            )
        if self.p0 <= 1.0:
            raise ValueError(f"p0 must exceed 1, got {self.p0}")
        if self.d == 2:
            warnings.warn(
                "d = 2 degenerates the iteration algebra; exponent identities hold "
                "but the iteration sequence is stationary",
                stacklevel=2,
            )


def smoothing_exponents(d: int, alpha: float) -> tuple[float, float]:
    """(time_power, mass_power) of |u(t)|_inf <= C t^-time |u0|_1^mass.

    time = d/(2 + (alpha-1)d), mass = 2/(2 + (alpha-1)d); requires the
    denominator positive, i.e. alpha > 1 - 2/d.
    """
    if d not in (1, 2, 3):
        raise ValueError(f"d must be 1, 2 or 3, got {d}")
    denom = 2.0 + (alpha - 1.0) * d
    if denom <= 0:
        raise ValueError(f"alpha = {alpha} inadmissible for d = {d}: need alpha > 1 - 2/d")
    return d / denom, 2.0 / denom


def p0_threshold(alpha: float, d: int) -> float:
    """Upper bound of the admissible starting exponents p0.

    (d+2)/(2d) + sqrt((alpha-1)(alpha+2/d) + ((d+2)/(2d))^2); exceeds 1
    whenever alpha > 1 - 2/d.
    """
    if d not in (1, 2, 3):
        raise ValueError(f"d must be 1, 2 or 3, got {d}")
    half = (d + 2.0) / (2.0 * d)
    radicand = (alpha - 1.0) * (alpha + 2.0 / d) + half * half
    if radicand < 0:
        raise ValueError(f"alpha = {alpha} inadmissible for d = {d}")
    return half + math.sqrt(radicand)


def gamma_exponent(params: SmoothingParams) -> float:
    """Interpolation exponent (2 p0 + (alpha-1) d) / ((p0 + alpha - 2) d + 2).

    Lies in (0, 1) for admissible parameters with p0 below the threshold.
    """
    num = 2.0 * params.p0 + (params.alpha - 1.0) * params.d
    den = (params.p0 + params.alpha - 2.0) * params.d + 2.0
    if den <= 0:
        raise ValueError(f"degenerate exponent denominator for {params}")
    return num / den


def moser_sequence(params: SmoothingParams, n_terms: int) -> list[float]:
    """The norm-exponent ladder p_{k+1} = d/(d-2) * (p_k + alpha - 1).

    Defined only for d >= 3, where the ladder is strictly increasing and
    diverges, which is what drives the sup-norm bound.
    """
    if params.d < 3:
        raise ValueError(f"the exponent ladder requires d >= 3, got d = {params.d}")
    if n_terms < 1:
        raise ValueError(f"n_terms must be >= 1, got {n_terms}")
    ratio = params.d / (params.d - 2.0)
    seq = [float(params.p0)]
    for _ in range(n_terms - 1):
        seq.append(ratio * (seq[-1] + params.alpha - 1.0))
    return seq


def exponent_identities(params: SmoothingParams) -> tuple[float, float]:
    """Residuals of the two identities the iteration bookkeeping relies on.

    First: p0 - gamma = (p0-1)(p0+alpha-1) d / ((p0+alpha-2) d + 2).
    Second: 2 gamma (p0+alpha-1) / ((gamma+alpha-1)(2 p0+(alpha-1) d))
    = 2/(2+(alpha-1) d), whose right side is exactly the mass power of the
    smoothing bound.  Both residuals vanish to rounding for admissible
    parameters.
    """
    d, alpha, p0 = params.d, params.alpha, params.p0
    gamma = gamma_exponent(params)
    den = (p0 + alpha - 2.0) * d + 2.0
    residual_first = abs((p0 - gamma) - (p0 - 1.0) * (p0 + alpha - 1.0) * d / den)
    lhs = 2.0 * gamma * (p0 + alpha - 1.0) / ((gamma + alpha - 1.0) * (2.0 * p0 + (alpha - 1.0) * d))
    rhs = 2.0 / (2.0 + (alpha - 1.0) * d)
    residual_second = abs(lhs - rhs)
    return residual_first, residual_second


@dataclass(frozen=True)
class RateFit:
    """Least-squares power-law fit of a sup-norm history."""

    slope: float
    intercept: float
    r_squared: float
    n_points: int
    window: tuple[float, float]


def fit_decay_rate(traj, window: tuple[float, float]) -> RateFit:
    """Fit log|u(t)|_inf against log t over a time window.

    Uses the per-step diagnostics of a trajectory (every recorded step
    inside the window, endpoints included).  Requires at least 8 samples
    with positive sup norm; times at or below zero are excluded.
    """
    lo, hi = window
    if not (0 <= lo < hi):
        raise ValueError(f"window must satisfy 0 <= lo < hi, got {window}")
    if traj.diagnostics is None:
        raise ValueError("trajectory has no diagnostics to fit")
    t = np.asarray(traj.diagnostics["t"], dtype=np.float64)
    linf = np.asarray(traj.diagnostics["linf"], dtype=np.float64)
    mask = (t >= lo) & (t <= hi) & (t > 0) & (linf > 0)
    if int(np.sum(mask)) < 8:
        raise ValueError(
            f"need at least 8 positive samples in the window, found {int(np.sum(mask))}"
        )
    x = np.log(t[mask])
    y = np.log(linf[mask])
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_res = float(np.sum(resid**2))
    ss_tot = float(np.sum((y - np.mean(y)) ** 2))
    r2 = 1.0 if ss_tot == 0 else 1.0 - ss_res / ss_tot
    return RateFit(
        slope=float(slope),
        intercept=float(intercept),
        r_squared=r2,
        n_points=int(np.sum(mask)),
        window=(float(lo), float(hi)),
    )
