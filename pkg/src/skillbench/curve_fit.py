"""
Decay of routing accuracy with skill-hub size.
acc(N) = c + (a - c) * exp(-lambda * (N - n0)), fitted by least squares
under 0 <= c <= a <= 1 and lambda >= 0.
"""

import math
import logging
from dataclasses import dataclass
from typing import Dict, Iterable, List, Tuple

import numpy as np
from scipy.optimize import curve_fit, minimize

from .constants import DEFAULT_N0
from .errors import DegenerateInput

logger = logging.getLogger(__name__)

LAMBDA_GRID = np.concatenate([[0.0], np.logspace(-4, 1, 241)])
LAMBDA_MAX = float(LAMBDA_GRID[-1])
SUM_BOUND_TOL = 1e-9


@dataclass
class DecayFit:
    a: float
    c: float
    lam: float
    n0: float = DEFAULT_N0
    rss: float = 0.0

    def predict(self, n) -> np.ndarray:
        return decay_curve(n, self.a, self.c, self.lam, self.n0)

    def to_dict(self) -> Dict[str, float]:
        return {"a": self.a, "c": self.c, "lambda": self.lam, "n0": self.n0, "rss": self.rss}


def decay_curve(n, a: float, c: float, lam: float, n0: float = DEFAULT_N0) -> np.ndarray:
    n = np.asarray(n, dtype=float)
    return c + (a - c) * np.exp(-lam * (n - n0))


def _rss(x: np.ndarray, y: np.ndarray, a: float, c: float, lam: float) -> float:
    residual = y - (c + (a - c) * np.exp(-lam * x))
    return float(residual @ residual)


def _clip_params(a: float, c: float) -> Tuple[float, float]:
    a = min(max(a, 0.0), 1.0)
    c = min(max(c, 0.0), 1.0)
    if c > a:
        a = c = (a + c) / 2
    return a, c


def _grid_search(x: np.ndarray, y: np.ndarray) -> Tuple[float, float, float]:
    """Best (a, c, lambda) over the lambda grid, solving a and c linearly."""
    best = None
    for lam in LAMBDA_GRID:
        e = np.exp(-lam * x)
        if lam == 0.0:
            a = c = float(np.mean(y))
        else:
            design = np.column_stack([e, 1.0 - e])
            (a, c), *_ = np.linalg.lstsq(design, y, rcond=None)
        a, c = _clip_params(float(a), float(c))
        rss = _rss(x, y, a, c, lam)
        if best is None or rss < best[0]:
            best = (rss, a, c, float(lam))
    _, a, c, lam = best
    return a, c, lam


def _refine(x: np.ndarray, y: np.ndarray, start: Tuple[float, float, float]) -> Tuple[float, float, float]:
    """Local refinement in (c, a - c, lambda) coordinates."""
    a0, c0, lam0 = start
    p0 = [c0, a0 - c0, min(lam0, LAMBDA_MAX)]

    def model(x, c, d, lam):
        return c + d * np.exp(-lam * x)

    try:
        (c, d, lam), _ = curve_fit(
            model, x, y, p0=p0,
            bounds=([0.0, 0.0, 0.0], [1.0, 1.0, LAMBDA_MAX]),
            ftol=1e-15, xtol=1e-15, gtol=1e-15, max_nfev=10000)
    except (RuntimeError, ValueError) as e:
        logger.debug(f"curve_fit did not converge: {e}")
        c, d, lam = p0

    if c + d <= 1.0 + SUM_BOUND_TOL:
        a, c = _clip_params(c + d, c)
        return a, c, float(lam)

    # the sum bound is active: solve with the explicit a <= 1 constraint
    result = minimize(
        lambda p: _rss(x, y, p[0] + p[1], p[0], p[2]),
        p0,
        method="SLSQP",
        bounds=[(0.0, 1.0), (0.0, 1.0), (0.0, LAMBDA_MAX)],
        constraints=[{"type": "ineq", "fun": lambda p: 1.0 - p[0] - p[1]}],
        options={"ftol": 1e-15, "maxiter": 1000},
    )
    c, d, lam = result.x
    a, c = _clip_params(c + d, c)
    return a, c, float(lam)


def fit_decay_curve(points: Iterable[Tuple[float, float]], n0: float = DEFAULT_N0) -> DecayFit:
    """Fit the decay curve to (N, accuracy) points.

    Coarse grid over lambda, then local refinement. The result never has a
    larger residual than the best constant fit.
    """
    pts: List[Tuple[float, float]] = [(float(n), float(acc)) for n, acc in points]
    if len({n for n, _ in pts}) < 3:
        raise DegenerateInput("need at least 3 distinct N values")
    if not all(math.isfinite(n) and math.isfinite(acc) for n, acc in pts):
        raise DegenerateInput("points must be finite")

    x = np.array([n for n, _ in pts]) - n0
    y = np.array([acc for _, acc in pts])

    grid = _grid_search(x, y)
    candidates = [grid, _refine(x, y, grid)]

    level = min(max(float(np.mean(y)), 0.0), 1.0)
    constant = DecayFit(a=level, c=level, lam=0.0, n0=n0, rss=_rss(x, y, level, level, 0.0))

    best = constant
    for a, c, lam in candidates:
        a, c = _clip_params(a, c)
        lam = max(float(lam), 0.0)
        rss = _rss(x, y, a, c, lam)
        if rss < best.rss:
            best = DecayFit(a=a, c=c, lam=lam, n0=n0, rss=rss)

    logger.info(f"Decay fit: a={best.a:.4f} c={best.c:.4f} lambda={best.lam:.5f} rss={best.rss:.3g}")
    return best
