"""Spline smoothing of a planner polyline and macro/micro resampling."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import CubicSpline


@dataclass(frozen=True)
class SmoothingConfig:
    s_macro: float = 0.005
    d_max: float = 0.001
    arc_samples: int = 1000

    def __post_init__(self):
        if not 0 < self.d_max <= self.s_macro:
            raise ValueError("need 0 < d_max <= s_macro")
        if self.arc_samples < 1:
            raise ValueError("arc_samples must be positive")


@dataclass(eq=False)
class ReferencePath:
    macro: np.ndarray  # (M+1, 3)
    micro: np.ndarray  # (P, 3)
    total_length: float

    def digest(self) -> str:
        import hashlib

        h = hashlib.sha256()
        h.update(np.ascontiguousarray(self.macro).tobytes())
        h.update(np.ascontiguousarray(self.micro).tobytes())
        return h.hexdigest()[:16]


class PathCurve:
    """Per-coordinate interpolant over the normalized waypoint index ``t = k / N``.

    Four or more waypoints give a natural cubic spline; three give the natural
    spline through three knots (a piecewise quadratic-like cubic); two give the
    straight segment.
    """

    def __init__(self, points: np.ndarray):
        self.points = points
        n = len(points) - 1
        self.knots = np.arange(n + 1) / n
        self._spline = CubicSpline(self.knots, points, axis=0, bc_type="natural")

    def __call__(self, t):
        return self._spline(np.clip(t, 0.0, 1.0))

    def derivative(self, order: int = 1):
        return self._spline.derivative(order)


def _dedupe(points: np.ndarray) -> np.ndarray:
    keep = np.ones(len(points), dtype=bool)
    keep[1:] = np.linalg.norm(np.diff(points, axis=0), axis=1) > 0
    return points[keep]


def fit_spline(polyline) -> PathCurve:
    pts = getattr(polyline, "points", polyline)
    pts = _dedupe(np.asarray(pts, dtype=float).reshape(-1, 3))
    if len(pts) < 2:
        raise ValueError("spline fit needs at least two distinct waypoints")
    return PathCurve(pts)


def curve_length(curve: PathCurve, samples: int = 1000) -> float:
    pts = curve(np.linspace(0.0, 1.0, samples + 1))
    return float(np.linalg.norm(np.diff(pts, axis=0), axis=1).sum())


def resample_macro(curve: PathCurve, cfg: SmoothingConfig = SmoothingConfig()) -> np.ndarray:
    """``ceil(L / s_macro) + 1`` points at uniform curve parameters, endpoints included."""
    L = curve_length(curve, cfg.arc_samples)
    M = max(1, math.ceil(L / cfg.s_macro - 1e-9))
    pts = curve(np.linspace(0.0, 1.0, M + 1))
    # pin endpoints to the input waypoints exactly
    pts[0] = curve.points[0]
    pts[-1] = curve.points[-1]
    return pts


def subdivide_micro(macro: np.ndarray, d_max: float) -> np.ndarray:
    """Linearly insert points so no gap exceeds ``d_max``."""
    if not d_max > 0:
        raise ValueError("d_max must be positive")
    macro = np.asarray(macro, dtype=float)
    out = [macro[:1]]
    for a, b in zip(macro[:-1], macro[1:]):
        gap = float(np.linalg.norm(b - a))
        n = math.ceil(gap / d_max) if gap > d_max else 1
        while True:
            f = (np.arange(1, n + 1) / n)[:, None]
            seg = a + f * (b - a)
            seg[-1] = b
            # rounding can push a sub-gap an ulp past the bound
            gaps = np.linalg.norm(np.diff(np.vstack([a, seg]), axis=0), axis=1)
            if gaps.max() <= d_max or gap <= d_max:
                break
            n += 1
        out.append(seg)
    return np.concatenate(out)


def smooth_path(polyline, cfg: SmoothingConfig = SmoothingConfig()) -> ReferencePath:
    curve = fit_spline(polyline)
    macro = resample_macro(curve, cfg)
    micro = subdivide_micro(macro, cfg.d_max)
    length = float(np.linalg.norm(np.diff(macro, axis=0), axis=1).sum())
    return ReferencePath(macro=macro, micro=micro, total_length=length)
