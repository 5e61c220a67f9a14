"""Dominant eigenpair, rank-one projection and convergence-gap diagnostics.

The truncated generator is upper triangular, so its spectrum is
``{-theta_n}``.  When ``theta`` has a strict minimum at ``N0`` the dominant
eigenvalue is ``-theta_N0`` and both eigenvectors follow from triangular
recursions:

* the right eigenvector ``e`` vanishes above ``N0`` and is filled in
  backwards from ``e_N0 = 1``;
* the left eigenvector ``e*`` vanishes below ``N0`` and is filled in
  forwards from ``e*_N0 = 1``.

Their supports meet only at ``N0``, so ``<e*, e> = 1`` and
``P f = <e*, f> e`` is the spectral projection onto the dominant mode.
"""
from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple

import numpy as np

from .errors import EigenvectorOverflowError, MultiplicityError
from .operator import TruncatedGenerator, build_generator, mass_norm
from .rates import KernelSpec, RateModel, theta as theta_of

NEAR_TIE = 1e-8
OVERFLOW_LIMIT = 1e300
GAP_FLOOR = 1e-13
MIN_FIT_POINTS = 4


class IllConditionedWarning(RuntimeWarning):
    """An eigenvector recursion divides by a nearly vanishing gap."""


def dominant_eigenvalue(theta) -> Tuple[float, int]:
    """Return ``(lambda1, N0)`` with ``lambda1 = -min theta`` and 1-based ``N0``."""
    theta = np.asarray(theta, dtype=float)
    k = int(np.argmin(theta))
    ties = np.flatnonzero(theta == theta[k])
    if ties.size > 1:
        raise MultiplicityError(
            f"minimum theta={theta[k]!r} attained at sizes {[int(i) + 1 for i in ties]}"
        )
    return -float(theta[k]), k + 1


def _check_gap(theta, n, N0):
    gap = theta[n - 1] - theta[N0 - 1]
    if 0 < abs(gap) < NEAR_TIE * theta[N0 - 1]:
        warnings.warn(
            f"theta_{n} - theta_{N0} = {gap:.3e} is close to zero; "
            "eigenvector recursion is ill-conditioned",
            IllConditionedWarning,
            stacklevel=3,
        )
    return gap


def _rates(model, N):
    if isinstance(model, TruncatedGenerator):
        return model.r[:N], model.a[:N]
    r, _, a = model.arrays(N)
    return r, a


def left_eigenvector(model, kernel: KernelSpec, theta, N0: int, N: int) -> np.ndarray:
    """Left eigenvector ``e*`` of the truncated generator, ``e*_N0 = 1``.

    For ``n > N0``::

        e*_n = (r_n e*_{n-1} + a_n sum_{j=N0}^{n-1} b_jn e*_j) / (theta_n - theta_N0)
    """
    theta = np.asarray(theta, dtype=float)[:N]
    if not 1 <= N0 <= N:
        raise ValueError("N0 must lie in 1..N")
    dominant_eigenvalue(theta)
    r, a = _rates(model, N)
    B = kernel.matrix(N)
    e = np.zeros(N)
    e[N0 - 1] = 1.0
    for n in range(N0 + 1, N + 1):
        gap = _check_gap(theta, n, N0)
        inflow = r[n - 1] * e[n - 2] + a[n - 1] * (B[N0 - 1 : n - 1, n - 1] @ e[N0 - 1 : n - 1])
        e[n - 1] = inflow / gap
        if not abs(e[n - 1]) <= OVERFLOW_LIMIT:
            raise EigenvectorOverflowError(f"|e*_{n}| exceeds {OVERFLOW_LIMIT:g}")
    return e


def right_eigenvector(model, kernel: KernelSpec, theta, N0: int, N: Optional[int] = None) -> np.ndarray:
    """Right eigenvector ``e`` of the truncated generator, ``e_N0 = 1``.

    Zero above ``N0``; for ``n < N0``::

        e_n = (r_{n+1} e_{n+1} + sum_{j=n+1}^{N0} a_j b_nj e_j) / (theta_n - theta_N0)

    The returned vector has length ``N`` (default ``len(theta)``).
    """
    theta = np.asarray(theta, dtype=float)
    N = len(theta) if N is None else N
    theta = theta[:N]
    if not 1 <= N0 <= N:
        raise ValueError("N0 must lie in 1..N")
    dominant_eigenvalue(theta)
    r, a = _rates(model, N0)
    B = kernel.matrix(N0)
    e = np.zeros(N)
    e[N0 - 1] = 1.0
    for n in range(N0 - 1, 0, -1):
        gap = _check_gap(theta, n, N0)
        gain = r[n] * e[n] + (a[n:N0] * B[n - 1, n:N0]) @ e[n:N0]
        e[n - 1] = gain / gap
        if not abs(e[n - 1]) <= OVERFLOW_LIMIT:
            raise EigenvectorOverflowError(f"|e_{n}| exceeds {OVERFLOW_LIMIT:g}")
    return e


@dataclass(frozen=True)
class SpectralData:
    lambda1: float
    N0: int
    e_right: np.ndarray = field(repr=False)
    e_left: np.ndarray = field(repr=False)
    gap: float

    @property
    def N(self) -> int:
        return len(self.e_right)

    def to_dict(self) -> dict:
        return {"lambda1": self.lambda1, "N0": self.N0, "spectral_gap": self.gap}


def spectral_data(model: RateModel, kernel: KernelSpec, N: int) -> SpectralData:
    """Dominant eigenpair and spectral gap of the model truncated at ``N``."""
    th = theta_of(model, N)
    lam, N0 = dominant_eigenvalue(th)
    e_right = right_eigenvector(model, kernel, th, N0, N)
    e_left = left_eigenvector(model, kernel, th, N0, N)
    rest = np.delete(th, N0 - 1)
    gap = float(np.min(rest) - th[N0 - 1]) if rest.size else math.inf
    return SpectralData(lambda1=lam, N0=N0, e_right=e_right, e_left=e_left, gap=gap)


def spectral_data_from_generator(G: TruncatedGenerator, kernel: KernelSpec) -> SpectralData:
    th = G.theta
    lam, N0 = dominant_eigenvalue(th)
    e_right = right_eigenvector(G, kernel, th, N0, G.N)
    e_left = left_eigenvector(G, kernel, th, N0, G.N)
    rest = np.delete(th, N0 - 1)
    gap = float(np.min(rest) - th[N0 - 1]) if rest.size else math.inf
    return SpectralData(lambda1=lam, N0=N0, e_right=e_right, e_left=e_left, gap=gap)


def project(sd: SpectralData, f) -> np.ndarray:
    """``<e*, f> e``."""
    f = np.asarray(f, dtype=float)
    if f.shape != sd.e_right.shape:
        raise ValueError(f"expected a vector of length {sd.N}, got shape {f.shape}")
    return float(sd.e_left @ f) * sd.e_right


# ---------------------------------------------------------------------------
# convergence to the dominant mode


@dataclass
class GapSeries:
    """Distance of the rescaled solution from its rank-one limit.

    ``gap_norm[k] = || exp(-lambda1 t_k) f(t_k) - <e*, f0> e ||`` (mass
    norm).  ``drift_norm`` is the part of that distance lying in the
    dominant mode, ``|| exp(-lambda1 t) P f(t) - P f0 ||``; the exact flow
    keeps it at zero, so it measures accumulated integration error and sets
    the noise floor below which ``gap_norm`` is not trusted.
    """

    t: np.ndarray
    gap_norm: np.ndarray
    drift_norm: np.ndarray
    fitted_rate: Optional[float]
    fitted_intercept: Optional[float]
    fit_window: Optional[Tuple[float, float]]
    fit_points: int
    note: str = ""

    @property
    def points(self):
        return list(zip(self.t.tolist(), self.gap_norm.tolist()))

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            fh.write("t,gap_norm\n")
            for t, g in zip(self.t, self.gap_norm):
                fh.write("%.12g,%.12g\n" % (t, g))

    def summary(self, sd: SpectralData) -> dict:
        return {
            "lambda1": sd.lambda1,
            "N0": sd.N0,
            "fitted_rate": self.fitted_rate,
            "fitted_intercept": self.fitted_intercept,
            "fit_window": list(self.fit_window) if self.fit_window else None,
            "fit_points": self.fit_points,
            "note": self.note,
        }

    def write_summary(self, path, sd: SpectralData) -> None:
        with open(path, "w") as fh:
            json.dump(self.summary(sd), fh, indent=2, sort_keys=True)
            fh.write("\n")


def gap_series(
    t: Sequence[float],
    states,
    sd: SpectralData,
    f0,
    fit_window: Optional[Tuple[float, float]] = None,
    noise_factor: float = 10.0,
) -> GapSeries:
    """Rescaled distance to the dominant mode along a sampled trajectory.

    A point enters the rate fit when it lies in ``fit_window``, exceeds the
    ``1e-13`` floor and exceeds ``noise_factor`` times the drift of the
    dominant-mode coefficient at that time.  Without an explicit window the
    fit uses ``[t_end/2, t_end]``; if fewer than four points survive there,
    it falls back to the later half of all usable points.
    """
    t = np.asarray(t, dtype=float)
    states = np.asarray(states, dtype=float)
    f0 = np.asarray(f0, dtype=float)
    scale = np.exp(-sd.lambda1 * t)
    limit = project(sd, f0)
    c0 = float(sd.e_left @ f0)
    weights = np.arange(1, states.shape[1] + 1)

    diff = scale[:, None] * states - limit[None, :]
    gap = np.abs(diff) @ weights
    coeff = scale * (states @ sd.e_left)
    drift = np.abs(coeff - c0) * mass_norm(sd.e_right)

    usable = (gap > GAP_FLOOR) & (gap > noise_factor * drift) & np.isfinite(gap)
    note = ""
    if fit_window is not None:
        lo, hi = fit_window
        mask = usable & (t >= lo) & (t <= hi)
    else:
        lo, hi = t[-1] / 2, t[-1]
        mask = usable & (t >= lo)
        if np.count_nonzero(mask) < MIN_FIT_POINTS:
            idx = np.flatnonzero(usable)
            if idx.size >= MIN_FIT_POINTS:
                keep = idx[idx.size // 2 :]
                mask = np.zeros_like(usable)
                mask[keep] = True
                lo, hi = float(t[keep[0]]), float(t[keep[-1]])
                note = "tail half below noise floor; fitted on later half of resolved points"

    n = int(np.count_nonzero(mask))
    if n < MIN_FIT_POINTS:
        return GapSeries(t, gap, drift, None, None, None, n, note="fit unavailable: fewer than 4 usable points")
    slope, intercept = np.polyfit(t[mask], np.log(gap[mask]), 1)
    return GapSeries(
        t=t,
        gap_norm=gap,
        drift_norm=drift,
        fitted_rate=float(slope),
        fitted_intercept=float(intercept),
        fit_window=(float(lo), float(hi)),
        fit_points=n,
        note=note,
    )


def trajectory_gap_series(traj, sd: SpectralData, f0, fit_window=None, use_steps=False) -> GapSeries:
    """:func:`gap_series` on a trajectory's output samples (or accepted steps)."""
    if use_steps:
        return gap_series(traj.step_t, traj.step_f, sd, f0, fit_window)
    return gap_series(traj.t, traj.f, sd, f0, fit_window)
