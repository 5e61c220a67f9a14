"""TR-BDF2 time stepping for the truncated linear system, plus a dense oracle.

Each step is a trapezoidal stage to ``t + gamma*h`` followed by a BDF2 stage
to ``t + h``, with ``gamma = 2 - sqrt(2)``.  For that choice both stages
share the matrix ``I - d*h*G`` with ``d = gamma/2``; since ``G`` is upper
triangular each stage is one back substitution.

The local error estimate is the difference between the scheme and its
embedded third-order companion, filtered through ``(I - d*h*G)^{-1}`` to
keep it bounded on stiff components.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator, List

import numpy as np
import scipy.linalg
from numba import njit

from .errors import DenseLimitError, IntegrationError
from .operator import ClusterState, TruncatedGenerator

GAMMA = 2.0 - math.sqrt(2.0)
D = GAMMA / 2.0
W = math.sqrt(2.0) / 4.0
# weights of the scheme and of its embedded third-order companion
B_MAIN = (W, W, D)
B_EMBEDDED = ((1.0 - W) / 3.0, (3.0 * W + 1.0) / 3.0, D / 3.0)
E1, E2, E3 = (b - bh for b, bh in zip(B_MAIN, B_EMBEDDED))

DENSE_LIMIT = 256


@dataclass(frozen=True)
class IntegratorConfig:
    t_end: float = 20.0
    dt_init: float = 1e-4
    rtol: float = 1e-6
    atol: float = 1e-9
    dt_min: float = 1e-12
    dt_max: float = 0.1
    sample_every: float = 0.1
    adaptive: bool = True
    error_control: str = "per-unit-step"

    def __post_init__(self):
        if not self.t_end > 0:
            raise ValueError("t_end must be positive")
        if not (0 < self.dt_min <= self.dt_init <= self.dt_max):
            raise ValueError("need 0 < dt_min <= dt_init <= dt_max")
        if not (self.rtol > 0 and self.atol > 0):
            raise ValueError("rtol and atol must be positive")
        if not self.sample_every > 0:
            raise ValueError("sample_every must be positive")
        if self.error_control not in ("per-unit-step", "per-step"):
            raise ValueError("error_control must be 'per-unit-step' or 'per-step'")

    def sample_times(self) -> np.ndarray:
        n = int(math.floor(self.t_end / self.sample_every + 1e-9))
        times = self.sample_every * np.arange(n + 1)
        if self.t_end - times[-1] > 1e-9 * self.sample_every:
            return np.append(times, self.t_end)
        times[-1] = self.t_end
        return times


@dataclass
class Trajectory:
    """Sampled solution plus every accepted step.

    ``t``/``f`` hold the output grid; ``step_t``/``step_f`` hold all accepted
    step endpoints (including ``t = 0``), where accuracy is controlled by the
    error test.  Output times are always step endpoints.
    """

    t: np.ndarray
    f: np.ndarray
    step_t: np.ndarray
    step_f: np.ndarray
    accepted: int = 0
    rejected: int = 0

    @property
    def samples(self) -> List[ClusterState]:
        return [ClusterState(f=row, t=float(t)) for t, row in zip(self.t, self.f)]

    def __iter__(self) -> Iterator[ClusterState]:
        return iter(self.samples)

    @property
    def N(self) -> int:
        return self.f.shape[1]


@njit(cache=True)
def _gen_apply(U, diag, sup, x, out):
    n = x.shape[0]
    for i in range(n):
        acc = diag[i] * x[i]
        if i + 1 < n:
            acc += sup[i] * x[i + 1]
        for j in range(i + 1, n):
            acc += U[i, j] * x[j]
        out[i] = acc


@njit(cache=True)
def _stage_solve(U, diag, sup, c, rhs, out):
    # back substitution for (I - c G) x = rhs; G upper triangular
    n = rhs.shape[0]
    for i in range(n - 1, -1, -1):
        acc = rhs[i]
        if i + 1 < n:
            acc += c * sup[i] * out[i + 1]
        for j in range(i + 1, n):
            acc += c * U[i, j] * out[j]
        out[i] = acc / (1.0 - c * diag[i])


@njit(cache=True)
def _trbdf2(U, diag, sup, f, h, want_err, y_new, est, work):
    n = f.shape[0]
    c = D * h
    k1 = work[0]
    rhs = work[1]
    y_star = work[2]
    _gen_apply(U, diag, sup, f, k1)
    for i in range(n):
        rhs[i] = f[i] + c * k1[i]
    _stage_solve(U, diag, sup, c, rhs, y_star)
    a = 1.0 / (GAMMA * (2.0 - GAMMA))
    b = (1.0 - GAMMA) ** 2 / (GAMMA * (2.0 - GAMMA))
    for i in range(n):
        rhs[i] = a * y_star[i] - b * f[i]
    _stage_solve(U, diag, sup, c, rhs, y_new)
    if want_err:
        k2 = work[3]
        k3 = work[4]
        _gen_apply(U, diag, sup, y_star, k2)
        _gen_apply(U, diag, sup, y_new, k3)
        for i in range(n):
            rhs[i] = h * (E1 * k1[i] + E2 * k2[i] + E3 * k3[i])
        _stage_solve(U, diag, sup, c, rhs, est)


@njit(cache=True)
def _mass(x):
    s = 0.0
    for i in range(x.shape[0]):
        s += (i + 1) * abs(x[i])
    return s


@njit(cache=True, nogil=True)
def _integrate_loop(U, diag, sup, f0, out_t, h0, rtol, atol, dt_min, dt_max, adaptive, per_unit_step):
    n = f0.shape[0]
    n_out = out_t.shape[0]
    out_f = np.empty((n_out, n))
    out_f[0] = f0
    cap = 1024
    st = np.empty(cap)
    sf = np.empty((cap, n))
    st[0] = 0.0
    sf[0] = f0
    n_steps = 1
    f = f0.copy()
    y_new = np.empty(n)
    est = np.empty(n)
    work = np.empty((5, n))
    accepted = 0
    rejected = 0
    t = 0.0
    h = h0
    k = 1
    while k < n_out:
        target = out_t[k]
        remaining = target - t
        h_try = min(h, remaining)
        lands = h_try >= remaining - 1e-12 * max(1.0, abs(target))
        if lands:
            h_try = remaining
        clipped = h_try < h
        if adaptive:
            _trbdf2(U, diag, sup, f, h_try, True, y_new, est, work)
            scale = rtol * max(_mass(f), _mass(y_new)) + atol
            if per_unit_step:
                scale *= h_try
            err = _mass(est) / scale
            if not np.isfinite(err):
                err = np.inf
            if err == 0.0:
                factor = 5.0
            else:
                expo = -0.5 if per_unit_step else -1.0 / 3.0
                factor = min(5.0, max(0.2, 0.9 * err ** expo))
            if err > 1.0:
                rejected += 1
                h = h_try * min(factor, 0.9)
                if h < dt_min:
                    return out_f, st[:n_steps], sf[:n_steps], accepted, rejected, t, f
                continue
            h_next = h_try * factor
            # a step shortened to hit an output time should not shrink the next one
            if clipped:
                h_next = max(h_next, h)
            h = min(dt_max, h_next)
        else:
            _trbdf2(U, diag, sup, f, h_try, False, y_new, est, work)
        f[:] = y_new
        if lands:
            t = target
        else:
            t = t + h_try
        accepted += 1
        if n_steps == cap:
            cap *= 2
            st2 = np.empty(cap)
            sf2 = np.empty((cap, n))
            st2[:n_steps] = st[:n_steps]
            sf2[:n_steps] = sf[:n_steps]
            st = st2
            sf = sf2
        st[n_steps] = t
        sf[n_steps] = f
        n_steps += 1
        if lands:
            out_f[k] = f
            k += 1
    return out_f, st[:n_steps], sf[:n_steps], accepted, rejected, -1.0, f


def _arrays(G: TruncatedGenerator):
    return np.ascontiguousarray(G.upper), np.asarray(G.diag), np.asarray(G.superdiag)


def _one_step(G, f, dt, want_err):
    U, diag, sup = _arrays(G)
    f = np.ascontiguousarray(f, dtype=float)
    if f.shape != (G.N,):
        raise ValueError(f"expected a vector of length {G.N}")
    y_new = np.empty(G.N)
    est = np.zeros(G.N)
    _trbdf2(U, diag, sup, f, float(dt), want_err, y_new, est, np.empty((5, G.N)))
    return y_new, est


def step_trbdf2(G: TruncatedGenerator, f, dt: float) -> np.ndarray:
    """Advance ``f`` by one TR-BDF2 step of size ``dt``."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    return _one_step(G, f, dt, False)[0]


def local_error_estimate(G: TruncatedGenerator, f, dt: float) -> np.ndarray:
    """Filtered embedded error estimate of one step."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    return _one_step(G, f, dt, True)[1]


def integrate(G: TruncatedGenerator, f0, cfg: IntegratorConfig) -> Trajectory:
    """Integrate ``du/dt = G u`` on ``[0, cfg.t_end]``.

    A step of size ``h`` is accepted when the filtered error estimate
    satisfies ``||err|| <= h * (rtol * ||f|| + atol)`` in the mass norm
    (error per unit step, so the global error stays near ``rtol * t``).
    ``cfg.error_control = "per-step"`` drops the factor ``h``.  Steps are
    shortened to land exactly on each output time, so samples carry no
    interpolation error.  With ``cfg.adaptive`` off, ``dt_init`` is used
    throughout.
    """
    if isinstance(f0, ClusterState):
        f0 = f0.f
    f = np.array(f0, dtype=float)
    if f.shape != (G.N,):
        raise ValueError(f"initial state must have length {G.N}")
    if np.any(f < 0):
        raise ValueError("initial state must be nonnegative")

    out_t = cfg.sample_times()
    U, diag, sup = _arrays(G)
    out_f, step_t, step_f, accepted, rejected, t_fail, f_last = _integrate_loop(
        U, diag, sup, f, out_t, cfg.dt_init, cfg.rtol, cfg.atol, cfg.dt_min, cfg.dt_max,
        cfg.adaptive, cfg.error_control == "per-unit-step",
    )
    if t_fail >= 0:
        raise IntegrationError(
            f"step size fell below dt_min={cfg.dt_min:.3e} at t={t_fail:.6g}",
            t=t_fail,
            state=ClusterState(f=f_last.copy(), t=t_fail),
        )
    return Trajectory(
        t=out_t,
        f=out_f,
        step_t=step_t.copy(),
        step_f=step_f.copy(),
        accepted=int(accepted),
        rejected=int(rejected),
    )


def expm_oracle(G: TruncatedGenerator, f0, t: float) -> np.ndarray:
    """``exp(t G) f0`` by dense scaling-and-squaring (Pade)."""
    if G.N > DENSE_LIMIT:
        raise DenseLimitError(f"dense exponential limited to N <= {DENSE_LIMIT}, got {G.N}")
    if t < 0:
        raise ValueError("t must be nonnegative")
    f0 = np.asarray(f0, dtype=float)
    if t == 0:
        return f0.copy()
    return scipy.linalg.expm(t * G.dense()) @ f0
