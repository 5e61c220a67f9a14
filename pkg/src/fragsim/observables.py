"""Scalar diagnostics of cluster distributions and their CSV form."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Dict

import numpy as np

from .rates import RateModel


def total_mass(f) -> float:
    """``sum_n n f_n``."""
    f = np.asarray(f, dtype=float)
    return float(f @ np.arange(1, f.shape[-1] + 1))


def particle_count(f) -> float:
    """``sum_n f_n``."""
    return float(np.sum(np.asarray(f, dtype=float)))


def mass_loss_rate(model: RateModel, f) -> float:
    """Rate ``c(f) = sum_n (r_n + n d_n) f_n`` at which mass leaves the system.

    Fragmentation only moves mass between sizes, so only shedding of
    monomers from size 1 (via ``r``) and whole-cluster removal (via ``d``)
    contribute.
    """
    f = np.asarray(f, dtype=float)
    n = f.shape[-1]
    r, d, _ = model.arrays(n)
    return float((r + np.arange(1, n + 1) * d) @ f)


def _masses(states):
    states = np.atleast_2d(np.asarray(states, dtype=float))
    return states @ np.arange(1, states.shape[1] + 1)


@dataclass(frozen=True)
class TimeSeries:
    name: str
    t: np.ndarray
    values: np.ndarray
    units: str = ""

    def __post_init__(self):
        if len(self.t) != len(self.values):
            raise ValueError("times and values differ in length")
        if len(self.t) > 1 and np.any(np.diff(self.t) <= 0):
            raise ValueError("sample times must be strictly increasing")
        if not np.all(np.isfinite(self.values)):
            raise ValueError(f"series {self.name!r} contains non-finite values")

    @property
    def points(self):
        return list(zip(self.t.tolist(), self.values.tolist()))

    def to_csv(self) -> str:
        rows = ["t,value"]
        rows += ["%.12g,%.12g" % (t, v) for t, v in zip(self.t, self.values)]
        return "\n".join(rows) + "\n"

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            fh.write(self.to_csv())


def extract_series(traj, model: RateModel) -> Dict[str, TimeSeries]:
    """Mass, particle count and mass-loss rate at the trajectory's sample times."""
    t = np.asarray(traj.t, dtype=float)
    f = np.asarray(traj.f, dtype=float)
    n = f.shape[1]
    r, d, _ = model.arrays(n)
    loss = f @ (r + np.arange(1, n + 1) * d)
    return {
        "mass": TimeSeries("mass", t, _masses(f), "monomer units"),
        "count": TimeSeries("count", t, f.sum(axis=1), "clusters"),
        "loss_rate": TimeSeries("loss_rate", t, loss, "monomer units / time"),
    }


def centered_derivative(t, y):
    """Three-point derivative at interior nodes of a nonuniform grid.

    Second-order accurate for any spacing; reduces to the usual centered
    difference on a uniform grid.
    """
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    h0 = t[1:-1] - t[:-2]
    h1 = t[2:] - t[1:-1]
    return (
        -h1 / (h0 * (h0 + h1)) * y[:-2]
        + (h1 - h0) / (h0 * h1) * y[1:-1]
        + h0 / (h1 * (h0 + h1)) * y[2:]
    )


def mass_balance_residuals(traj, model: RateModel):
    """Relative mismatch between ``dM/dt`` and ``-c(f)`` at interior accepted steps.

    Returns ``(t, rel_err)`` where ``rel_err = |dM/dt + c(f)| / c(f)``.
    """
    t = np.asarray(traj.step_t, dtype=float)
    f = np.asarray(traj.step_f, dtype=float)
    n = f.shape[1]
    r, d, _ = model.arrays(n)
    dM = centered_derivative(t, _masses(f))
    loss = f[1:-1] @ (r + np.arange(1, n + 1) * d)
    with np.errstate(divide="ignore", invalid="ignore"):
        rel = np.abs(dM + loss) / np.abs(loss)
    return t[1:-1], rel
