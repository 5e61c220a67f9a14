"""Truncated generator of the decay-fragmentation system.

Row ``i`` of the truncated system reads::

    du_i/dt = r_{i+1} u_{i+1} - theta_i u_i + sum_{j=i+1}^{N} a_j b_ij u_j

so the matrix is upper triangular: a diagonal, a superdiagonal decay inflow
and a strictly upper fragmentation block.  The inflow ``r_{N+1} u_{N+1}``
into the last row is dropped.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import TextIO

import numpy as np

from .errors import KernelConservationError
from .rates import KERNEL_TOLERANCE, KernelSpec, RateModel, check_kernel_conservation, validate_rates


@dataclass(frozen=True)
class ClusterState:
    """Cluster counts ``f[n-1]`` of size-``n`` clusters at time ``t``."""

    f: np.ndarray
    t: float = 0.0

    @property
    def N(self) -> int:
        return len(self.f)

    @property
    def mass_norm(self) -> float:
        return mass_norm(self.f)


def mass_norm(f) -> float:
    """``sum_n n |f_n|``, the total mass of a nonnegative state."""
    f = np.asarray(f, dtype=float)
    return float(np.abs(f) @ np.arange(1, f.shape[-1] + 1))


@dataclass(frozen=True, eq=False)
class TruncatedGenerator:
    """Sparse form of the generator at truncation ``N``.

    ``upper`` is an ``N x N`` strictly upper triangular array of
    fragmentation gains ``a_j b_ij``, kept in column-major order.  The
    arrays ``r``, ``d`` and ``a`` are retained for diagnostics.
    """

    N: int
    diag: np.ndarray
    superdiag: np.ndarray
    upper: np.ndarray
    r: np.ndarray
    d: np.ndarray
    a: np.ndarray

    @property
    def theta(self) -> np.ndarray:
        return -self.diag

    def dense(self) -> np.ndarray:
        G = np.array(self.upper, order="C", copy=True)
        G[np.diag_indices(self.N)] += self.diag
        idx = np.arange(self.N - 1)
        G[idx, idx + 1] += self.superdiag
        return G

    def dump(self, stream: TextIO) -> None:
        """Write the dense matrix row-major, one row per line, ``%.17g``."""
        for row in self.dense():
            stream.write(" ".join("%.17g" % v for v in row) + "\n")


def assemble_generator(r, d, a, kernel: KernelSpec, N: int, require_decay=True) -> TruncatedGenerator:
    """Build a generator from explicit rate arrays of length ``N``.

    ``require_decay=False`` admits ``r_i = 0``, which leaves the physical
    model but is useful for checking pure fragmentation.
    """
    if N < 1:
        raise ValueError("N must be at least 1")
    r = np.array(r, dtype=float)
    d = np.array(d, dtype=float)
    a = np.array(a, dtype=float)
    if not (len(r) == len(d) == len(a) == N):
        raise ValueError("rate arrays must all have length N")
    validate_rates(r, d, a, require_decay=require_decay)
    if N >= 2:
        report = check_kernel_conservation(kernel, N)
        if not report.passes(KERNEL_TOLERANCE):
            raise KernelConservationError(
                f"kernel loses mass at j={report.worst_j}: "
                f"deviation {report.max_deviation:.3e} > {KERNEL_TOLERANCE:g}"
            )
    upper = np.asfortranarray(kernel.matrix(N) * a[np.newaxis, :])
    for arr in (r, d, a, upper):
        arr.setflags(write=False)
    diag = -(r + a + d)
    diag.setflags(write=False)
    sup = r[1:].copy()
    sup.setflags(write=False)
    return TruncatedGenerator(N=N, diag=diag, superdiag=sup, upper=upper, r=r, d=d, a=a)


def build_generator(model: RateModel, kernel: KernelSpec, N: int) -> TruncatedGenerator:
    """Assemble ``G_N = A_N + B_N`` for a validated model."""
    if N < 1:
        raise ValueError("N must be at least 1")
    r, d, a = model.arrays(N)
    return assemble_generator(r, d, a, kernel, N)


def _check_dim(G: TruncatedGenerator, f) -> np.ndarray:
    f = np.asarray(f, dtype=float)
    if f.shape != (G.N,):
        raise ValueError(f"expected a vector of length {G.N}, got shape {f.shape}")
    return f


def apply(G: TruncatedGenerator, f) -> np.ndarray:
    """Return ``G f``."""
    f = _check_dim(G, f)
    out = G.diag * f
    out[:-1] += G.superdiag * f[1:]
    out += G.upper @ f
    return out


def apply_adjoint(G: TruncatedGenerator, g) -> np.ndarray:
    """Return ``G^T g``.

    Componentwise ``(G^T g)_j = -theta_j g_j + r_j g_{j-1} + a_j sum_{i<j} b_ij g_i``.
    """
    g = _check_dim(G, g)
    out = G.diag * g
    out[1:] += G.superdiag * g[:-1]
    out += G.upper.T @ g
    return out


def decay_resolvent_apply(model_or_generator, N: int, lam: float, f) -> np.ndarray:
    """Apply the resolvent of the truncated decay operator at ``lam > 0``.

    Solves ``(lam + theta_i) u_i - r_{i+1} u_{i+1} = f_i`` for ``i = 1..N``
    (no inflow into row ``N``) with the backward sweep
    ``u_i = (f_i + r_{i+1} u_{i+1}) / (lam + theta_i)``, which expands to the
    usual sum of products but never forms the products explicitly.
    """
    if not lam > 0:
        raise ValueError(f"resolvent parameter must be positive, got {lam!r}")
    if isinstance(model_or_generator, TruncatedGenerator):
        if model_or_generator.N != N:
            raise ValueError("generator size does not match N")
        r, th = model_or_generator.r, model_or_generator.theta
    else:
        r, d, a = model_or_generator.arrays(N)
        th = r + a + d
    f = np.asarray(f, dtype=float)
    if f.shape != (N,):
        raise ValueError(f"expected a vector of length {N}, got shape {f.shape}")
    denom = lam + th
    u = np.empty(N)
    carry = 0.0
    for i in range(N - 1, -1, -1):
        u[i] = (f[i] + carry) / denom[i]
        carry = r[i] * u[i]
    return u
