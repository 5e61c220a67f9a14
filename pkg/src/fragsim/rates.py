"""Rate coefficient families, fragmentation kernels and regime classification.

A model is described by three index sequences over cluster sizes ``i >= 1``:

``decay``  r_i, the rate at which an i-mer sheds one monomer,
``death``  d_i, the rate at which an i-mer is removed outright,
``frag``   a_i, the rate at which an i-mer breaks up (a_1 is always 0),

together with a kernel b_ij giving the expected number of i-mers produced
when a j-mer breaks.  Sequences are evaluated on windows ``1..N``; the
resulting arrays are 0-based, so ``values[i - 1]`` holds the i-th entry.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np

from .errors import ModelValidationError

KERNEL_TOLERANCE = 1e-12

_FAMILY_KINDS = ("constant", "linear", "power", "tabulated")


@dataclass(frozen=True)
class RateFamily:
    """One coefficient sequence: ``c``, ``c*i``, ``c*i**p`` or a table."""

    kind: str
    c: float = 0.0
    p: float = 0.0
    values: Optional[tuple] = None

    def __post_init__(self):
        if self.kind not in _FAMILY_KINDS:
            raise ModelValidationError(
                f"unknown rate family {self.kind!r}; expected one of {_FAMILY_KINDS}"
            )
        if self.kind == "tabulated":
            if self.values is None or len(self.values) == 0:
                raise ModelValidationError("tabulated family needs a non-empty 'values' list")
            object.__setattr__(self, "values", tuple(float(v) for v in self.values))
        elif not math.isfinite(self.c) or not math.isfinite(self.p):
            raise ModelValidationError("rate prefactor and exponent must be finite")

    @classmethod
    def constant(cls, c):
        return cls("constant", c=float(c))

    @classmethod
    def linear(cls, c=1.0):
        return cls("linear", c=float(c))

    @classmethod
    def power(cls, c, p):
        return cls("power", c=float(c), p=float(p))

    @classmethod
    def tabulated(cls, values):
        return cls("tabulated", values=tuple(values))

    @classmethod
    def from_dict(cls, spec: Mapping) -> "RateFamily":
        kind = spec.get("kind")
        if kind == "tabulated":
            return cls.tabulated(spec.get("values") or ())
        if kind == "power":
            return cls.power(spec.get("c", 1.0), spec.get("p", 1.0))
        if kind in ("constant", "linear"):
            return cls(kind, c=float(spec.get("c", 1.0)))
        raise ModelValidationError(f"unknown rate family {kind!r}")

    def to_dict(self) -> dict:
        if self.kind == "tabulated":
            return {"kind": "tabulated", "values": list(self.values)}
        if self.kind == "power":
            return {"kind": "power", "c": self.c, "p": self.p}
        return {"kind": self.kind, "c": self.c}

    @property
    def closed_form(self) -> bool:
        return self.kind != "tabulated"

    @property
    def exponent(self) -> float:
        """Growth exponent of a closed-form family (``c * i**exponent``)."""
        return {"constant": 0.0, "linear": 1.0}.get(self.kind, self.p)

    def evaluate(self, n: int) -> np.ndarray:
        """Return the sequence on sizes ``1..n``."""
        if self.kind == "tabulated":
            if n > len(self.values):
                raise ModelValidationError(
                    f"tabulated family has {len(self.values)} entries, {n} requested"
                )
            return np.array(self.values[:n], dtype=float)
        i = np.arange(1, n + 1, dtype=float)
        if self.kind == "constant":
            return np.full(n, self.c)
        if self.kind == "linear":
            return self.c * i
        return self.c * i**self.p


@dataclass(frozen=True)
class RateModel:
    """Decay, death and fragmentation rate families of one model."""

    decay: RateFamily
    death: RateFamily
    frag: RateFamily

    @classmethod
    def from_dict(cls, spec: Mapping) -> "RateModel":
        return cls(
            decay=RateFamily.from_dict(spec["decay"]),
            death=RateFamily.from_dict(spec["death"]),
            frag=RateFamily.from_dict(spec["frag"]),
        )

    def to_dict(self) -> dict:
        return {
            "decay": self.decay.to_dict(),
            "death": self.death.to_dict(),
            "frag": self.frag.to_dict(),
        }

    def decay_rates(self, n: int) -> np.ndarray:
        return self.decay.evaluate(n)

    def death_rates(self, n: int) -> np.ndarray:
        return self.death.evaluate(n)

    def frag_rates(self, n: int) -> np.ndarray:
        # monomers cannot break; closed-form families only describe i >= 2
        a = self.frag.evaluate(n)
        if self.frag.closed_form:
            a[0] = 0.0
        return a

    def arrays(self, n: int, validate: bool = True):
        """Return ``(r, d, a)`` on sizes ``1..n``, checked against the model constraints."""
        r, d, a = self.decay_rates(n), self.death_rates(n), self.frag_rates(n)
        if validate:
            validate_rates(r, d, a)
        return r, d, a


def validate_rates(r, d, a, require_decay=True):
    """Raise :class:`ModelValidationError` unless the rate arrays are admissible."""
    for name, seq in (("decay", r), ("death", d), ("frag", a)):
        if not np.all(np.isfinite(seq)):
            raise ModelValidationError(f"{name} rates must be finite")
    if require_decay:
        bad = np.flatnonzero(~(r > 0))
        if bad.size:
            raise ModelValidationError(
                f"decay rate must be positive, r_{bad[0] + 1} = {r[bad[0]]!r}"
            )
    elif np.any(r < 0):
        raise ModelValidationError("decay rates must be nonnegative")
    bad = np.flatnonzero(d < 0)
    if bad.size:
        raise ModelValidationError(f"death rate must be nonnegative, d_{bad[0] + 1} = {d[bad[0]]!r}")
    if a.size and a[0] != 0:
        raise ModelValidationError("monomers cannot fragment: a_1 must be 0")
    bad = np.flatnonzero(a < 0)
    if bad.size:
        raise ModelValidationError(f"fragmentation rate must be nonnegative, a_{bad[0] + 1} = {a[bad[0]]!r}")


def theta(model: RateModel, N: int) -> np.ndarray:
    """Total loss rates ``r_i + a_i + d_i`` for ``i = 1..N``."""
    if N < 1:
        raise ValueError("N must be at least 1")
    r, d, a = model.arrays(N)
    return r + a + d


# ---------------------------------------------------------------------------
# kernels


@dataclass(frozen=True)
class KernelSpec:
    """Fragmentation kernel b_ij (expected number of i-mers from a broken j-mer).

    ``uniform-binary`` is ``b_ij = 2/(j-1)`` for ``i < j``.  A ``tabulated``
    kernel stores ``b_ij`` at ``table[i-1][j-1]``; entries outside the table
    are zero and entries with ``i >= j`` are ignored.
    """

    kind: str = "uniform-binary"
    table: Optional[np.ndarray] = field(default=None, compare=False)

    def __post_init__(self):
        if self.kind not in ("uniform-binary", "tabulated"):
            raise ModelValidationError(f"unknown kernel kind {self.kind!r}")
        if self.kind == "tabulated":
            if self.table is None:
                raise ModelValidationError("tabulated kernel needs a table")
            tab = np.array(self.table, dtype=float)
            if tab.ndim != 2 or tab.shape[0] != tab.shape[1]:
                raise ModelValidationError("kernel table must be square")
            if np.any(tab < 0) or not np.all(np.isfinite(tab)):
                raise ModelValidationError("kernel entries must be finite and nonnegative")
            tab = np.triu(tab, k=1)
            tab.setflags(write=False)
            object.__setattr__(self, "table", tab)

    @classmethod
    def uniform_binary(cls):
        return cls("uniform-binary")

    @classmethod
    def tabulated(cls, table):
        return cls("tabulated", table=np.asarray(table, dtype=float))

    @classmethod
    def from_entries(cls, entries: Mapping, size: int):
        """Tabulated kernel from ``{(i, j): b_ij}`` with 1-based indices."""
        tab = np.zeros((size, size))
        for (i, j), v in entries.items():
            tab[i - 1, j - 1] = v
        return cls.tabulated(tab)

    @classmethod
    def from_dict(cls, spec: Mapping) -> "KernelSpec":
        kind = spec.get("kind", "uniform-binary")
        if kind == "tabulated":
            return cls.tabulated(spec["table"])
        return cls(kind)

    def to_dict(self) -> dict:
        if self.kind == "tabulated":
            return {"kind": "tabulated", "table": self.table.tolist()}
        return {"kind": self.kind}

    def eval(self, i: int, j: int) -> float:
        if i < 1 or i >= j:
            return 0.0
        if self.kind == "uniform-binary":
            return 2.0 / (j - 1)
        n = self.table.shape[0]
        return float(self.table[i - 1, j - 1]) if j <= n else 0.0

    def matrix(self, N: int) -> np.ndarray:
        """Dense ``N x N`` array with ``B[i-1, j-1] = b_ij`` (strictly upper)."""
        if self.kind == "uniform-binary":
            j = np.arange(1, N + 1, dtype=float)
            col = np.zeros(N)
            col[1:] = 2.0 / (j[1:] - 1.0)
            return np.triu(np.broadcast_to(col, (N, N)), k=1)
        out = np.zeros((N, N))
        n = min(N, self.table.shape[0])
        out[:n, :n] = self.table[:n, :n]
        return out


@dataclass(frozen=True)
class KernelReport:
    max_deviation: float
    worst_j: int
    deviations: np.ndarray = field(repr=False, compare=False)

    def passes(self, tol=KERNEL_TOLERANCE) -> bool:
        return self.max_deviation <= tol


def check_kernel_conservation(kernel: KernelSpec, jmax: int) -> KernelReport:
    """Measure ``|sum_{i<j} i*b_ij - j|`` for every ``2 <= j <= jmax``.

    Column sums use :func:`math.fsum`, so the reported deviation reflects the
    kernel values themselves rather than summation order.
    """
    if jmax < 2:
        raise ValueError("jmax must be at least 2")
    devs = np.zeros(jmax - 1)
    for j in range(2, jmax + 1):
        s = math.fsum(i * kernel.eval(i, j) for i in range(1, j))
        devs[j - 2] = abs(s - j)
    k = int(np.argmax(devs))
    return KernelReport(max_deviation=float(devs[k]), worst_j=k + 2, deviations=devs)


# ---------------------------------------------------------------------------
# regime classification


@dataclass(frozen=True)
class RegimeReport:
    """Verdicts on the analyticity, compactness and strict-minimum conditions.

    ``heuristic`` is True when at least one family is tabulated; the
    asymptotic flags are then finite-window guesses, not proofs.
    """

    analytic_domination: bool
    domination_constant: float
    frag_death_ratio_bounded: bool
    theta_divergent: bool
    strict_min_unique: bool
    argmin_index: int
    heuristic: bool
    window: int

    @property
    def growth_theorem_applies(self) -> bool:
        """All hypotheses of the asynchronous-growth result hold."""
        return (
            self.analytic_domination
            and self.frag_death_ratio_bounded
            and self.theta_divergent
            and self.strict_min_unique
        )

    def to_dict(self) -> dict:
        return {
            "analytic_domination": self.analytic_domination,
            "domination_constant": self.domination_constant,
            "frag_death_ratio_bounded": self.frag_death_ratio_bounded,
            "theta_divergent": self.theta_divergent,
            "strict_min_unique": self.strict_min_unique,
            "argmin_index": self.argmin_index,
            "verdict": "heuristic" if self.heuristic else "analytic",
            "window": self.window,
        }


def _leading_term(families: Sequence[RateFamily]):
    """Dominant ``(prefactor, exponent)`` of a sum of closed-form families."""
    terms = [(f.c, f.exponent) for f in families if f.c > 0]
    if not terms:
        return 0.0, -math.inf
    p = max(e for _, e in terms)
    return sum(c for c, e in terms if e == p), p


def _strict_argmin(values: np.ndarray):
    k = int(np.argmin(values))
    unique = int(np.count_nonzero(values == values[k])) == 1
    return k + 1, unique


def classify_regime(model: RateModel, N: int) -> RegimeReport:
    """Check the domination, ratio, divergence and strict-minimum conditions.

    Closed-form families are decided from their prefactors and exponents.
    With any tabulated family the asymptotic conditions are judged on the
    window ``1..N`` only and the report is flagged heuristic.
    """
    if N < 2:
        raise ValueError("classification needs N >= 2")
    r, d, a = model.arrays(N)
    th = r + a + d
    argmin, unique = _strict_argmin(th)

    with np.errstate(divide="ignore", invalid="ignore"):
        window_C = float(np.min((d + a) / r))
    closed = model.decay.closed_form and model.death.closed_form and model.frag.closed_form

    if closed:
        cr, pr = _leading_term([model.decay])
        cp, pp = _leading_term([model.death, model.frag])
        if pp > pr:
            limit = math.inf
        elif pp == pr:
            limit = cp / cr
        else:
            limit = 0.0
        C = min(window_C, limit)
        analytic = C > 0

        cd, pd = model.death.c, model.death.exponent
        ca, pa = model.frag.c, model.frag.exponent
        ratio_bounded = ca == 0 or (cd > 0 and pa <= pd)

        divergent = any(f.c > 0 and f.exponent > 0 for f in (model.decay, model.death, model.frag))
    else:
        C = window_C
        analytic = C > 0

        tail = slice(N // 2, N)
        head = slice(1, max(N // 2, 2))
        if np.all(d[1:] > 0):
            ratio = a / np.where(d > 0, d, 1.0)
            ratio_bounded = bool(np.max(ratio[tail]) <= np.max(ratio[head]) * (1 + 1e-12))
        else:
            ratio_bounded = bool(np.all(a[1:][d[1:] == 0] == 0))

        divergent = bool(N >= 4 and np.all(np.diff(th[tail]) > 0))

    return RegimeReport(
        analytic_domination=bool(analytic),
        domination_constant=float(C),
        frag_death_ratio_bounded=bool(ratio_bounded),
        theta_divergent=bool(divergent),
        strict_min_unique=bool(unique),
        argmin_index=argmin,
        heuristic=not closed,
        window=N,
    )
