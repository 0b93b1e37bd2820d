"""Bit-faithful software emulation of reduced-precision floating point.

Low-precision values are carried inside float64 storage constrained to the
target format's grid (chop-style emulation).  All rounding is
round-to-nearest, ties to even, so the standard error model
``fl(a op b) = (a op b)(1 + delta)``, ``|delta| < u`` holds with
``u = 2**(-t)``.
"""

from __future__ import annotations

import warnings
from collections import Counter
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import (
    DimensionMismatch,
    DivisionByZero,
    OverflowToInfinity,
    OverflowWarning,
    ZeroMatrix,
)

__all__ = [
    "FloatFormat",
    "FORMATS",
    "get_format",
    "custom_format",
    "round_to",
    "rounded_op",
    "LowPrecMatrix",
    "rounded_spmv",
    "SqueezedMatrix",
    "squeeze_matrix",
    "lowprec_call",
    "overflow_count",
]

# clamp events per format name, for the "counted warning" overflow policy
overflow_count: Counter = Counter()


@dataclass(frozen=True)
class FloatFormat:
    """A binary floating-point format with ``t`` significand bits (incl. the
    implicit bit) and ``e_bits`` exponent bits."""

    name: str
    t: int
    e_bits: int
    subnormals_enabled: bool = True

    def __post_init__(self):
        if not (1 <= self.t <= 53):
            raise ValueError("significand width must be in [1, 53]")
        if not (2 <= self.e_bits <= 11):
            raise ValueError("exponent width must be in [2, 11]")

    @property
    def u(self) -> float:
        return 2.0 ** (-self.t)

    @property
    def emax(self) -> int:
        return 2 ** (self.e_bits - 1) - 1

    @property
    def emin(self) -> int:
        return 1 - self.emax

    @property
    def x_max(self) -> float:
        return (2.0 - 2.0 ** (1 - self.t)) * 2.0**self.emax

    @property
    def x_min(self) -> float:
        """Smallest normalized positive number."""
        return 2.0**self.emin

    @property
    def x_tiny(self) -> float:
        """Smallest positive subnormal (== x_min when subnormals are off)."""
        if not self.subnormals_enabled:
            return self.x_min
        return 2.0 ** (self.emin - self.t + 1)

    @property
    def is_double(self) -> bool:
        return self.t == 53 and self.e_bits == 11


FORMATS: dict[str, FloatFormat] = {
    "bfloat16": FloatFormat("bfloat16", t=8, e_bits=8, subnormals_enabled=False),
    "fp16": FloatFormat("fp16", t=11, e_bits=5),
    "fp32": FloatFormat("fp32", t=24, e_bits=8),
    "fp64": FloatFormat("fp64", t=53, e_bits=11),
}


def get_format(name: str) -> FloatFormat:
    try:
        return FORMATS[name]
    except KeyError:
        raise KeyError(f"unknown format {name!r}; known: {sorted(FORMATS)}") from None


def custom_format(t: int, e_bits: int, name: str | None = None,
                  subnormals_enabled: bool = True) -> FloatFormat:
    return FloatFormat(name or f"p{t}e{e_bits}", t, e_bits, subnormals_enabled)


def _round_significand(x: np.ndarray, t: int) -> np.ndarray:
    """Round-to-nearest-even onto the t-bit significand grid, keeping the
    float64 exponent range.  Exact because inputs are float64 (t <= 53)."""
    keep = np.uint64(53 - t)
    if keep == 0:
        return x.copy()
    bits = x.view(np.uint64)
    lsb = (bits >> keep) & np.uint64(1)
    bias = np.uint64((1 << int(keep - 1)) - 1)
    rounded = (bits + bias + lsb) & ~np.uint64((1 << int(keep)) - 1)
    return rounded.view(np.float64)


def round_to(x, fmt: FloatFormat, strict_overflow: bool = False):
    """Round ``x`` (scalar or array, float64) to the nearest value
    representable in ``fmt``, ties to even.

    Overflow beyond ``fmt.x_max`` clamps with a counted warning by default;
    with ``strict_overflow`` it raises :class:`OverflowToInfinity`.
    """
    scalar = np.isscalar(x) or np.ndim(x) == 0
    arr = np.atleast_1d(np.asarray(x, dtype=np.float64))
    if fmt.is_double:
        return float(arr[0]) if scalar else arr.copy()

    out = _round_significand(arr, fmt.t)

    absx = np.abs(arr)
    tiny = absx < fmt.x_min
    if tiny.any():
        quantum = 2.0 ** (fmt.emin - fmt.t + 1)
        sub = np.rint(arr / quantum) * quantum
        if not fmt.subnormals_enabled:
            sub = np.where(np.abs(sub) < fmt.x_min, 0.0, sub)
        out = np.where(tiny, sub, out)

    nonfinite = ~np.isfinite(arr)
    if nonfinite.any():
        out = np.where(nonfinite, arr, out)

    over = np.isfinite(arr) & (np.abs(out) > fmt.x_max)
    if over.any():
        if strict_overflow:
            raise OverflowToInfinity(
                f"{int(over.sum())} value(s) exceed {fmt.name} range")
        n_over = int(over.sum())
        if overflow_count[fmt.name] == 0:
            warnings.warn(
                f"clamping {n_over} value(s) to +-x_max of {fmt.name}",
                OverflowWarning, stacklevel=2)
        overflow_count[fmt.name] += n_over
        out = np.where(over, np.sign(out) * fmt.x_max, out)

    return float(out[0]) if scalar else out


def rounded_op(a, b, op: str, fmt: FloatFormat, strict_overflow: bool = False):
    """One rounded elementary operation on values representable in ``fmt``."""
    if op == "+":
        val = np.add(a, b)
    elif op == "-":
        val = np.subtract(a, b)
    elif op == "*":
        val = np.multiply(a, b)
    elif op == "/":
        if np.any(np.asarray(b) == 0.0):
            raise DivisionByZero("division by zero in rounded_op")
        val = np.divide(a, b)
    else:
        raise ValueError(f"unknown op {op!r}")
    return round_to(val, fmt, strict_overflow=strict_overflow)


class LowPrecMatrix:
    """Sparse matrix held on the low-precision grid, with a matvec in which
    every multiply and add is rounded to the format.

    Rows are accumulated strictly in increasing column order (padded
    ELL layout), so results are deterministic regardless of threading.
    Structural zeros are skipped exactly.
    """

    def __init__(self, A, fmt: FloatFormat):
        A = sp.csr_matrix(A)
        A.sort_indices()
        self.fmt = fmt
        self.shape = A.shape
        n_rows = A.shape[0]
        counts = np.diff(A.indptr)
        self.nnz_max = int(counts.max()) if n_rows else 0
        self._cols = np.zeros((n_rows, self.nnz_max), dtype=np.int64)
        self._vals = np.zeros((n_rows, self.nnz_max))
        self._mask = np.zeros((n_rows, self.nnz_max), dtype=bool)
        for i in range(n_rows):
            lo, hi = A.indptr[i], A.indptr[i + 1]
            k = hi - lo
            self._cols[i, :k] = A.indices[lo:hi]
            self._vals[i, :k] = A.data[lo:hi]
            self._mask[i, :k] = True
        self._vals = round_to(self._vals, fmt)

    def matvec(self, x: np.ndarray, round_input: bool = True) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (self.shape[1],):
            raise DimensionMismatch(
                f"matvec: expected vector of length {self.shape[1]}, got {x.shape}")
        fmt = self.fmt
        if round_input:
            x = round_to(x, fmt)
        acc = np.zeros(self.shape[0])
        started = np.zeros(self.shape[0], dtype=bool)
        for k in range(self.nnz_max):
            active = self._mask[:, k]
            prod = round_to(self._vals[:, k] * x[self._cols[:, k]], fmt)
            term = np.where(active, prod, 0.0)
            acc = np.where(started, round_to(acc + term, fmt), acc + term)
            started |= active
        return acc

    def dense(self) -> np.ndarray:
        out = np.zeros(self.shape)
        rows = np.repeat(np.arange(self.shape[0]), self.nnz_max)
        np.add.at(out, (rows, self._cols.ravel()),
                  np.where(self._mask, self._vals, 0.0).ravel())
        return out


def rounded_spmv(A, x, fmt: FloatFormat) -> np.ndarray:
    """One-shot rounded sparse matrix-vector product (see LowPrecMatrix)."""
    return LowPrecMatrix(A, fmt).matvec(x)


class SqueezedMatrix:
    """A matrix scaled by its max norm before rounding; ``apply`` multiplies
    the low-precision product back by the scale in full precision."""

    def __init__(self, lpm: LowPrecMatrix, scale: float):
        self.lpm = lpm
        self.scale = scale
        self.fmt = lpm.fmt

    def apply(self, x: np.ndarray, round_input: bool = True) -> np.ndarray:
        return self.scale * self.lpm.matvec(x, round_input=round_input)


def squeeze_matrix(A, fmt: FloatFormat) -> SqueezedMatrix:
    A = sp.csr_matrix(A)
    if A.nnz == 0 or np.max(np.abs(A.data)) == 0.0:
        raise ZeroMatrix("cannot squeeze an all-zero matrix")
    scale = float(np.max(np.abs(A.data)))
    return SqueezedMatrix(LowPrecMatrix(A / scale, fmt), scale)


def lowprec_call(func, y: np.ndarray, fmt: FloatFormat) -> np.ndarray:
    """Evaluate ``func`` as if in low precision: round the input onto the
    format grid, evaluate, round the output.  This realizes the
    ``fhat(y) = f(y) + O(u)`` model for black-box right-hand sides."""
    if fmt.is_double:
        return func(y)
    return round_to(func(round_to(y, fmt)), fmt)
