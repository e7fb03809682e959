"""Arbitrary-precision arithmetic and special functions.

Everything downstream (periods, quasi-periods, recognition) runs on the
values produced here.  The working precision is carried explicitly in a
PrecisionContext; mpmath supplies the underlying mpf/mpc types, but every
operation in this module activates the context's precision itself, so no
caller ever has to touch mpmath's global state.

Numeric integration is tanh-sinh (double exponential), which converges
geometrically even with algebraic endpoint singularities x^alpha with
alpha > -1 -- exactly the kind appearing in superelliptic period
integrals.
"""

from __future__ import annotations

import math
from contextlib import contextmanager
from dataclasses import dataclass

import mpmath
from mpmath import mp

__all__ = [
    "PrecisionContext",
    "gamma",
    "beta",
    "tanh_sinh_integrate",
    "agm",
    "pi",
    "root_of_unity",
    "mixed_context_error",
]


class PrecisionError(ValueError):
    pass


def mixed_context_error(a, b):
    return PrecisionError(f"values from different precision contexts: {a} vs {b}")


@dataclass(frozen=True)
class PrecisionContext:
    """Working precision: `decimal_digits` requested, `guard_digits` extra
    carried internally so that the final digits are trustworthy."""

    decimal_digits: int
    guard_digits: int = 20

    def __post_init__(self):
        if self.decimal_digits < 30:
            raise PrecisionError("decimal_digits must be >= 30")
        if self.guard_digits < 1:
            raise PrecisionError("guard_digits must be >= 1")

    @property
    def dps(self) -> int:
        return self.decimal_digits + self.guard_digits

    @contextmanager
    def active(self):
        with mp.workdps(self.dps):
            yield mp

    def tolerance(self, slack: int = 5):
        """10^-(decimal_digits - slack), the default comparison threshold."""
        with self.active():
            return mp.mpf(10) ** (-(self.decimal_digits - slack))

    def escalate(self, factor: int = 2) -> "PrecisionContext":
        return PrecisionContext(self.decimal_digits * factor, self.guard_digits)


def gamma(z, ctx: PrecisionContext):
    """Gamma(z); raises on the poles at non-positive integers."""
    with ctx.active():
        z = mp.mpc(z)
        if z.imag == 0 and z.real <= 0 and z.real == mp.floor(z.real):
            raise ValueError(f"gamma pole at {z}")
        v = mp.gamma(z)
        return v if z.imag != 0 else v.real if mp.im(v) == 0 else v


def beta(a, b, ctx: PrecisionContext):
    """B(a,b) = Gamma(a)Gamma(b)/Gamma(a+b)."""
    with ctx.active():
        for w in (a, b, mp.mpc(a) + mp.mpc(b)):
            w = mp.mpc(w)
            if w.imag == 0 and w.real <= 0 and w.real == mp.floor(w.real):
                raise ValueError(f"beta: gamma pole at {w}")
        return mp.beta(a, b)


def tanh_sinh_integrate(f, interval, ctx: PrecisionContext,
                        endpoint_exponents=(0, 0), split_points=(),
                        maxdegree=None):
    """Integrate f over (a, b) with tanh-sinh quadrature.

    Returns (value, error_estimate).  `split_points` should list interior
    points where the integrand changes character (mandatory for infinite
    intervals: a single tanh-sinh map over [0, inf] can silently lose
    accuracy, so callers must break the interval at a finite point).
    Raises if the reported error estimate is above the context tolerance.
    """
    a, b = interval
    pts = [a, *split_points, b]
    with ctx.active():
        kw = {"error": True, "method": "tanh-sinh"}
        if maxdegree is not None:
            kw["maxdegree"] = maxdegree
        val, err = mp.quad(f, pts, **kw)
        if err > ctx.tolerance():
            # one retry with a deeper level before giving up
            kw["maxdegree"] = max(kw.get("maxdegree", 6) + 4, 12)
            val, err = mp.quad(f, pts, **kw)
            if err > ctx.tolerance():
                raise ArithmeticError(
                    f"tanh-sinh quadrature did not converge: err={err}")
        return val, err


def agm(a, b, ctx: PrecisionContext):
    """Arithmetic-geometric mean with the principal (right-half-plane)
    square-root branch at every step."""
    with ctx.active():
        if a == 0 or b == 0:
            raise ValueError("agm requires nonzero arguments")
        return mp.agm(a, b)


def pi(ctx: PrecisionContext):
    with ctx.active():
        return +mp.pi


def root_of_unity(n: int, k: int, ctx: PrecisionContext):
    """e^{2 pi i k / n}."""
    if n < 1 or not 0 <= k < n:
        raise ValueError(f"root_of_unity: need n >= 1, 0 <= k < n, got {n}, {k}")
    g = math.gcd(k, n)
    n2, k2 = n // g, k // g
    with ctx.active():
        if n2 == 1:
            return mp.mpc(1)
        if n2 == 2:
            return mp.mpc(-1)
        if n2 == 4:
            return mp.mpc(0, 1) if k2 == 1 else mp.mpc(0, -1)
        return mp.expjpi(mp.mpf(2 * k2) / n2)
