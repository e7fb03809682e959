"""Exact integer/rational linear algebra and integer-relation detection.

Matrices are plain lists of lists of Python ints (arbitrary precision for
free).  HNF and SNF carry their unimodular transforms so kernels come out
saturated by construction.  Lattice reduction is delegated to sympy's
DomainMatrix.lll; the same reduction engine drives integer-relation
detection and hence all algebraic recognition, by embedding real or
complex data into an integer lattice with a 10^(digits-guard) scaling.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import sympy
from sympy import ZZ, Rational
from sympy.polys.matrices import DomainMatrix
from mpmath import mp

from .precision_kernel import PrecisionContext

__all__ = [
    "LatticeBasis",
    "hnf",
    "snf",
    "integer_kernel_basis",
    "saturation",
    "lll_reduce",
    "integer_relation",
    "joint_integer_relation",
    "recognize_minpoly",
    "recognize_in_field",
]


@dataclass(frozen=True)
class LatticeBasis:
    """Rows are independent integer vectors spanning a sublattice of Z^n."""

    ambient_rank: int
    vectors: tuple

    def __post_init__(self):
        for v in self.vectors:
            if len(v) != self.ambient_rank:
                raise ValueError("basis vector of wrong length")

    @property
    def rank(self):
        return len(self.vectors)


def _mat_mul(A, B):
    n, k, m = len(A), len(B), len(B[0]) if B else 0
    return [[sum(A[i][t] * B[t][j] for t in range(k)) for j in range(m)]
            for i in range(n)]


def _identity(n):
    return [[int(i == j) for j in range(n)] for i in range(n)]


def hnf(A):
    """Column-style Hermite normal form: returns (H, U) with H = A*U,
    U unimodular, H lower-echelon with positive pivots and reduced
    entries to the pivot's right."""
    n = len(A)
    m = len(A[0]) if n else 0
    H = [row[:] for row in A]
    U = _identity(m)

    def colop(j, k, a, b, c, d):
        # (col_j, col_k) <- (a col_j + b col_k, c col_j + d col_k)
        for M in (H, U):
            for row in M:
                x, y = row[j], row[k]
                row[j], row[k] = a * x + b * y, c * x + d * y

    piv = 0
    for i in range(n):
        # clear row i across columns piv+1..m-1 into column piv
        j = piv
        while j < m and H[i][j] == 0:
            j += 1
        if j == m:
            continue
        if j != piv:
            colop(piv, j, 0, 1, 1, 0)
        for k in range(piv + 1, m):
            if H[i][k] == 0:
                continue
            g, x, y = _xgcd(H[i][piv], H[i][k])
            a, b = H[i][piv] // g, H[i][k] // g
            colop(piv, k, x, y, -b, a)
        if H[i][piv] < 0:
            for M in (H, U):
                for row in M:
                    row[piv] = -row[piv]
        # reduce columns to the left of the pivot column against it
        for k in range(piv):
            q = H[i][k] // H[i][piv]
            if q:
                for M in (H, U):
                    for row in M:
                        row[k] -= q * row[piv]
        piv += 1
        if piv == m:
            break
    return H, U


def _xgcd(a, b):
    x0, x1, y0, y1 = 1, 0, 0, 1
    while b:
        q, a, b = a // b, b, a % b
        x0, x1 = x1, x0 - q * x1
        y0, y1 = y1, y0 - q * y1
    return a, x0, y0


def snf(A):
    """Smith normal form with transforms: returns (U, D, V) with
    U*A*V = D, D diagonal with d1 | d2 | ..., U and V unimodular."""
    n = len(A)
    m = len(A[0]) if n else 0
    D = [row[:] for row in A]
    U, V = _identity(n), _identity(m)

    def rowop(i, k, a, b, c, d):
        for M, width in ((D, m), (U, n)):
            ri, rk = M[i], M[k]
            for j in range(width):
                x, y = ri[j], rk[j]
                ri[j], rk[j] = a * x + b * y, c * x + d * y

    def colop(j, k, a, b, c, d):
        for M in (D, V):
            for row in M:
                x, y = row[j], row[k]
                row[j], row[k] = a * x + b * y, c * x + d * y

    t = 0
    while t < min(n, m):
        # find a nonzero pivot
        found = None
        for i in range(t, n):
            for j in range(t, m):
                if D[i][j]:
                    found = (i, j)
                    break
            if found:
                break
        if not found:
            break
        i, j = found
        if i != t:
            rowop(t, i, 0, 1, 1, 0)
        if j != t:
            colop(t, j, 0, 1, 1, 0)
        while True:
            # clear column t; plain subtraction when the pivot divides, so
            # row t stays untouched and the row/column passes terminate
            for i in range(t + 1, n):
                if D[i][t]:
                    if D[i][t] % D[t][t] == 0:
                        q = D[i][t] // D[t][t]
                        rowop(t, i, 1, 0, -q, 1)
                    else:
                        g, x, y = _xgcd(D[t][t], D[i][t])
                        a, b = D[t][t] // g, D[i][t] // g
                        rowop(t, i, x, y, -b, a)
            # clear row t
            for j in range(t + 1, m):
                if D[t][j]:
                    if D[t][j] % D[t][t] == 0:
                        q = D[t][j] // D[t][t]
                        colop(t, j, 1, 0, -q, 1)
                    else:
                        g, x, y = _xgcd(D[t][t], D[t][j])
                        a, b = D[t][t] // g, D[t][j] // g
                        colop(t, j, x, y, -b, a)
            if all(D[i][t] == 0 for i in range(t + 1, n)) and \
               all(D[t][j] == 0 for j in range(t + 1, m)):
                break
        # divisibility: fold any entry not divisible by the pivot back in
        bad = None
        for i in range(t + 1, n):
            for j in range(t + 1, m):
                if D[i][j] % D[t][t]:
                    bad = i
                    break
            if bad:
                break
        if bad is not None:
            rowop(t, bad, 1, 1, 0, 1)
            continue  # redo elimination at the same t
        if D[t][t] < 0:
            for M in (D, U):
                for j in range(len(M[t])):
                    M[t][j] = -M[t][j]
        t += 1
    return U, D, V


def integer_kernel_basis(A) -> LatticeBasis:
    """Basis of {x in Z^m : A x = 0}.  Saturated automatically: the kernel
    columns are columns of a unimodular matrix."""
    n = len(A)
    m = len(A[0]) if n else 0
    if n == 0:
        return LatticeBasis(m, tuple(tuple(r) for r in _identity(m)))
    H, U = hnf(A)
    ker = []
    for j in range(m):
        if all(H[i][j] == 0 for i in range(n)):
            ker.append(tuple(U[i][j] for i in range(m)))
    return LatticeBasis(m, tuple(ker))


def saturation(L: LatticeBasis) -> LatticeBasis:
    """Basis of (L tensor Q) intersect Z^n."""
    if L.rank == 0:
        return L
    B = [list(v) for v in L.vectors]
    U, D, V = snf(B)
    # rows of V^{-1} spanning the same Q-space give the saturation; V^{-1}
    # is integral and unimodular, and U*B = D*V^{-1}, so the first rank rows
    # of V^{-1} are (1/d_i) * rows of U*B -- i.e. the primitive rescalings.
    Vinv = _unimodular_inverse(V)
    return LatticeBasis(L.ambient_rank,
                        tuple(tuple(row) for row in Vinv[:L.rank]))


def _unimodular_inverse(V):
    n = len(V)
    M = sympy.Matrix(V)
    Minv = M.inv()
    return [[int(Minv[i, j]) for j in range(n)] for i in range(n)]


def lll_reduce(L: LatticeBasis, delta=Rational(99, 100)) -> LatticeBasis:
    if L.rank <= 1:
        return L
    dm = DomainMatrix([[ZZ(x) for x in v] for v in L.vectors],
                      (L.rank, L.ambient_rank), ZZ)
    red = dm.lll(delta=delta)
    rows = red.to_list()
    return LatticeBasis(L.ambient_rank,
                        tuple(tuple(int(x) for x in row) for row in rows))


def sublattice_membership(L: LatticeBasis, v) -> bool:
    """Exact test: is v in the Z-span of L's basis?"""
    if all(x == 0 for x in v):
        return True
    if L.rank == 0:
        return False
    B = [list(b) for b in L.vectors]
    M = sympy.Matrix(B).T
    rhs = sympy.Matrix([list(v)]).T
    try:
        sol, _params = M.gauss_jordan_solve(rhs)
    except ValueError:
        return False
    if M * sol != rhs:
        return False
    return all(x.is_integer for x in sol)


def _relation_lattice(vectors, ctx: PrecisionContext, scale_digits):
    """Rows [e_i | round(C * components of vectors[i])]; reduction makes the
    left block a small relation whenever the right block can cancel."""
    with ctx.active():
        C = mp.mpf(10) ** scale_digits
        n = len(vectors)
        rows = []
        for i, comps in enumerate(vectors):
            tail = []
            for z in comps:
                z = mp.mpc(z)
                tail.append(int(mp.nint(C * z.real)))
                tail.append(int(mp.nint(C * z.imag)))
            rows.append([int(i == j) for j in range(n)] + tail)
    return rows


def joint_integer_relation(vectors, height_bound, ctx: PrecisionContext):
    """Find c in Z^n, c != 0, |c_i| <= height_bound, such that
    sum_i c_i * vectors[i] ~ 0 componentwise; vectors[i] is a tuple of
    BigComplex.  Returns the coefficient vector or None."""
    n = len(vectors)
    if n < 2:
        raise ValueError("need at least two vectors")
    scale = ctx.decimal_digits - 8
    rows = _relation_lattice(vectors, ctx, scale)
    basis = lll_reduce(LatticeBasis(len(rows[0]), tuple(tuple(r) for r in rows)))
    with ctx.active():
        tol = mp.mpf(n) * height_bound * mp.mpf(10) ** (-(ctx.decimal_digits - 8))
        maxmag = max((abs(mp.mpc(z)) for comps in vectors for z in comps),
                     default=mp.mpf(1))
        tol = tol * max(maxmag, mp.mpf(1))
        for row in basis.vectors:
            c = row[:n]
            if all(x == 0 for x in c):
                continue
            if max(abs(x) for x in c) > height_bound:
                continue
            ok = True
            width = len(vectors[0])
            for k in range(width):
                s = mp.fsum(c[i] * mp.mpc(vectors[i][k]) for i in range(n))
                if abs(s) > tol:
                    ok = False
                    break
            if ok:
                return tuple(c)
    return None


def integer_relation(xs, height_bound, ctx: PrecisionContext):
    """Integer relation sum c_i x_i ~ 0 among scalars (real or complex)."""
    return joint_integer_relation([(x,) for x in xs], height_bound, ctx)


def _poly_from_relation(rel):
    # rel = (c_0, ..., c_d) meaning sum c_k x^k = 0; return descending coeffs
    coeffs = list(rel)
    while coeffs and coeffs[-1] == 0:
        coeffs.pop()
    if not coeffs:
        return None
    g = 0
    for c in coeffs:
        g = sympy.gcd(g, c)
    coeffs = [c // g for c in coeffs]
    if coeffs[-1] < 0:
        coeffs = [-c for c in coeffs]
    return tuple(reversed(coeffs))


def recognize_minpoly(x, max_degree: int, ctx: PrecisionContext,
                      height_bound=None):
    """Primitive irreducible integer polynomial (descending coefficients)
    vanishing at x, or None.  Result is only accepted when the same
    polynomial is found again with 30 digits knocked off -- an unstable
    answer is a lattice artifact, not a recognition."""
    if height_bound is None:
        height_bound = 10 ** max(20, ctx.decimal_digits // 2)

    def attempt(c):
        with c.active():
            powers = [mp.mpc(x) ** k for k in range(max_degree + 1)]
        rel = joint_integer_relation([(p,) for p in powers], height_bound, c)
        if rel is None:
            return None
        return _poly_from_relation(rel)

    got = attempt(ctx)
    if got is None:
        return None
    if ctx.decimal_digits - 30 >= 30:
        check = attempt(PrecisionContext(ctx.decimal_digits - 30,
                                         ctx.guard_digits))
        if check is not None and check != got:
            return None
    t = sympy.symbols("t")
    poly = sympy.Poly(list(got), t)
    best = None
    with ctx.active():
        for fac, _ in poly.factor_list()[1]:
            coeffs = [int(c) for c in fac.all_coeffs()]
            val = mp.polyval([mp.mpf(c) for c in coeffs], mp.mpc(x))
            if abs(val) < ctx.tolerance():
                if best is None or len(coeffs) < len(best):
                    best = coeffs
    if best is None:
        return None
    if best[0] < 0:
        best = [-c for c in best]
    return tuple(best)


def recognize_in_field(x, basis_embeddings, denominator_bound: int,
                       ctx: PrecisionContext):
    """Rational vector c with sum_i c_i * basis_i = x, or None.  The basis
    embeddings are numeric images of a Q-basis under one fixed embedding."""
    vecs = [(x,)] + [(b,) for b in basis_embeddings]
    rel = joint_integer_relation(vecs, denominator_bound * 10 ** 6, ctx)
    if rel is None or rel[0] == 0:
        return None
    c0 = rel[0]
    if abs(c0) > denominator_bound:
        return None
    return tuple(Fraction(-c, c0) for c in rel[1:])
