"""Exact number-field arithmetic, complex embeddings, CM structure, Galois
actions.

Fields are given by monic irreducible integer polynomials; elements are
rational vectors in the power basis.  Galois data is combinatorial --
permutations of the embedding index set -- generated natively for
cyclotomic fields and accepted via validated certificates otherwise.
Every automorphism additionally carries its image polynomial u with
tau(theta) = u(theta), so the action is exact on field elements and the
permutation can be re-derived (and is re-checked) numerically.
"""

from __future__ import annotations

import itertools
import random
from dataclasses import dataclass, field
from fractions import Fraction

import sympy
from mpmath import mp

from .precision_kernel import PrecisionContext
from .exact_linear_algebra import recognize_in_field

__all__ = [
    "NumberField",
    "FieldElement",
    "EmbeddingSet",
    "GaloisAction",
    "CMAlgebra",
    "cyclotomic_field",
    "embeddings",
    "cm_structure",
    "xi_element",
    "action_on_embeddings",
    "endomorphism_field",
    "load_galois_certificate",
]


# ---------------------------------------------------------------------------
# fields and elements

@dataclass(frozen=True)
class NumberField:
    """Q[t]/(minpoly); minpoly is monic irreducible with integer
    coefficients, stored highest degree first."""

    minpoly: tuple
    label: str = ""
    cyclotomic_n: int = 0  # nonzero when this is Q(zeta_n) with theta = zeta_n

    def __post_init__(self):
        if self.minpoly[0] != 1:
            raise ValueError("minpoly must be monic")
        t = sympy.symbols("t")
        if not sympy.Poly(list(self.minpoly), t).is_irreducible:
            raise ValueError("minpoly must be irreducible over Q")

    @property
    def degree(self):
        return len(self.minpoly) - 1

    def element(self, coeffs) -> "FieldElement":
        """Element from power-basis coordinates (constant term first)."""
        c = [Fraction(x) for x in coeffs]
        if len(c) > self.degree:
            c = _poly_mod(c, self.minpoly)
        c += [Fraction(0)] * (self.degree - len(c))
        return FieldElement(self, tuple(c))

    def zero(self):
        return self.element([0])

    def one(self):
        return self.element([1])

    def gen(self):
        return self.element([0, 1])

    def gen_power(self, k: int) -> "FieldElement":
        return self.gen() ** k if k >= 0 else (self.gen() ** (-k)).inverse()


def _poly_mod(coeffs, minpoly):
    """Reduce [c0, c1, ...] (ascending) modulo the monic minpoly."""
    d = len(minpoly) - 1
    red = [Fraction(-minpoly[i]) for i in range(1, d + 1)][::-1]  # x^d = sum red[k] x^k
    c = list(coeffs)
    while len(c) > d:
        top = c.pop()
        if top:
            for k in range(d):
                c[len(c) - d + k] += top * red[k]
    return c


@dataclass(frozen=True)
class FieldElement:
    field: NumberField
    coeffs: tuple

    def _check(self, other):
        if not isinstance(other, FieldElement):
            other = self.field.element([other])
        if other.field.minpoly != self.field.minpoly:
            raise ValueError("elements of different fields")
        return other

    def __add__(self, other):
        other = self._check(other)
        return FieldElement(self.field, tuple(a + b for a, b in
                                              zip(self.coeffs, other.coeffs)))

    __radd__ = __add__

    def __neg__(self):
        return FieldElement(self.field, tuple(-a for a in self.coeffs))

    def __sub__(self, other):
        return self + (-self._check(other))

    def __rsub__(self, other):
        return (-self) + self._check(other)

    def __mul__(self, other):
        if isinstance(other, (int, Fraction)):
            return FieldElement(self.field,
                                tuple(Fraction(other) * a for a in self.coeffs))
        other = self._check(other)
        d = self.field.degree
        prod = [Fraction(0)] * (2 * d - 1)
        for i, a in enumerate(self.coeffs):
            if a:
                for j, b in enumerate(other.coeffs):
                    if b:
                        prod[i + j] += a * b
        return self.field.element(_poly_mod(prod, self.field.minpoly))

    __rmul__ = __mul__

    def __pow__(self, n: int):
        if n < 0:
            return (self ** (-n)).inverse()
        out = self.field.one()
        base = self
        while n:
            if n & 1:
                out = out * base
            base = base * base
            n >>= 1
        return out

    def inverse(self):
        # extended Euclid on Q[t]
        t = sympy.symbols("t")
        a = sympy.Poly(list(self.field.minpoly), t, domain="QQ")
        b = sympy.Poly([sympy.Rational(c.numerator, c.denominator)
                        for c in reversed(self.coeffs)], t, domain="QQ")
        if b.is_zero:
            raise ZeroDivisionError("inverse of zero field element")
        s, inv, g = sympy.gcdex(a, b)   # s*minpoly + inv*self = g
        if g.degree() != 0:
            raise ZeroDivisionError("element not invertible (minpoly shares factor)")
        inv = inv.mul_ground(1 / g.all_coeffs()[0])
        cs = [Fraction(c.p, c.q) for c in reversed(inv.all_coeffs())]
        return self.field.element(cs)

    def __truediv__(self, other):
        other = self._check(other)
        return self * other.inverse()

    def is_zero(self):
        return all(c == 0 for c in self.coeffs)

    def __eq__(self, other):
        if isinstance(other, (int, Fraction)):
            other = self.field.element([other])
        return (isinstance(other, FieldElement)
                and self.field.minpoly == other.field.minpoly
                and self.coeffs == other.coeffs)

    def __hash__(self):
        return hash((self.field.minpoly, self.coeffs))

    def embed(self, emb: "EmbeddingSet", index: int):
        with emb.ctx.active():
            r = emb.roots[index]
            acc = mp.mpc(0)
            for c in reversed(self.coeffs):
                acc = acc * r + mp.mpf(c.numerator) / c.denominator
            return acc

    def multiplication_matrix(self):
        """Matrix of y -> self*y in the power basis (columns are images)."""
        d = self.field.degree
        cols = []
        for k in range(d):
            img = self * self.field.gen_power(k)
            cols.append(img.coeffs)
        return sympy.Matrix([[sympy.Rational(cols[j][i].numerator,
                                             cols[j][i].denominator)
                              for j in range(d)] for i in range(d)])

    def minpoly_of_element(self):
        """Exact minimal polynomial over Q, descending integer coefficients
        after clearing denominators (primitive, positive leading)."""
        M = self.multiplication_matrix()
        t = sympy.symbols("t")
        chi = M.charpoly(t)
        for fac, _ in sympy.Poly(chi.as_expr(), t).factor_list()[1]:
            if _annihilates(fac, self):
                cs = [sympy.nsimplify(c) for c in fac.all_coeffs()]
                lcm = sympy.lcm([sympy.fraction(c)[1] for c in cs])
                ints = [int(c * lcm) for c in cs]
                if ints[0] < 0:
                    ints = [-c for c in ints]
                return tuple(ints)
        raise AssertionError("charpoly had no annihilating factor")


def _annihilates(poly, elt: FieldElement) -> bool:
    acc = elt.field.zero()
    for c in poly.all_coeffs():
        cf = Fraction(sympy.Rational(c).p, sympy.Rational(c).q)
        acc = acc * elt + elt.field.element([cf])
    return acc.is_zero()


# ---------------------------------------------------------------------------
# embeddings

@dataclass(frozen=True)
class EmbeddingSet:
    """All complex roots of the minimal polynomial, deterministically
    ordered (by real part, then imaginary part), with the conjugation
    involution as an index permutation (identity entries for real roots)."""

    fld: NumberField
    ctx: PrecisionContext
    roots: tuple
    conj: tuple

    @property
    def degree(self):
        return len(self.roots)

    def match_root(self, z) -> int:
        """Index of the root nearest to z; error if the match is ambiguous."""
        with self.ctx.active():
            dists = sorted((abs(mp.mpc(z) - r), i) for i, r in enumerate(self.roots))
            if len(dists) > 1 and dists[0][0] * 2 > dists[1][0]:
                raise ArithmeticError("ambiguous root match; raise precision")
            return dists[0][1]


def embeddings(K: NumberField, ctx: PrecisionContext) -> EmbeddingSet:
    with ctx.active():
        coeffs = [mp.mpf(c) for c in K.minpoly]
        roots = mp.polyroots(coeffs, maxsteps=200, extraprec=ctx.dps * 4)
        tol = mp.mpf(10) ** (-(ctx.decimal_digits // 2))
        roots = [r.real + 0j if abs(r.imag) < tol else r for r in
                 (mp.mpc(r) for r in roots)]
        roots.sort(key=lambda r: (r.real, r.imag))
        conj = []
        for r in roots:
            best, bd = None, None
            for j, s in enumerate(roots):
                d = abs(mp.conj(r) - s)
                if bd is None or d < bd:
                    best, bd = j, d
            if bd > tol:
                raise ArithmeticError("conjugate root matching failed")
            conj.append(best)
        conj = tuple(conj)
        for i in range(len(roots)):
            if conj[conj[i]] != i:
                raise ArithmeticError("conjugation is not an involution")
    return EmbeddingSet(K, ctx, tuple(roots), conj)


# ---------------------------------------------------------------------------
# Galois actions

@dataclass(frozen=True)
class GaloisAction:
    """A group of automorphisms of a field F: for each element, the image
    polynomial u (as a FieldElement giving tau(theta) = u(theta)) and the
    induced permutation of the embedding set (chi_i . tau = chi_{perm[i]})."""

    emb: EmbeddingSet
    names: tuple
    images: dict      # name -> FieldElement
    perms: dict       # name -> tuple permutation

    @property
    def order(self):
        return len(self.names)

    def apply(self, name, elt: FieldElement) -> FieldElement:
        """Exact action on a field element."""
        u = self.images[name]
        acc = elt.field.zero()
        for c in reversed(elt.coeffs):
            acc = acc * u + elt.field.element([c])
        return acc

    def compose(self, n1, n2):
        """Name of the element acting as 'first n2, then n1'."""
        u = self.apply(n1, self.images[n2])
        for name, img in self.images.items():
            if img == u:
                return name
        raise KeyError("composition left the group (invalid action)")

    def verify_group(self):
        for n1 in self.names:
            for n2 in self.names:
                self.compose(n1, n2)
        return True


def _perm_from_image(emb: EmbeddingSet, u: FieldElement):
    """Permutation induced by theta -> u(theta): chi_i maps to the embedding
    sending theta to chi_i(u)."""
    perm = []
    for i in range(emb.degree):
        perm.append(emb.match_root(u.embed(emb, i)))
    if sorted(perm) != list(range(emb.degree)):
        raise ArithmeticError("image polynomial does not permute the roots")
    return tuple(perm)


def cyclotomic_field(n: int) -> NumberField:
    if n < 3:
        raise ValueError("need n >= 3")
    t = sympy.symbols("t")
    poly = sympy.Poly(sympy.cyclotomic_poly(n, t), t)
    coeffs = tuple(int(c) for c in poly.all_coeffs())
    return NumberField(coeffs, label=f"Q(zeta_{n})", cyclotomic_n=n)


def cyclotomic_galois_action(K: NumberField, emb: EmbeddingSet) -> GaloisAction:
    """(Z/n)^* acting by zeta -> zeta^a; element names are the units a."""
    n = K.cyclotomic_n
    if not n:
        raise ValueError("not a cyclotomic field")
    import math
    names, images, perms = [], {}, {}
    for a in range(1, n):
        if math.gcd(a, n) != 1:
            continue
        u = K.gen_power(a)
        names.append(a)
        images[a] = u
        perms[a] = _perm_from_image(emb, u)
    return GaloisAction(emb, tuple(names), images, perms)


def load_galois_certificate(K: NumberField, emb: EmbeddingSet,
                            table) -> GaloisAction:
    """Accept a claimed Galois action: `table` maps names to power-basis
    coefficient vectors of the image of theta.  Every image is validated by
    root post-composition, and closure is checked, before acceptance."""
    names, images, perms = [], {}, {}
    for name, coeffs in table.items():
        u = K.element(coeffs)
        try:
            perm = _perm_from_image(emb, u)
        except ArithmeticError as e:
            raise ValueError(f"certificate invalid at element {name!r}: {e}")
        # u must be a root of the minimal polynomial, exactly
        t = sympy.symbols("t")
        if not _annihilates(sympy.Poly(list(K.minpoly), t), u):
            raise ValueError(f"certificate invalid at element {name!r}: "
                             "image is not a root of the minimal polynomial")
        names.append(name)
        images[name] = u
        perms[name] = perm
    act = GaloisAction(emb, tuple(names), images, perms)
    if len(names) != K.degree:
        raise ValueError(f"certificate claims {len(names)} elements, "
                         f"field degree is {K.degree}")
    if len(set(images.values())) != len(names):
        raise ValueError("certificate contains duplicate automorphisms")
    try:
        act.verify_group()
    except KeyError as e:
        raise ValueError(f"certificate not closed under composition: {e}")
    return act


def action_on_embeddings(perm_F, restriction) -> tuple:
    """Push a permutation of Hom(F, C) down to Hom(E, C) along the
    restriction map `restriction` (index of F-embedding -> index of
    E-embedding).  Fails if the result is ill-defined."""
    images = {}
    for t_idx, e_idx in enumerate(restriction):
        img = restriction[perm_F[t_idx]]
        if images.setdefault(e_idx, img) != img:
            raise ArithmeticError("restricted action ill-defined")
    return tuple(images[i] for i in range(len(images)))


def restriction_map(emb_F: EmbeddingSet, emb_E: EmbeddingSet,
                    gen_of_E_in_F: FieldElement) -> tuple:
    """For each F-embedding index t, the index of the E-embedding obtained
    by restricting along E -> F (E's generator given as an element of F)."""
    out = []
    for t_idx in range(emb_F.degree):
        z = gen_of_E_in_F.embed(emb_F, t_idx)
        out.append(emb_E.match_root(z))
    return tuple(out)


# ---------------------------------------------------------------------------
# CM structure

def cm_structure(K: NumberField, ctx: PrecisionContext = None):
    """Detect CM: totally imaginary, quadratic over a totally real subfield.
    Returns (is_cm, E0 or None, conjugation FieldElement or None) where the
    conjugation is the image of theta under complex conjugation."""
    ctx = ctx or PrecisionContext(60)
    emb = embeddings(K, ctx)
    with ctx.active():
        if any(r.imag == 0 for r in emb.roots):
            return False, None, None
        # candidate conjugation: recognize conj(root_0) in the field
        r0 = emb.roots[0]
        basis = [K.gen_power(k).embed(emb, 0) for k in range(K.degree)]
        vec = recognize_in_field(mp.conj(r0), basis, 10 ** 12, ctx)
    if vec is None:
        return False, None, None
    cbar = K.element(vec)
    # exact verification: cbar is a root of minpoly and an involution
    t = sympy.symbols("t")
    if not _annihilates(sympy.Poly(list(K.minpoly), t), cbar):
        return False, None, None
    if _compose_image(cbar, cbar) != K.gen():
        return False, None, None
    w = K.gen() + cbar
    wpoly = w.minpoly_of_element()
    if len(wpoly) - 1 != K.degree // 2:
        return False, None, None
    E0 = NumberField(wpoly, label=f"{K.label}+" if K.label else "")
    # totally real check on E0
    emb0 = embeddings(E0, ctx)
    with ctx.active():
        if any(r.imag != 0 for r in emb0.roots):
            return False, None, None
    return True, E0, cbar


def _compose_image(u: FieldElement, v: FieldElement) -> FieldElement:
    """u applied after v: evaluate u's polynomial at v."""
    acc = u.field.zero()
    for c in reversed(u.coeffs):
        acc = acc * v + u.field.element([c])
    return acc


def conj_of(elt: FieldElement, cbar: FieldElement) -> FieldElement:
    """Complex conjugate of an element, via the conjugation automorphism."""
    return _compose_image(elt, cbar)


def xi_element(K: NumberField, phi_indices, emb: EmbeddingSet,
               cbar: FieldElement, height: int = 3) -> FieldElement:
    """Purely imaginary xi (conj(xi) = -xi) with Im chi_j(xi) < 0 for every
    j in the CM type, by bounded search over E0-multiples of theta - conj."""
    xi0 = K.gen() - cbar
    w = K.gen() + cbar
    half = K.degree // 2
    wpow = [w ** k for k in range(half)]
    with emb.ctx.active():
        for h in range(1, height + 1):
            for coeffs in itertools.product(range(-h, h + 1), repeat=half):
                if all(c == 0 for c in coeffs):
                    continue
                u = K.zero()
                for c, wp in zip(coeffs, wpow):
                    u = u + wp * c
                xi = u * xi0
                if conj_of(xi, cbar) != -xi:
                    continue
                if all(xi.embed(emb, j).imag < 0 for j in phi_indices):
                    return xi
    raise ArithmeticError("xi search exhausted; raise the height bound")


# ---------------------------------------------------------------------------
# CM algebras (products of CM fields)

@dataclass(frozen=True)
class CMAlgebra:
    """Product E = E_1 x ... x E_t of CM fields, with the merged embedding
    list: entries (component, root index within that component's
    EmbeddingSet), of total length 2g."""

    components: tuple            # NumberFields
    emb_sets: tuple              # EmbeddingSets, same order
    conjugations: tuple          # conjugation FieldElements per component

    def __post_init__(self):
        if len(self.components) != len(self.emb_sets):
            raise ValueError("component/embedding mismatch")

    @property
    def labels(self):
        out = []
        for ci, emb in enumerate(self.emb_sets):
            out.extend((ci, k) for k in range(emb.degree))
        return tuple(out)

    @property
    def dim(self):
        return sum(K.degree for K in self.components)

    def conj_label(self, label):
        ci, k = label
        return (ci, self.emb_sets[ci].conj[k])


def endomorphism_field(entries, K: NumberField, trials: int = 8,
                       rng_seed: int = 7):
    """Field generated by a list of FieldElements of K: the degree of a
    random small combination stabilizes at the subfield degree with
    overwhelming probability; we take the best of several trials.
    Returns (degree, minpoly, generator element)."""
    entries = [e for e in entries if not e.is_zero()]
    if not entries:
        return 1, (1, 0), K.zero()
    rng = random.Random(rng_seed)
    best = (1, (1, 0), K.zero())
    for _ in range(trials):
        combo = K.zero()
        for e in entries:
            combo = combo + e * rng.randint(-9, 9)
        poly = combo.minpoly_of_element()
        deg = len(poly) - 1
        if deg > best[0]:
            best = (deg, poly, combo)
        if best[0] == K.degree:
            break
    return best
