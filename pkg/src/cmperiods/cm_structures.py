"""CM types, reflex data, the Mumford-Tate kernel lattice, monomial
equations, index tuples and the degeneracy classifier.

Index conventions.  A CM algebra E = E_1 x ... x E_t with 2g embeddings is
given a canonical ordering: positions 0..g-1 are the CM type Phi (in the
order supplied) and position i+g carries the complex conjugate of
position i.  Monomial equations for MT(A) are integer exponent vectors of
length 2g in this ordering, of total degree zero; the weight is half the
l1-norm.

The kernel lattice is the kernel of the character-lattice map
Z[Hom(E,C)] -> Z[Hom(F,C)] obtained by composing the reflex norm of each
component with the norm of F over the component's reflex field.  Row a of
the composed integer matrix counts, for each group element t of
G = Gal(F/Q), the lifts h of the induced type with lift_a . h^{-1} = t.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

from .exact_linear_algebra import (LatticeBasis, integer_kernel_basis,
                                   saturation, lll_reduce,
                                   sublattice_membership)
from .number_fields import (CMAlgebra, GaloisAction, FieldElement,
                            EmbeddingSet, restriction_map)

__all__ = [
    "CMTypeData",
    "MTEquation",
    "ReflexData",
    "compute_cm_type",
    "splitting_element",
    "induced_type",
    "reflex",
    "reflex_norm_matrix",
    "mt_kernel",
    "mt_equations",
    "equation_weight",
    "index_tuple",
    "is_mt_equation",
    "galois_act_on_equation",
    "degeneracy_test",
    "divisor_sublattice",
    "galois_orbits",
]


@dataclass(frozen=True)
class CMTypeData:
    """CM type on a CM algebra: g labels (component, root-index), one from
    each conjugate pair."""

    algebra: CMAlgebra
    phi: tuple    # g labels

    def __post_init__(self):
        labels = set(self.algebra.labels)
        conj = {self.algebra.conj_label(l) for l in self.phi}
        if set(self.phi) & conj:
            raise ValueError("CM type contains a conjugate pair")
        if set(self.phi) | conj != labels:
            raise ValueError("CM type does not cover all conjugate pairs")

    @property
    def g(self):
        return len(self.phi)

    @property
    def canonical_labels(self):
        """Positions 0..g-1: Phi; position i+g: conjugate of position i."""
        return tuple(self.phi) + tuple(self.algebra.conj_label(l)
                                       for l in self.phi)

    def canonical_index(self, label):
        return self.canonical_labels.index(label)

    def conj_index(self, i):
        g = self.g
        return i + g if i < g else i - g

    def phi_component(self, ci):
        """Root indices of Phi restricted to component ci."""
        return tuple(k for (c, k) in self.phi if c == ci)


@dataclass(frozen=True)
class MTEquation:
    """Laurent monomial prod x_i^{e_i} in the canonical ordering."""

    exponents: tuple

    def __post_init__(self):
        if sum(self.exponents) != 0:
            raise ValueError("equation must have total degree zero")
        if sum(abs(e) for e in self.exponents) % 2 != 0:
            raise ValueError("l1-norm must be even")

    @property
    def weight(self):
        return sum(abs(e) for e in self.exponents) // 2

    def is_trivial(self):
        return all(e == 0 for e in self.exponents)


def equation_weight(f: MTEquation) -> int:
    return f.weight


def index_tuple(f: MTEquation) -> tuple:
    """Concatenate i repeated e_i times for e_i > 0 and c(i) repeated |e_i|
    times for e_i < 0, in index order.  Indices are 0-based canonical."""
    n2 = len(f.exponents)
    g = n2 // 2
    out = []
    for i, e in enumerate(f.exponents):
        if e > 0:
            out.extend([i] * e)
        elif e < 0:
            out.extend([(i + g) % n2] * (-e))
    return tuple(out)


# ---------------------------------------------------------------------------
# CM type extraction from tangent matrices

def splitting_element(generators, ctx, retries: int = 20, rng_seed: int = 11):
    """A linear combination of commuting matrices whose eigenvalues are all
    distinct (so its centralizer is the full diagonalizable algebra)."""
    import random
    from mpmath import mp
    rng = random.Random(rng_seed)
    with ctx.active():
        n = len(generators[0])
        for attempt in range(retries):
            if attempt == 0 and len(generators) == 1:
                coeffs = [1]
            else:
                coeffs = [rng.randint(-9, 9) for _ in generators]
            M = mp.matrix(n, n)
            for c, Gmat in zip(coeffs, generators):
                M += c * mp.matrix(Gmat)
            eigvals = mp.eig(M, left=False, right=False)
            sep = min((abs(a - b) for a, b in
                       itertools.combinations(eigvals, 2)), default=1)
            if sep > ctx.tolerance(slack=ctx.decimal_digits // 2):
                return M, coeffs
        raise ArithmeticError("no splitting element found; inputs may not "
                              "generate a semisimple algebra of full degree")


def compute_cm_type(M_list, algebra: CMAlgebra, gen_embeddings, ctx):
    """Match the tangent representation to embeddings of E.

    M_list are the g x g tangent matrices of the algebra generators (one
    generator per component: the matrix by which the component's field
    generator acts).  gen_embeddings[ci][k] is the numeric image of
    component ci's generator under its k-th embedding.  Returns
    (CMTypeData, change-of-basis matrix) with the eigenbasis columns
    matched to embedding labels.
    """
    from mpmath import mp
    with ctx.active():
        S, coeffs = splitting_element(M_list, ctx)
        E, EL = mp.eig(S)
        g = len(M_list[0])
        # eigenvalue of generator ci on eigenvector v: (M_ci v) / v
        phi = []
        cols = []
        for j in range(g):
            v = mp.matrix([EL[i, j] for i in range(g)])
            pivot = max(range(g), key=lambda i: abs(v[i]))
            label = None
            for ci, embvals in enumerate(gen_embeddings):
                Mv = mp.matrix(M_list[ci]) * v
                lam = Mv[pivot] / v[pivot]
                resid = mp.norm(Mv - lam * v)
                if resid > ctx.tolerance() * (1 + mp.norm(v)):
                    label = None
                    break
                # does lam match an embedding of component ci?
                dists = [abs(lam - ev) for ev in embvals]
                k = min(range(len(embvals)), key=lambda i: dists[i])
                if dists[k] < ctx.tolerance(slack=ctx.decimal_digits // 2):
                    label = (ci, k)
            if label is None:
                raise ArithmeticError("eigenvalue did not match any embedding")
            phi.append(label)
            cols.append(v)
        cm = CMTypeData(algebra, tuple(phi))
        change = mp.matrix(g, g)
        for j, v in enumerate(cols):
            for i in range(g):
                change[i, j] = v[i]
        return cm, change


# ---------------------------------------------------------------------------
# reflex data and the kernel lattice

@dataclass(frozen=True)
class ReflexData:
    """Reflex data of one component's CM type, relative to F with Galois
    group G (abelian, represented by a GaloisAction)."""

    induced: tuple        # G-element names forming Phi-tilde
    reflex_group: tuple   # names of H* = stabilizer of Phi-tilde
    cosets: tuple         # right cosets H*g as sorted name-tuples (all of G)
    reflex_degree: int


def _identity_name(action: GaloisAction):
    for name in action.names:
        if action.images[name] == action.images[name].field.gen():
            return name
    raise ValueError("action has no identity element")


def _inverse_name(action: GaloisAction, h):
    ident = _identity_name(action)
    for name in action.names:
        if action.compose(h, name) == ident:
            return name
    raise ValueError("no inverse found")


def _embedding_index_of(action: GaloisAction, name):
    """Index (in F's EmbeddingSet) of the embedding sigma_0 . g."""
    return action.perms[name][_base_index(action)]


def _base_index(action: GaloisAction):
    return 0


def induced_type(cm: CMTypeData, ci: int, action: GaloisAction,
                 restriction) -> tuple:
    """Phi-tilde for component ci: group elements g whose associated
    embedding of F restricts into Phi on E_ci."""
    phi_idx = set(cm.phi_component(ci))
    out = []
    for name in action.names:
        fidx = _embedding_index_of(action, name)
        if restriction[fidx] in phi_idx:
            out.append(name)
    if 2 * len(out) != action.order:
        raise ArithmeticError("induced type has wrong size; restriction "
                              "data inconsistent")
    return tuple(out)


def reflex(induced: tuple, action: GaloisAction) -> ReflexData:
    """Stabilizer H* = {h : Phi-tilde . h = Phi-tilde}, its right cosets,
    and the reflex degree |G| / |H*|."""
    ind = set(induced)
    stab = []
    for h in action.names:
        if {action.compose(g, h) for g in induced} == ind:
            stab.append(h)
    seen, cosets = set(), []
    for g in action.names:
        coset = tuple(sorted(action.compose(h, g) for h in stab))
        if coset not in seen:
            seen.add(coset)
            cosets.append(coset)
    return ReflexData(tuple(induced), tuple(stab), tuple(cosets),
                      len(cosets))


def reflex_norm_matrix(cm: CMTypeData, ci: int, rd: ReflexData,
                       action: GaloisAction, restriction):
    """Integer matrix of the reflex-norm map on character lattices for
    component ci: rows indexed by Hom(E_ci, C) (root order), columns by the
    right cosets of H* (= Hom(E*, C)); entry = number of induced-type lifts
    h with lift_a . h^{-1} in that coset."""
    deg = cm.algebra.emb_sets[ci].degree
    coset_of = {}
    for idx, coset in enumerate(rd.cosets):
        for name in coset:
            coset_of[name] = idx
    rows = []
    for a in range(deg):
        lift = next(name for name in action.names
                    if restriction[_embedding_index_of(action, name)] == a)
        row = [0] * len(rd.cosets)
        for h in rd.induced:
            t = action.compose(lift, _inverse_name(action, h))
            row[coset_of[t]] += 1
        rows.append(row)
    return rows


def _composed_matrix(cm: CMTypeData, action: GaloisAction, restrictions):
    """Full composed map Z[Hom(E,C)] -> Z[Hom(F,C)]: for canonical label
    position p (component ci, root a), column t in G:
    entry = #{h in Phi-tilde_ci : lift_a . h^{-1} = t}."""
    cols = list(action.names)
    col_index = {t: i for i, t in enumerate(cols)}
    mat = []
    for label in cm.canonical_labels:
        ci, a = label
        ind = induced_type(cm, ci, action, restrictions[ci])
        lift = next(name for name in action.names
                    if restrictions[ci][_embedding_index_of(action, name)] == a)
        row = [0] * len(cols)
        for h in ind:
            t = action.compose(lift, _inverse_name(action, h))
            row[col_index[t]] += 1
        mat.append(row)
    return mat


def mt_kernel(cm: CMTypeData, action: GaloisAction,
              restrictions) -> LatticeBasis:
    """Saturated kernel lattice {e in Z^2g : sum_p e_p row_p = 0} of the
    composed character map, in the canonical label ordering."""
    M = _composed_matrix(cm, action, restrictions)
    n2 = len(M)
    # e.M = 0  <=>  M^T e = 0
    MT = [[M[i][j] for i in range(n2)] for j in range(len(M[0]))]
    ker = integer_kernel_basis(MT)
    return saturation(ker)


def mt_equations(kernel: LatticeBasis):
    """LLL-reduced equation basis with a deterministic sign convention
    (first nonzero exponent positive), sorted for reproducibility."""
    if kernel.rank == 0:
        return []
    red = lll_reduce(kernel)
    eqs = []
    for v in red.vectors:
        v = list(v)
        first = next((x for x in v if x != 0), 0)
        if first < 0:
            v = [-x for x in v]
        eqs.append(MTEquation(tuple(v)))
    eqs.sort(key=lambda f: (f.weight, f.exponents))
    return eqs


def is_mt_equation(f: MTEquation, kernel: LatticeBasis) -> bool:
    return sublattice_membership(saturation(kernel), f.exponents)


def galois_act_on_equation(perm, f: MTEquation) -> MTEquation:
    """tau f for tau acting on canonical labels by the permutation `perm`:
    e'_{perm[i]} = e_i."""
    out = [0] * len(f.exponents)
    for i, e in enumerate(f.exponents):
        out[perm[i]] += e
    return MTEquation(tuple(out))


def canonical_label_permutation(cm: CMTypeData, action: GaloisAction,
                                restrictions, name) -> tuple:
    """Permutation of canonical label positions induced by a Galois element
    of F (acting on embeddings by post-composition)."""
    labels = cm.canonical_labels
    pos = {l: i for i, l in enumerate(labels)}
    perm = []
    for label in labels:
        ci, a = label
        restriction = restrictions[ci]
        emb_F = action.emb
        # embedding chi_a of E_ci: any F-embedding restricting to it,
        # post-composed with tau
        fidx = next(t for t in range(emb_F.degree) if restriction[t] == a)
        # tau moves embedding index fidx to ...
        # chi . tau corresponds to root index perm_tau[fidx]
        new_fidx = action.perms[name][fidx]
        perm.append(pos[(ci, restriction[new_fidx])])
    if sorted(perm) != list(range(len(labels))):
        raise ArithmeticError("Galois element does not permute labels")
    return tuple(perm)


# ---------------------------------------------------------------------------
# degeneracy

def divisor_sublattice(kernel: LatticeBasis) -> LatticeBasis:
    """Sublattice of divisor-generated relations: all weight-1 kernel
    vectors together with the differences mu_i - mu_j of the conjugate-pair
    sums mu_i = e_i + e_{c(i)} (polarization relations), intersected with
    the kernel."""
    n2 = kernel.ambient_rank
    g = n2 // 2
    sat_k = saturation(kernel)
    gens = []
    for i, j in itertools.permutations(range(n2), 2):
        v = [0] * n2
        v[i] = 1
        v[j] = -1
        if sublattice_membership(sat_k, v):
            gens.append(tuple(v))
    for i in range(1, g):
        v = [0] * n2
        v[0] += 1
        v[g] += 1
        v[i] -= 1
        v[i + g] -= 1
        if sublattice_membership(sat_k, v):
            gens.append(tuple(v))
    if not gens:
        return LatticeBasis(n2, ())
    basis = _independent_subset(gens, n2)
    return saturation(LatticeBasis(n2, tuple(basis)))


def _independent_subset(vectors, n2):
    import sympy
    basis = []
    for v in vectors:
        cand = basis + [list(v)]
        if sympy.Matrix(cand).rank() > len(basis):
            basis.append(list(v))
    return [tuple(v) for v in basis]


def degeneracy_test(kernel: LatticeBasis):
    """Degenerate iff the saturated divisor sublattice is a proper
    sublattice of the kernel.  Witnesses are LLL-reduced kernel vectors
    outside the divisor part, sign-normalized."""
    if kernel.rank == 0:
        return False, []
    D = divisor_sublattice(kernel)
    if D.rank == kernel.rank:
        return False, []
    red = lll_reduce(saturation(kernel))
    witnesses = []
    for v in red.vectors:
        if not sublattice_membership(D, v):
            v = list(v)
            first = next(x for x in v if x != 0)
            if first < 0:
                v = [-x for x in v]
            witnesses.append(MTEquation(tuple(v)))
    witnesses.sort(key=lambda f: (f.weight, f.exponents))
    return True, witnesses


def galois_orbits(equations, perms, modulo: LatticeBasis = None):
    """Group equations into orbits under the label permutations.  With
    `modulo` given, two equations are identified when they differ, up to
    sign and Galois, by a vector of that sublattice (e.g. the divisor
    sublattice: exceptional classes are only defined modulo divisors)."""
    def same(f, h):
        for p in perms + [tuple(range(len(f.exponents)))]:
            ph = galois_act_on_equation(p, h)
            for s in (1, -1):
                diff = [a - s * b for a, b in zip(f.exponents, ph.exponents)]
                if modulo is None:
                    if all(x == 0 for x in diff):
                        return True
                elif sublattice_membership(modulo, diff):
                    return True
        return False

    groups = []
    for f in equations:
        for grp in groups:
            if same(f, grp[0]):
                grp.append(f)
                break
        else:
            groups.append([f])
    return [tuple(g) for g in groups]
