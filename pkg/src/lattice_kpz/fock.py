"""Exact bosonic Fock-space matrices on a ring and the hardcore (exclusion) projection.

States of the n-particle sector are occupation tuples m (sum m = n).  The
ladder operators act as a_j|m> = sqrt(m_j)|m - e_j>, a*_j|m> = sqrt(m_j + 1)|m + e_j>,
so every matrix element is a signed sum of square roots of integers.  The
exact path keeps those as sympy surds, the float path as scipy CSR matrices.

For a hardcore state the occupation coefficient equals the subset coefficient
v(Lambda) of the exclusion process (the 1/sqrt(n!) normalisation of the
symmetric wavefunction cancels), so exclusion operators are compared entry by
entry on the hardcore block.
"""
from __future__ import annotations

import itertools
import math
from collections import defaultdict
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import scipy.sparse as sp
import sympy

from .core import ParameterError

MAX_DIMENSION = 200_000


@dataclass(frozen=True)
class SectorBasis:
    """Lexicographically ordered occupation tuples of n bosons on an N-site ring."""

    ring_size: int
    particle_number: int
    states: tuple = field(repr=False)

    @property
    def dim(self) -> int:
        return len(self.states)

    @property
    def index(self) -> dict:
        return _index_of(self)

    def hardcore_mask(self) -> np.ndarray:
        return np.array([max(s, default=0) <= 1 for s in self.states], dtype=bool)


@lru_cache(maxsize=None)
def _index_of(basis: SectorBasis) -> dict:
    return {s: i for i, s in enumerate(basis.states)}


def _check(ring_size: int, n: int) -> None:
    if int(ring_size) != ring_size or ring_size < 3:
        raise ParameterError("ring_size must be an integer >= 3")
    if int(n) != n or n < 0:
        raise ParameterError("particle number must be a non-negative integer")
    if math.comb(ring_size + n - 1, n) > MAX_DIMENSION:
        raise ParameterError(f"sector dimension C({ring_size + n - 1},{n}) exceeds {MAX_DIMENSION}")


@lru_cache(maxsize=None)
def sector_basis(ring_size: int, n: int) -> SectorBasis:
    _check(ring_size, n)
    states = []
    for sites in itertools.combinations_with_replacement(range(ring_size), n):
        occ = [0] * ring_size
        for s in sites:
            occ[s] += 1
        states.append(tuple(occ))
    states.sort()
    return SectorBasis(ring_size, n, tuple(states))


@dataclass
class SectorOperator:
    """Matrix from ``domain`` to ``codomain``; ``matrix`` is scipy CSR or a sympy matrix."""

    matrix: object
    domain: SectorBasis
    codomain: SectorBasis

    @property
    def exact(self) -> bool:
        return isinstance(self.matrix, sympy.MatrixBase)

    def dense(self) -> np.ndarray:
        if self.exact:
            return np.array(self.matrix.evalf(30).tolist(), dtype=float).reshape(self.shape)
        return self.matrix.toarray()

    @property
    def shape(self) -> tuple[int, int]:
        return (self.codomain.dim, self.domain.dim)

    @property
    def T(self) -> "SectorOperator":
        return SectorOperator(self.matrix.T, self.codomain, self.domain)


# An operator word is a product of ladder factors written left to right and
# applied right to left: ((site_offset, is_creation), ...), with a sign.
H0_TERMS = (
    (+1, ((1, True), (1, False))),
    (-1, ((1, True), (0, False))),
    (-1, ((0, True), (1, False))),
    (+1, ((0, True), (0, False))),
)
A_TERMS = (
    (+1, ((0, False), (1, True), (1, False))),
    (+1, ((0, False), (0, False), (1, True))),
    (-1, ((0, True), (1, False), (1, False))),
    (-1, ((0, True), (0, False), (1, False))),
)


def _apply_word(word, j: int, occ: tuple, ring_size: int):
    """Apply a ladder word anchored at site j; returns (new_occ, squared amplitude) or None."""
    m = list(occ)
    amp2 = 1
    for offset, create in reversed(word):
        s = (j + offset) % ring_size
        if create:
            m[s] += 1
            amp2 *= m[s]
        else:
            if m[s] == 0:
                return None
            amp2 *= m[s]
            m[s] -= 1
    return tuple(m), amp2


def _accumulate(terms, domain: SectorBasis, codomain: SectorBasis):
    """entries[(row, col)][k] = integer coefficient of sqrt(k)."""
    entries = defaultdict(lambda: defaultdict(int))
    idx = codomain.index
    n_sites = domain.ring_size
    for col, occ in enumerate(domain.states):
        for sign, word in terms:
            for j in range(n_sites):
                hit = _apply_word(word, j, occ, n_sites)
                if hit is None:
                    continue
                new, amp2 = hit
                entries[(idx[new], col)][amp2] += sign
    return entries


def _materialize(entries, domain, codomain, exact: bool):
    shape = (codomain.dim, domain.dim)
    if exact:
        data = {}
        for key, surds in entries.items():
            val = sum((c * sympy.sqrt(k) for k, c in surds.items() if c), sympy.Integer(0))
            if val != 0:
                data[key] = val
        return sympy.SparseMatrix(shape[0], shape[1], data)
    rows, cols, vals = [], [], []
    for (r, c), surds in entries.items():
        v = sum(cf * math.sqrt(k) for k, cf in surds.items())
        if v != 0.0:
            rows.append(r)
            cols.append(c)
            vals.append(v)
    return sp.csr_matrix((vals, (rows, cols)), shape=shape)


def build_h0(ring_size: int, n: int, *, exact: bool = False) -> SectorOperator:
    """sum_j (a_{j+1} - a_j)*(a_{j+1} - a_j) on the n-particle sector."""
    basis = sector_basis(ring_size, n)
    return SectorOperator(_materialize(_accumulate(H0_TERMS, basis, basis), basis, basis, exact),
                          basis, basis)


def build_a(ring_size: int, n: int, *, exact: bool = False) -> SectorOperator:
    """The cubic operator A from sector n+1 to sector n."""
    dom, cod = sector_basis(ring_size, n + 1), sector_basis(ring_size, n)
    return SectorOperator(_materialize(_accumulate(A_TERMS, dom, cod), dom, cod, exact), dom, cod)


def build_a_star(ring_size: int, n: int, *, exact: bool = False) -> SectorOperator:
    """A* from sector n to sector n+1 as the Fock adjoint (transpose, all entries are real)."""
    return build_a(ring_size, n, exact=exact).T


def build_projection(ring_size: int, n: int, *, exact: bool = False) -> SectorOperator:
    """Diagonal projection onto occupation states with every m_j <= 1."""
    if n > ring_size:
        raise ParameterError("hardcore sector needs n <= ring_size")
    basis = sector_basis(ring_size, n)
    mask = basis.hardcore_mask().astype(int)
    mat = sympy.diag(*mask.tolist()) if exact else sp.diags(mask.astype(float)).tocsr()
    if exact and basis.dim == 0:
        mat = sympy.zeros(0, 0)
    return SectorOperator(mat, basis, basis)


def hardcore_states(ring_size: int, n: int) -> list[tuple]:
    return [s for s in sector_basis(ring_size, n).states if max(s, default=0) <= 1]


def _subset_of(occ) -> frozenset:
    return frozenset(i for i, m in enumerate(occ) if m)


def _occ_of(subset, ring_size: int) -> tuple:
    return tuple(1 if i in subset else 0 for i in range(ring_size))


def _hardcore_operator(fn, ring_size: int, n_dom: int, n_cod: int, exact: bool):
    """Matrix on hardcore blocks from fn(subset) -> iterable of (coefficient, image subset)."""
    dom = hardcore_states(ring_size, n_dom)
    cod = hardcore_states(ring_size, n_cod)
    idx = {s: i for i, s in enumerate(cod)}
    acc = defaultdict(int)
    for col, occ in enumerate(dom):
        for coef, img in fn(_subset_of(occ)):
            acc[(idx[_occ_of(img, ring_size)], col)] += coef
    return _dict_matrix(acc, len(cod), len(dom), exact)


def _dict_matrix(acc, rows, cols, exact):
    if exact:
        return sympy.SparseMatrix(rows, cols, {k: sympy.Integer(v) for k, v in acc.items() if v})
    keys = [k for k, v in acc.items() if v]
    return sp.csr_matrix(([float(acc[k]) for k in keys], ([k[0] for k in keys], [k[1] for k in keys])),
                         shape=(rows, cols))


def _exchange_terms(lam: frozenset, ring_size: int):
    # (S v)(Lam) = -sum_x (v(Lam_{x,x+1}) - v(Lam)); column form: S e_Lam.
    for x in range(ring_size):
        y = (x + 1) % ring_size
        if (x in lam) != (y in lam):
            swapped = lam ^ {x, y}
            yield 1, lam
            yield -1, swapped


def _outer_left(lam, n_sites):
    return [x for x in range(n_sites) if x not in lam and (x + 1) % n_sites in lam]


def _outer_right(lam, n_sites):
    return [x for x in range(n_sites) if x not in lam and (x - 1) % n_sites in lam]


def _inner_left(lam, n_sites):
    return [x for x in lam if (x - 1) % n_sites not in lam]


def _inner_right(lam, n_sites):
    return [x for x in lam if (x + 1) % n_sites not in lam]


def _exclusion_a(ring_size: int, n: int, exact: bool):
    """(A v)(Lam) = sum_{x in l(Lam)} v(Lam+x) - sum_{x in r(Lam)} v(Lam+x); sector n+1 -> n."""
    cod = hardcore_states(ring_size, n)
    dom = hardcore_states(ring_size, n + 1)
    idx = {s: i for i, s in enumerate(dom)}
    acc = defaultdict(int)
    for row, occ in enumerate(cod):
        lam = _subset_of(occ)
        for x in _outer_left(lam, ring_size):
            acc[(row, idx[_occ_of(lam | {x}, ring_size)])] += 1
        for x in _outer_right(lam, ring_size):
            acc[(row, idx[_occ_of(lam | {x}, ring_size)])] -= 1
    return _dict_matrix(acc, len(cod), len(dom), exact)


def _exclusion_a_star(ring_size: int, n: int, exact: bool):
    """(A* v)(Lam) = sum_{x in inner-left} v(Lam-x) - sum_{x in inner-right} v(Lam-x); n -> n+1."""
    cod = hardcore_states(ring_size, n + 1)
    dom = hardcore_states(ring_size, n)
    idx = {s: i for i, s in enumerate(dom)}
    acc = defaultdict(int)
    for row, occ in enumerate(cod):
        lam = _subset_of(occ)
        for x in _inner_left(lam, ring_size):
            acc[(row, idx[_occ_of(lam - {x}, ring_size)])] += 1
        for x in _inner_right(lam, ring_size):
            acc[(row, idx[_occ_of(lam - {x}, ring_size)])] -= 1
    return _dict_matrix(acc, len(cod), len(dom), exact)


def build_exchange(ring_size: int, n: int, *, exact: bool = False):
    """Symmetric exclusion part S on hardcore sector n (subset basis)."""
    return _hardcore_operator(lambda lam: _exchange_terms(lam, ring_size), ring_size, n, n, exact)


@dataclass
class HardcoreBlocks:
    """Blocks of an operator on the hardcore subspace around sector n.

    ``diag`` maps n -> n, ``down`` maps n+1 -> n, ``up`` maps n -> n+1.
    """

    diag: object
    down: object
    up: object


def build_h_asep(ring_size: int, n: int, p: float, *, exact: bool = False) -> HardcoreBlocks:
    """H_AS = S + p (A* - A) restricted to the blocks touching sector n."""
    if exact:
        p = sympy.nsimplify(p)
    s = build_exchange(ring_size, n, exact=exact)
    up = _exclusion_a_star(ring_size, n, exact) if n < ring_size else None
    down = -_exclusion_a(ring_size, n, exact) if n < ring_size else None
    return HardcoreBlocks(s, None if down is None else p * down, None if up is None else p * up)


def neumann_restriction(ring_size: int, n: int, *, exact: bool = False):
    """Quadratic form of H0 keeping only hops whose start and end are both hardcore.

    The position-space form of H0 is a sum of squared differences over nearest
    neighbour hops; dropping every hop that creates a double occupation leaves,
    on the hardcore block, one diagonal unit and one -1 per allowed hop.
    """
    def hops(lam):
        for x in lam:
            for y in ((x + 1) % ring_size, (x - 1) % ring_size):
                if y not in lam:
                    yield 1, lam
                    yield -1, (lam - {x}) | {y}
    return _hardcore_operator(hops, ring_size, n, n, exact)


def _hardcore_block(op: SectorOperator):
    rows = np.nonzero(op.codomain.hardcore_mask())[0]
    cols = np.nonzero(op.domain.hardcore_mask())[0]
    if op.exact:
        return op.matrix.extract(rows.tolist(), cols.tolist())
    return op.matrix[rows][:, cols]


def _max_abs(mat) -> object:
    if isinstance(mat, sympy.MatrixBase):
        vals = [abs(sympy.nsimplify(v)) for v in mat.values()] if mat.shape[0] * mat.shape[1] else []
        vals = [sympy.simplify(v) for v in vals]
        return max(vals, default=sympy.Integer(0))
    mat = sp.csr_matrix(mat)
    return float(np.max(np.abs(mat.data))) if mat.nnz else 0.0


def _as_report_number(x):
    if isinstance(x, sympy.Basic):
        return int(x) if x.is_Integer else (str(x) if not x.is_number else float(x))
    return float(x)


def verify_mapping(ring_size: int, n: int, p: float, *, lam: float | None = None,
                   exact: bool | None = None) -> dict:
    """Compare the hardcore projection of H0 + lam (A* - A) with H_AS around sector n.

    The symmetric part is compared in its Neumann form (hops into a double
    occupation dropped); the literal product P H0 P is also reported, since it
    differs from S by twice the number of occupied nearest-neighbour pairs on
    the diagonal.
    """
    lam = p if lam is None else lam
    exact = (ring_size <= 6) if exact is None else exact
    if exact:
        lam_x = sympy.nsimplify(lam)
    else:
        lam_x = lam
    has_up = n < ring_size
    h_as = build_h_asep(ring_size, n, p, exact=exact)
    neu = neumann_restriction(ring_size, n, exact=exact)
    h0_lit = _hardcore_block(build_h0(ring_size, n, exact=exact))
    diffs = {"diag": _max_abs(neu - h_as.diag)}
    if has_up:
        a = _hardcore_block(build_a(ring_size, n, exact=exact))
        a_star = _hardcore_block(build_a_star(ring_size, n, exact=exact))
        diffs["down"] = _max_abs(-lam_x * a - h_as.down)
        diffs["up"] = _max_abs(lam_x * a_star - h_as.up)
    max_diff = max(diffs.values(), key=lambda v: float(v))
    return {
        "ring_size": ring_size, "n": n, "p": float(p), "lambda": float(lam), "exact": exact,
        "max_abs_diff": _as_report_number(max_diff),
        "block_diffs": {k: _as_report_number(v) for k, v in diffs.items()},
        "literal_php_diag_diff": _as_report_number(_max_abs(h0_lit - h_as.diag)),
        "dims": {"sector": sector_basis(ring_size, n).dim, "hardcore": len(hardcore_states(ring_size, n))},
    }


def verify_neumann(ring_size: int, n: int) -> dict:
    """Smallest eigenvalue of H0 - P H0 P on sector n, with P H0 P the Neumann form."""
    basis = sector_basis(ring_size, n)
    h0 = build_h0(ring_size, n).dense()
    neu = np.zeros_like(h0)
    hc = np.nonzero(basis.hardcore_mask())[0]
    neu[np.ix_(hc, hc)] = neumann_restriction(ring_size, n).toarray()
    lit = np.zeros_like(h0)
    lit[np.ix_(hc, hc)] = h0[np.ix_(hc, hc)]
    eig = lambda m: float(np.linalg.eigvalsh(m).min()) if m.size else 0.0
    return {"ring_size": ring_size, "n": n, "dims": basis.dim,
            "min_eig": eig(h0 - neu), "min_eig_literal_projection": eig(h0 - lit)}


def shift_permutation(basis: SectorBasis) -> sp.csr_matrix:
    """Ring translation m_j -> m_{j-1} as a permutation matrix."""
    idx = basis.index
    rows = [idx[s[-1:] + s[:-1]] for s in basis.states]
    return sp.csr_matrix((np.ones(basis.dim), (rows, range(basis.dim))), shape=(basis.dim, basis.dim))


def exclusion_generator(ring_size: int, p: float) -> np.ndarray:
    """Matrix of the exclusion generator in the product basis psi_Lam = prod (2 eta - 1).

    Entry [Lam, Lam'] = <psi_Lam L psi_Lam'> under Bernoulli(1/2), over all
    subsets ordered by (size, occupation tuple) as in ``hardcore_states``.
    """
    if ring_size > 12:
        raise ParameterError("exclusion_generator enumerates 2^N configurations; keep N <= 12")
    configs = np.array(list(itertools.product((0, 1), repeat=ring_size)), dtype=int)
    subsets = [s for n in range(ring_size + 1) for s in hardcore_states(ring_size, n)]
    spins = 2 * configs - 1
    psi = np.array([np.prod(spins[:, np.array(s, bool)], axis=1) for s in subsets]).T
    lpsi = np.zeros_like(psi, dtype=float)
    for j in range(ring_size):
        k = (j + 1) % ring_size
        rate = (1 + p) * configs[:, j] * (1 - configs[:, k]) + (1 - p) * (1 - configs[:, j]) * configs[:, k]
        swapped = configs.copy()
        swapped[:, [j, k]] = swapped[:, [k, j]]
        code = swapped @ (1 << np.arange(ring_size - 1, -1, -1))
        lpsi += rate[:, None] * (psi[code] - psi)
    return psi.T @ lpsi / len(configs)


def exclusion_hamiltonian_full(ring_size: int, p: float) -> np.ndarray:
    """Dense H_AS on all subsets, in the ordering of ``exclusion_generator``."""
    sizes = [len(hardcore_states(ring_size, n)) for n in range(ring_size + 1)]
    off = np.concatenate([[0], np.cumsum(sizes)])
    h = np.zeros((off[-1], off[-1]))
    for n in range(ring_size + 1):
        blocks = build_h_asep(ring_size, n, p)
        h[off[n]:off[n + 1], off[n]:off[n + 1]] = blocks.diag.toarray()
        if n < ring_size:
            h[off[n]:off[n + 1], off[n + 1]:off[n + 2]] = blocks.down.toarray()
            h[off[n + 1]:off[n + 2], off[n]:off[n + 1]] = blocks.up.toarray()
    return h


# Momentum-space cross-check of A*: wavefunctions as dense symmetric tensors.

def occupation_to_tensor(vec, basis: SectorBasis) -> np.ndarray:
    """Symmetric position wavefunction f(x_1..x_n) of an occupation-basis vector."""
    n, size = basis.particle_number, basis.ring_size
    f = np.zeros((size,) * n, dtype=complex)
    for c, occ in zip(vec, basis.states):
        sites = [j for j, m in enumerate(occ) for _ in range(m)]
        norm = math.sqrt(math.prod(math.factorial(m) for m in occ) / math.factorial(n))
        for perm in set(itertools.permutations(sites)):
            f[perm] = c * norm
    return f


def tensor_to_occupation(f: np.ndarray, basis: SectorBasis) -> np.ndarray:
    n = basis.particle_number
    out = np.empty(basis.dim, dtype=complex)
    for i, occ in enumerate(basis.states):
        sites = tuple(j for j, m in enumerate(occ) for _ in range(m))
        out[i] = math.sqrt(math.factorial(n) / math.prod(math.factorial(m) for m in occ)) * f[sites]
    return out


def a_star_momentum(f_hat: np.ndarray) -> np.ndarray:
    """A* in momentum variables on the ring (k in units of 1/N).

    (A* f)(k_1..k_{n+1}) = 2i (n+1)^{-1/2} sum_{j<l} (2 sin 2pi(k_j+k_l) + sin 2pi k_j
    + sin 2pi k_l) f(k's without j and l, k_j + k_l).
    """
    n = f_hat.ndim
    size = f_hat.shape[0] if n else None
    if n == 0:
        raise ParameterError("use a_star_momentum on sectors n >= 1")
    m = n + 1
    k = np.arange(size) / size
    grids = np.meshgrid(*([k] * m), indexing="ij")
    idx = np.meshgrid(*([np.arange(size)] * m), indexing="ij")
    out = np.zeros((size,) * m, dtype=complex)
    for j in range(m):
        for l in range(j + 1, m):
            factor = (2 * np.sin(2 * np.pi * (grids[j] + grids[l])) + np.sin(2 * np.pi * grids[j])
                      + np.sin(2 * np.pi * grids[l]))
            rest = [idx[i] for i in range(m) if i not in (j, l)]
            merged = (idx[j] + idx[l]) % size
            out += factor * f_hat[tuple(rest + [merged])]
    return 2j / math.sqrt(m) * out


def fourier(f: np.ndarray) -> np.ndarray:
    """f_hat(k) = sum_x exp(-i 2 pi k.x) f(x) with k on the 1/N grid."""
    return np.fft.fftn(f) if f.ndim else f


def inverse_fourier(f_hat: np.ndarray) -> np.ndarray:
    return np.fft.ifftn(f_hat) if f_hat.ndim else f_hat


def a_star_via_momentum(ring_size: int, n: int) -> np.ndarray:
    """Dense A*: sector n -> n+1 assembled column by column from the momentum formula."""
    dom, cod = sector_basis(ring_size, n), sector_basis(ring_size, n + 1)
    out = np.zeros((cod.dim, dom.dim), dtype=complex)
    for col in range(dom.dim):
        e = np.zeros(dom.dim)
        e[col] = 1.0
        g = inverse_fourier(a_star_momentum(fourier(occupation_to_tensor(e, dom))))
        out[:, col] = tensor_to_occupation(g, cod)
    return out
