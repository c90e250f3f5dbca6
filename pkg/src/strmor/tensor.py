"""Mode-n unfolding bookkeeping, symmetrization, and Kronecker-free contraction.

Conventions
-----------
A state tensor of order ``xi + 1`` is stored through its mode-1 unfolding,
an ``n x n**xi`` matrix. Column ``omega`` (1-based) encodes the state
multi-index ``(i_1, ..., i_xi)`` via

    omega = i_1 + sum_{l >= 2} (i_l - 1) * n**(l-1),

so the first index varies fastest. In a Kronecker product
``v_1 (x) v_2 (x) ... (x) v_xi`` the *last* factor's index varies fastest;
hence digit ``l`` (0-based, fastest first) of a column pairs with Kronecker
factor ``xi - l``. All contraction helpers below take their factor lists in
Kronecker order (first factor = slowest index) and perform that reversal in
one place.

Bilinear unfoldings are ``n x (m * n**eta)`` with the input channel as the
slowest column digit, matching the ``u (x) x (x) ... (x) x`` argument order.
Their mode-2 unfoldings put the output mode in the fastest digit, which is
the slot the output-direction solve pairs with.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .model import BilinTerm, PolyTerm, canonical_matrix, to_coo


class TensorError(ValueError):
    pass


@dataclass(frozen=True)
class MultiIndex:
    """1-based multi-index ``(i_1, ..., i_k)`` with all digits in [1, base]."""

    digits: tuple
    base: int

    def __post_init__(self):
        if not all(1 <= d <= self.base for d in self.digits):
            raise TensorError(f"digits {self.digits} out of range for base {self.base}")


def col_index(idx: MultiIndex) -> int:
    """Column number (1-based) of the multi-index in a mode-1 unfolding."""
    omega, weight = 0, 1
    for d in idx.digits:
        omega += (d - 1) * weight
        weight *= idx.base
    return omega + 1


def decode(omega: int, n: int, order: int) -> MultiIndex:
    """Inverse of :func:`col_index`."""
    if not 1 <= omega <= n ** order:
        raise TensorError(f"column {omega} out of range for n={n}, order={order}")
    rem, digits = omega - 1, []
    for _ in range(order):
        digits.append(rem % n + 1)
        rem //= n
    return MultiIndex(digits=tuple(digits), base=n)


def _digit_count_multiplicity(digits) -> int:
    """Number of distinct permutations of the digit tuple (multinomial)."""
    counts = {}
    for d in digits:
        counts[d] = counts.get(d, 0) + 1
    out = math.factorial(len(digits))
    for c in counts.values():
        out //= math.factorial(c)
    return out


def _encode0(digits, n) -> int:
    omega, weight = 0, 1
    for d in digits:
        omega += d * weight
        weight *= n
    return omega


def _decode0(col, n, order):
    rem, digits = int(col), []
    for _ in range(order):
        digits.append(rem % n)
        rem //= n
    return tuple(digits)


def _symmetrize_entries(rows, cols, vals, n, order):
    """Average every entry over all permutations of its column multi-index.

    The multiplicity is a property of the receiving column's digit multiset,
    so plain sums are scattered first and each output entry is divided once;
    integer-valued inputs then reproduce hand-computed averages bit-exactly.
    """
    acc = {}
    for r, c, v in zip(rows, cols, vals):
        digits = _decode0(c, n, order)
        for perm in set(itertools.permutations(digits)):
            key = (int(r), _encode0(perm, n))
            acc[key] = acc.get(key, 0.0) + v
    if not acc:
        return np.zeros(0, int), np.zeros(0, int), np.zeros(0)
    keys = sorted(acc)
    out_r = np.array([k[0] for k in keys])
    out_c = np.array([k[1] for k in keys])
    out_v = np.array([
        acc[k] / _digit_count_multiplicity(_decode0(k[1], n, order))
        for k in keys
    ])
    return out_r, out_c, out_v


def _symmetrize_matrix(mat, n, order):
    coo = to_coo(mat)
    r, c, v = _symmetrize_entries(coo.row, coo.col, coo.data, n, order)
    out = sp.coo_matrix((v, (r, c)), shape=mat.shape)
    if sp.issparse(mat):
        return canonical_matrix(out)
    return np.asarray(out.todense())


def symmetrize_mode1(term: PolyTerm) -> PolyTerm:
    """Symmetrized copy: ``H~ (x ... x) == H (x ... x)`` for every x.

    Each sparse entry is scattered onto all distinct permutations of its
    column multi-index with weight one over the permutation count, then
    coalesced; this is idempotent and preserves column sums exactly.
    """
    terms = tuple(
        (coeff, _symmetrize_matrix(m, term.n, term.order))
        for coeff, m in term.terms
    )
    return PolyTerm(order=term.order, n=term.n, terms=terms, symmetric=True)


def symmetrize_state_part(term: BilinTerm) -> BilinTerm:
    """Symmetrize over the state modes inside each input-channel block."""
    if term.order == 1:
        if term.symmetric:
            return term
        return BilinTerm(order=1, n=term.n, m=term.m, terms=term.terms,
                         symmetric=True)
    n, eta, m = term.n, term.order, term.m
    block = n ** eta
    new_terms = []
    for coeff, mat in term.terms:
        coo = to_coo(mat)
        j_in = coo.col // block
        state = coo.col % block
        rows_out, cols_out, vals_out = [], [], []
        for j in range(m):
            sel = j_in == j
            r, c, v = _symmetrize_entries(
                coo.row[sel], state[sel], coo.data[sel], n, eta
            )
            rows_out.append(r)
            cols_out.append(c + j * block)
            vals_out.append(v)
        out = sp.coo_matrix(
            (np.concatenate(vals_out),
             (np.concatenate(rows_out), np.concatenate(cols_out))),
            shape=mat.shape,
        )
        new_terms.append(
            (coeff, out.tocsr() if sp.issparse(mat) else np.asarray(out.todense()))
        )
    return BilinTerm(order=eta, n=n, m=m, terms=tuple(new_terms), symmetric=True)


def mode2_poly(term: PolyTerm, p=()) -> sp.csr_matrix:
    """Mode-2 unfolding of a symmetric polynomial term at parameter ``p``.

    For symmetric state modes every mode-m unfolding with m >= 2 coincides,
    so only this one is materialized. Columns run over (output index, then
    the remaining state indices), output fastest: the slot structure that
    pairs with ``solves (x) ... (x) output-direction solve``.
    """
    if not term.symmetric:
        raise TensorError("mode-2 unfolding requires a symmetric term")
    n, xi = term.n, term.order
    coo = to_coo(term.eval(p))
    # column digits after unfolding: (out, x_2, ..., x_xi), out fastest
    d0 = coo.col % n
    rest = coo.col // n
    new_cols = coo.row + rest * n
    return sp.coo_matrix((coo.data, (d0, new_cols)), shape=(n, n ** xi)).tocsr()


def mode2_bilin(term: BilinTerm, p=()) -> sp.csr_matrix:
    """Mode-2 unfolding of a state-symmetric bilinear term at ``p``.

    Shape ``n x (m * n**eta)``; column digits are (output index fastest,
    remaining state indices, input channel slowest), reserving the fastest
    slot for the output direction and the slowest for the identity block.
    """
    if not term.symmetric:
        raise TensorError("mode-2 unfolding requires a state-symmetric term")
    n, eta, m = term.n, term.order, term.m
    block = n ** eta
    coo = to_coo(term.eval(p))
    j_in = coo.col // block
    state = coo.col % block
    d0 = state % n
    rest = state // n
    new_cols = coo.row + rest * n + j_in * block
    return sp.coo_matrix((coo.data, (d0, new_cols)), shape=(n, m * block)).tocsr()


# ---------------------------------------------------------------------------
# contraction kernel

def _group_sum(inv, n_groups, payload):
    if len(inv) > 4096:
        sel = sp.csr_matrix(
            (np.ones(len(inv)), (inv, np.arange(len(inv)))),
            shape=(n_groups, len(inv)),
        )
        return sel @ payload
    out = np.zeros((n_groups, payload.shape[1]), dtype=payload.dtype)
    np.add.at(out, inv, payload)
    return out


def contract_columns(rows, cols, vals, n_rows, sizes, factors):
    """Dense ``T @ (F_1 (x) F_2 (x) ... (x) F_k)`` for a sparse T.

    ``(rows, cols, vals)`` hold T in coordinate form with 0-based flat
    column indices in mixed radix ``sizes`` (first radix fastest).
    ``factors`` is in Kronecker order: ``factors[0]`` pairs with the slowest
    column digit. Peeling runs slowest digit first so intermediates stay at
    ``O(nnz * prod(widths))`` and the flat output column order matches the
    Kronecker product of the factor columns.
    """
    sizes = list(sizes)
    if len(factors) != len(sizes):
        raise TensorError("one factor per column digit required")
    mats = [np.atleast_2d(np.asarray(f)) for f in reversed(factors)]
    mats = [m.T if m.shape[0] == 1 and s != 1 else m for m, s in zip(mats, sizes)]
    for m_, s_ in zip(mats, sizes):
        if m_.shape[0] != s_:
            raise TensorError(f"factor shape {m_.shape} does not match radix {s_}")
    width_out = int(np.prod([m_.shape[1] for m_ in mats]))
    dtype = np.result_type(np.asarray(vals).dtype, *(m_.dtype for m_ in mats))
    out = np.zeros((n_rows, width_out), dtype=dtype)
    ne = len(vals)
    if ne == 0:
        return out
    rows = np.asarray(rows, dtype=np.int64)
    keys = np.asarray(cols, dtype=np.int64)
    payload = np.asarray(vals, dtype=dtype).reshape(ne, 1)
    for level in range(len(sizes) - 1, -1, -1):
        hi = int(math.prod(sizes[:level]))
        digit = keys // hi
        keys = keys % hi
        mat = mats[level]
        payload = np.einsum("ew,ek->ewk", payload, mat[digit]).reshape(
            len(rows), -1
        )
        combo = rows * hi + keys
        uniq, inv = np.unique(combo, return_inverse=True)
        if len(uniq) < len(combo):
            payload = _group_sum(inv, len(uniq), payload)
            rows = uniq // hi
            keys = uniq % hi
        else:
            order = np.argsort(combo)
            rows, keys, payload = rows[order], keys[order], payload[order]
    out[rows] = payload
    return out


def _term_coo(mat):
    coo = to_coo(mat)
    return coo.row, coo.col, coo.data


def _apply_dense(mat, sizes, factors):
    """Dense unfolding contraction via reshape and mode-wise products.

    Axis l+1 of the reshaped tensor is column digit D-1-l, which pairs with
    ``factors[l]``; each tensordot consumes the leading digit axis and
    appends its output axis, so the final axis order is the Kronecker order
    of the factor columns.
    """
    D = len(sizes)
    mats = []
    for i, f in enumerate(factors):
        radix = sizes[D - 1 - i]
        F = np.atleast_2d(np.asarray(f))
        if F.shape[0] == 1 and radix != 1:
            F = F.T
        if F.shape[0] != radix:
            raise TensorError(f"factor shape {F.shape} does not match radix {radix}")
        mats.append(F)
    out = mat.reshape([mat.shape[0]] + list(reversed(list(sizes))))
    for F in mats:
        out = np.tensordot(out, F, axes=([1], [0]))
    return out.reshape(mat.shape[0], -1)


def apply_unfolding(mat, sizes, factors):
    """Apply Kronecker-ordered factors to an unfolding given as a matrix."""
    if isinstance(mat, np.ndarray):
        return _apply_dense(np.ascontiguousarray(mat), sizes, factors)
    rows, cols, vals = _term_coo(mat)
    return contract_columns(rows, cols, vals, mat.shape[0], sizes, factors)


def apply_poly(term: PolyTerm, vectors, p=()):
    """``H_(1) (v_1 (x) ... (x) v_xi)`` in O(nnz), never forming n**xi.

    ``vectors[0]`` is the first (slowest) Kronecker factor.
    """
    if len(vectors) != term.order:
        raise TensorError(f"need {term.order} vectors, got {len(vectors)}")
    n = term.n
    for v in vectors:
        if len(v) != n:
            raise TensorError("vector length mismatch")
    cols = [np.reshape(v, (n, 1)) for v in vectors]
    out = apply_unfolding(term.eval(p), [n] * term.order, cols)
    return out[:, 0]


def apply_bilin(term: BilinTerm, u, vectors, p=()):
    """``N_(1) (u (x) v_1 (x) ... (x) v_eta)`` in O(nnz)."""
    if len(vectors) != term.order:
        raise TensorError(f"need {term.order} vectors, got {len(vectors)}")
    n, m = term.n, term.m
    if len(u) != m:
        raise TensorError("input vector length mismatch")
    factors = [np.reshape(u, (m, 1))] + [np.reshape(v, (n, 1)) for v in vectors]
    out = apply_unfolding(
        term.eval(p), [n] * term.order + [m], factors
    )
    return out[:, 0]


_REDUCED_COLUMN_GUARD = 10 ** 8


def _reduce_state_block(rows, cols, vals, n, order, Vb, Wb, dtype):
    """``Wb^T T (Vb (x) ... (x) Vb)`` grouping on the slowest state digit.

    Peak memory stays at O(nnz + n * r**(order-1) + r**order) because the
    full ``n x r**order`` intermediate is never formed.
    """
    r, rw = Vb.shape[1], Wb.shape[1]
    if order == 1:
        T = sp.csr_matrix((vals, (rows, cols)), shape=(n, n))
        return (Wb.T @ (T @ Vb)).astype(dtype)
    out = np.zeros((rw, r ** order), dtype=dtype)
    out3 = out.reshape(rw, r, r ** (order - 1))
    hi = n ** (order - 1)
    top = cols // hi
    rest = cols % hi
    for g in np.unique(top):
        sel = top == g
        Z = contract_columns(
            rows[sel], rest[sel], vals[sel], n,
            [n] * (order - 1), [Vb] * (order - 1),
        )
        Q = Wb.T @ Z
        out3 += Vb[int(g)][None, :, None] * Q[:, None, :]
    return out


def reduce_poly(Wb, term: PolyTerm, Vb, p=()):
    """Projected unfolding ``Wb^T H_(1) (Vb (x) ... (x) Vb)``, dense.

    Output columns follow the base-r analogue of the mode-1 column order.
    """
    n, xi = term.n, term.order
    if Vb.shape[0] != n or Wb.shape[0] != n:
        raise TensorError("basis row count must match the state dimension")
    r = Vb.shape[1]
    if r ** xi > _REDUCED_COLUMN_GUARD:
        raise TensorError(f"reduced unfolding too large: {r}**{xi}")
    rows, cols, vals = _term_coo(term.eval(p))
    dtype = np.result_type(vals.dtype, Vb.dtype, Wb.dtype)
    return _reduce_state_block(rows, cols, vals, n, xi, Vb, Wb, dtype)


def reduce_bilin(Wb, term: BilinTerm, Vb, p=()):
    """Projected unfolding with the input block untouched.

    Returns ``Wb^T N_(1) (I_m (x) Vb (x) ... (x) Vb)`` of shape
    ``rw x (m * r**eta)``.
    """
    n, eta, m = term.n, term.order, term.m
    if Vb.shape[0] != n or Wb.shape[0] != n:
        raise TensorError("basis row count must match the state dimension")
    r, rw = Vb.shape[1], Wb.shape[1]
    if m * r ** eta > _REDUCED_COLUMN_GUARD:
        raise TensorError(f"reduced unfolding too large: {m}*{r}**{eta}")
    rows, cols, vals = _term_coo(term.eval(p))
    dtype = np.result_type(vals.dtype, Vb.dtype, Wb.dtype)
    block_in = n ** eta
    block_out = r ** eta
    out = np.zeros((rw, m * block_out), dtype=dtype)
    j_in = cols // block_in
    state = cols % block_in
    for j in range(m):
        sel = j_in == j
        out[:, j * block_out:(j + 1) * block_out] = _reduce_state_block(
            rows[sel], state[sel], vals[sel], n, eta, Vb, Wb, dtype
        )
    return out


def reduce_poly_term(Wb, term: PolyTerm, Vb) -> PolyTerm:
    """Project every affine piece, keeping coefficients verbatim."""
    r = Vb.shape[1]
    pieces = tuple(
        (coeff, _reduce_state_block(*_term_coo(mat), term.n, term.order, Vb, Wb,
                                    np.result_type(Vb.dtype, Wb.dtype)))
        for coeff, mat in term.terms
    )
    return PolyTerm(order=term.order, n=r, terms=pieces, symmetric=term.symmetric)


def reduce_bilin_term(Wb, term: BilinTerm, Vb) -> BilinTerm:
    r = Vb.shape[1]
    pieces = []
    for coeff, mat in term.terms:
        one = BilinTerm(order=term.order, n=term.n, m=term.m,
                        terms=((None, mat),), symmetric=term.symmetric)
        pieces.append((coeff, reduce_bilin(Wb, one, Vb)))
    return BilinTerm(order=term.order, n=r, m=term.m, terms=tuple(pieces),
                     symmetric=term.symmetric)
