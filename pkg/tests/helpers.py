"""Shared builders and oracles for the test suite."""

import itertools

import numpy as np
import scipy.sparse as sp

from strmor import (
    BilinTerm, Const, ParamMatrix, PolyTerm, S, StructuredOperator, System,
    delay_factor, param, symmetrize_mode1, symmetrize_state_part,
)
from strmor.model import parse_family
from strmor.transfer import family_arity


def rand_sparse(rng, shape, density=0.15, scale=1.0):
    M = rng.standard_normal(shape) * scale
    M[rng.random(shape) > density] = 0.0
    return M


def rand_coo(rng, shape, nnz, scale=1.0):
    """Random sparse matrix with a fixed nonzero budget (huge shapes ok)."""
    rows = rng.integers(0, shape[0], nnz)
    cols = rng.integers(0, shape[1], nnz)
    vals = rng.standard_normal(nnz) * scale
    return sp.coo_matrix((vals, (rows, cols)), shape=shape).tocsr()


def dense(mat):
    """Plain ndarray view of a possibly-sparse stored matrix."""
    return np.asarray(mat.todense()) if sp.issparse(mat) else np.asarray(mat)


def kron_vec(vectors):
    out = np.asarray(vectors[0])
    for v in vectors[1:]:
        out = np.kron(out, np.asarray(v))
    return out


def kron_mat(mats):
    out = np.array([[1.0]])
    for m in mats:
        out = np.kron(out, np.atleast_2d(m))
    return out


def make_system(kind, n, d=3, m=1, p_out=1, seed=0, parametric=False):
    """Random stable structured system with full polynomial/bilinear terms.

    ``kind`` in {"first", "second", "delay"}; tensors are sparse, scaled so
    the nonlinear response stays moderate, and symmetrized.
    """
    rng = np.random.default_rng(seed)
    if kind == "first":
        G = rng.standard_normal((n, n))
        A = G - (np.linalg.norm(G, 2) + 0.5) * np.eye(n)
        terms = [(S, np.eye(n)), (Const(1.0), -A)]
        if parametric:
            terms.append((param(0), np.diag(rng.random(n))))
    elif kind == "second":
        G = rng.standard_normal((n, n))
        K = G @ G.T + n * np.eye(n)
        D = 0.05 * K + 0.1 * np.eye(n)
        terms = [(S ** 2, np.eye(n)), (S, D), (Const(1.0), K)]
        if parametric:
            terms.append((param(0), np.diag(rng.random(n))))
    elif kind == "delay":
        G = rng.standard_normal((n, n))
        A0 = G - (np.linalg.norm(G, 2) + 0.5) * np.eye(n)
        Ad = 0.3 * np.diag(rng.random(n))
        if parametric:
            terms = [(S, np.eye(n)), (Const(1.0), -A0),
                     (param(0) * delay_factor(0.7), -Ad)]
        else:
            terms = [(S, np.eye(n)), (Const(1.0), -A0), (delay_factor(0.7), -Ad)]
    else:
        raise ValueError(kind)
    op = StructuredOperator(n=n, terms=tuple(terms))
    B = rng.standard_normal((n, m))
    C = rng.standard_normal((p_out, n))
    poly, bilin = [], []
    if d >= 2:
        poly.append(symmetrize_mode1(PolyTerm.from_matrix(
            2, n, sp.csr_matrix(rand_sparse(rng, (n, n ** 2), scale=0.5 / n)))))
        bilin.append(BilinTerm.from_matrix(
            1, n, m, rand_sparse(rng, (n, m * n), scale=0.5 / n), symmetric=True))
    if d >= 3:
        poly.append(symmetrize_mode1(PolyTerm.from_matrix(
            3, n, rand_coo(rng, (n, n ** 3), nnz=8 * n, scale=0.5 / n ** 2))))
        bilin.append(symmetrize_state_part(BilinTerm.from_matrix(
            2, n, m, rand_coo(rng, (n, m * n ** 2), nnz=8 * n, scale=0.5 / n))))
    return System(
        operator=op,
        input_map=ParamMatrix.constant(B),
        output_map=ParamMatrix.constant(C),
        poly=tuple(poly),
        bilin=tuple(bilin),
        degree=d,
        nparams=1 if parametric else 0,
    )


def rel_mismatch(a, b):
    """max |a - b| / (1 + max |a|), the interpolation-condition measure."""
    a, b = np.asarray(a), np.asarray(b)
    return float(np.abs(a - b).max() / (1.0 + np.abs(a).max()))


def theorem_value_patterns(plan):
    """(entry, family, argument list) triples for the value conditions.

    For each entry: the linear kernel at sigma and at mu, and every higher
    family at (sigma, ..., sigma) and (sigma, ..., sigma, mu).
    """
    out = []
    for e in plan.entries:
        out.append((e, "L", [e.sigma]))
        out.append((e, "L", [e.mu]))
        for label in plan.families:
            kind, order = parse_family(label)
            if kind == "L":
                continue
            ar = family_arity(kind, order)
            out.append((e, label, [e.sigma] * ar))
            if e.mu != e.sigma:
                out.append((e, label, [e.sigma] * (ar - 1) + [e.mu]))
    return out


def all_permutations(seq):
    return list(itertools.permutations(seq))
