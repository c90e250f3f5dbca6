"""Interpolatory projection spaces, realification, and orthonormalization.

For every plan entry (sigma, mu, p, b, c) and enabled family the primitive
columns are

    V side:  K^-1(sigma) B b
             K^-1(sigma) N_eta ( I_m (x) (K^-1(sigma) B b)^(x eta) )
             K^-1(sigma) H_xi  ( (K^-1(sigma) B b)^(x xi) )
    W side:  K^-T(mu) C^T c
             K^-T(sigma) (N_eta)_(2) ( I_m (x) ... (x) K^-T(mu) C^T c )
             K^-T(sigma) (H_xi)_(2)  ( ... (x) K^-T(mu) C^T c )

Note the asymmetry on the W side: the outer transposed solve sits at sigma
while the output-direction solve sits at mu. The mixed-point derivative
matching relies on exactly this pairing, so it is not "symmetrized".
Frequency-dependent input/output maps are evaluated at the frequency of the
solve they feed. Parametric systems use (sigma_i, p_i) throughout.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .model import InterpPlan, System, parse_family
from .tensor import apply_unfolding, mode2_bilin, mode2_poly
from .transfer import SolveCache, _input_at, _output_at, factorize

#: Hard floor for rank decisions relative to the top singular value.
RANK_FLOOR = 1e3 * float(np.finfo(float).eps)

_REALIFY_DROP = 1e-14


@dataclass(frozen=True)
class ColumnTag:
    """Provenance of one raw basis column."""

    side: str     # "V" or "W"
    family: str   # "L", "N<eta>", "H<xi>"
    entry: int    # plan entry index


@dataclass(frozen=True)
class BasisBundle:
    """Raw interpolation columns plus their realified orthonormal spans."""

    V_raw: np.ndarray
    W_raw: np.ndarray
    v_tags: tuple
    w_tags: tuple
    V: np.ndarray
    W: np.ndarray
    dedup_tol: float
    galerkin: bool = False


def _canonical_families(families):
    rank = {"L": 0, "N": 1, "H": 2}

    def key(label):
        kind, order = parse_family(label)
        return (rank[kind], order or 0)

    return tuple(sorted(set(families), key=key))


def primitive_columns(sys: System, entry, families, entry_index=0, cache=None):
    """Labeled complex columns of one plan entry, canonical family order.

    Returns two lists of ``(ColumnTag, column)`` pairs for the V and W side.
    The inner solves of the N/H families reuse the L-family solves at the
    same point, which is exact by construction, not an approximation.
    """
    n, m = sys.n, sys.m
    p = entry.p
    sigma, mu = entry.sigma, entry.mu
    fac_s = factorize(sys, sigma, p, cache)
    fac_m = fac_s if mu == sigma else factorize(sys, mu, p, cache)

    Bb = _input_at(sys, sigma, p) @ entry.b_vec
    x_sig = fac_s.solve(Bb)
    Cc = _output_at(sys, mu, p).T @ entry.c_vec
    w_mu = fac_m.solve(Cc, adjoint=True)

    x_col = x_sig.reshape(n, 1)
    w_col = w_mu.reshape(n, 1)
    eye_m = np.eye(m)

    v_out, w_out = [], []
    for label in _canonical_families(families):
        kind, order = parse_family(label)
        tag_v = ColumnTag("V", label, entry_index)
        tag_w = ColumnTag("W", label, entry_index)
        if kind == "L":
            v_out.append((tag_v, x_sig))
            w_out.append((tag_w, w_mu))
            continue
        if kind == "N":
            term = sys.bilin_of_order(order)
            Y = apply_unfolding(
                term.eval(p), [n] * order + [m], [eye_m] + [x_col] * order
            )
            Xv = fac_s.solve(Y)
            for k in range(m):
                v_out.append((tag_v, Xv[:, k]))
            Y2 = apply_unfolding(
                mode2_bilin(term, p), [n] * order + [m],
                [eye_m] + [x_col] * (order - 1) + [w_col],
            )
            Xw = fac_s.solve(Y2, adjoint=True)
            for k in range(m):
                w_out.append((tag_w, Xw[:, k]))
            continue
        # H family
        term = sys.poly_of_order(order)
        Y = apply_unfolding(term.eval(p), [n] * order, [x_col] * order)
        v_out.append((tag_v, fac_s.solve(Y[:, 0])))
        Y2 = apply_unfolding(
            mode2_poly(term, p), [n] * order, [x_col] * (order - 1) + [w_col]
        )
        w_out.append((tag_w, fac_s.solve(Y2[:, 0], adjoint=True)))
    return v_out, w_out


def realify(Z: np.ndarray) -> np.ndarray:
    """Split complex columns into [Re Z, Im Z], dropping negligible blocks.

    Imaginary (or real) blocks with column norm below ``1e-14 * ||Z||`` are
    dropped; the real span of the result contains the real and imaginary
    part of every input column up to that tolerance.
    """
    Z = np.atleast_2d(np.asarray(Z))
    if Z.shape[1] == 0:
        return np.zeros((Z.shape[0], 0))
    scale = np.linalg.norm(Z)
    cut = _REALIFY_DROP * scale
    re = np.ascontiguousarray(Z.real)
    im = np.ascontiguousarray(Z.imag)
    keep_im = [k for k in range(im.shape[1]) if np.linalg.norm(im[:, k]) > cut]
    blocks = [re]
    if keep_im:
        blocks.append(im[:, keep_im])
    return np.column_stack(blocks)


def _normalize_columns(M: np.ndarray) -> np.ndarray:
    """Scale every column to unit norm (exact zeros are dropped).

    The projection spaces are spans, so per-column scaling is free; without
    it the tensor-family columns (often orders of magnitude smaller than
    the linear ones) would fall below the rank-revealing floor and their
    interpolation directions would be lost.
    """
    if M.shape[1] == 0:
        return M
    norms = np.linalg.norm(M, axis=0)
    keep = norms > 0.0
    return M[:, keep] / norms[keep]


def orth_dedup(M: np.ndarray, tol: float = 0.0) -> np.ndarray:
    """Rank-revealing orthonormalization via SVD.

    With ``tol == 0`` the full numerical rank is retained (only singular
    values below ``1e3 * eps * sigma_max`` are dropped), which keeps the raw
    interpolation columns exactly in the span.
    """
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.shape[1] == 0:
        warnings.warn("orthonormalizing an empty column set")
        return np.zeros((M.shape[0], 0))
    U, sv, _ = np.linalg.svd(M, full_matrices=False)
    if sv.size == 0 or sv[0] == 0.0:
        warnings.warn("zero matrix has no basis")
        return np.zeros((M.shape[0], 0))
    thresh = max(tol, RANK_FLOOR) * sv[0]
    k = int(np.sum(sv >= thresh))
    if k == 0:
        warnings.warn("all singular values below tolerance")
    return U[:, :k]


def build_VW(sys: System, plan: InterpPlan, cache: SolveCache | None = None,
             dedup_tol: float = 0.0) -> BasisBundle:
    """Assemble, realify and orthonormalize the projection spaces of a plan.

    Column order is canonical (plan entry major; family minor with L, then N
    by rising order, then H by rising order) so downstream decompositions
    are reproducible. In Galerkin mode both sides are pooled into V and
    W is set equal to V.
    """
    plan.validate_against(sys)
    if cache is None:
        cache = SolveCache()
    v_cols, w_cols, v_tags, w_tags = [], [], [], []
    for i, entry in enumerate(plan.entries):
        vc, wc = primitive_columns(sys, entry, plan.families, i, cache)
        for tag, col in vc:
            v_tags.append(tag)
            v_cols.append(col)
        for tag, col in wc:
            w_tags.append(tag)
            w_cols.append(col)
    n = sys.n
    V_raw = np.column_stack(v_cols) if v_cols else np.zeros((n, 0), complex)
    W_raw = np.column_stack(w_cols) if w_cols else np.zeros((n, 0), complex)
    if plan.galerkin:
        pooled = np.column_stack([V_raw, W_raw])
        V = orth_dedup(_normalize_columns(realify(pooled)), dedup_tol)
        W = V
    else:
        V = orth_dedup(_normalize_columns(realify(V_raw)), dedup_tol)
        W = orth_dedup(_normalize_columns(realify(W_raw)), dedup_tol)
    return BasisBundle(
        V_raw=V_raw, W_raw=W_raw, v_tags=tuple(v_tags), w_tags=tuple(w_tags),
        V=V, W=W, dedup_tol=dedup_tol, galerkin=plan.galerkin,
    )
