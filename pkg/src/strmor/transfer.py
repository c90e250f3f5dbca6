"""Shifted pencil solves and generalized multivariate transfer functions.

The linear kernel is ``F_L(s) = C K(s)^-1 B``. Higher kernels chain inner
solves through the polynomial/bilinear unfoldings::

    F_H^(xi)(s_1..s_{xi+1}) = C K^-1(s_{xi+1}) H ( K^-1(s_xi)B (x) ... (x) K^-1(s_1)B )
    F_N^(eta)(s_1..s_{eta+1}) = C K^-1(s_{eta+1}) N ( I_m (x) K^-1(s_eta)B (x) ... (x) K^-1(s_1)B )

so the first frequency argument attaches to the fastest Kronecker slot.
Adjoint solves use the plain transpose (not the conjugate transpose), which
is the convention all projection-space formulas here rely on.

All derivatives are analytic: ``d/ds K^-1 = -K^-1 (dK/ds) K^-1`` with the
pencil derivative assembled from the differentiated coefficient
expressions. Finite differences appear only in tests.
"""

from __future__ import annotations

import threading
from collections import OrderedDict

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.linalg import lapack

from .expr import eval_expr
from .model import ModelError, System, parse_family
from .tensor import apply_unfolding

#: Largest dimension factorized densely; banded/sparse LU above.
DENSE_SOLVE_LIMIT = 2000

#: Relative residual enforced on every accepted solve.
RESIDUAL_RTOL = 1e-10

_EPS = float(np.finfo(float).eps)
_COND_LIMIT = 1.0 / (100.0 * _EPS)


class SolveError(RuntimeError):
    pass


class SingularPencilError(SolveError):
    """Pencil numerically singular or ill-conditioned at a named point."""


def _point_label(s, p):
    return f"s={s!r}" + (f", p={tuple(p)!r}" if len(p) else "")


class _Factorization:
    """LU handle for one pencil value, usable for plain and transpose solves.

    Singularity is judged against the pencil's term scale
    ``sum_i |kappa_i(s, p)| ||A_i||_1`` rather than ``||K(s, p)||`` alone, so
    cancellation between terms (a delay pencil at one of its roots, say) is
    detected even when the assembled matrix looks well scaled relative to
    itself.
    """

    def __init__(self, K, s, p, term_scale=None):
        self.s, self.p = s, tuple(p)
        self.matrix = K
        n = K.shape[0]
        if n <= DENSE_SOLVE_LIMIT:
            dense = np.asarray(K.todense() if sp.issparse(K) else K, dtype=complex)
            self._lu, self._piv = sla.lu_factor(dense)
            anorm = np.linalg.norm(dense, 1)
            rcond = lapack.zgecon(self._lu, anorm)[0] if anorm > 0 else 0.0
            cond = np.inf if rcond == 0 else 1.0 / rcond
            self._sparse = None
        else:
            csc = sp.csc_matrix(K, dtype=complex)
            try:
                self._sparse = spla.splu(csc)
            except RuntimeError as exc:
                raise SingularPencilError(
                    f"pencil factorization failed at {_point_label(s, p)}: {exc}"
                ) from exc
            inv = spla.LinearOperator(
                K.shape,
                matvec=lambda b: self._sparse.solve(b),
                rmatvec=lambda b: self._sparse.solve(b, trans="H"),
                dtype=complex,
            )
            anorm = spla.norm(csc, 1)
            cond = spla.onenormest(inv) * anorm
        if term_scale is not None and anorm > 0:
            cond = cond * max(term_scale / anorm, 1.0)
        if not np.isfinite(cond) or cond > _COND_LIMIT:
            raise SingularPencilError(
                f"pencil singular or ill-conditioned at {_point_label(s, p)} "
                f"(condition estimate {cond:.3e})"
            )
        self.cond_estimate = cond
        self.anorm = anorm

    def _raw_solve(self, R, adjoint):
        if self._sparse is None:
            return sla.lu_solve((self._lu, self._piv), R, trans=1 if adjoint else 0)
        return np.column_stack(
            [self._sparse.solve(R[:, k], trans="T" if adjoint else "N")
             for k in range(R.shape[1])]
        )

    def solve(self, rhs, adjoint=False):
        """Solve with one step of iterative refinement if needed.

        The accepted residual is backward-error sized,
        ``||K X - R|| <= rtol (||R|| + ||K||_1 ||X||)``: a plain ``||R||``
        normalization is unattainable for well-posed pencils once the
        condition number passes ``rtol / eps``.
        """
        rhs = np.asarray(rhs, dtype=complex)
        squeeze = rhs.ndim == 1
        R = rhs.reshape(-1, 1) if squeeze else rhs
        X = self._raw_solve(R, adjoint)
        K = self.matrix
        op = K.T if adjoint else K
        res = op @ X - R
        scale = np.linalg.norm(R)
        if scale > 0 and np.linalg.norm(res) > RESIDUAL_RTOL * scale:
            X = X - self._raw_solve(np.asarray(res), adjoint)
            res = op @ X - R
        accept = RESIDUAL_RTOL * (scale + self.anorm * np.linalg.norm(X))
        if scale > 0 and np.linalg.norm(res) > accept:
            raise SingularPencilError(
                f"solve residual {np.linalg.norm(res) / scale:.3e} exceeds "
                f"the backward tolerance at {_point_label(self.s, self.p)}"
            )
        return X[:, 0] if squeeze else X


class SolveCache:
    """Bounded LRU map from (s, p) to a pencil factorization.

    One factorization serves both the plain and the transposed solve, so the
    key does not distinguish the adjoint flag. Eviction never changes
    results, only costs; hit/miss counters are kept for diagnostics.
    """

    def __init__(self, capacity: int = 12):
        self.capacity = capacity
        self.hits = 0
        self.misses = 0
        self._store = OrderedDict()
        self._lock = threading.Lock()

    def get(self, operator, s, p) -> _Factorization:
        key = (complex(s), tuple(float(v) for v in p))
        with self._lock:
            if key in self._store:
                self.hits += 1
                self._store.move_to_end(key)
                return self._store[key]
        fac = _Factorization(operator.eval(s, p), s, p,
                             term_scale=_term_scale(operator, s, p))
        with self._lock:
            self.misses += 1
            self._store[key] = fac
            while len(self._store) > self.capacity:
                self._store.popitem(last=False)
        return fac


def _operator_of(sys):
    return sys.operator if isinstance(sys, System) else sys


def _one_norm(mat):
    if sp.issparse(mat):
        return spla.norm(sp.csr_matrix(mat), 1)
    return np.linalg.norm(mat, 1)


def _term_scale(operator, s, p) -> float:
    return float(sum(
        abs(eval_expr(kappa, s, p)) * _one_norm(A)
        for kappa, A in operator.terms
    ))


def factorize(sys, s, p=(), cache: SolveCache | None = None) -> _Factorization:
    op = _operator_of(sys)
    if cache is not None:
        return cache.get(op, s, p)
    return _Factorization(op.eval(s, p), s, p, term_scale=_term_scale(op, s, p))


def shifted_solve(sys, s, p, rhs, adjoint=False, cache: SolveCache | None = None):
    """Solve ``K(s, p) X = rhs`` (or the transposed system when adjoint).

    The relative residual is checked on every solve; singular or
    ill-conditioned pencils raise :class:`SingularPencilError` naming the
    offending point.
    """
    return factorize(sys, s, p, cache).solve(rhs, adjoint=adjoint)


# ---------------------------------------------------------------------------
# transfer function evaluation


def _input_at(sys: System, s, p):
    return sys.input_map.eval(p, s=s if sys.input_map.s_dependent else None)


def _output_at(sys: System, s, p):
    return sys.output_map.eval(p, s=s if sys.output_map.s_dependent else None)


def _family_term(sys: System, kind, order):
    if kind == "N":
        return sys.bilin_of_order(order)
    if kind == "H":
        return sys.poly_of_order(order)
    return None


def _family_shape(sys: System, kind, order):
    if kind == "L":
        return sys.p_out, sys.m
    if kind == "N":
        return sys.p_out, sys.m ** (order + 1)
    return sys.p_out, sys.m ** order


def family_arity(kind, order) -> int:
    return 1 if kind == "L" else order + 1


def _solve_columns(sys, s, p, cache, d_ds=False, dp=None):
    """``K^-1(s) B(s)`` and optionally its s- or p-derivative."""
    fac = factorize(sys, s, p, cache)
    B = _input_at(sys, s, p)
    X = fac.solve(B)
    if not d_ds and dp is None:
        return X
    if d_ds:
        dB = sys.input_map.eval_ds(p, s) if sys.input_map.s_dependent else 0.0
        dK = sys.operator.eval_ds(s, p)
    else:
        dB = sys.input_map.eval_dp(p, dp, s=s if sys.input_map.s_dependent else None)
        dK = sys.operator.eval_dp(s, p, dp)
    return fac.solve(np.asarray(dB if np.ndim(dB) else np.zeros_like(X)) - dK @ X)


def _tf_eval(sys: System, kind, order, s_list, p, cache,
             ds_index=None, dp_index=None):
    n, m, p_out = sys.n, sys.m, sys.p_out
    arity = family_arity(kind, order)
    if len(s_list) != arity:
        raise ModelError(f"family {kind}{order or ''} takes {arity} arguments")
    if ds_index is not None and not 1 <= ds_index <= arity:
        raise ModelError(f"argument index {ds_index} out of range 1..{arity}")
    s_out = s_list[-1]
    fac_out = factorize(sys, s_out, p, cache)
    C = _output_at(sys, s_out, p)

    if kind == "L":
        X = fac_out.solve(_input_at(sys, s_out, p))
        if ds_index is None and dp_index is None:
            return C @ X
        if ds_index is not None:
            dX = _solve_columns(sys, s_out, p, cache, d_ds=True)
            dC = (sys.output_map.eval_ds(p, s_out)
                  if sys.output_map.s_dependent else 0.0)
            return (dC @ X if np.ndim(dC) else 0.0) + C @ dX
        dX = _solve_columns(sys, s_out, p, cache, dp=dp_index)
        dC = sys.output_map.eval_dp(
            p, dp_index, s=s_out if sys.output_map.s_dependent else None
        )
        return dC @ X + C @ dX

    term = _family_term(sys, kind, order)
    shape = _family_shape(sys, kind, order)
    if term is None:
        return np.zeros(shape, dtype=complex)

    inner = [_solve_columns(sys, s_list[l - 1], p, cache) for l in range(1, order + 1)]

    def assemble(slot_mats, tensor_mat):
        # slot_mats[l-1] pairs with frequency s_l; Kronecker order reverses
        factors = list(reversed(slot_mats))
        if kind == "N":
            factors = [np.eye(m)] + factors
            sizes = [n] * order + [m]
        else:
            sizes = [n] * order
        return apply_unfolding(tensor_mat, sizes, factors)

    T = term.eval(p)
    if ds_index is None and dp_index is None:
        Y = assemble(inner, T)
        return C @ fac_out.solve(Y)

    if ds_index is not None:
        if ds_index <= order:
            slot = list(inner)
            slot[ds_index - 1] = _solve_columns(
                sys, s_list[ds_index - 1], p, cache, d_ds=True
            )
            Y = assemble(slot, T)
            return C @ fac_out.solve(Y)
        # outer argument
        Y = assemble(inner, T)
        Z = fac_out.solve(Y)
        dK = sys.operator.eval_ds(s_out, p)
        dZ = -fac_out.solve(dK @ Z)
        dC = (sys.output_map.eval_ds(p, s_out)
              if sys.output_map.s_dependent else 0.0)
        return (dC @ Z if np.ndim(dC) else 0.0) + C @ dZ

    # parameter gradient component: product rule over every slot
    j = dp_index
    Y = assemble(inner, T)
    Z = fac_out.solve(Y)
    dC = sys.output_map.eval_dp(
        p, j, s=s_out if sys.output_map.s_dependent else None
    )
    total = dC @ Z
    dK_out = sys.operator.eval_dp(s_out, p, j)
    total += C @ fac_out.solve(-(dK_out @ Z))
    dT = term.eval_dp(p, j)
    total += C @ fac_out.solve(assemble(inner, dT))
    for l in range(1, order + 1):
        slot = list(inner)
        slot[l - 1] = _solve_columns(sys, s_list[l - 1], p, cache, dp=j)
        total += C @ fac_out.solve(assemble(slot, T))
    return total


def tf_linear(sys: System, s, p=(), cache=None):
    """``C(p) K^-1(s, p) B(p)`` using the frequency-dependent maps if set."""
    return _tf_eval(sys, "L", None, [s], p, cache)


def tf_poly(sys: System, xi: int, s_list, p=(), cache=None):
    """Degree-``xi`` polynomial kernel; ``s_list`` holds xi+1 frequencies."""
    return _tf_eval(sys, "H", xi, list(s_list), p, cache)


def tf_bilin(sys: System, eta: int, s_list, p=(), cache=None):
    """Order-``eta`` bilinear kernel; the identity input block is preserved."""
    return _tf_eval(sys, "N", eta, list(s_list), p, cache)


def tf_family(sys: System, family: str, s_list, p=(), cache=None):
    """Evaluate a kernel by its family label ('L', 'N1', 'H2', ...)."""
    kind, order = parse_family(family)
    return _tf_eval(sys, kind, order, list(s_list), p, cache)


def dtf(sys: System, family: str, j: int, s_list, p=(), cache=None):
    """Analytic partial derivative with respect to the j-th frequency (1-based)."""
    kind, order = parse_family(family)
    return _tf_eval(sys, kind, order, list(s_list), p, cache, ds_index=j)


def grad_p_tf(sys: System, family: str, s_list, p, cache=None):
    """Analytic parameter gradient: one matrix per parameter component."""
    kind, order = parse_family(family)
    return [
        _tf_eval(sys, kind, order, list(s_list), p, cache, dp_index=j)
        for j in range(sys.nparams)
    ]
