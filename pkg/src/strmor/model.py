"""Data model for polynomial structured (parametric) dynamical systems.

A system couples a frequency-domain pencil ``K(s, p) = sum_i kappa_i(s, p) A_i``
with affine input/output maps, sparse polynomial state terms (mode-1 tensor
unfoldings) and bilinear input-state terms. All stored matrices are real;
complex arithmetic enters only through the frequency variable.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .expr import Expr, ONE, depends_on_s, diff_expr, eval_expr

# Matrices at or below this entry count are stored dense.
_DENSE_LIMIT = 64 * 64


class ModelError(ValueError):
    """Inconsistent dimensions or invalid model data."""


def canonical_matrix(mat):
    """Normalize matrix storage.

    Dense arrays are kept dense. Sparse inputs are coalesced into canonical
    CSR (sorted indices, summed duplicates), except that tiny matrices fall
    back to dense storage.
    """
    if isinstance(mat, np.ndarray):
        if mat.ndim != 2:
            raise ModelError(f"expected a 2-d array, got shape {mat.shape}")
        return np.ascontiguousarray(mat, dtype=float)
    if sp.issparse(mat):
        if mat.shape[0] * mat.shape[1] <= _DENSE_LIMIT:
            return np.asarray(mat.todense(), dtype=float)
        out = mat.tocsr().astype(float)
        out.sum_duplicates()
        out.sort_indices()
        return out
    raise ModelError(f"unsupported matrix type {type(mat).__name__}")


def to_coo(mat) -> sp.coo_matrix:
    """Coordinate view sorted by (row, col) with duplicates coalesced."""
    coo = sp.coo_matrix(mat)
    coo.sum_duplicates()
    order = np.lexsort((coo.col, coo.row))
    return sp.coo_matrix(
        (coo.data[order], (coo.row[order], coo.col[order])), shape=coo.shape
    )


def _as_expr(coeff) -> Expr:
    if coeff is None:
        return ONE
    if isinstance(coeff, Expr):
        return coeff
    from .expr import Const

    return Const(complex(coeff))


def _eval_terms(terms, s, p):
    """Sum coeff(s, p) * mat over affine terms; dense and sparse mix."""
    total = None
    for coeff, mat in terms:
        c = eval_expr(coeff, s if s is not None else 0.0, p)
        piece = mat * c
        total = piece if total is None else total + piece
    return total


@dataclass(frozen=True)
class ParamMatrix:
    """Affine matrix-valued function ``M(p) = sum_i a_i(p) M_i``.

    With ``s_dependent`` set the coefficients may also involve the frequency
    variable (input/output maps of systems with input or output delays).
    """

    terms: tuple
    s_dependent: bool = False

    def __post_init__(self):
        if not self.terms:
            raise ModelError("ParamMatrix needs at least one term")
        norm = tuple((_as_expr(c), canonical_matrix(m)) for c, m in self.terms)
        shapes = {m.shape for _, m in norm}
        if len(shapes) != 1:
            raise ModelError(f"mixed term shapes {shapes}")
        if not self.s_dependent:
            for c, _ in norm:
                if depends_on_s(c):
                    raise ModelError(
                        "frequency-dependent coefficient without the s flag"
                    )
        object.__setattr__(self, "terms", norm)

    @property
    def shape(self):
        return self.terms[0][1].shape

    @property
    def arity(self) -> int:
        return max(c.arity for c, _ in self.terms)

    def eval(self, p, s=None):
        """Evaluate at ``p`` (and ``s`` when frequency-dependent).

        Returns a real dense array for plain parametric maps and a complex
        one for frequency-dependent maps.
        """
        if self.s_dependent and s is None:
            raise ModelError("frequency-dependent map needs a value for s")
        out = _eval_terms(self.terms, s if self.s_dependent else None, p)
        out = np.asarray(out.todense() if sp.issparse(out) else out)
        return out if self.s_dependent else out.real.copy()

    def eval_dp(self, p, j: int, s=None):
        """Derivative with respect to parameter component ``j``."""
        terms = tuple((diff_expr(c, f"p{j}"), m) for c, m in self.terms)
        out = _eval_terms(terms, s if self.s_dependent else None, p)
        out = np.asarray(out.todense() if sp.issparse(out) else out)
        return out if self.s_dependent else out.real.copy()

    def eval_ds(self, p, s):
        if not self.s_dependent:
            return np.zeros(self.shape)
        out = _eval_terms(
            tuple((diff_expr(c, "s"), m) for c, m in self.terms), s, p
        )
        return np.asarray(out.todense() if sp.issparse(out) else out)

    @staticmethod
    def constant(mat) -> "ParamMatrix":
        return ParamMatrix(terms=((ONE, mat),))


@dataclass(frozen=True)
class StructuredOperator:
    """Frequency pencil ``K(s, p) = sum_i kappa_i(s, p) A_i``."""

    n: int
    terms: tuple

    def __post_init__(self):
        if not self.terms:
            raise ModelError("operator needs at least one term")
        norm = []
        for kappa, mat in self.terms:
            m = canonical_matrix(mat)
            if m.shape != (self.n, self.n):
                raise ModelError(
                    f"operator term shape {m.shape} != ({self.n}, {self.n})"
                )
            norm.append((_as_expr(kappa), m))
        object.__setattr__(self, "terms", tuple(norm))

    @property
    def arity(self) -> int:
        return max(k.arity for k, _ in self.terms)

    def eval(self, s, p=()):
        """``K(s, p)`` as a complex matrix (sparse when stored sparse)."""
        return _eval_terms(self.terms, s, p)

    def eval_ds(self, s, p=()):
        """``dK/ds`` evaluated analytically."""
        return _eval_terms(
            tuple((diff_expr(k, "s"), m) for k, m in self.terms), s, p
        )

    def eval_dp(self, s, p, j: int):
        return _eval_terms(
            tuple((diff_expr(k, f"p{j}"), m) for k, m in self.terms), s, p
        )


def _tensor_term_normalize(terms, shape):
    norm = []
    for coeff, mat in terms:
        m = canonical_matrix(mat)
        if m.shape != shape:
            raise ModelError(f"tensor term shape {m.shape} != {shape}")
        norm.append((_as_expr(coeff), m))
    return tuple(norm)


@dataclass(frozen=True)
class PolyTerm:
    """Mode-1 unfolding of the degree-``order`` state term, ``n x n**order``.

    ``terms`` is an affine parameter decomposition; non-parametric terms hold
    a single entry with the constant-one coefficient. ``symmetric`` marks
    that the underlying tensor is symmetric in its state modes.
    """

    order: int
    n: int
    terms: tuple
    symmetric: bool = False

    def __post_init__(self):
        if self.order < 2:
            raise ModelError("polynomial state terms start at order 2")
        shape = (self.n, self.n ** self.order)
        object.__setattr__(
            self, "terms", _tensor_term_normalize(self.terms, shape)
        )

    @property
    def shape(self):
        return (self.n, self.n ** self.order)

    def eval(self, p=()):
        """Mode-1 unfolding at parameter ``p`` (real matrix)."""
        return _eval_terms(self.terms, None, p).real

    def eval_dp(self, p, j: int):
        out = _eval_terms(
            tuple((diff_expr(c, f"p{j}"), m) for c, m in self.terms), None, p
        )
        return out.real

    @staticmethod
    def from_matrix(order, n, mat, symmetric=False) -> "PolyTerm":
        return PolyTerm(order=order, n=n, terms=((ONE, mat),), symmetric=symmetric)


@dataclass(frozen=True)
class BilinTerm:
    """Mode-1 unfolding of a bilinear input-state term, ``n x (m * n**order)``.

    Columns are grouped in ``m`` blocks of ``n**order`` following the
    ``u (x) state-powers`` ordering: the input channel is the slowest index.
    ``symmetric`` refers to the state modes only.
    """

    order: int
    n: int
    m: int
    terms: tuple
    symmetric: bool = False

    def __post_init__(self):
        if self.order < 1:
            raise ModelError("bilinear terms start at state order 1")
        shape = (self.n, self.m * self.n ** self.order)
        object.__setattr__(
            self, "terms", _tensor_term_normalize(self.terms, shape)
        )

    @property
    def shape(self):
        return (self.n, self.m * self.n ** self.order)

    def eval(self, p=()):
        out = _eval_terms(self.terms, None, p)
        return out.real

    def eval_dp(self, p, j: int):
        out = _eval_terms(
            tuple((diff_expr(c, f"p{j}"), m) for c, m in self.terms), None, p
        )
        return out.real

    @staticmethod
    def from_matrix(order, n, m, mat, symmetric=False) -> "BilinTerm":
        return BilinTerm(order=order, n=n, m=m, terms=((ONE, mat),), symmetric=symmetric)


@dataclass(frozen=True)
class System:
    """Polynomial structured system with affine parameter dependence."""

    operator: StructuredOperator
    input_map: ParamMatrix
    output_map: ParamMatrix
    poly: tuple = ()
    bilin: tuple = ()
    degree: int = 1
    nparams: int = 0

    def __post_init__(self):
        n = self.operator.n
        if self.input_map.shape[0] != n:
            raise ModelError("input map row count != state dimension")
        if self.output_map.shape[1] != n:
            raise ModelError("output map column count != state dimension")
        m = self.input_map.shape[1]
        if self.degree < 1:
            raise ModelError("degree must be at least 1")
        seen_xi = set()
        for h in self.poly:
            if h.n != n or h.order > self.degree or h.order in seen_xi:
                raise ModelError(f"bad polynomial term of order {h.order}")
            seen_xi.add(h.order)
        seen_eta = set()
        for b in self.bilin:
            if (
                b.n != n
                or b.m != m
                or b.order > max(self.degree - 1, 1)
                or b.order in seen_eta
            ):
                raise ModelError(f"bad bilinear term of order {b.order}")
            seen_eta.add(b.order)
        arity = max(
            [self.operator.arity, self.input_map.arity, self.output_map.arity]
            + [max(c.arity for c, _ in t.terms) for t in self.poly + self.bilin]
        )
        if arity > self.nparams:
            raise ModelError(
                f"coefficients use {arity} parameter(s), declared {self.nparams}"
            )

    @property
    def n(self) -> int:
        return self.operator.n

    @property
    def m(self) -> int:
        return self.input_map.shape[1]

    @property
    def p_out(self) -> int:
        return self.output_map.shape[0]

    def poly_of_order(self, xi: int):
        for h in self.poly:
            if h.order == xi:
                return h
        return None

    def bilin_of_order(self, eta: int):
        for b in self.bilin:
            if b.order == eta:
                return b
        return None

    def poly_orders(self):
        return tuple(sorted(h.order for h in self.poly))

    def bilin_orders(self):
        return tuple(sorted(b.order for b in self.bilin))

    def default_families(self):
        """Family labels of everything the system carries: L, N<eta>, H<xi>."""
        return (
            ("L",)
            + tuple(f"N{eta}" for eta in self.bilin_orders())
            + tuple(f"H{xi}" for xi in self.poly_orders())
        )


_FAMILY_KINDS = ("L", "N", "H")


def parse_family(label: str):
    """Split a family label into (kind, order): 'L' -> ('L', None)."""
    if label == "L":
        return "L", None
    kind, rest = label[:1], label[1:]
    if kind in ("N", "H") and rest.isdigit():
        return kind, int(rest)
    raise ModelError(f"unknown family label {label!r}")


@dataclass(frozen=True)
class PlanEntry:
    """One interpolation tuple: points, parameter, tangential directions."""

    sigma: complex
    mu: complex
    p: tuple = ()
    b: tuple = (1.0 + 0.0j,)
    c: tuple = (1.0 + 0.0j,)

    def __post_init__(self):
        object.__setattr__(self, "sigma", complex(self.sigma))
        object.__setattr__(self, "mu", complex(self.mu))
        object.__setattr__(self, "p", tuple(float(v) for v in self.p))
        b = tuple(complex(v) for v in self.b)
        c = tuple(complex(v) for v in self.c)
        if not any(v != 0 for v in b) or not any(v != 0 for v in c):
            raise ModelError("tangential directions must be nonzero")
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "c", c)

    @property
    def b_vec(self):
        return np.array(self.b, dtype=complex)

    @property
    def c_vec(self):
        return np.array(self.c, dtype=complex)


@dataclass(frozen=True)
class InterpPlan:
    """Interpolation points with family selection and projection flags."""

    entries: tuple
    families: tuple
    galerkin: bool = False
    hermite: bool = False

    def __post_init__(self):
        if not self.entries:
            raise ModelError("empty interpolation plan")
        for label in self.families:
            parse_family(label)
        if self.hermite:
            for e in self.entries:
                if e.sigma != e.mu:
                    raise ModelError(
                        "hermite plans require sigma == mu in every entry"
                    )

    def validate_against(self, sys: System):
        for e in self.entries:
            if len(e.p) < sys.nparams:
                raise ModelError("plan entry parameter vector too short")
            if len(e.b) != sys.m or len(e.c) != sys.p_out:
                raise ModelError("tangential direction length mismatch")
        for label in self.families:
            kind, order = parse_family(label)
            if kind == "N" and sys.bilin_of_order(order) is None:
                raise ModelError(f"system has no bilinear term of order {order}")
            if kind == "H" and sys.poly_of_order(order) is None:
                raise ModelError(f"system has no polynomial term of order {order}")

    def canonical_json(self) -> str:
        def cplx(z):
            return [z.real, z.imag]

        doc = {
            "entries": [
                {
                    "sigma": cplx(e.sigma),
                    "mu": cplx(e.mu),
                    "p": list(e.p),
                    "b": [cplx(v) for v in e.b],
                    "c": [cplx(v) for v in e.c],
                }
                for e in self.entries
            ],
            "flags": {
                "families": list(self.families),
                "galerkin": self.galerkin,
                "hermite": self.hermite,
            },
        }
        return json.dumps(doc, sort_keys=True, separators=(",", ":"))

    def digest(self) -> str:
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()[:16]

    @staticmethod
    def from_points(sigmas, mus=None, params=None, families=("L",),
                    b=None, c=None, galerkin=False, hermite=None):
        """Build a plan from parallel point lists (SISO default directions)."""
        sigmas = list(sigmas)
        mus = list(mus) if mus is not None else list(sigmas)
        if len(mus) != len(sigmas):
            raise ModelError("sigma/mu lists differ in length")
        if params is None:
            params = [()] * len(sigmas)
        if hermite is None:
            hermite = all(s == m for s, m in zip(sigmas, mus))
        entries = []
        for i, (sg, mu) in enumerate(zip(sigmas, mus)):
            entries.append(
                PlanEntry(
                    sigma=sg,
                    mu=mu,
                    p=tuple(np.atleast_1d(params[i])),
                    b=tuple(np.atleast_1d(b[i])) if b is not None else (1.0,),
                    c=tuple(np.atleast_1d(c[i])) if c is not None else (1.0,),
                )
            )
        return InterpPlan(
            entries=tuple(entries),
            families=tuple(families),
            galerkin=galerkin,
            hermite=hermite,
        )


@dataclass(frozen=True)
class ReducedSystem:
    """Projected system plus the lifting bases and a provenance record.

    The reduced model shares the coefficient expressions of its parent
    verbatim; only the constant matrices are projected.
    """

    system: System
    V: np.ndarray
    W: np.ndarray
    provenance: dict = field(default_factory=dict)

    @property
    def order(self) -> int:
        return self.system.n
