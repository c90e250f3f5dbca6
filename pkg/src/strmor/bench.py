"""Deterministic benchmark generators.

Three of the four models mirror published experiments; where the original
references do not print the involved matrices (the mechanical bilinear
couplings, the heated-rod bilinear coupling and its input/output maps),
documented surrogates are generated instead and the quantitative behavior
should be judged property-wise, not value-wise. The fourth generator plants
a known low-order model inside a larger state space and is the oracle for
rank-recovery tests.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from .expr import Const, S, delay_factor, param
from .model import (
    BilinTerm, ParamMatrix, PolyTerm, StructuredOperator, System,
)
from .tensor import (
    MultiIndex, col_index, reduce_bilin_term, reduce_poly_term,
    symmetrize_mode1,
)


def gen_chafee(k: int = 500) -> System:
    """Cubic reaction-diffusion rod with a scalar reaction parameter.

    Finite differences on ``k`` interior points of (0, 1): Dirichlet input
    at the left boundary (entering through B), homogeneous Neumann at the
    right (one-sided mirror). The pencil is ``s I - A1 - p I`` with ``A1``
    the scaled diffusion matrix; the cubic term acts nodewise (``-v**3``),
    so its unfolding has one entry per diagonal multi-index and is symmetric
    by construction. Output is the right-boundary value. Parameter domain of
    interest: p in [0.25, 2].
    """
    if k < 3:
        raise ValueError("need at least 3 grid points")
    h2 = float((k + 1) ** 2)
    main = -2.0 * np.ones(k)
    main[-1] = -1.0  # Neumann mirror at the right end
    A1 = h2 * sp.diags(
        [np.ones(k - 1), main, np.ones(k - 1)], [-1, 0, 1], format="csr"
    )
    operator = StructuredOperator(
        n=k,
        terms=(
            (S, sp.eye(k, format="csr")),
            (Const(1.0), -A1),
            (param(0), -sp.eye(k, format="csr")),
        ),
    )
    b = np.zeros((k, 1))
    b[0, 0] = h2
    c = np.zeros((1, k))
    c[0, -1] = 1.0
    rows = np.arange(k)
    cols = np.array(
        [col_index(MultiIndex((i + 1,) * 3, k)) - 1 for i in range(k)]
    )
    H3 = sp.coo_matrix((-np.ones(k), (rows, cols)), shape=(k, k ** 3)).tocsr()
    cubic = PolyTerm.from_matrix(3, k, H3, symmetric=True)
    return System(
        operator=operator,
        input_map=ParamMatrix.constant(b),
        output_map=ParamMatrix.constant(c),
        poly=(cubic,),
        degree=3,
        nparams=1,
    )


def _chain_stiffness(n: int, coupling: float, ground: float) -> sp.csr_matrix:
    main = (2 * coupling + ground) * np.ones(n)
    main[0] = main[-1] = coupling + ground
    off = -coupling * np.ones(n - 1)
    return sp.diags([off, main, off], [-1, 0, 1], format="csr")


def gen_msd(n_dof: int = 1000, modulation: float = 0.002) -> System:
    """Damped mass-spring chain with bilinear stiffness modulation.

    Surrogate for a second-order bilinear benchmark whose exact matrices are
    not published: unit masses, springs of stiffness 2 to both neighbors and
    ground, Rayleigh damping D = 0.1 K + 0.4 M (relative dampers in the
    spring pattern plus dampers to ground; the ground term gives the packed
    modal band enough overlap for a strongly compressible response),
    forcing and measurement at both chain ends (B = [e_1, e_n], C = B^T).
    The two inputs modulate the stiffness of the first and second half of
    the chain; the modulation scale keeps the effective stiffness positive
    definite for inputs up to amplitude 100, which the reference input
    reaches.
    """
    if n_dof < 4:
        raise ValueError("need at least 4 degrees of freedom")
    n = n_dof
    K = _chain_stiffness(n, coupling=2.0, ground=2.0)
    M = sp.eye(n, format="csr")
    D = 0.1 * K + 0.4 * M
    operator = StructuredOperator(
        n=n,
        terms=((S ** 2, M), (S, D), (Const(1.0), K)),
    )
    B = np.zeros((n, 2))
    B[0, 0] = 1.0
    B[-1, 1] = 1.0
    half = n // 2
    mask1 = sp.diags((np.arange(n) < half).astype(float))
    mask2 = sp.diags((np.arange(n) >= half).astype(float))
    N1 = modulation * (mask1 @ K @ mask1)
    N2 = modulation * (mask2 @ K @ mask2)
    N = sp.hstack([sp.csr_matrix(N1), sp.csr_matrix(N2)], format="csr")
    bil = BilinTerm.from_matrix(1, n, 2, N, symmetric=True)
    return System(
        operator=operator,
        input_map=ParamMatrix.constant(B),
        output_map=ParamMatrix.constant(B.T.copy()),
        bilin=(bil,),
        degree=2,
        nparams=0,
    )


def gen_delay_rod(n: int = 5000) -> System:
    """Heated rod with a unit state delay and parametric coupling.

    Nodes sit uniformly inside (0, pi) with Dirichlet ends. The pencil is

        K(s, p) = s I - (A0 - p Ad) - p exp(-s) Ad,

    with ``A0`` the second-difference approximation of ``zeta * d^2/dx^2``
    (eigenvalues near ``-zeta k^2``, so the frequency band of interest sees
    a smoothly decaying low-rank response, which is what makes this
    benchmark compress well) and ``Ad = diag(sin(x_i))``. The surrogate
    diffusion coefficient ``zeta = 0.1`` keeps two dozen modes inside the
    sampled band so that reduced orders up to ~20 stay meaningful. The
    input is distributed uniformly, the output is the mean temperature, and
    the surrogate bilinear coupling is ``0.2 diag(sin(x_i))``. Parameter
    domain of interest: p in [1, 10]. Explicit Euler needs
    ``dt <= h^2 / (2 zeta)`` with ``h = pi / (n + 1)``.
    """
    if n < 3:
        raise ValueError("need at least 3 grid points")
    zeta = 0.1
    x = np.pi * np.arange(1, n + 1) / (n + 1)
    h2 = ((n + 1) / np.pi) ** 2
    A0 = zeta * h2 * sp.diags(
        [np.ones(n - 1), -2.0 * np.ones(n), np.ones(n - 1)], [-1, 0, 1],
        format="csr",
    )
    Ad = sp.diags(np.sin(x), format="csr")
    eye = sp.eye(n, format="csr")
    operator = StructuredOperator(
        n=n,
        terms=(
            (S, eye),
            (Const(1.0), -A0),
            (param(0), Ad),
            (param(0) * delay_factor(1.0), -Ad),
        ),
    )
    B = np.ones((n, 1))
    C = np.ones((1, n)) / n
    N = BilinTerm.from_matrix(
        1, n, 1, 0.2 * sp.diags(np.sin(x), format="csr"), symmetric=True
    )
    return System(
        operator=operator,
        input_map=ParamMatrix.constant(B),
        output_map=ParamMatrix.constant(C),
        bilin=(N,),
        degree=2,
        nparams=1,
    )


def gen_planted(r0: int, n: int, seed: int = 0):
    """Random stable low-order polynomial model embedded in dimension n.

    The hidden model (order ``r0``) is lifted by a random orthogonal
    extension; the added directions are unreachable and unobservable, so the
    transfer functions of the pair coincide exactly. Returns
    ``(embedded system, hidden system)``.
    """
    if not 1 <= r0 <= n:
        raise ValueError("need 1 <= r0 <= n")
    rng = np.random.default_rng(seed)
    G = rng.standard_normal((r0, r0))
    A_r = G - (np.linalg.norm(G, 2) + 0.5) * np.eye(r0)
    B_r = rng.standard_normal((r0, 1))
    C_r = rng.standard_normal((1, r0))
    H_r = 0.1 * rng.standard_normal((r0, r0 ** 2))
    H_term = symmetrize_mode1(PolyTerm.from_matrix(2, r0, H_r))
    N_r = 0.1 * rng.standard_normal((r0, r0))
    N_term = BilinTerm.from_matrix(1, r0, 1, N_r, symmetric=True)
    hidden = System(
        operator=StructuredOperator(
            n=r0, terms=((S, np.eye(r0)), (Const(1.0), -A_r))
        ),
        input_map=ParamMatrix.constant(B_r),
        output_map=ParamMatrix.constant(C_r),
        poly=(H_term,),
        bilin=(N_term,),
        degree=2,
        nparams=0,
    )
    Q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    V0 = Q[:, :r0]
    V_perp = Q[:, r0:]
    A_n = V0 @ A_r @ V0.T - V_perp @ V_perp.T
    # lifting is projection with transposed roles: H_n = V0 H (V0^T (x) ...)
    H_n = reduce_poly_term(V0.T, H_term, V0.T)
    N_n = reduce_bilin_term(V0.T, N_term, V0.T)
    embedded = System(
        operator=StructuredOperator(
            n=n, terms=((S, np.eye(n)), (Const(1.0), -A_n))
        ),
        input_map=ParamMatrix.constant(V0 @ B_r),
        output_map=ParamMatrix.constant(C_r @ V0.T),
        poly=(H_n,),
        bilin=(N_n,),
        degree=2,
        nparams=0,
    )
    return embedded, hidden


GENERATORS = {
    "chafee": lambda size, seed: gen_chafee(size),
    "msd": lambda size, seed: gen_msd(size),
    "delay-rod": lambda size, seed: gen_delay_rod(size),
}


def generate(name: str, size: int, seed: int = 0):
    """Dispatch by benchmark name; 'planted' returns the embedded system."""
    if name == "planted":
        embedded, _ = gen_planted(min(5, max(2, size // 4)), size, seed)
        return embedded
    if name not in GENERATORS:
        raise ValueError(f"unknown benchmark {name!r}")
    return GENERATORS[name](size, seed)
