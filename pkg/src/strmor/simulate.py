"""Explicit Euler integration of full and reduced structured systems.

Only structures with a time-domain realization are integrated: first-order,
second-order (via velocity augmentation), and first-order with constant
state delays (exact ring-buffer history, delays must sit on the time grid).
Parametric systems are folded to a concrete parameter before
classification, so affine pieces become constant matrices. The same
integrator runs full and reduced models, which keeps error tables free of
integrator mismatch.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .expr import Add, Const, Exp, Freq, Mul, Neg, Param, Pow
from .model import ReducedSystem, System, to_coo


class SimulationError(RuntimeError):
    pass


def worker_count() -> int:
    """Worker bound for parameter sweeps; STRMOR_THREADS overrides."""
    env = os.environ.get("STRMOR_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return min(4, os.cpu_count() or 1)


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid on [t0, t_end] with step dt."""

    t0: float
    t_end: float
    dt: float

    def __post_init__(self):
        if self.dt <= 0 or self.t_end <= self.t0:
            raise SimulationError("need dt > 0 and t_end > t0")
        steps = (self.t_end - self.t0) / self.dt
        if abs(steps - round(steps)) > 1e-9 * max(1.0, steps):
            raise SimulationError("grid span must be a whole number of steps")

    @property
    def n_steps(self) -> int:
        return int(round((self.t_end - self.t0) / self.dt))

    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.n_steps + 1)

    def delay_lag(self, tau: float) -> int:
        """Number of steps equal to the delay; must divide exactly."""
        lag = tau / self.dt
        if abs(lag - round(lag)) > 1e-9 * max(1.0, lag) or round(lag) < 1:
            raise SimulationError(
                f"delay {tau} is not a positive multiple of dt={self.dt}"
            )
        return int(round(lag))


@dataclass(frozen=True)
class Trajectory:
    t: np.ndarray
    y: np.ndarray            # (n_samples, p_out)
    states: np.ndarray | None = None

    def __post_init__(self):
        if self.y.shape[0] != self.t.shape[0]:
            raise SimulationError("sample counts disagree")


# ---------------------------------------------------------------------------
# structural classification

@dataclass(frozen=True)
class FirstOrder:
    E: object
    A: object


@dataclass(frozen=True)
class SecondOrder:
    M: object
    D: object
    K: object


@dataclass(frozen=True)
class FirstOrderDelay:
    E: object
    A0: object
    delays: tuple    # ((tau, A_tau), ...)


@dataclass(frozen=True)
class Unsupported:
    reason: str


def _profile(e, p):
    """Coefficient as polynomial-in-s plus pure exponentials, or None.

    Returns (poly_coeffs, {tau: scale}) where the coefficient equals
    sum_k poly[k] s^k + sum_tau scale * exp(-tau s). Anything outside that
    shape (fractional powers, s-dependent exponents, poly*exp products)
    yields None.
    """
    if isinstance(e, Const):
        return [e.value], {}
    if isinstance(e, Param):
        return [complex(p[e.index])], {}
    if isinstance(e, Freq):
        return [0.0, 1.0], {}
    if isinstance(e, Neg):
        inner = _profile(e.arg, p)
        if inner is None:
            return None
        poly, exps = inner
        return [-c for c in poly], {t: -v for t, v in exps.items()}
    if isinstance(e, Add):
        poly, exps = [0.0], {}
        for term in e.terms:
            inner = _profile(term, p)
            if inner is None:
                return None
            tp, te = inner
            if len(tp) > len(poly):
                poly += [0.0] * (len(tp) - len(poly))
            for k, c in enumerate(tp):
                poly[k] += c
            for tau, v in te.items():
                exps[tau] = exps.get(tau, 0.0) + v
        return poly, exps
    if isinstance(e, Mul):
        poly, exps = [1.0], {}
        for factor in e.factors:
            inner = _profile(factor, p)
            if inner is None:
                return None
            fp, fe = inner
            # products stay representable only while at most one side
            # carries exponentials and the other side is a plain constant
            if exps and fe:
                return None
            if exps:
                if len(fp) > 1:
                    return None
                c = fp[0]
                poly = [v * c for v in poly]
                exps = {tau: v * c for tau, v in exps.items()}
            elif fe:
                if len(poly) > 1:
                    return None
                c = poly[0]
                poly = [c * v for v in fp]
                exps = {tau: c * v for tau, v in fe.items()}
            else:
                poly = list(np.convolve(poly, fp))
        return poly, exps
    if isinstance(e, Pow):
        k = e.exponent
        if k != int(k) or k < 0:
            return None
        inner = _profile(e.base, p)
        if inner is None or inner[1]:
            return None
        poly = [1.0]
        for _ in range(int(k)):
            poly = list(np.convolve(poly, inner[0]))
        return poly, {}
    if isinstance(e, Exp):
        inner = _profile(e.arg, p)
        if inner is None or inner[1]:
            return None
        poly = inner[0] + [0.0, 0.0]
        if any(c != 0 for c in poly[2:]):
            return None
        a, b = poly[0], poly[1]
        scale = np.exp(e.coeff * a)
        if b == 0:
            return [scale], {}
        tau = -e.coeff * b
        return [0.0], {complex(tau): scale}
    return None


def classify(sys: System, p=()):
    """Match the pencil (folded at ``p``) against the supported structures."""
    if sys.input_map.s_dependent or sys.output_map.s_dependent:
        return Unsupported("frequency-dependent input/output maps have no "
                           "time-domain realization here")
    n = sys.n
    deg2 = deg1 = deg0 = None
    delay_acc: dict = {}

    def add(acc, mat, coeff):
        piece = mat * coeff
        return piece if acc is None else acc + piece

    max_degree = 0
    for kappa, A in sys.operator.terms:
        prof = _profile(kappa, p)
        if prof is None:
            return Unsupported(f"coefficient {kappa!r} outside the supported "
                               "polynomial-plus-delay forms")
        poly, exps = prof
        poly = list(poly)
        while len(poly) > 1 and poly[-1] == 0:
            poly.pop()
        if len(poly) > 3:
            return Unsupported("frequency powers above 2 are not integrable")
        max_degree = max(max_degree, len(poly) - 1)
        coeffs = [0.0, 0.0, 0.0]
        for k, c in enumerate(poly):
            c = complex(c)
            if abs(c.imag) > 1e-12 * max(1.0, abs(c)):
                return Unsupported("complex coefficient after folding")
            coeffs[k] = c.real
        if coeffs[0]:
            deg0 = add(deg0, A, coeffs[0])
        if coeffs[1]:
            deg1 = add(deg1, A, coeffs[1])
        if coeffs[2]:
            deg2 = add(deg2, A, coeffs[2])
        for tau, scale in exps.items():
            scale = complex(scale)
            if abs(tau.imag) > 1e-12 or tau.real <= 0:
                return Unsupported("delay exponent is not a positive real lag")
            if abs(scale.imag) > 1e-12 * max(1.0, abs(scale)):
                return Unsupported("complex delay coefficient after folding")
            key = float(tau.real)
            delay_acc[key] = add(delay_acc.get(key), A, scale.real)

    zero = sp.csr_matrix((n, n))
    if delay_acc:
        if deg2 is not None:
            return Unsupported("mixed second-order and delay structure")
        E = deg1 if deg1 is not None else zero
        A0 = -(deg0 if deg0 is not None else zero)
        delays = tuple(sorted((tau, -mat) for tau, mat in delay_acc.items()))
        return FirstOrderDelay(E=E, A0=A0, delays=delays)
    if deg2 is not None:
        return SecondOrder(M=deg2,
                           D=deg1 if deg1 is not None else zero,
                           K=deg0 if deg0 is not None else zero)
    return FirstOrder(E=deg1 if deg1 is not None else zero,
                      A=-(deg0 if deg0 is not None else zero))


# ---------------------------------------------------------------------------
# integration helpers

def _is_identity(mat) -> bool:
    n = mat.shape[0]
    if sp.issparse(mat):
        return (mat - sp.eye(n)).nnz == 0
    return np.array_equal(np.asarray(mat), np.eye(n))


def _solver_for(mat, what):
    """Factor a constant real matrix once; identity short-circuits."""
    if _is_identity(mat):
        return None
    if sp.issparse(mat):
        try:
            lu = spla.splu(sp.csc_matrix(mat))
        except RuntimeError as exc:
            raise SimulationError(f"{what} matrix is singular: {exc}") from exc
        return lu.solve
    try:
        lu, piv = sla.lu_factor(np.asarray(mat, dtype=float))
    except (ValueError, sla.LinAlgError) as exc:
        raise SimulationError(f"{what} matrix is singular: {exc}") from exc
    if not np.isfinite(lu).all() or np.abs(np.diag(lu)).min() == 0.0:
        raise SimulationError(f"{what} matrix is singular")
    return lambda rhs: sla.lu_solve((lu, piv), rhs)


def _poly_applier(term, p):
    """O(nnz) evaluator of ``H (x (x) ... (x) x)`` for a fixed parameter."""
    coo = to_coo(term.eval(p))
    rows = coo.row.copy()
    vals = coo.data.copy()
    n, order = term.n, term.order
    digits = []
    rem = coo.col.copy()
    for _ in range(order):
        digits.append((rem % n).copy())
        rem //= n
    # nodewise tensors (one entry per row, in row order) skip the scatter
    aligned = len(rows) == n and np.array_equal(rows, np.arange(n))
    def apply(x):
        contrib = vals * x[digits[0]]
        for d in digits[1:]:
            contrib *= x[d]
        if aligned:
            return contrib
        return np.bincount(rows, weights=contrib, minlength=n)
    return apply


def _bilin_applier(term, p):
    """Evaluator of ``N (u (x) x^(x eta))``; channel blocks stay sparse."""
    n, m, eta = term.n, term.m, term.order
    mat = term.eval(p)
    if eta == 1:
        blocks = []
        dense = not sp.issparse(mat)
        for j in range(m):
            block = mat[:, j * n:(j + 1) * n]
            blocks.append(np.asarray(block) if dense else sp.csr_matrix(block))
        def apply1(u, x):
            out = np.zeros(n)
            for j in range(m):
                if u[j] != 0.0:
                    out += u[j] * (blocks[j] @ x)
            return out
        return apply1
    coo = to_coo(mat)
    rows, vals = coo.row.copy(), coo.data.copy()
    j_in = coo.col // n ** eta
    rem = coo.col % n ** eta
    digits = []
    for _ in range(eta):
        digits.append((rem % n).copy())
        rem //= n
    def apply(u, x):
        contrib = vals * u[j_in]
        for d in digits:
            contrib *= x[d]
        return np.bincount(rows, weights=contrib, minlength=n)
    return apply


def sample_input(u, times, m):
    """Evaluate the input on all grid nodes up front, shape (len(times), m)."""
    try:
        vals = np.asarray(u(times), dtype=float)
        if vals.shape == times.shape and m == 1:
            return vals.reshape(-1, 1)
        if vals.shape == (m, len(times)):
            return vals.T.copy()
        if vals.shape == (len(times), m):
            return vals
        raise ValueError
    except Exception:
        out = np.zeros((len(times), m))
        for i, t in enumerate(times):
            out[i] = np.atleast_1d(np.asarray(u(t), dtype=float))
        return out


def _unwrap(sys):
    return sys.system if isinstance(sys, ReducedSystem) else sys


def simulate(sys, p, u, grid: TimeGrid, keep_states: bool = False) -> Trajectory:
    """Explicit Euler run from zero initial conditions (zero delay history).

    ``u`` is a time function: scalar or length-m vector valued; it is
    sampled on the grid nodes up front. Divergence (non-finite state) raises
    with the offending time.
    """
    sys = _unwrap(sys)
    structure = classify(sys, p)
    if isinstance(structure, Unsupported):
        raise SimulationError(f"unsupported structure: {structure.reason}")
    n, m = sys.n, sys.m
    B = sys.input_map.eval(p)
    C = sys.output_map.eval(p)
    times = grid.times()
    U = sample_input(u, times, m)
    poly_apps = [_poly_applier(h, p) for h in sys.poly]
    bilin_apps = [_bilin_applier(b, p) for b in sys.bilin]
    dt = grid.dt
    nt = grid.n_steps

    y = np.zeros((nt + 1, sys.p_out))
    states = np.zeros((nt + 1, n)) if keep_states else None

    def rhs_nonlinear(x, uk):
        out = B @ uk
        for app in poly_apps:
            out += app(x)
        for app in bilin_apps:
            out += app(uk, x)
        return out

    def check(x, k):
        with np.errstate(over="ignore"):
            ss = float(x @ x)
        if not math.isfinite(ss):
            raise SimulationError(
                f"state diverged (non-finite) at t={times[k]:.6g}"
            )

    if isinstance(structure, FirstOrder):
        A = structure.A
        solve_E = _solver_for(structure.E, "descriptor")
        x = np.zeros(n)
        for k in range(nt):
            r = A @ x
            r += rhs_nonlinear(x, U[k])
            if solve_E is not None:
                r = solve_E(r)
            r *= dt
            x = x + r
            check(x, k + 1)
            y[k + 1] = C @ x
            if keep_states:
                states[k + 1] = x
    elif isinstance(structure, SecondOrder):
        D, K = structure.D, structure.K
        solve_M = _solver_for(structure.M, "mass")
        x = np.zeros(n)
        v = np.zeros(n)
        for k in range(nt):
            r = -(D @ v) - (K @ x) + rhs_nonlinear(x, U[k])
            a = r if solve_M is None else solve_M(r)
            x = x + dt * v
            v = v + dt * a
            check(x, k + 1)
            y[k + 1] = C @ x
            if keep_states:
                states[k + 1] = x
    else:
        A0 = structure.A0
        solve_E = _solver_for(structure.E, "descriptor")
        lags = [(grid.delay_lag(tau), mat) for tau, mat in structure.delays]
        cap = max(lag for lag, _ in lags) + 1
        ring = np.zeros((cap, n))
        x = np.zeros(n)
        for k in range(nt):
            r = A0 @ x + rhs_nonlinear(x, U[k])
            for lag, mat in lags:
                if k >= lag:
                    r += mat @ ring[(k - lag) % cap]
            ring[k % cap] = x
            x = x + dt * (r if solve_E is None else solve_E(r))
            check(x, k + 1)
            y[k + 1] = C @ x
            if keep_states:
                states[k + 1] = x
    return Trajectory(t=times, y=y, states=states)


def error_metrics(y_fom: Trajectory, y_rom: Trajectory) -> dict:
    """Discrete L2 and Linf norms of the output difference on a shared grid."""
    if y_fom.t.shape != y_rom.t.shape or not np.allclose(y_fom.t, y_rom.t):
        raise SimulationError("trajectories live on different grids")
    diff = y_fom.y - y_rom.y
    dt = float(y_fom.t[1] - y_fom.t[0]) if len(y_fom.t) > 1 else 0.0
    pointwise = np.linalg.norm(diff, axis=1)
    return {
        "l2": float(np.sqrt(dt * float(pointwise @ pointwise))),
        "linf": float(pointwise.max(initial=0.0)),
        "pointwise": pointwise,
    }


@dataclass(frozen=True)
class SweepResult:
    params: tuple           # parameter vectors, one per sweep point
    t: np.ndarray
    errors: np.ndarray      # (n_params, n_samples) normalized error E(t, p)
    e_max: float
    failures: tuple         # (param, message) for failed runs


def sweep_error(fom, rom, params, u, grid: TimeGrid,
                workers: int | None = None) -> SweepResult:
    """Normalized output error over a parameter sweep.

    ``E(t, p) = ||y(t; p) - y_rom(t; p)|| / max_t max_p ||y(t; p)||`` with
    the normalization taken over the whole sweep. Individual simulation
    failures are collected per parameter, not fatal for the sweep.
    """
    params = [tuple(np.atleast_1d(pv)) for pv in params]
    if not params:
        raise SimulationError("empty parameter sweep")
    workers = workers or worker_count()

    def one(pv):
        a = simulate(fom, pv, u, grid)
        b = simulate(rom, pv, u, grid)
        return a, b

    results: list = [None] * len(params)
    failures = []
    if workers > 1 and len(params) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futs = {pool.submit(one, pv): i for i, pv in enumerate(params)}
            for fut, i in futs.items():
                try:
                    results[i] = fut.result()
                except SimulationError as exc:
                    failures.append((params[i], str(exc)))
    else:
        for i, pv in enumerate(params):
            try:
                results[i] = one(pv)
            except SimulationError as exc:
                failures.append((params[i], str(exc)))

    kept = [(pv, r) for pv, r in zip(params, results) if r is not None]
    if not kept:
        raise SimulationError(f"all sweep runs failed: {failures}")
    t = kept[0][1][0].t
    scale = max(
        float(np.linalg.norm(a.y, axis=1).max()) for _, (a, _) in kept
    )
    scale = scale if scale > 0 else 1.0
    errs = np.vstack([
        np.linalg.norm(a.y - b.y, axis=1) / scale for _, (a, b) in kept
    ])
    return SweepResult(
        params=tuple(pv for pv, _ in kept),
        t=t,
        errors=errs,
        e_max=float(errs.max()),
        failures=tuple(failures),
    )
