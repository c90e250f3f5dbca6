import numpy as np
import pytest

from strmor import (
    InterpPlan, PlanEntry, SolveCache, build_VW, orth_dedup, realify,
    shifted_solve,
)
from strmor.basis import primitive_columns

from helpers import make_system


def test_realify_real_input_unchanged():
    M = np.arange(6.0).reshape(3, 2) + 1.0
    out = realify(M.astype(complex))
    assert np.array_equal(out, M)


def test_realify_complex_column_splits():
    z = (1.0 + 1.0j) * np.eye(3)[:, :1]
    out = realify(z)
    assert out.shape == (3, 2)
    assert np.allclose(out[:, 0], [1, 0, 0]) and np.allclose(out[:, 1], [1, 0, 0])
    # collinear columns collapse later
    assert orth_dedup(out).shape == (3, 1)


def test_realify_conjugate_pair_spans_two_dimensions():
    rng = np.random.default_rng(0)
    z = rng.standard_normal(4) + 1j * rng.standard_normal(4)
    M = np.column_stack([z, z.conj()])
    out = realify(M)
    assert np.linalg.matrix_rank(out) == 2


def test_orth_dedup_identity_and_duplicates():
    assert np.allclose(np.abs(orth_dedup(np.eye(4))), np.eye(4))
    M = np.column_stack([np.eye(3)[:, 0], np.eye(3)[:, 0]])
    out = orth_dedup(M)
    assert out.shape == (3, 1)
    assert np.allclose(np.abs(out[:, 0]), [1, 0, 0])


def test_orth_dedup_exact_duplicate_count():
    rng = np.random.default_rng(1)
    base = rng.standard_normal((50, 15))
    M = np.column_stack([base, base[:, :5]])
    out = orth_dedup(M, tol=0.0)
    assert out.shape == (50, 15)
    assert np.allclose(out.T @ out, np.eye(15), atol=1e-12)


def test_orth_dedup_zero_matrix_warns():
    with pytest.warns(UserWarning):
        out = orth_dedup(np.zeros((4, 3)))
    assert out.shape == (4, 0)


def test_primitive_columns_linear_only_are_rational_krylov():
    sys = make_system("first", 10, d=1, seed=0)
    entry = PlanEntry(sigma=1.2, mu=0.8)
    cache = SolveCache()
    v_cols, w_cols = primitive_columns(sys, entry, ("L",), 0, cache)
    assert len(v_cols) == 1 and len(w_cols) == 1
    B = sys.input_map.eval(())
    expect_v = shifted_solve(sys, 1.2, (), B[:, 0], cache=cache)
    assert np.allclose(v_cols[0][1], expect_v)
    C = sys.output_map.eval(())
    expect_w = shifted_solve(sys, 0.8, (), C[0, :], adjoint=True, cache=cache)
    assert np.allclose(w_cols[0][1], expect_w)


def test_primitive_columns_scalar_chain_closed_form():
    # n = 1, K = s, B = C = 1, H2 = 1: the H-family V column at sigma = 1
    # is K^-1 H2 (K^-1 B)^2 = 1
    import strmor
    from strmor.model import PolyTerm
    sys = strmor.System(
        operator=strmor.StructuredOperator(n=1, terms=((strmor.S, np.eye(1)),)),
        input_map=strmor.ParamMatrix.constant(np.eye(1)),
        output_map=strmor.ParamMatrix.constant(np.eye(1)),
        poly=(PolyTerm.from_matrix(2, 1, np.eye(1), symmetric=True),),
        degree=2,
    )
    entry = PlanEntry(sigma=1.0, mu=1.0)
    v_cols, w_cols = primitive_columns(sys, entry, ("L", "H2"), 0, None)
    labels = [tag.family for tag, _ in v_cols]
    assert labels == ["L", "H2"]
    assert v_cols[1][1][0] == pytest.approx(1.0)
    assert w_cols[1][1][0] == pytest.approx(1.0)


def test_primitive_columns_families_canonical_order():
    sys = make_system("first", 12, d=3, seed=1)
    entry = PlanEntry(sigma=1.0, mu=1.5)
    v_cols, _ = primitive_columns(
        sys, entry, ("H3", "L", "N2", "H2", "N1"), 3, None
    )
    assert [tag.family for tag, _ in v_cols] == ["L", "N1", "N2", "H2", "H3"]
    assert all(tag.entry == 3 for tag, _ in v_cols)


def test_build_VW_single_point_linear():
    sys = make_system("first", 10, d=1, seed=0)
    plan = InterpPlan.from_points([1.3], families=("L",))
    bundle = build_VW(sys, plan)
    assert bundle.V.shape == (10, 1)
    assert bundle.W.shape == (10, 1)
    assert np.allclose(bundle.V.T @ bundle.V, 1.0)


def test_build_VW_complex_point_realifies():
    sys = make_system("first", 10, d=1, seed=0)
    plan = InterpPlan.from_points([1.0 + 1.0j], families=("L",))
    bundle = build_VW(sys, plan)
    assert bundle.V_raw.shape == (10, 1)
    assert bundle.V.shape == (10, 2)


def test_build_VW_provenance_covers_every_column():
    sys = make_system("delay", 12, d=3, seed=5, m=1, p_out=1)
    plan = InterpPlan.from_points(
        [0.9, 1.8], families=("L", "N1", "N2", "H2", "H3")
    )
    bundle = build_VW(sys, plan)
    assert len(bundle.v_tags) == bundle.V_raw.shape[1]
    assert len(bundle.w_tags) == bundle.W_raw.shape[1]
    fams = [t.family for t in bundle.v_tags[:5]]
    assert fams == ["L", "N1", "N2", "H2", "H3"]


def test_build_VW_galerkin_pools_sides():
    sys = make_system("second", 12, d=2, seed=2)
    plan = InterpPlan.from_points([1.1, 2.3], families=("L", "N1"),
                                  galerkin=True)
    bundle = build_VW(sys, plan)
    assert bundle.W is bundle.V
    solo = build_VW(
        sys, InterpPlan.from_points([1.1, 2.3], families=("L", "N1"))
    )
    assert bundle.V.shape[1] >= solo.V.shape[1]


def test_build_VW_mimo_direction_columns():
    sys = make_system("first", 14, d=2, seed=3, m=2, p_out=2)
    rng = np.random.default_rng(0)
    plan = InterpPlan.from_points(
        [1.2], families=("L", "N1"),
        b=[rng.standard_normal(2)], c=[rng.standard_normal(2)],
    )
    bundle = build_VW(sys, plan)
    # L gives one column, the N family one column per input channel
    assert bundle.V_raw.shape[1] == 3
    assert [t.family for t in bundle.v_tags] == ["L", "N1", "N1"]
