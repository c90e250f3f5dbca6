import numpy as np
import pytest
import scipy.sparse as sp

from strmor import apply_poly, bench, tf_family
from strmor.transfer import factorize

from helpers import all_permutations, dense, rel_mismatch


def test_chafee_hand_assembled_small_grid():
    sys = bench.gen_chafee(3)
    h2 = 16.0  # (k + 1)^2
    A1 = dense(-sys.operator.terms[1][1])
    expected = h2 * np.array([
        [-2.0, 1.0, 0.0],
        [1.0, -2.0, 1.0],
        [0.0, 1.0, -1.0],  # Neumann mirror at the right end
    ])
    assert np.allclose(A1, expected)
    B = sys.input_map.eval((0.0,))
    assert B[0, 0] == h2 and np.all(B[1:] == 0.0)
    C = sys.output_map.eval((0.0,))
    assert C[0, -1] == 1.0 and np.all(C[0, :-1] == 0.0)


def test_chafee_cubic_is_nodewise_and_symmetric():
    sys = bench.gen_chafee(6)
    cubic = sys.poly[0]
    assert cubic.symmetric
    x = np.linspace(-1.0, 1.5, 6)
    assert np.allclose(apply_poly(cubic, [x, x, x]), -x ** 3)
    # symmetry under argument permutations
    rng = np.random.default_rng(0)
    vs = [rng.standard_normal(6) for _ in range(3)]
    base = apply_poly(cubic, vs)
    for perm in all_permutations(range(3)):
        assert np.allclose(base, apply_poly(cubic, [vs[i] for i in perm]))


def test_chafee_diffusion_negative_semidefinite():
    sys = bench.gen_chafee(40)
    A1 = -dense(sys.operator.terms[1][1])
    lam = np.linalg.eigvalsh((A1 + A1.T) / 2)
    assert lam.max() <= 1e-9


def test_chafee_dimensions_match_documentation():
    sys = bench.gen_chafee(500)
    assert sys.n == 500 and sys.m == 1 and sys.p_out == 1
    assert sys.degree == 3 and sys.nparams == 1


def test_msd_structure():
    sys = bench.gen_msd(12)
    assert sys.m == 2 and sys.p_out == 2 and sys.degree == 2
    M = sys.operator.terms[0][1]
    K = sys.operator.terms[2][1]
    Kd = dense(K)
    # symmetric positive definite via Cholesky
    np.linalg.cholesky(Kd)
    assert np.allclose(Kd, Kd.T)
    # B forces both chain ends, C measures them
    B = sys.input_map.eval(())
    assert B[0, 0] == 1.0 and B[-1, 1] == 1.0
    assert np.allclose(sys.output_map.eval(()), B.T)


def test_msd_modulation_keeps_stiffness_definite():
    sys = bench.gen_msd(16)
    K = dense(sys.operator.terms[2][1])
    N = sys.bilin[0].eval()
    N = dense(N)
    n = sys.n
    for u in ([100.0, 0.0], [0.0, 100.0], [100.0, 100.0]):
        K_eff = K - u[0] * N[:, :n] - u[1] * N[:, n:]
        np.linalg.cholesky((K_eff + K_eff.T) / 2)


def test_msd_single_mass_poles():
    # one undamped unit mass on a spring k: poles at +/- i sqrt(k)
    from strmor import Const, ParamMatrix, S, StructuredOperator, System
    k = 2.0
    sys = System(
        operator=StructuredOperator(
            n=1, terms=((S ** 2, np.eye(1)), (Const(1.0), k * np.eye(1)))
        ),
        input_map=ParamMatrix.constant(np.eye(1)),
        output_map=ParamMatrix.constant(np.eye(1)),
    )
    s0 = 1j * np.sqrt(k)
    assert abs(sys.operator.eval(s0)[0, 0]) <= 1e-12
    assert abs(tf_family(sys, "L", [1.01 * s0])[0, 0]) > 10


def test_delay_rod_hand_assembled():
    sys = bench.gen_delay_rod(3)
    x = np.pi * np.arange(1, 4) / 4.0
    zeta_h2 = 0.1 * (4.0 / np.pi) ** 2
    A0 = dense(-sys.operator.terms[1][1])
    expected = zeta_h2 * np.array([
        [-2.0, 1.0, 0.0], [1.0, -2.0, 1.0], [0.0, 1.0, -2.0]
    ])
    assert np.allclose(A0, expected)
    Ad = dense(sys.operator.terms[2][1])
    assert np.allclose(np.diag(Ad), np.sin(x))
    assert np.allclose(sys.input_map.eval((1.0,)), np.ones((3, 1)))
    assert np.allclose(sys.output_map.eval((1.0,)), np.ones((1, 3)) / 3.0)


def test_delay_rod_pencil_nonsingular_on_scan_grid():
    sys = bench.gen_delay_rod(60)
    rng = np.random.default_rng(0)
    for w in np.logspace(-2, 2, 12):
        for p in (1.0, 5.5, 10.0):
            factorize(sys, 1j * w, (p,))  # raises on singularity


def test_generators_are_deterministic():
    a = bench.gen_planted(3, 15, seed=5)[0]
    b = bench.gen_planted(3, 15, seed=5)[0]
    assert np.allclose(a.input_map.eval(()), b.input_map.eval(()))
    assert np.allclose(
        np.asarray(a.operator.terms[1][1]), np.asarray(b.operator.terms[1][1])
    )
    c = bench.gen_planted(3, 15, seed=6)[0]
    assert not np.allclose(a.input_map.eval(()), c.input_map.eval(()))


def test_planted_identity_embedding():
    emb, hidden = bench.gen_planted(4, 4, seed=0)
    s = 1.1 + 0.3j
    assert rel_mismatch(tf_family(emb, "L", [s]),
                        tf_family(hidden, "L", [s])) <= 1e-12


def test_planted_transfer_functions_coincide():
    emb, hidden = bench.gen_planted(2, 10, seed=3)
    rng = np.random.default_rng(1)
    for _ in range(20):
        s = 0.5 + 2 * rng.random() + 1j * rng.random()
        for fam, arity in (("L", 1), ("N1", 2), ("H2", 3)):
            args = [s * (1 + 0.1 * k) for k in range(arity)]
            F = tf_family(emb, fam, args)
            G = tf_family(hidden, fam, args)
            assert np.abs(F - G).max() <= 1e-12 * (1 + np.abs(F).max())


def test_generate_dispatch():
    sys = bench.generate("chafee", 8)
    assert sys.n == 8
    with pytest.raises(ValueError):
        bench.generate("nope", 8)
    planted = bench.generate("planted", 12, seed=1)
    assert planted.n == 12
