import numpy as np
import pytest
import sympy as sp

from daeblock.btf import BlockStructure, fine_btf, jacobian_pattern
from daeblock.structure import analyze
from daeblock.symbolic import Evaluator, Var, is_identically_zero, sigma_of
from daeblock.symla import (
    NotSingular,
    NullVector,
    cokernel_vector,
    embed_in_full,
    kernel_vector,
    rank_probe,
    verify_null_vector,
)

x3p = Var("x3", 1)
x3 = Var("x3")


def proportional(v, w):
    """v ∝ w as symbolic vectors (2x2 minors vanish)."""
    v, w = list(v), list(w)
    return all(is_identically_zero(v[a] * w[b] - v[b] * w[a]) for a in range(len(v)) for b in range(a + 1, len(v)))


def block(an, q):
    blocks = fine_btf(jacobian_pattern(an.sigma))
    return an.jacobian.block(blocks.rows(q), blocks.cols(q)), blocks


def test_rank_examples(model):
    assert rank_probe(sp.Matrix([[1, 1], [x3p, x3p]])) == 1
    assert rank_probe(sp.eye(3)) == 3
    M, _ = block(analyze(model("ringmod")), 7)
    assert M.shape == (4, 4)
    assert rank_probe(M) == 3


def test_intro_null_vectors():
    M = sp.Matrix([[1, 1], [x3p, x3p]])
    u = cokernel_vector(M)
    assert proportional(u, [-x3p, 1])
    assert list(u) == [-x3p, 1]
    v = kernel_vector(M)
    assert list(v) == [1, -1] and v.constant


def test_robotarm_null_vectors(model):
    an = analyze(model("robotarm"))
    M, blocks = block(an, 1)
    rows = [an.system.names[i] for i in blocks.rows(1)]
    u = cokernel_vector(M)
    # with rows ordered C, A this is [2, 2 + cos x3]
    want = {"C": 2, "A": 2 + sp.cos(x3)}
    assert proportional(u, [want[r] for r in rows])
    assert not u.constant
    v = kernel_vector(M)
    assert proportional(v, [1, 1]) and v.constant


def test_transamp_kernels(model):
    an = analyze(model("transamp"))
    for q in (0, 2, 4):
        M, _ = block(an, q)
        assert list(kernel_vector(M)) == [1, 1]


def test_zero_matrix():
    assert list(cokernel_vector(sp.zeros(1, 1))) == [1]


def test_full_rank_raises():
    from daeblock.symla import _symbolic_kernel

    with pytest.raises(NotSingular):
        _symbolic_kernel(sp.Matrix([[1, x3], [0, 1]]))


def test_symbolic_kernel_path():
    # nullity one, no constant null vector
    a, b = Var("a"), Var("b")
    M = sp.Matrix([[a, b], [a**2, a * b]])
    v = kernel_vector(M)
    assert not v.constant
    assert verify_null_vector(M, v)
    assert proportional(v, [b, -a])


def test_embed():
    blocks = BlockStructure((0, 1, 2), (0, 1, 2), (2, 1))
    u = embed_in_full(NullVector("cokernel", [-x3p, 1]), blocks, 0)
    assert list(u) == [-x3p, 1, 0]
    triv = BlockStructure.trivial(2)
    assert list(embed_in_full(NullVector("kernel", [1, 2]), triv, 0)) == [1, 2]
    with pytest.raises(ValueError):
        embed_in_full(NullVector("kernel", [1]), blocks, 0)


def test_ringmod_embedding(model):
    an = analyze(model("ringmod"))
    M, blocks = block(an, 7)
    v = embed_in_full(kernel_vector(M), blocks, 7)
    got = list(v)
    assert got[:7] == [0] * 7 and got[11:] == [0] * 4
    assert proportional(got[7:11], [-1, 1, -1, 1])


def test_null_vector_identity_and_determinism(model, rng):
    for name, q in (("intro", 0), ("robotarm", 1), ("ringmod", 7)):
        M, _ = block(analyze(model(name)), q)
        for fn in (kernel_vector, cokernel_vector):
            v = fn(M)
            assert fn(M).entries == v.entries
            R = list(v.residual(M))
            k, m = len(R), len(M)
            ev = Evaluator(R + list(M) + list(v.entries))
            for _, vals in ev.samples(20, rng):
                vals = np.abs(vals)
                scale = max(1.0, vals[k : k + m].max()) * max(1.0, vals[k + m :].max())
                assert vals[:k].max() < 1e-8 * scale


def test_constant_flag_matches_sigma(model):
    an = analyze(model("robotarm"))
    M, _ = block(an, 1)
    for v in (kernel_vector(M), cokernel_vector(M)):
        no_vars = all(sigma_of(e, x) == float("-inf") for e in v for x in an.system.variables)
        assert v.constant == no_vars
