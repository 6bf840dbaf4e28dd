import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from gsplab.chain_algebra import (
    SIGMA_X,
    SIGMA_Y,
    SIGMA_Z,
    ChainGeometry,
    DimensionCapError,
    LocalOperator,
    SupportInterval,
    commutator,
    embed,
    operator_norm,
    support_distance,
)

from conftest import random_matrix


def kron_chain(mats):
    out = np.eye(1)
    for m in mats:
        out = np.kron(out, m)
    return out


def test_embed_matches_explicit_kronecker_product():
    geo = ChainGeometry(4)
    op = LocalOperator(SupportInterval(2, 3), np.kron(SIGMA_X, SIGMA_Z))
    expected = kron_chain([np.eye(2), SIGMA_X, SIGMA_Z, np.eye(2)])
    assert np.array_equal(embed(op, geo), expected)


def test_site_one_is_most_significant():
    geo = ChainGeometry(3)
    proj = np.diag([0.0, 1.0])
    m = embed(LocalOperator(SupportInterval(1, 1), proj), geo)
    # index 4 = |100> has site 1 excited
    assert np.flatnonzero(np.diag(m)).tolist() == [4, 5, 6, 7]


@given(d=st.integers(2, 5), lo=st.integers(1, 5), width=st.integers(1, 3), seed=st.integers(0, 10**6))
def test_embed_against_site_by_site_kronecker(d, lo, width, seed):
    hi = lo + width - 1
    if hi > d:
        return
    rng = np.random.default_rng(seed)
    mats = [random_matrix(rng, 2) for _ in range(width)]
    op = LocalOperator(SupportInterval(lo, hi), kron_chain(mats))
    full = [np.eye(2)] * (lo - 1) + mats + [np.eye(2)] * (d - hi)
    assert np.allclose(embed(op, ChainGeometry(d)), kron_chain(full), atol=1e-12)


def test_widen_then_embed_is_embed():
    geo = ChainGeometry(5)
    op = LocalOperator(SupportInterval(3, 3), SIGMA_Y)
    wide = op.widen(SupportInterval(2, 4))
    assert np.allclose(embed(wide, geo), embed(op, geo))
    with pytest.raises(ValueError):
        op.widen(SupportInterval(4, 5))


def test_support_distance_convention():
    a, b = SupportInterval(1, 2), SupportInterval(4, 5)
    assert support_distance(a, b) == 2
    assert support_distance(b, a) == 2
    assert support_distance(SupportInterval(1, 3), SupportInterval(3, 4)) == 0
    assert support_distance(SupportInterval(1, 1), SupportInterval(2, 2)) == 1


def test_interval_helpers():
    s = SupportInterval.clipped(-3, 12, 10)
    assert (s.lo, s.hi, s.width) == (1, 10, 10)
    assert SupportInterval(2, 5).contains(SupportInterval(3, 4))
    assert SupportInterval(2, 3).hull(SupportInterval(6, 7)) == SupportInterval(2, 7)
    with pytest.raises(ValueError):
        SupportInterval(3, 2)
    with pytest.raises(ValueError):
        SupportInterval.clipped(11, 12, 10)


def test_local_operator_validation():
    with pytest.raises(ValueError):
        LocalOperator(SupportInterval(1, 2), np.eye(2))
    with pytest.raises(ValueError):
        LocalOperator(SupportInterval(1, 1), np.array([[0, 1], [0, 0]]), hermitian=True)
    with pytest.raises(ValueError):
        LocalOperator(SupportInterval(1, 1), 2 * np.eye(2), unitary=True)
    op = LocalOperator(SupportInterval(1, 1), SIGMA_Y, hermitian=True, unitary=True)
    assert op.is_hermitian and op.is_unitary
    assert np.array_equal(op.dagger().matrix, SIGMA_Y)


def test_dimension_cap():
    with pytest.raises(DimensionCapError):
        ChainGeometry(13)
    assert ChainGeometry(13, cap=2 ** 13).dim == 8192
    with pytest.raises(ValueError):
        ChainGeometry(1)


def test_embed_rejects_mismatches():
    with pytest.raises(ValueError):
        embed(LocalOperator(SupportInterval(3, 4), np.eye(4)), ChainGeometry(3))
    with pytest.raises(ValueError):
        embed(LocalOperator(SupportInterval(1, 1), np.eye(3), n=3), ChainGeometry(3))


def test_disjoint_supports_commute():
    geo = ChainGeometry(4)
    a = embed(LocalOperator(SupportInterval(1, 2), np.kron(SIGMA_X, SIGMA_Y)), geo)
    b = embed(LocalOperator(SupportInterval(3, 4), np.kron(SIGMA_Z, SIGMA_X)), geo)
    assert np.max(np.abs(commutator(a, b))) == 0
    with pytest.raises(ValueError):
        commutator(np.eye(2), np.eye(3))


@given(seed=st.integers(0, 10**6), dim=st.integers(1, 12), kind=st.sampled_from(["gen", "herm", "anti"]))
def test_operator_norm_is_largest_singular_value(seed, dim, kind):
    rng = np.random.default_rng(seed)
    m = random_matrix(rng, dim, hermitian=kind != "gen")
    if kind == "anti":
        m = 1j * m
    expected = np.linalg.svd(m, compute_uv=False)[0]
    assert abs(operator_norm(m) - expected) <= 1e-12 * max(expected, 1)


def test_operator_norm_rejects_nan():
    with pytest.raises(ValueError):
        operator_norm(np.array([[np.nan]]))
    assert operator_norm(np.zeros((3, 3))) == 0.0
