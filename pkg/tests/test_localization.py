import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from gsplab.chain_algebra import (
    SIGMA_X,
    SIGMA_Z,
    ChainGeometry,
    LocalOperator,
    SupportInterval,
    embed,
    operator_norm,
)
from gsplab.localization import (
    GROUND_STATE,
    LocalizationChannel,
    LRProfile,
    build_localized_blocks,
    complement_sites,
    fit_lr_constants,
    localize,
    lr_cone_profile,
    make_channel,
    reduced_density,
    theta_windows,
)

from conftest import free_system, random_matrix, tfim_system


def flat_index(digits):
    idx = 0
    for x in digits:
        idx = 2 * idx + x
    return idx


def brute_partial_trace(a, d, target, rho=None):
    """Loop over basis digits: sum_{c,e} A[(t,c),(t',e)] rho[e,c]."""
    keep = list(target.sites())
    rest = [s for s in range(1, d + 1) if s not in keep]
    kdim, rdim = 2 ** len(keep), 2 ** len(rest)
    rho = np.eye(rdim) / rdim if rho is None else rho
    out = np.zeros((kdim, kdim), dtype=complex)

    def full(tdig, cdig):
        digits = [0] * d
        for s, x in zip(keep, tdig):
            digits[s - 1] = x
        for s, x in zip(rest, cdig):
            digits[s - 1] = x
        return flat_index(digits)

    tbasis = list(itertools.product((0, 1), repeat=len(keep)))
    cbasis = list(itertools.product((0, 1), repeat=len(rest)))
    for ia, ta in enumerate(tbasis):
        for ib, tb in enumerate(tbasis):
            for ic, c in enumerate(cbasis):
                for ie, e in enumerate(cbasis):
                    out[ia, ib] += a[full(ta, c), full(tb, e)] * rho[ie, ic]
    return out


@pytest.mark.parametrize("lo,hi", [(1, 2), (2, 3), (3, 4), (2, 2)])
def test_localize_matches_brute_partial_trace(rng, lo, hi):
    geo = ChainGeometry(4)
    target = SupportInterval(lo, hi)
    a = random_matrix(rng, 16)
    assert np.allclose(localize(a, LocalizationChannel(geo, target)).matrix,
                       brute_partial_trace(a, 4, target), atol=1e-12)
    psi = rng.standard_normal(16) + 1j * rng.standard_normal(16)
    psi /= np.linalg.norm(psi)
    ch = LocalizationChannel.for_ground_state(geo, target, psi)
    assert np.allclose(localize(a, ch).matrix,
                       brute_partial_trace(a, 4, target, ch.reference_state), atol=1e-12)


def test_reduced_density_is_a_state(rng):
    geo = ChainGeometry(5)
    psi = rng.standard_normal(32)
    psi /= np.linalg.norm(psi)
    rho = reduced_density(psi, geo, [1, 4, 5])
    assert rho.shape == (8, 8)
    assert np.trace(rho) == pytest.approx(1.0)
    assert np.linalg.eigvalsh(rho)[0] > -1e-12


def test_channel_validates_reference():
    geo = ChainGeometry(3)
    t = SupportInterval(1, 1)
    with pytest.raises(ValueError):
        LocalizationChannel(geo, t, np.eye(2))
    with pytest.raises(ValueError):
        LocalizationChannel(geo, t, np.eye(4))
    with pytest.raises(ValueError):
        LocalizationChannel(geo, t, np.diag([1.5, -0.5, 0, 0]))
    with pytest.raises(ValueError):
        make_channel(geo, t, "thermal")
    with pytest.raises(ValueError):
        make_channel(geo, t, GROUND_STATE)


channel_cases = st.tuples(st.integers(1, 5), st.integers(0, 4), st.booleans(), st.integers(0, 10**6))


@given(case=channel_cases)
def test_channel_properties(case):
    lo, extra, ground_ref, seed = case
    d = 5
    hi = min(lo + extra, d)
    geo = ChainGeometry(d)
    target = SupportInterval(lo, hi)
    rng = np.random.default_rng(seed)
    if ground_ref:
        psi = rng.standard_normal(32) + 1j * rng.standard_normal(32)
        ch = LocalizationChannel.for_ground_state(geo, target, psi / np.linalg.norm(psi))
    else:
        ch = LocalizationChannel(geo, target)
    a = random_matrix(rng, 32)
    pa = localize(a, ch)
    # unital
    assert np.allclose(localize(np.eye(32), ch).matrix, np.eye(2 ** target.width), atol=1e-10)
    # hermiticity preserving
    ah = (a + a.conj().T) / 2
    ph = localize(ah, ch).matrix
    assert np.max(np.abs(ph - ph.conj().T)) < 1e-10
    # idempotent
    assert np.allclose(localize(embed(pa, geo), ch).matrix, pa.matrix, atol=1e-9)
    # contractive
    assert operator_norm(pa.matrix) <= operator_norm(a) + 1e-9
    # identity on operators supported inside the target
    local = LocalOperator(target, random_matrix(rng, 2 ** target.width))
    assert np.allclose(localize(embed(local, geo), ch).matrix, local.matrix, atol=1e-10)


def test_complement_sites():
    assert complement_sites(ChainGeometry(5), SupportInterval(2, 3)) == [1, 4, 5]


def test_theta_windows_default_width():
    w = theta_windows(20, 10, 2 * 1 + 2)
    assert (w["L"].lo, w["L"].hi) == (6, 10)
    assert (w["B"].lo, w["B"].hi) == (6, 15)
    assert (w["R"].lo, w["R"].hi) == (11, 15)
    clipped = theta_windows(8, 4, 6)
    assert clipped["B"] == SupportInterval(1, 8)


@pytest.mark.parametrize("j,l,q", [(4, 0, 0.5), (4, 1, 1.0), (3, 0, 2.0)])
def test_blocks_respect_declared_supports(j, l, q):
    h, es = tfim_system(8)
    b = build_localized_blocks(h, es, j, l, q)
    geo = h.geo
    assert np.allclose(embed(b.m_left_local, geo), b.m_left, atol=1e-12)
    assert np.allclose(embed(b.m_right_local, geo), b.m_right, atol=1e-12)
    assert np.allclose(embed(b.m_bulk_local, geo), b.m_bulk, atol=1e-12)
    for m in (b.m_left, b.m_bulk, b.m_right):
        assert np.max(np.abs(m - m.conj().T)) < 1e-12
    assert b.m_left_local.support == SupportInterval(1, j)
    assert b.m_right_local.support == SupportInterval(j + 1, 8)


def test_blocks_at_zero_q_are_recentered_partition():
    h, es = tfim_system(8)
    b = build_localized_blocks(h, es, 4, 0, 0.0)
    for key in "LBR":
        assert operator_norm(getattr(b, {"L": "theta_left", "B": "theta_bulk", "R": "theta_right"}[key]).matrix) < 1e-13
    assert np.allclose(b.m_bulk, b.h_bulk)


def test_free_chain_blocks_are_exact():
    h, es = free_system(6)
    b = build_localized_blocks(h, es, 3, 0, 3.0)
    assert all(v < 1e-12 for v in b.localization_errors().values())


def test_ground_state_reference_blocks():
    h, es = tfim_system(6)
    b = build_localized_blocks(h, es, 3, 0, 1.0, reference=GROUND_STATE)
    assert np.allclose(embed(b.m_left_local, h.geo), b.m_left, atol=1e-12)


def test_commutator_vanishes_at_time_zero():
    h, es = tfim_system(8)
    a = LocalOperator(SupportInterval(1, 1), SIGMA_Z)
    probes = [LocalOperator(SupportInterval(k, k), SIGMA_X) for k in (2, 4, 6)]
    prof = lr_cone_profile(h, es, a, probes, [0.0, 0.5])
    assert np.all(prof.norms[:, 0] == 0.0)
    assert np.all(prof.norms[:, 1] > 0.0)
    assert prof.distances.tolist() == [1, 3, 5]


@given(C=st.floats(0.1, 10), a=st.floats(0.2, 3), v=st.floats(0.2, 4))
def test_lr_fit_synthetic_round_trip(C, a, v):
    times = np.linspace(0, 2, 6)
    dists = np.arange(1, 7)
    norms = C * np.exp(-a * (dists[:, None] - v * times[None, :]))
    fit = fit_lr_constants(LRProfile(times, dists, norms), floor=0.0)
    assert fit.C == pytest.approx(C, rel=1e-6)
    assert fit.a == pytest.approx(a, rel=1e-6)
    assert fit.v == pytest.approx(v, rel=1e-6)
    assert fit.points == 36


def test_lr_fit_degenerate_profiles():
    times = np.array([0.0, 1.0])
    with pytest.raises(ValueError):
        fit_lr_constants(LRProfile(times, np.array([1, 2, 3]), np.ones((3, 2))))
    with pytest.raises(ValueError):
        fit_lr_constants(LRProfile(np.arange(3.0), np.arange(1, 4), np.zeros((3, 3))))


def test_lr_profile_csv_round_trip(tmp_path):
    prof = LRProfile(np.array([0.0, 0.5]), np.array([1, 2]), np.array([[0.0, 0.3], [0.0, 0.1]]))
    path = tmp_path / "lr.csv"
    prof.to_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0] == "time,distance,commutator_norm"
    rows = [(float(t), int(d), float(v)) for t, d, v in (ln.split(",") for ln in lines[1:])]
    again = LRProfile.from_rows(rows)
    assert np.array_equal(again.norms, prof.norms)
