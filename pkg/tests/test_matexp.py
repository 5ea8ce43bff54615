import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from oracles import random_sym, taylor_expm

from adfem import matexp as me
from adfem.matexp import ExpmConfig, Mat2, Sym2, SmallNormPolicy

NAIVE = ExpmConfig(small_norm_policy="naive_identity")
FIX = ExpmConfig(small_norm_policy="taylor_fix")
NORET = ExpmConfig(small_norm_policy="no_return")


def arr(m):
    return m.to_array()


@pytest.mark.parametrize("m, g", [(Sym2(3.0, 1.0, 1.0), 1.0), (Sym2(0.4, 0.9, 0.4), 0.0),
                                  (Sym2(0.0, 0.0, -4.0), 2.0)])
def test_gamma(m, g):
    assert me.gamma(m) == g


def test_infnorm_and_inverse():
    assert me.infnorm2(Mat2(1.0, -2.0, -2.0, 0.5)) == 3.0
    assert arr(me.matinv2(Mat2(1.0, 0.0, 0.0, 1.0))).tolist() == [[1, 0], [0, 1]]
    with pytest.raises(me.SingularMatrixError):
        me.matinv2(Mat2(1.0, 2.0, 2.0, 4.0))


def test_inverse_round_trip():
    rng = np.random.default_rng(5)
    for _ in range(50):
        a = rng.normal(size=4) + np.array([3, 0, 0, 3])
        A = Mat2(*a)
        np.testing.assert_allclose(arr(me.matmul2(A, me.matinv2(A))), np.eye(2), atol=1e-13)


def test_ceil_log2_exact_powers():
    assert me.ceil_log2(np.array([0.5, 1.0, 2.0, 3.0, 4.0, 4.000001])).tolist() == [-1, 0, 1, 2, 2, 3]


def test_pade_coefficients_are_fixed():
    assert ExpmConfig().pade == (1 / 2, 5 / 44, 1 / 66, 1 / 792, 1 / 15840, 1 / 665280)
    with pytest.raises(ValueError):
        ExpmConfig(pade=(1.0,) * 6)


@pytest.mark.parametrize("cfg", [NAIVE, FIX, NORET])
def test_expm_zero(cfg):
    assert arr(me.expm(Sym2(0.0, 0.0, 0.0), cfg)).tolist() == [[1, 0], [0, 1]]


def test_expm_offdiag_against_taylor():
    t = 0.7
    np.testing.assert_allclose(arr(me.expm(Sym2(0.0, t, 0.0))), taylor_expm([[0, t], [t, 0]]),
                               rtol=0, atol=1e-12)


def test_expm_diagonal():
    np.testing.assert_allclose(arr(me.expm(Sym2(1.0, 0.0, -1.0))), np.diag([np.e, 1 / np.e]), atol=1e-12)


def test_expm_batch_matches_scalar_calls():
    rng = np.random.default_rng(2)
    ms = np.array([random_sym(rng, 4) for _ in range(20)])
    ms[3] = 0.0
    ms[7] = [1e-14, 0, 0]
    batch = arr(me.expm(Sym2(ms[:, 0], ms[:, 1], ms[:, 2])))
    for i, m in enumerate(ms):
        np.testing.assert_array_equal(batch[i], arr(me.expm(Sym2(*m))))


def test_verbatim_scaling_is_less_accurate():
    # the textbook choice j = ceil(log2 ||M||) leaves ~1e-11 error at ||M|| = 4
    m = Sym2(4.0, 0.0, 0.0)
    ref = taylor_expm([[4.0, 0.0], [0.0, 0.0]])
    verbatim = np.abs(arr(me.expm(m, ExpmConfig(scaling_margin=0))) - ref).max()
    default = np.abs(arr(me.expm(m)) - ref).max()
    assert default < 1e-12 and verbatim > 1e-11


def test_dexpm_closed_examples():
    E = Sym2(0.3, -1.2, 0.8)
    np.testing.assert_allclose(arr(me.dexpm_closed(Sym2(0.0, 0.0, 0.0), E)), arr(E), atol=1e-15)
    a = 0.6
    np.testing.assert_allclose(arr(me.dexpm_closed(Sym2(a, 0.0, a), E)), np.exp(a) * arr(E), rtol=1e-14)


def test_dexpm_closed_against_central_differences():
    rng = np.random.default_rng(11)
    h = 1e-6
    for _ in range(50):
        M, dM = Sym2(*random_sym(rng, 2)), Sym2(*rng.normal(size=3))
        fd = (arr(me.expm(M + dM * h)) - arr(me.expm(M - dM * h))) / (2 * h)
        np.testing.assert_allclose(arr(me.dexpm_closed(M, dM)), fd, atol=1e-8)


def test_naive_policy_kills_the_derivative():
    dM = Sym2(0.4, -0.3, 0.9)
    zero = Sym2(0.0, 0.0, 0.0)
    assert not arr(me.tangent_of(lambda m: me.expm(m, NAIVE), zero, dM)).any()
    for cfg in (FIX, NORET):
        np.testing.assert_allclose(arr(me.tangent_of(lambda m: me.expm(m, cfg), zero, dM)), arr(dM),
                                   atol=1e-15)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-1e-13, 1e-13), min_size=3, max_size=3),
       st.lists(st.floats(-1, 1), min_size=3, max_size=3))
def test_fix_and_no_return_agree_below_floor(m, d):
    M, dM = Sym2(*m), Sym2(*d)
    a, b = me.expm(M, FIX), me.expm(M, NORET)
    np.testing.assert_allclose(arr(a), arr(b), atol=1e-12)
    ta = me.tangent_of(lambda x: me.expm(x, FIX), M, dM)
    tb = me.tangent_of(lambda x: me.expm(x, NORET), M, dM)
    np.testing.assert_allclose(arr(ta), arr(tb), atol=1e-12)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-1, 1), min_size=3, max_size=3), st.floats(0, 4))
def test_det_equals_exp_trace(a, scale):
    a = np.array(a)
    n = max(abs(a[0]) + abs(a[1]), abs(a[1]) + abs(a[2]))
    if n > 0:
        a = a * scale / n
    M = Sym2(*a)
    e = arr(me.expm(M))
    assert abs(np.linalg.det(e) / np.exp(a[0] + a[2]) - 1) <= 1e-10


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-1, 1), min_size=3, max_size=3), st.floats(0, 2),
       st.lists(st.floats(-1, 1), min_size=3, max_size=3))
def test_tangent_through_expm_matches_closed_form(a, scale, d):
    a = np.array(a)
    n = max(abs(a[0]) + abs(a[1]), abs(a[1]) + abs(a[2]))
    if n > 0:
        a = a * scale / n
    M, dM = Sym2(*a), Sym2(*d)
    np.testing.assert_allclose(arr(me.tangent_of(me.expm, M, dM)), arr(me.dexpm_closed(M, dM)), atol=1e-9)


# --- f and g ----------------------------------------------------------------------


def test_g_values():
    assert me.g_func(Sym2(0.7, 0.0, 0.7)) == pytest.approx(1 / 6, abs=1e-15)
    assert me.g_func(Sym2(1.0, 0.0, -1.0)) == pytest.approx(np.sinh(1) - 1, rel=1e-14)


def test_f_values():
    assert me.f_func(Sym2(0.2, 0.0, 0.2)) == pytest.approx(1 / 3, abs=1e-15)
    assert me.f_func(Sym2(1.0, 0.0, -1.0)) == pytest.approx(2 / (np.e ** 2 - 1), rel=1e-12)


def test_f_series_against_mpmath():
    import mpmath as mp

    with mp.workdps(50):
        for s in (1e-3, 0.1, 0.5, 0.9, 0.999):
            ref = float((s + 2 * s / (mp.exp(2 * mp.mpf(s)) - 1) - 1) / mp.mpf(s) ** 2)
            assert me.f_series(s) == pytest.approx(ref, rel=1e-15)
            ref_g = float((mp.sinh(mp.mpf(s)) - s) / mp.mpf(s) ** 3)
            assert me.g_series(s) == pytest.approx(ref_g, rel=1e-15)


def test_branches_agree_at_switch():
    s = me.SERIES_SWITCH
    assert abs(me.f_closed(s) / me.f_series(s) - 1) <= 1e-10
    assert abs(me.g_closed(s) / me.g_series(s) - 1) <= 1e-10


def test_f_tangent_is_finite_at_zero():
    t = me.tangent_of(lambda m: Sym2(me.f_func(m), 0.0, 0.0), Sym2(0.0, 0.0, 0.0), Sym2(1.0, 1.0, 0.0))
    assert np.isfinite(arr(t)).all()


# --- spectral variant -------------------------------------------------------------


def test_spectral_values_agree():
    rng = np.random.default_rng(9)
    for _ in range(100):
        M = Sym2(*random_sym(rng, 2))
        np.testing.assert_allclose(arr(me.expm_spectral(M)), arr(me.expm(M)), atol=1e-10)


def test_spectral_tangent_fine_when_separated():
    M, dM = Sym2(2.0, 0.0, -1.0), Sym2(0.3, 0.7, -0.2)
    np.testing.assert_allclose(arr(me.tangent_of(me.expm_spectral, M, dM)), arr(me.dexpm_closed(M, dM)),
                               atol=1e-10)


def test_spectral_tangent_breaks_near_degeneracy():
    M, dM = Sym2(1.0, 1e-10, 1.0), Sym2(0.3, 0.7, -0.2)
    ref = arr(me.dexpm_closed(M, dM))
    spec = arr(me.tangent_of(me.expm_spectral, M, dM))
    dev = np.abs(spec - ref).max() / np.abs(ref).max() if np.isfinite(spec).all() else np.inf
    assert dev > 1e3
    np.testing.assert_allclose(arr(me.tangent_of(me.expm, M, dM)), ref, atol=1e-8)


def test_policy_enum_round_trip():
    assert ExpmConfig(small_norm_policy="no_return").small_norm_policy is SmallNormPolicy.NO_RETURN
