import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from ergolab.cocycle import (
    cocycle_along_orbit,
    log_exterior_norms_of_products,
    lyapunov_report,
    strong_exponents,
)
from ergolab.linalg import (
    compound,
    det,
    exterior_norm,
    gram_schmidt,
    singular_values,
    singular_values_2x2,
)
from ergolab.systems import DyadicPoint, NonSmoothError, make_system, sample_points

GOLDEN = math.log((3 + math.sqrt(5)) / 2)
CAT = np.array([[2.0, 1.0], [1.0, 1.0]])

entries = st.floats(min_value=-10, max_value=10, allow_nan=False)


def test_exterior_norm_examples():
    assert exterior_norm(np.eye(2), 1) == pytest.approx(1.0)
    assert exterior_norm(np.eye(2), 2) == pytest.approx(1.0)
    assert exterior_norm(np.diag([3.0, 2.0]), 2) == pytest.approx(6.0)
    assert exterior_norm(CAT, 1) == pytest.approx((3 + math.sqrt(5)) / 2, rel=1e-14)
    with pytest.raises(ValueError):
        exterior_norm(CAT, 3)


@settings(max_examples=300, deadline=None)
@given(arrays(float, (2, 2), elements=entries))
def test_jacobi_matches_closed_form_2x2(a):
    np.testing.assert_allclose(singular_values(a), singular_values_2x2(a), rtol=1e-9, atol=1e-9)


@settings(max_examples=200, deadline=None)
@given(arrays(float, (3, 3), elements=entries))
def test_jacobi_3x3_invariants(a):
    sv = singular_values(a)
    assert np.all(np.diff(sv) <= 1e-12)
    # sum of squares = Frobenius norm, product = |det|
    assert np.sum(sv**2) == pytest.approx(np.sum(a**2), rel=1e-9, abs=1e-9)
    assert np.prod(sv) == pytest.approx(abs(det(a)), rel=1e-7, abs=1e-7)


@settings(max_examples=100, deadline=None)
@given(arrays(float, (3, 3), elements=entries), arrays(float, (3, 3), elements=entries))
def test_compound_is_multiplicative(a, b):
    # Cauchy-Binet
    for k in (1, 2, 3):
        np.testing.assert_allclose(compound(a @ b, k), compound(a, k) @ compound(b, k), rtol=1e-8, atol=1e-6)


def test_exterior_norm_is_product_of_top_singular_values():
    rng = np.random.default_rng(5)
    for _ in range(50):
        a = rng.standard_normal((3, 3))
        sv = singular_values(a)
        for k in (1, 2, 3):
            top = singular_values(compound(a, k))[0]
            assert exterior_norm(a, k) == pytest.approx(top, rel=1e-10)
            assert exterior_norm(a, k) == pytest.approx(np.prod(sv[:k]), rel=1e-12)


def test_gram_schmidt_is_a_qr():
    rng = np.random.default_rng(2)
    a = rng.standard_normal((10, 3, 3))
    q, r = gram_schmidt(a)
    np.testing.assert_allclose(q @ r, a, atol=1e-12)
    np.testing.assert_allclose(np.swapaxes(q, 1, 2) @ q, np.broadcast_to(np.eye(3), (10, 3, 3)), atol=1e-12)
    assert np.all(np.tril(r, -1) == 0) and np.all(np.diagonal(r, axis1=1, axis2=2) >= 0)


def test_products_match_direct_multiplication():
    rng = np.random.default_rng(8)
    for d in (2, 3):
        J = rng.standard_normal((4, 12, d, d))
        got = log_exterior_norms_of_products(J)
        for b in range(4):
            P = np.eye(d)
            for k in range(12):
                P = J[b, k] @ P
            sv = singular_values(P)
            # the explicit product loses the smallest singular value, so the
            # top power is checked against sum log|det J_k| instead
            np.testing.assert_allclose(got[b, :-1], np.cumsum(np.log(sv))[:-1], rtol=1e-9, atol=1e-9)
            logdet = sum(math.log(abs(det(J[b, k]))) for k in range(12))
            assert got[b, -1] == pytest.approx(logdet, abs=1e-10)


def test_huge_products_stay_in_log_space():
    # diag(e, 1/e) rotated by a fixed orthogonal change of basis; 5000 steps
    c, s = math.cos(0.3), math.sin(0.3)
    R = np.array([[c, -s], [s, c]])
    A = R @ np.diag([math.e, 1 / math.e]) @ R.T
    J = np.broadcast_to(A, (1, 5000, 2, 2))
    ext = log_exterior_norms_of_products(J)[0]
    assert ext[0] == pytest.approx(5000.0, rel=1e-12)
    assert ext[1] == pytest.approx(0.0, abs=1e-8)


def test_cocycle_examples():
    rec = cocycle_along_orbit(make_system("doubling"), [0.3], 100)
    assert rec.log_singvals[0] == pytest.approx(100 * math.log(2), rel=1e-14)
    rec = cocycle_along_orbit(make_system("rotation"), [0.3], 77)
    assert np.all(rec.log_singvals == 0)
    rec = cocycle_along_orbit(make_system("cat"), [0.1, 0.7], 50)
    assert rec.log_singvals[0] / 50 == pytest.approx(GOLDEN, abs=1e-9)
    assert rec.per_step_jacobians_consumed == 50


def test_lyapunov_report_examples():
    assert lyapunov_report(make_system("rotation"), [0.2], 500).sigma_chi_plus == 0
    rep = lyapunov_report(make_system("doubling"), [0.2], 1000)
    assert rep.chi_k[0] == pytest.approx(math.log(2), abs=1e-12)
    rep = lyapunov_report(make_system("cat"), [0.2, 0.9], 1000)
    assert rep.chi_k[0] == pytest.approx(GOLDEN, abs=1e-8)
    assert rep.chi_k[1] == pytest.approx(0.0, abs=1e-8)
    assert rep.sigma_chi_plus == pytest.approx(GOLDEN, abs=1e-8)


def test_logistic_exponent_is_log_two():
    # mu = 4 is conjugate to the tent map; a.e. exponent is log 2
    s = make_system("logistic", mu=4.0)
    x = sample_points(s, 1, 1)[0]
    assert lyapunov_report(s, x, 200_000).chi_k[0] == pytest.approx(math.log(2), abs=0.02)


def test_tent_refuses_non_smooth_orbit():
    tent = make_system("tent")
    with pytest.raises(NonSmoothError, match="iterate 2"):
        cocycle_along_orbit(tent, [0.125], 10)


def test_dyadic_point_cocycle():
    s = make_system("doubling")
    p = sample_points(s, 1, 9, 3000)[0]
    assert isinstance(p, DyadicPoint)
    assert lyapunov_report(s, p, 3000).chi_k[0] == pytest.approx(math.log(2), abs=1e-12)


def test_strong_exponents_examples():
    rep = strong_exponents(make_system("doubling"), [0.3], [1, 2, 4], 10_000)
    for p in (1, 2, 4):
        assert rep.lambda_p[p] == pytest.approx(p * math.log(2), rel=1e-12)
    assert rep.lam == pytest.approx(math.log(2), rel=1e-12)
    rep = strong_exponents(make_system("rotation"), [0.3], [1, 3], 1000)
    assert rep.lam == 0 and all(v == 0 for v in rep.lambda_p.values())
    rep = strong_exponents(make_system("cat"), [0.3, 0.4], [1, 2, 4, 8], 10_000)
    assert rep.lam == pytest.approx(GOLDEN, abs=1e-3)
    assert rep.lambda_p_limsup[8] == pytest.approx(rep.lambda_p[8], rel=1e-12)


def test_strong_exponent_dominates_lyapunov():
    # lambda >= chi+ (always), tested on a non-constant Jacobian
    s = make_system("logistic", mu=3.9)
    x = sample_points(s, 1, 4)[0]
    lam = strong_exponents(s, x, [1, 2, 4], 5000).lam
    chi = lyapunov_report(s, x, 5000).sigma_chi_plus
    assert lam >= chi - 1e-9


def test_strong_exponents_lambda_p_is_subadditive_in_p():
    s = make_system("logistic", mu=3.8)
    x = sample_points(s, 1, 2)[0]
    rep = strong_exponents(s, x, [1, 2, 4], 4000)
    assert rep.lambda_p[2] <= 2 * rep.lambda_p[1] + 1e-2
    assert rep.lambda_p[4] <= 2 * rep.lambda_p[2] + 1e-2


def test_report_records():
    rec = lyapunov_report(make_system("cat"), [0.2, 0.3], 10).to_record()
    assert set(rec) == {"x", "n", "chi", "sigma_chi_plus"}
    rec = strong_exponents(make_system("cat"), [0.2, 0.3], [1, 2], 10).to_record()
    assert set(rec["lambda_p"]) == {"1", "2"}


def test_batched_reports_match_single_point_reports():
    from ergolab.cocycle import lyapunov_reports

    for name in ("cat", "doubling"):
        s = make_system(name)
        pts = sample_points(s, 5, 3, 500)
        batch = lyapunov_reports(s, pts, 500)
        for x, rep in zip(pts, batch):
            single = lyapunov_report(s, x, 500)
            np.testing.assert_allclose(rep.chi_k, single.chi_k, rtol=1e-12, atol=1e-12)
    assert lyapunov_reports(make_system("cat"), [], 10) == []
