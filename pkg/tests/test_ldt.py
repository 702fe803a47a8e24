import math

import numpy as np
import pytest

import qplab.sl2 as sl2
from conftest import random_real_series
from qplab import contfrac
from qplab.cocycle import QpCocycle, amo, rotation_cocycle
from qplab.ldt import (
    CfExhausted,
    FejerKernel,
    LdtScales,
    ScalesInvalid,
    avalanche_check,
    deviation_set_measure,
    fejer_average,
    gevrey_truncate,
    induction_sequences,
    ldt_experiment,
    lyapunov_truncation_gap,
    periodic_ln_bound,
    strip_log_norm_bound,
)
from qplab.udspace import FourierSeries, MatSeries

GOLDEN = (math.sqrt(5) - 1) / 2


def test_fejer_identities_exact():
    for R, p in ((2, 1), (10, 1), (64, 2), (333, 3), (1000, 4)):
        ker = FejerKernel(R, p)
        assert ker.identity_exact()
    assert np.all(FejerKernel(9, 1).c == 1)


def test_fejer_point_values():
    ker = FejerKernel(2, 1)
    assert abs(ker.eval(0.5)) <= 1e-15
    assert ker.eval(0.0) == pytest.approx(1.0)


def test_fejer_envelope(rng):
    ts = rng.uniform(0, 1, 3000)
    for R, p in ((10, 1), (100, 2), (1000, 4)):
        assert FejerKernel(R, p).envelope_ok(ts)


def test_fejer_average_constant():
    ker = FejerKernel(16, 2)
    out = fejer_average(lambda x: 2.5 * np.ones_like(x), GOLDEN, ker, np.array([0.1, 0.7]))
    assert np.allclose(out, 2.5)


def test_fejer_average_matches_spectral_form(rng):
    # for band-limited u the average equals mean + sum a_k K(k alpha) e(k theta)
    u = random_real_series(rng, 4)
    ker = FejerKernel(12, 2)
    th = rng.uniform(0, 1, 5)
    direct = fejer_average(lambda x: np.real(u(x)), GOLDEN, ker, th)
    spectral = np.full(5, float(np.real(u.mean())), dtype=complex)
    for k in range(-4, 5):
        if k == 0:
            continue
        spectral += u.c(k) * ker.eval(k * GOLDEN) * np.exp(2j * np.pi * k * th)
    assert np.max(np.abs(direct - np.real(spectral))) <= 1e-10


def test_scales_validation():
    LdtScales()  # defaults are consistent
    with pytest.raises(ScalesInvalid):
        LdtScales(nu=0.4)
    with pytest.raises(ScalesInvalid):
        LdtScales(delta=0.1)
    with pytest.raises(ScalesInvalid):
        LdtScales(p=5)


def test_deviation_measure_trivial_cases():
    sc = LdtScales()
    out = deviation_set_measure(lambda th: np.ones_like(th), 8, 13, sc, S=1.0, rho=0.1)
    assert out["measure"] == 0.0
    # threshold beyond 2S can never be exceeded
    out = deviation_set_measure(
        lambda th: np.sign(np.cos(2 * np.pi * th)), 8, 13, sc, S=1.0, rho=0.1, threshold=2.5
    )
    assert out["measure"] == 0.0


def test_deviation_measure_decay(rng):
    from qplab.cocycle import _transfer_grid

    sc = LdtScales()

    def make_u(N):
        def u(th):
            sh = np.asarray(th).shape
            flat = np.asarray(th).ravel()
            mats, ls = _transfer_grid(amo(3.0, 0.0, GOLDEN), flat, N)
            return ((np.log(sl2.op_norm(mats)) + ls) / N).reshape(sh)

        return u

    ms = []
    for q, a in ((13, 8), (21, 13), (34, 21)):
        R = int(round(q**sc.sigma))
        out = deviation_set_measure(
            make_u(R), a, q, sc, S=2.0, rho=0.05, grid_mult=32, threshold=0.005
        )
        ms.append(out["measure"])
    assert ms[0] > ms[1] > ms[2]


def test_ldt_experiment_trivial():
    diag = QpCocycle(
        GOLDEN,
        lambda th: np.broadcast_to(np.diag([3.0, 1 / 3.0]), np.asarray(th).shape + (2, 2)).copy(),
    )
    out = ldt_experiment(diag, 8, 13, N=40, kappa=0.01)
    assert out["measure"] == 0.0
    rot = rotation_cocycle(GOLDEN, 0.3)
    out = ldt_experiment(rot, 8, 13, N=200, kappa=0.05)
    assert out["measure"] == 0.0


def test_ldt_experiment_decay():
    ms = []
    for q, a in ((13, 8), (21, 13), (34, 21)):
        N = int(round(q**1.45))
        r = ldt_experiment(amo(3.0, 0.0, GOLDEN), a, q, N=N, kappa=0.05, grid_mult=128)
        ms.append(r["measure"])
    assert ms[0] > ms[1] > ms[2]


def test_avalanche_constant_diag():
    mu = 50.0
    out = avalanche_check([np.diag([mu, 1 / mu])] * 10, mu)
    assert out["lhs"] <= 1e-9
    assert out["hypothesis_ok"]


def test_avalanche_flags_violation():
    mu = 50.0
    mats = [np.diag([mu, 1 / mu])] * 5 + [np.eye(2)]
    out = avalanche_check(mats, mu)
    assert not out["hypothesis_ok"]
    assert out["lhs"] >= 0.0


def test_avalanche_transfer_blocks():
    # aligned AMO transfer blocks on the good set keep lhs/(n/mu) bounded
    c = amo(3.0, 0.0, GOLDEN)
    N = 20
    rng = np.random.default_rng(3)
    worst = 0.0
    from qplab.cocycle import transfer

    for _ in range(20)[:20]:
        th = float(rng.uniform(0, 1))
        blocks = [transfer(c, (th + j * N * GOLDEN) % 1.0, N).plain() for j in range(6)]
        norms = [float(sl2.op_norm(b)) for b in blocks]
        mu = min(norms)
        out = avalanche_check(blocks, mu)
        if out["hypothesis_ok"]:
            worst = max(worst, out["lhs"] / out["rhs_unit"])
    assert worst <= 1e2


def _gevrey_mat(rng, K, nu, rho, amp=1.0):
    ks = np.arange(-K, K + 1)
    dec = np.exp(-rho * np.abs(2 * np.pi * ks) ** nu)
    def mk():
        c = (rng.normal(size=2 * K + 1) + 0j) * dec
        return FourierSeries(amp * (c + np.conj(c[::-1])) / 2.0, True)
    x, y = mk(), mk()
    return MatSeries.from_entries(x, y, y, x * (-1.0))


def test_gevrey_truncate_identity_cases(rng):
    A = _gevrey_mat(rng, 2, 0.7, 1.0, amp=0.1)
    out = gevrey_truncate(A, 8, nu=0.7, rho=1.0, delta=0.6)
    assert out["N_tilde"] >= A.K
    assert out["A_trunc"].K == A.K
    assert out["measured_error"] == 0.0


def test_gevrey_truncate_bound(rng):
    X = _gevrey_mat(rng, 48, 0.7, 0.15, amp=0.2)
    A = X.exp_map(out_K=96, tail_tol=None)
    for N in (4, 8, 16):
        out = gevrey_truncate(A, N, nu=0.7, rho=0.1, delta=0.6)
        assert out["ok"], (N, out)


def test_gevrey_certificate_failure(rng):
    bad = MatSeries.from_entries(
        FourierSeries.from_dict({30: 1.0, -30: 1.0}, real_flag=True),
        FourierSeries.zero(30),
        FourierSeries.zero(30),
        FourierSeries.from_dict({30: -1.0, -30: -1.0}, real_flag=True),
    )
    with pytest.raises(ValueError):
        gevrey_truncate(bad, 4, nu=0.7, rho=2.0, delta=0.6, norm_bound=1.0)


def test_strip_bound_and_lyapunov_gap(rng):
    X = _gevrey_mat(rng, 32, 0.7, 0.2, amp=0.1)
    A = X.exp_map(out_K=64, tail_tol=None)
    out = gevrey_truncate(A, 6, nu=0.7, rho=0.15, delta=0.6)
    assert out["N_tilde"] < A.K  # truncation is nontrivial at this scale
    sb = strip_log_norm_bound(out["A_trunc"], out["rho_N"], N=24, alpha=GOLDEN)
    assert sb["ok"]
    gap = lyapunov_truncation_gap(
        QpCocycle.from_series(GOLDEN, A), out["A_trunc"], GOLDEN, N=6,
        log_c=out["log_c"], b=0.6 / (1 / 0.7 - 1),
    )
    assert gap["ok"]


def test_gevrey_truncate_bandwidth_one_identity():
    # a single-harmonic fiber is untouched for every N >= 2
    V1 = MatSeries.from_entries(
        FourierSeries.cosine(0.4),
        FourierSeries.zero(1),
        FourierSeries.zero(1),
        FourierSeries.cosine(-0.4),
    )
    for N in (2, 4, 9):
        out = gevrey_truncate(V1, N, nu=0.7, rho=0.05, delta=0.6)
        assert out["measured_error"] == 0.0
        assert out["A_trunc"].K == V1.K


def test_periodic_ln_bound_cases():
    # free case: both sides near zero inside the spectrum
    out = periodic_ln_bound(FourierSeries.zero(1), 1, 2, 0.7, 40)
    assert abs(out["L_periodic"]) <= 1e-12
    assert out["ok"]
    lam = 3.0
    for n in (10, 50, 250):
        out = periodic_ln_bound(FourierSeries.cosine(2 * lam), 1, 2, 0.0, n)
        assert out["slack"] >= 0.0
    # n = q reduces the correction to 2 C1
    out = periodic_ln_bound(FourierSeries.cosine(2 * lam), 1, 2, 0.0, 2)
    th = np.arange(128) / 128
    from qplab.cocycle import schrodinger

    C1 = float(np.max(np.log(sl2.op_norm(schrodinger(FourierSeries.cosine(2 * lam), 0.0, 0.5).fiber(th)))))
    assert out["bound"] == pytest.approx(out["L_periodic"] + 2 * C1, rel=1e-9)


def test_induction_sequences_literal_small_scale():
    cf = contfrac.expand("golden", 30)
    sc = LdtScales()  # gamma = 0.5
    out = induction_sequences(cf, sc, s_max=1, q0_min=34)
    assert out["terms"][0]["q_tilde"] == 34
    assert out["terms"][1]["q_tilde"] == 13  # smallest q above e^(34^0.25) ~ 11.2


def test_induction_sequences_monotone_regime():
    cf = contfrac.expand("golden", 250)
    sc = LdtScales()
    out = induction_sequences(cf, sc, s_max=4, q0_min=10**5)
    terms = out["terms"]
    assert len(terms) >= 3
    for t in terms[1:]:
        assert t["regime_ok"] and t["sandwich_ok"] and t["divides"]
    for t in terms:
        assert t["window_ok"]
    assert out["exhausted_at"] is not None  # golden at depth 250 cannot reach s=3


def test_induction_sequences_exhaustion():
    cf = contfrac.expand("golden", 40)
    sc = LdtScales()
    with pytest.raises(CfExhausted):
        induction_sequences(cf, sc, s_max=2, q0_min=10**12)
