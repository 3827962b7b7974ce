import numpy as np
import pytest
from hypothesis import given, strategies as st

from nvdnp import analysis as A
from nvdnp import constants as C
from nvdnp.errors import ConvergenceError

# [DERIVED] h * 10.7084 MHz/T * 6 T / (2 k 297 K), CODATA h and k
P_THERMAL_6T = 5.191132780488e-6


def test_fid_zero_and_linearity():
    assert not np.any(A.synthesize_fid(0.0, 1e3, 1e-3, 256).samples)
    a = A.synthesize_fid(0.3, 1e3, 1e-3, 256)
    b = A.synthesize_fid(0.6, 1e3, 1e-3, 256)
    assert np.array_equal(b.samples, 2 * a.samples)
    with pytest.raises(ValueError):
        A.synthesize_fid(1.0, 0.0, 0.0)


def test_integral_linear_in_polarization():
    ref = A.band_integral(A.transform(A.synthesize_fid(1.0, 500.0, 2e-3, 8192, 2e-5)))
    for p in (0.1, 2.5, 7.0):
        got = A.band_integral(A.transform(A.synthesize_fid(p, 500.0, 2e-3, 8192, 2e-5)))
        assert got == pytest.approx(p * ref, rel=1e-9)


@given(st.integers(2, 512), st.floats(1e-7, 1e-2), st.integers(0, 10 ** 6))
def test_parseval(n, dt, seed):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=n) + 1j * rng.normal(size=n)
    spec = A.transform(A.FidRecord(dt, x))
    df = spec.frequencies[1] - spec.frequencies[0]
    assert np.sum(np.abs(spec.amplitudes) ** 2) * df == pytest.approx(np.sum(np.abs(x) ** 2) * dt, rel=1e-9)


@given(st.integers(2, 512), st.integers(0, 10 ** 6))
def test_inverse_transform_round_trip(n, seed):
    rng = np.random.default_rng(seed)
    fid = A.FidRecord(1e-5, rng.normal(size=n) + 1j * rng.normal(size=n), frequency_offset=123.0)
    back = A.inverse_transform(A.transform(fid), frequency_offset=123.0)
    assert back.sample_interval == pytest.approx(fid.sample_interval, rel=1e-12)
    assert np.max(np.abs(back.samples - fid.samples)) < 1e-10 * max(1.0, np.max(np.abs(fid.samples)))


def test_bin_centred_tone_has_no_leakage():
    n, dt = 1024, 1e-4
    k = 37
    t = np.arange(n) * dt
    spec = A.transform(A.FidRecord(dt, np.exp(2j * np.pi * k / (n * dt) * t)))
    mags = np.abs(spec.amplitudes)
    peak = np.argmax(mags)
    assert spec.frequencies[peak] == pytest.approx(k / (n * dt))
    others = np.delete(mags, peak)
    assert np.max(others) <= 1e-9 * mags[peak]


def test_real_even_input_gives_real_spectrum(rng):
    n = 256
    x = rng.normal(size=n)
    x[1:] = 0.5 * (x[1:] + x[1:][::-1])  # x[k] == x[n-k]
    spec = A.transform(A.FidRecord(1e-3, x))
    assert np.max(np.abs(spec.amplitudes.imag)) < 1e-10 * np.max(np.abs(spec.amplitudes))


def test_lorentzian_width_from_t2star():
    # [DERIVED] FWHM of the absorption line = 1 / (pi T2*) = 318.31 Hz
    fid = A.synthesize_fid(1.0, 2e3, 1e-3, 2 ** 16, 1e-5)
    centre, fwhm = A.linewidth(A.transform(fid), part="real")
    assert centre == pytest.approx(2e3, abs=2.0)
    assert fwhm == pytest.approx(1 / (np.pi * 1e-3), rel=0.02)


def test_band_integral_basics():
    f = np.linspace(-50.0, 50.0, 101)
    assert A.band_integral(A.FreqSpectrum(f, np.zeros(101)), (-50, 50)) == 0.0
    assert A.band_integral(A.FreqSpectrum(f, np.ones(101)), (-50, 50)) == pytest.approx(100.0, rel=1e-15)
    spec = A.FreqSpectrum(f, np.exp(-f ** 2 / 100) + 0j)
    scaled = A.FreqSpectrum(f, 3.0 * spec.amplitudes)
    assert A.band_integral(scaled, (-20, 20)) == pytest.approx(3.0 * A.band_integral(spec, (-20, 20)), rel=1e-14)
    assert A.band_integral(spec, (-20, 20), part="magnitude") == pytest.approx(A.band_integral(spec, (-20, 20)))
    with pytest.raises(ValueError):
        A.band_integral(spec, (100, 200))
    with pytest.raises(ValueError):
        A.band_integral(spec, (-20, 20), part="imag")


def test_spectrum_type_invariants():
    with pytest.raises(ValueError):
        A.FreqSpectrum([0.0, 0.0], [1.0, 2.0])
    with pytest.raises(ValueError):
        A.FreqSpectrum([0.0, 1.0], [1.0])
    with pytest.raises(ValueError):
        A.FidRecord(0.0, [1.0, 2.0])
    with pytest.raises(ValueError):
        A.FidRecord(1.0, [1.0])


def test_thermal_polarization_at_6T():
    # frozen oracle value; 5.190e-6 is its 3-digit rounding
    assert A.thermal_polarization(C.GAMMA_13C, 6.0, 297.0) == pytest.approx(P_THERMAL_6T, abs=1e-15)
    assert A.estimate_polarization(A.EnhancementInputs(1.0, 1.0)) == pytest.approx(P_THERMAL_6T, abs=1e-15)


def test_estimate_examples():
    assert A.estimate_polarization(A.EnhancementInputs(217.7, 1.0)) == pytest.approx(0.00113, rel=5e-3)
    assert A.estimate_polarization(A.EnhancementInputs(0.0, 1.0)) == 0.0
    with pytest.raises(ValueError):
        A.EnhancementInputs(1.0, 0.0)
    with pytest.raises(ValueError):
        A.EnhancementInputs(1.0, 1.0, b_em=0.0)
    with pytest.raises(ValueError):
        A.EnhancementInputs(1.0, 1.0, t_r=0.0)


def test_enhancement_examples():
    assert A.enhancement_factor(A.EnhancementInputs(1.0, 1.0, b_sm=1.0, b_em=1.0, t_l=297.0)) == 1.0
    eps = A.enhancement_factor(A.EnhancementInputs(217.7, 1.0, t_l=360.0))
    assert eps == pytest.approx(217.7 * 6 / 0.0176 * 360 / 297, rel=1e-15)
    assert 8.9e4 <= eps <= 1.01e5


@given(st.floats(1e-3, 1e3), st.floats(1e-3, 1e3), st.floats(0.1, 10.0))
def test_estimators_are_homogeneous(s_h, s_t, k):
    base = A.EnhancementInputs(s_h, s_t)
    for fn in (A.estimate_polarization, A.enhancement_factor):
        assert fn(A.EnhancementInputs(k * s_h, s_t)) == pytest.approx(k * fn(base), rel=1e-12)
        assert fn(A.EnhancementInputs(s_h, k * s_t)) == pytest.approx(fn(base) / k, rel=1e-12)
    doubled_field = A.EnhancementInputs(s_h, s_t, b_sm=12.0)
    assert A.enhancement_factor(doubled_field) == pytest.approx(2 * A.enhancement_factor(base), rel=1e-12)


def test_pipeline_closure():
    kw = dict(larmor_offset=800.0, t2_star=1e-3, n_points=8192, sample_interval=2e-5)
    p_th = A.thermal_polarization(C.GAMMA_13C, 6.0, 297.0)
    target = 1.13e-3
    est = A.pipeline_polarization(A.synthesize_fid(target, **kw), A.synthesize_fid(p_th, **kw))
    assert est == pytest.approx(target, rel=1e-6)


def test_thermometry_examples():
    assert A.temperature_from_zfs(2.0e9, 3.74e9) == pytest.approx(297.0)  # D = d_ref
    t = A.temperature_from_zfs(2.3703e9, 3.3567e9)
    assert A.zero_field_splitting(2.3703e9, 3.3567e9) == pytest.approx(2.8635e9)
    assert t == pytest.approx(297 + 6.5e6 / 74e3, rel=1e-12)
    assert t == pytest.approx(384.84, abs=0.01)
    with pytest.raises(ValueError):
        A.temperature_from_zfs(3.0e9, 2.0e9)


@given(st.floats(-20e6, 20e6))
def test_temperature_linear_in_zfs_shift(dd):
    d_ref = C.ZFS_ROOM
    t = A.temperature_from_zfs(d_ref + dd - 5e8, d_ref + dd + 5e8)
    assert t - 297.0 == pytest.approx(dd / -74e3, abs=1e-6)


@pytest.fixture(scope="module")
def odmr_axis():
    return np.linspace(2.2e9, 3.5e9, 2001)


def test_doublet_recovers_centres(odmr_axis):
    y = A.synthesize_odmr(odmr_axis, 2.370e9, 3.357e9)
    fit = A.odmr_doublet_fit(odmr_axis, y)
    assert fit.f_minus == pytest.approx(2.370e9, rel=1e-5)
    assert fit.f_plus == pytest.approx(3.357e9, rel=1e-5)
    assert fit.linewidths == pytest.approx((10e6, 10e6), rel=1e-4)
    assert fit.residual_norm < 1e-8


def test_doublet_order_independent_of_depth(odmr_axis):
    y = A.doublet_model(odmr_axis, 1.0, 0.01, 2.37e9, 8e6, 0.04, 3.357e9, 12e6)
    fit = A.odmr_doublet_fit(odmr_axis[::-1], y[::-1])
    assert fit.f_minus < fit.f_plus
    assert fit.depths == pytest.approx((0.01, 0.04), rel=1e-5)
    assert fit.linewidths == pytest.approx((8e6, 12e6), rel=1e-4)


def test_single_dip_is_rejected(odmr_axis):
    y = A.doublet_model(odmr_axis, 1.0, 0.03, 2.8e9, 10e6, 0.0, 3.0e9, 10e6)
    with pytest.raises(ConvergenceError):
        A.odmr_doublet_fit(odmr_axis, y)
    with pytest.raises(ConvergenceError):
        A.odmr_doublet_fit(odmr_axis, np.ones_like(odmr_axis))


def test_noisy_doublet_within_ten_standard_errors(odmr_axis):
    # noise at 1% of the dip depth; 100 seeds
    for seed in range(100):
        y = A.synthesize_odmr(odmr_axis, 2.370e9, 3.357e9, noise=0.01 * 0.03,
                              rng=np.random.default_rng(seed))
        fit = A.odmr_doublet_fit(odmr_axis, y)
        e1, e2 = fit.centre_errors
        assert abs(fit.f_minus - 2.370e9) <= 10 * e1
        assert abs(fit.f_plus - 3.357e9) <= 10 * e2


def test_temperature_from_odmr(odmr_axis):
    y = A.synthesize_odmr(odmr_axis, 2.3703e9, 3.3567e9)
    t, fit = A.temperature_from_odmr(odmr_axis, y)
    assert t == pytest.approx(384.84, abs=0.01)
