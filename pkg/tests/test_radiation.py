import numpy as np
import pytest

from palaeovar.radiation import MID_MONTH_DAYS, ConstantRadiation, Davis2016Radiation, get_radiation_model

RAD = Davis2016Radiation()


def _quadrature_oracle(lat, doy, T, cloud, n=200001):
    """Integrate max(net shortwave - net longwave, 0) over the hour angle."""
    pir = np.pi / 180
    nu, lam = RAD.orbit(doy)
    dr = ((1 + RAD.ke * np.cos(nu * pir)) / (1 - RAD.ke ** 2)) ** 2
    delta = np.arcsin(np.sin(lam * pir) * np.sin(RAD.keps * pir))
    sf = 1 - cloud
    rw = (1 - RAD.kalb_sw) * (RAD.kc + RAD.kd * sf) * RAD.kGsc * dr
    rnl = (RAD.kb + (1 - RAD.kb) * sf) * (RAD.kA - T)
    h = np.linspace(-np.pi, np.pi, n)
    flux = rw * (np.sin(delta) * np.sin(lat * pir) + np.cos(delta) * np.cos(lat * pir) * np.cos(h)) - rnl
    return np.trapezoid(np.maximum(flux, 0), h) / (2 * np.pi)


@pytest.mark.parametrize("lat,doy,T,cloud", [(37.5, 197, 25.0, 0.3), (10.0, 16, 28.0, 0.8),
                                             (-35.0, 166, 8.0, 0.5), (48.0, 350, -2.0, 0.2)])
def test_daytime_integral_matches_quadrature(lat, doy, T, cloud):
    assert RAD.evaluate(lat, doy, T, cloud) == pytest.approx(_quadrature_oracle(lat, doy, T, cloud), rel=1e-6)


def test_declination_near_solstices_and_equinox():
    pir = np.pi / 180
    decl = lambda d: np.degrees(np.arcsin(np.sin(RAD.orbit(d)[1] * pir) * np.sin(RAD.keps * pir)))
    assert decl(172) == pytest.approx(23.44, abs=0.05)
    assert decl(355) == pytest.approx(-23.44, abs=0.05)
    assert abs(decl(80)) < 0.6


def test_finite_and_cloud_monotone_midlatitudes():
    lat = np.linspace(-50, 50, 21)[:, None, None, None]
    doy = MID_MONTH_DAYS[None, :, None, None]
    T = np.array([-20.0, 0.0, 15.0, 35.0])[None, None, :, None]
    cloud = np.linspace(0, 1, 11)[None, None, None, :]
    R = RAD.evaluate(lat, doy, T, cloud)
    assert np.all(np.isfinite(R)) and np.all(R >= 0)
    assert np.all(np.diff(R, axis=-1) <= 1e-12)


def test_factory_and_constant():
    assert isinstance(get_radiation_model("constant", value=50.0), ConstantRadiation)
    assert get_radiation_model("constant", value=50.0).evaluate(np.zeros(3), 1, 0, 0).tolist() == [50.0] * 3
    assert isinstance(get_radiation_model("davis2016"), Davis2016Radiation)
    with pytest.raises(ValueError):
        get_radiation_model("nope")
