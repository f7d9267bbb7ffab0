import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from marketcorr.correlation import correlation_function
from marketcorr.diagnostics import cbpi
from marketcorr.estimators import (
    BarAggregator,
    LaggedCorrelation,
    LeaderFollowerDetector,
    PowerLawTail,
    PredictabilityIndex,
    ReturnPanelBuilder,
    check_panel,
)
from marketcorr.synth import (
    TailModel,
    VarModel,
    generate_tail_sample,
    generate_var,
    panel_to_bars,
    panel_to_ticks,
    planted_pair_model,
)


@pytest.fixture(scope="module")
def panel():
    return generate_var(planted_pair_model(3, 0, 2, 0.2, seed=6, instrument_ids="ABC"), 4000)


def test_params_round_trip():
    est = LeaderFollowerDetector(lag=2, threshold=2.5)
    assert est.get_params() == {"lag": 2, "threshold": 2.5, "include_autocorrelation": False}
    twin = clone(est).set_params(threshold=4.0)
    assert twin.threshold == 4.0 and est.threshold == 2.5


def test_frame_input_keeps_names(panel):
    frame = panel.to_frame()
    det = LeaderFollowerDetector().fit(frame)
    assert list(det.feature_names_in_) == ["A", "B", "C"]
    assert [(e.leader_id, e.follower_id) for e in det.entries_] == [("A", "C")]
    assert det.significance_[0, 2] > 3
    assert "leader" in det.render()


def test_lagged_correlation_matches_functional(panel):
    est = LaggedCorrelation(max_lag=3).fit(panel)
    f = correlation_function(panel, 2, 0, 3)
    np.testing.assert_array_equal(est.coef_[:, 2, 0], f.normalized)
    np.testing.assert_array_equal(est.lags_, np.arange(-3, 4))
    assert est.significance().shape == (7, 3, 3)
    assert est.function(2, 0).follower_id == "A"


def test_predictability_index(panel):
    est = PredictabilityIndex(bucket="month").fit(panel.returns)
    assert est.cbpi_ == cbpi(panel).cbpi
    assert len(est.history_) >= 5
    assert est.score(panel.returns) == pytest.approx(est.cbpi_ - est.cbpi0_)


def test_input_validation():
    with pytest.raises(ValueError):
        LaggedCorrelation(max_lag=5).fit(np.ones((8, 2)))
    with pytest.raises(ValueError):
        PredictabilityIndex().fit(np.array([[1.0, np.nan], [2.0, 1.0], [1.0, 2.0]]))
    with pytest.raises(NotFittedError):
        PowerLawTail().predict([1.0])
    assert check_panel(np.arange(5.0)).n_instruments == 1


def test_power_law_tail():
    x = generate_tail_sample(TailModel.pareto(-4.0, seed=2), 15_000)
    est = PowerLawTail().fit(x)
    assert abs(est.p1_ + 4) < 3 * est.fit_.p1_error
    assert est.max_moment_ == 2
    np.testing.assert_allclose(est.predict([-2.0, 2.0]), est.p0_ * 2.0 ** est.p1_)


def test_pipeline_ticks_to_returns():
    p = generate_var(VarModel.white_noise(2, seed=1, instrument_ids=("X", "Y")), 200)
    ticks, calendar = panel_to_ticks(p, return_scale=0.01)
    bars = BarAggregator().fit_transform(ticks)
    assert len(bars) == 402 and list(bars.columns)[:2] == ["instrument", "contract"]
    frame = ReturnPanelBuilder(rollover_calendar=calendar).fit_transform(bars)
    assert frame.shape == (200, 2)
    np.testing.assert_allclose(frame.to_numpy(), 0.01 * p.returns, atol=1e-12)
    direct, _ = panel_to_bars(p, return_scale=0.01)
    assert len(direct) == 402
