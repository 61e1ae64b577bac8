import math

import numpy as np
import pytest

from wellposed.bayes import BayesianProblem, gaussian_prior, posterior, transformed_data_likelihood
from wellposed.errors import WellposedError
from wellposed.gpfield import synthetic_image
from wellposed.metrics import hellinger, kl_divergence
from wellposed.sweep import (
    FieldSetup,
    SweepCurve,
    continuity_report,
    data_grid,
    delta_sweep,
    gp_stability_sweep,
    model_selection_sweep,
    stability_sweep,
)

CUBIC = BayesianProblem(gaussian_prior(0, 1, 2001, -8, 8), transformed_data_likelihood(np.cbrt))


def closed_form(y_ref, y):
    # N(cbrt(y)/2, 1/2) posteriors with a shared variance
    return np.sqrt(1 - np.exp(-(np.cbrt(y_ref) - np.cbrt(y)) ** 2 / 16))


def test_data_grid_hits_round_values():
    g = data_grid(-5, 5, 0.001)
    assert g.size == 10001
    assert 1.0 in g and -3.0 in g and 0.0 in g
    assert not np.signbit(g[g == 0]).any()
    with pytest.raises(WellposedError):
        data_grid(0, 1, 0)


def test_reference_row_is_zero():
    c = stability_sweep(CUBIC, 0.3, [-0.5, 0.3, 0.8], ["hellinger", "tv", "kl", "wasserstein"], p=2)
    for name in c.metrics:
        assert c[name][1] == 0.0
    assert c.metrics == ["hellinger", "tv", "kl", "wasserstein_2"]
    only = stability_sweep(CUBIC, 0.0, [0.0], ["hellinger", "prokhorov"])
    assert only["hellinger"][0] == 0 and only["prokhorov"][0] == 0


def test_cubic_sweep_matches_closed_form():
    ys = np.linspace(-1, 1, 41)
    c = stability_sweep(CUBIC, 0.0, ys, ["hellinger"])
    assert np.max(np.abs(c["hellinger"] - closed_form(0.0, ys))) < 1e-3


def test_uniform_cuberoot_grid_gives_bounded_quotients():
    t = np.linspace(-1, 1, 201)
    c = stability_sweep(CUBIC, 0.0, t ** 3, ["hellinger"])
    q = np.abs(np.diff(c["hellinger"])) / np.diff(t)
    # Lipschitz in the cube root of the data: slope at most 1/4 in the limit
    assert q.max() < 0.3


def test_kl_and_coarseness_rowwise():
    ys = np.linspace(-1, 1, 11)
    c = stability_sweep(CUBIC, 0.2, ys, ["hellinger", "tv", "kl", "prokhorov"])
    h, tv, kl, pr = c["hellinger"], c["tv"], c["kl"], c["prokhorov"]
    assert np.all(kl >= 2 * h ** 2 - 1e-9)
    assert np.all(tv <= math.sqrt(2) * h + 1e-9)
    assert np.all(pr <= tv + 2e-6)


def test_sweep_is_deterministic_and_parallel_safe():
    ys = np.linspace(-1, 1, 21)
    a = stability_sweep(CUBIC, 0.0, ys, ["hellinger", "kl"])
    b = stability_sweep(CUBIC, 0.0, ys, ["hellinger", "kl"])
    c = stability_sweep(CUBIC, 0.0, ys, ["hellinger", "kl"], workers=4)
    assert a.to_csv() == b.to_csv() == c.to_csv()


def test_kl_direction_is_reference_first():
    c = stability_sweep(CUBIC, 0.0, [0.5, 1.0], ["kl"])
    ref, post = posterior(CUBIC, 0.0).measure, posterior(CUBIC, 1.0).measure
    assert c["kl"][1] == kl_divergence(ref, post)
    assert hellinger(ref, post) > 0


def test_continuity_on_flat_and_step_curves():
    x = np.linspace(0, 1, 101)
    flat = SweepCurve(x, {"d": np.full(101, 0.25)})
    rep = continuity_report(flat)
    assert rep.verdict("d") == "continuous"
    assert rep.threshold["d"] == 1e-9
    step = SweepCurve(x, {"d": np.where(x < 0.5, 0.0, 1.0) + 0.001 * x})
    rep = continuity_report(step)
    assert rep.verdict("d") == "jump detected"
    assert rep.location["d"] == pytest.approx(0.5)
    assert rep.lines()[0].startswith("continuity d: verdict=jump detected")
    with pytest.raises(WellposedError):
        continuity_report(SweepCurve([0, 1], {"d": [0, 1]}))


def test_continuity_skips_missing_rows_and_flags_infinite_steps():
    x = np.arange(6.0)
    c = SweepCurve(x, {"a": [0, 0.1, np.nan, 0.3, 0.4, 0.5], "kl": [0, 0.1, 0.2, np.inf, np.inf, 0.5]})
    rep = continuity_report(c)
    assert rep.verdict("a") == "continuous"
    assert rep.verdict("kl") == "jump detected"
    assert rep.location["kl"] == 3.0


def test_sweep_curve_validation_and_csv(tmp_path):
    with pytest.raises(WellposedError):
        SweepCurve([0, 0], {"d": [0, 0]})
    with pytest.raises(WellposedError):
        SweepCurve([0, 1], {"d": [0]})
    c = SweepCurve([0.0, 0.5, 1.0], {"hellinger": [0.0, np.nan, 0.25]}, reference="y_ref=0",
                   param_name="y", status=["ok", "ZeroEvidence", "ok"])
    text = c.to_csv(tmp_path / "c.csv", comments=["note"])
    lines = text.splitlines()
    assert lines[0] == "y,hellinger,status"
    assert lines[2] == "0.5,,ZeroEvidence"
    assert lines[-2:] == ["# reference: y_ref=0", "# note"]
    assert (tmp_path / "c.csv").read_text() == text


def test_delta_sweep_exact():
    ys = np.linspace(-1, 1, 21)
    c = delta_sweep(np.cbrt, 0.0, ys)
    tv = c["tv"]
    assert tv[10] == 0 and np.all(np.delete(tv, 10) == 1.0)
    np.testing.assert_array_equal(c["wasserstein_1"], np.abs(np.cbrt(ys)))


def test_model_selection_sweep():
    prior = gaussian_prior(0, 1, 801)
    models = [(lambda t: t, 0.5), (lambda t: t ** 2, 0.5)]
    ys = np.linspace(-2, 2, 9)
    c = model_selection_sweep(models, prior, 1.0, 0.0, ys, labels=["identity", "square"])
    w = c["weight_identity"] + c["weight_square"]
    np.testing.assert_allclose(w, 1.0, atol=1e-12)
    assert c["hellinger"][4] == 0.0
    h = c["hellinger"]
    assert np.all((h >= 0) & (h <= 1))
    assert h[0] > h[3] and h[8] > h[5]


@pytest.fixture(scope="module")
def field_setup():
    return FieldSetup(synthetic_image(16), stride=4)


def test_gp_sweep_zero_and_ordering(field_setup):
    c = gp_stability_sweep(field_setup, [0.0, 0.1, 10.0], replicates=5)
    assert c["mean_sq_hellinger"][0] == 0 and c["mean_rel_frobenius"][0] == 0
    assert c["mean_sq_hellinger"][1] < c["mean_sq_hellinger"][2]
    assert c["mean_rel_frobenius"][1] < c["mean_rel_frobenius"][2]
    assert c.param_name == "sigma"


def test_gp_sweep_replicate_stability(field_setup):
    a = gp_stability_sweep(field_setup, [1.0], replicates=20)
    b = gp_stability_sweep(field_setup, [1.0], replicates=40)
    for name in ("sq_hellinger", "rel_frobenius"):
        se = math.hypot(a["se_" + name][0], b["se_" + name][0])
        assert abs(a["mean_" + name][0] - b["mean_" + name][0]) < 3 * se


def test_gp_sweep_low_memory_agrees(field_setup):
    lean = FieldSetup(field_setup.image, stride=4, low_memory=True)
    a = gp_stability_sweep(field_setup, [1.0, 5.0], replicates=3)
    b = gp_stability_sweep(lean, [1.0, 5.0], replicates=3)
    np.testing.assert_allclose(a["mean_sq_hellinger"], b["mean_sq_hellinger"], rtol=1e-6)
    np.testing.assert_allclose(a["mean_rel_frobenius"], b["mean_rel_frobenius"], rtol=1e-8)


def test_gp_sweep_parallel_matches_serial(field_setup):
    a = gp_stability_sweep(field_setup, [0.5, 2.0], replicates=4)
    b = gp_stability_sweep(field_setup, [0.5, 2.0], replicates=4, workers=3)
    assert a.to_csv() == b.to_csv()
