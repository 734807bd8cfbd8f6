"""End-to-end evaluation cells: preset parsing, calibration, thread safety."""

import numpy as np
import pytest

from mpfusion.pipeline import (
    MethodSpec,
    conditioned_samples,
    evaluate_cell,
    parse_method,
    sweep_rho,
)
from mpfusion.scenario import ScenarioConfig


def _small_cfg(**kw):
    return ScenarioConfig(rho_db=kw.pop("rho_db", -4.0),
                          delta_rho_db=kw.pop("delta_rho_db", 1.0), **kw)


# ------------------------------------------------------------ preset labels


@pytest.mark.parametrize("label,kind,param", [
    ("mp0.1", "mp", 0.1),
    ("bp1.0", "bp", 1.0),
    ("bp1", "bp", 1.0),
    ("egc0.3", "egc", 0.3),
    ("linear0.25", "linear", 0.25),
    ("local", "local", None),
    ("linProp", "linProp", None),
    ("linPropB", "linPropB", None),
    ("linOpt", "linOpt", None),
])
def test_parse_method_accepts(label, kind, param):
    spec = parse_method(label)
    assert spec == MethodSpec(label, kind, param)


@pytest.mark.parametrize("label", [
    "mp", "mp-0.1", "qp0.1", "MP0.1", "linprop", "mp0.1.2", "", "local2",
])
def test_parse_method_rejects(label):
    with pytest.raises(ValueError):
        parse_method(label)


def test_evaluate_cell_accepts_prebuilt_specs():
    cfg = _small_cfg()
    spec = MethodSpec("local", "local")
    (res,) = evaluate_cell(cfg, [spec], seed=20, training_slots=300,
                           calibration_slots=500, eval_slots=500)
    assert res.label == "local"


# --------------------------------------------------------------- one cell


def test_local_detector_hits_far_target():
    cfg = _small_cfg(far=0.1)
    (res,) = evaluate_cell(cfg, ["local"], seed=21,
                           training_slots=500, calibration_slots=4000,
                           eval_slots=20000)
    assert res.label == "local"
    pf = np.asarray(res.report.pf)
    se = np.asarray(res.report.stderr_pf)
    ok = ~np.isnan(pf)
    assert ok.any()
    np.testing.assert_array_less(np.abs(pf[ok] - 0.1), 3.5 * se[ok] + 1e-12)


def test_egc_zero_coefficient_reduces_to_local():
    cfg = _small_cfg()
    a, b = evaluate_cell(cfg, ["local", "egc0.0"], seed=22,
                         training_slots=500, calibration_slots=3000,
                         eval_slots=5000)
    np.testing.assert_allclose(a.thresholds, b.thresholds, atol=1e-9)
    np.testing.assert_allclose(a.report.pd, b.report.pd, atol=1e-12)
    np.testing.assert_allclose(a.report.pf, b.report.pf, atol=1e-12)


def test_fusion_beats_local_at_moderate_snr():
    cfg = _small_cfg(rho_db=-6.0)
    local, fused = evaluate_cell(cfg, ["local", "linProp"], seed=23,
                                 training_slots=2000, calibration_slots=8000,
                                 eval_slots=20000)
    assert np.nanmean(fused.report.pd) > np.nanmean(local.report.pd)


def test_rows_flatten_in_node_order():
    cfg = _small_cfg()
    (res,) = evaluate_cell(cfg, ["local"], seed=24,
                           training_slots=500, calibration_slots=2000,
                           eval_slots=2000)
    rows = res.rows()
    assert len(rows) == 5
    assert [r[3] for r in rows] == [1, 2, 3, 4, 5]
    for r in rows:
        assert r[0] == "local"
        assert r[1] == cfg.rho_db
        assert r[2] == cfg.delta_rho_db


def test_mp_preset_records_couplings():
    cfg = _small_cfg()
    (res,) = evaluate_cell(cfg, ["mp0.3"], seed=25,
                           training_slots=1000, calibration_slots=2000,
                           eval_slots=2000)
    learned = res.extras.get("couplings")
    assert learned is not None
    for edge, j in learned.items():
        assert abs(j) <= 0.3 + 1e-12


# ------------------------------------------------------------------ sweeps


def test_sweep_grid_and_delta_rules():
    cfg = _small_cfg(delta_rho_db=1.0)
    res = sweep_rho(cfg, ["local"], [-8.0, -4.0], seed=26,
                    delta_rule="proportional", proportional_factor=0.1,
                    training_slots=300, calibration_slots=1000,
                    eval_slots=1000)
    assert [r.rho_db for r in res] == [-8.0, -4.0]
    assert [r.delta_rho_db for r in res] == [-0.8, -0.4]
    fixed = sweep_rho(cfg, ["local"], [-8.0], seed=26,
                      training_slots=300, calibration_slots=1000,
                      eval_slots=1000)
    assert fixed[0].delta_rho_db == 1.0


def test_sweep_rejects_unknown_delta_rule():
    cfg = _small_cfg()
    with pytest.raises(ValueError):
        sweep_rho(cfg, ["local"], [-5.0], seed=1, delta_rule="sliding")


def test_threads_do_not_change_results():
    cfg = _small_cfg()
    kw = dict(training_slots=400, calibration_slots=1500, eval_slots=1500)
    serial = sweep_rho(cfg, ["local", "mp0.1"], [-8.0, -5.0, -2.0], seed=27,
                       threads=1, **kw)
    parallel = sweep_rho(cfg, ["local", "mp0.1"], [-8.0, -5.0, -2.0], seed=27,
                         threads=4, **kw)
    assert len(serial) == len(parallel) == 6
    for a, b in zip(serial, parallel):
        assert a.label == b.label and a.rho_db == b.rho_db
        np.testing.assert_array_equal(
            np.asarray(a.report.pd), np.asarray(b.report.pd))
        np.testing.assert_array_equal(
            np.asarray(a.report.pf), np.asarray(b.report.pf))
        np.testing.assert_allclose(a.thresholds, b.thresholds, atol=0)


def test_same_seed_same_cell_reproduces():
    cfg = _small_cfg()
    kw = dict(training_slots=400, calibration_slots=1000, eval_slots=1000)
    (a,) = evaluate_cell(cfg, ["bp0.2"], seed=28, **kw)
    (b,) = evaluate_cell(cfg, ["bp0.2"], seed=28, **kw)
    np.testing.assert_array_equal(
        np.asarray(a.report.pd), np.asarray(b.report.pd))
    (c,) = evaluate_cell(cfg, ["bp0.2"], seed=29, **kw)
    assert not np.array_equal(np.asarray(a.report.pd), np.asarray(c.report.pd))


# ----------------------------------------------------- conditioned samples


def test_conditioned_samples_shapes_and_pinning():
    cfg = _small_cfg()
    lam, camp, params = conditioned_samples(cfg, "max_product", (1, 0), 50, seed=30)
    assert lam.shape == (5, 50)
    assert np.all(camp.activity == np.array([1, 0]))
    assert params.convention == "merged"
    assert set(params.couplings) == set(cfg.topology().edges)
    for j in params.couplings.values():
        assert 0.0 < j < 100.0


def test_conditioned_samples_deterministic():
    cfg = _small_cfg()
    a, _, pa = conditioned_samples(cfg, "sum_product", (0, 1), 40, seed=31)
    b, _, pb = conditioned_samples(cfg, "sum_product", (0, 1), 40, seed=31)
    np.testing.assert_array_equal(a, b)
    assert pa.couplings == pb.couplings
