import numpy as np
import numpy.testing as npt
import pytest

from faultgait.evaluate import (ABLATION_VARIANTS, AblationSpec, EvalScenario,
                                TRACE_COLUMNS, crossover_verdict, default_scenario,
                                read_trace, run_scenario, scenario_from_file,
                                stability_metrics, write_trace)
from faultgait.student import StudentPolicy
from faultgait.teachers import TeacherPolicy, make_teacher_ac


def untrained_teachers(cfg):
    return [TeacherPolicy(ci, make_teacher_ac(cfg, seed=ci)) for ci in range(11)]


def test_scenario_validation():
    with pytest.raises(ValueError):
        EvalScenario(events=((300, 3), (300, 0)))
    with pytest.raises(ValueError):
        EvalScenario(events=((600, 3), (300, 0)))
    scen = EvalScenario(events=((300, 5), (600, 0)))
    assert scen.fault_class == 5


def test_default_scenario_uses_config(micro_cfg):
    scen = default_scenario(micro_cfg, class_index=2, seed=7)
    assert scen.events == ((micro_cfg.eval.fault_step, 2), (micro_cfg.eval.removal_step, 0))
    assert scen.episode_len == micro_cfg.eval.episode_len
    assert scen.seed == 7


def test_scenario_file_round_trip(tmp_path):
    path = tmp_path / "scen.cfg"
    path.write_text(
        "name = kick_lr\n"
        "command = 0.25, 0.0, 0.1\n"
        "events = 100:3, 200:0\n"
        "episode_len = 300\n"
        "seed = 4\n"
    )
    scen = scenario_from_file(path)
    assert scen.name == "kick_lr"
    assert scen.command == (0.25, 0.0, 0.1)
    assert scen.events == ((100, 3), (200, 0))
    assert scen.episode_len == 300 and scen.seed == 4
    with pytest.raises(ValueError):
        bad = tmp_path / "bad.cfg"
        bad.write_text("nonsense = 1\n")
        scenario_from_file(bad)


def run_micro_scenario(micro_cfg, seed=0):
    teachers = untrained_teachers(micro_cfg)
    student = StudentPolicy(micro_cfg, seed=5)
    scen = default_scenario(micro_cfg, class_index=3, seed=seed)
    return run_scenario(micro_cfg, student, teachers, scen), scen


def test_trace_has_documented_columns_and_events(micro_cfg):
    trace, scen = run_micro_scenario(micro_cfg)
    for col in TRACE_COLUMNS:
        assert col in trace
    n = len(trace["step"])
    assert n <= scen.episode_len
    if n > scen.events[0][0]:
        on = scen.events[0][0]
        assert trace["class_active"][on - 1] == 0
        assert trace["class_active"][on] == 3  # switches at exactly this row
        npt.assert_array_equal(trace["label_lr"][on], 1)
    if n > scen.events[1][0]:
        off = scen.events[1][0]
        assert trace["class_active"][off] == 0


def test_trace_csv_round_trip(micro_cfg, tmp_path):
    trace, scen = run_micro_scenario(micro_cfg)
    path = tmp_path / "trace.csv"
    write_trace(path, trace)
    back = read_trace(path)
    header = path.read_text().splitlines()[0]
    assert header == ",".join(TRACE_COLUMNS)
    assert back["_survived"] == trace["_survived"]
    npt.assert_allclose(back["style_fault"], trace["style_fault"], rtol=1e-6)
    # metrics are a pure function of the file contents
    m1 = stability_metrics(trace, micro_cfg)
    m2 = stability_metrics(back, micro_cfg)
    assert m1["survived"] == m2["survived"]
    assert m1["max_windowed_rp_rate"] == pytest.approx(m2["max_windowed_rp_rate"], rel=1e-6)


def test_trace_determinism(micro_cfg):
    t1, _ = run_micro_scenario(micro_cfg, seed=3)
    t2, _ = run_micro_scenario(micro_cfg, seed=3)
    for col in TRACE_COLUMNS:
        npt.assert_array_equal(t1[col], t2[col])


def test_stationary_trace_metrics_near_zero(micro_cfg):
    trace = {
        "roll_rate": np.zeros(100), "pitch_rate": np.zeros(100),
        "vel_x": np.zeros(100), "vel_y": np.zeros(100), "vel_z": np.zeros(100),
        "base_height": np.full(100, 0.32), "survived": np.ones(100),
    }
    m = stability_metrics(trace, micro_cfg)
    assert m["survived"] and m["stable"]
    assert m["mean_rp_rate"] == 0.0
    assert m["max_windowed_speed"] == 0.0
    assert m["min_base_height"] == pytest.approx(0.32)


def test_fallen_trace_reports_failure(micro_cfg):
    trace = {
        "roll_rate": np.zeros(10), "pitch_rate": np.zeros(10),
        "vel_x": np.zeros(10), "vel_y": np.zeros(10), "vel_z": np.zeros(10),
        "base_height": np.linspace(0.3, 0.05, 10),
        "survived": np.array([1] * 9 + [0]),
    }
    m = stability_metrics(trace, micro_cfg)
    assert not m["survived"]
    assert not m["stable"]


def test_crossover_verdict_on_synthetic_trace(micro_cfg):
    n = micro_cfg.eval.episode_len
    on, off = micro_cfg.eval.fault_step, micro_cfg.eval.removal_step
    style_fault = np.full(n, 50.0)
    style_normal = np.full(n, 80.0)
    style_fault[on:off] = 90.0
    style_normal[on:off] = 40.0
    trace = {"style_fault": style_fault, "style_normal": style_normal, "_survived": True}
    scen = default_scenario(micro_cfg, class_index=3)
    verdict = crossover_verdict(trace, micro_cfg, scen)
    assert verdict["ok"]
    # flipped trace fails
    trace2 = {"style_fault": style_normal, "style_normal": style_fault, "_survived": True}
    assert not crossover_verdict(trace2, micro_cfg, scen)["ok"]
    # surviving matters
    trace3 = dict(trace, _survived=False)
    assert not crossover_verdict(trace3, micro_cfg, scen)["ok"]


def test_ablation_spec_validation():
    for v in ABLATION_VARIANTS:
        AblationSpec(v)
    with pytest.raises(ValueError):
        AblationSpec("no-teachers")


def test_run_ablation_structural(micro_cfg):
    """End-to-end ablation plumbing at micro budget (no learning expected)."""
    from faultgait.evaluate import run_ablation

    teachers = untrained_teachers(micro_cfg)
    report = run_ablation(micro_cfg, "no-encoder", seed=0, teachers=teachers,
                          full_metrics={"survival_rate": 1.0, "style_alignment": 1.0,
                                        "scenarios": 6})
    assert report["variant"] == "no-encoder"
    assert set(report["ablated"]) == {"survival_rate", "style_alignment", "scenarios"}
    assert 0.0 <= report["ablated"]["survival_rate"] <= 1.0
