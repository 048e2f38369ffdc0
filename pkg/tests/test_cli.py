import math
from pathlib import Path

import numpy as np
import pytest

from switchcert.cli import load_scenario_file, main
from switchcert.scenarios import GeneratedSource
from switchcert.signals import ModeSet, SwitchingSignal, save_signal

REPO = Path(__file__).resolve().parents[1]


def write(tmp_path, text, name="scn.ini"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


# -- scenario file parsing -------------------------------------------------------


def test_load_reference_scenario_files():
    for name in ("example1", "example2", "two_centers"):
        scenario, out = load_scenario_file(str(REPO / "scenarios" / f"{name}.ini"))
        assert scenario.name == name
        assert out == f"artifacts_{name}"


def test_scenario_file_overrides(tmp_path):
    path = write(tmp_path, """
[scenario]
system = example1
horizon = 12.5

[initial_conditions]
points = 1 0, 0 1

[tolerances]
rtol = 1e-8
cluster_tol = 0.05
""")
    scenario, _ = load_scenario_file(path)
    assert scenario.horizon == 12.5
    assert np.array_equal(scenario.initial_states, [[1.0, 0.0], [0.0, 1.0]])
    assert scenario.integrator.rtol == 1e-8
    assert scenario.checks.cluster_tol == 0.05


def test_scenario_file_generated_source(tmp_path):
    path = write(tmp_path, """
[scenario]
system = example2
seed = 5

[signal]
source = generate
tau_d = 0.7
n0 = 2
count = 3
""")
    scenario, _ = load_scenario_file(path)
    src = scenario.source
    assert isinstance(src, GeneratedSource)
    assert src.adt.tau_d == 0.7 and src.adt.n0 == 2
    assert src.seeds == (5, 6, 7)


def test_schema_error_reports_line(tmp_path):
    from switchcert.cli import SchemaError

    path = write(tmp_path, "[scenario]\nsystem = example1\nhorizon = banana\n")
    with pytest.raises(SchemaError) as err:
        load_scenario_file(path)
    assert ":3:" in str(err.value)


def test_schema_rejects_unknown_key(tmp_path):
    from switchcert.cli import SchemaError

    path = write(tmp_path, "[scenario]\nsystem = example1\nwarp = 9\n")
    with pytest.raises(SchemaError):
        load_scenario_file(path)


# -- validate subcommand -----------------------------------------------------------


def test_validate_exit_codes(tmp_path, capsys):
    good = tmp_path / "good.txt"
    save_signal(SwitchingSignal(np.array([1.0, 2.0, 3.0]), np.array([1, 2, 1, 2]), 10.0),
                ModeSet(2), good)
    assert main(["validate", str(good), "1.0", "1"]) == 0
    assert "valid" in capsys.readouterr().out

    chatter = tmp_path / "chatter.txt"
    save_signal(SwitchingSignal(np.array([1.0, 1.01]), np.array([1, 2, 1]), 10.0),
                ModeSet(2), chatter)
    assert main(["validate", str(chatter), "1.0", "1"]) == 1
    assert "invalid: interval" in capsys.readouterr().out

    empty = tmp_path / "empty.txt"
    empty.write_text("")
    assert main(["validate", str(empty), "1.0", "1"]) == 2
    assert main(["validate", str(tmp_path / "missing.txt"), "1.0", "1"]) == 2


# -- run / simulate / omega ----------------------------------------------------------


@pytest.fixture(scope="module")
def small_scenario(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("cli")
    path = tmp / "small.ini"
    path.write_text("""
[scenario]
system = two_centers
horizon = 15.0

[initial_conditions]
points = 1 0, 0 0.5
""")
    return str(path), tmp


def test_run_artifacts_and_exit(small_scenario, capsys):
    path, tmp = small_scenario
    out = tmp / "run_out"
    assert main(["run", path, "--out", str(out)]) == 0
    report = (out / "guas_report.txt").read_text()
    assert "GUAS observed on batch: no" in report
    # every artifact referenced by the report exists on disk
    lines = report.splitlines()
    start = lines.index("artifacts:")
    for line in lines[start + 1:]:
        name = line.strip()
        if name:
            assert (out / name).is_file(), name
    kv = (out / "guas_report.kv").read_text().splitlines()
    assert "guas_observed=0" in kv
    assert "hypotheses_ok=1" in kv


def test_run_is_deterministic(small_scenario):
    path, tmp = small_scenario
    out1, out2 = tmp / "d1", tmp / "d2"
    assert main(["run", path, "--out", str(out1)]) == 0
    assert main(["run", path, "--out", str(out2)]) == 0
    files1 = sorted(p.name for p in out1.iterdir())
    files2 = sorted(p.name for p in out2.iterdir())
    assert files1 == files2
    for name in files1:
        assert (out1 / name).read_bytes() == (out2 / name).read_bytes(), name


def test_run_builtin_id(tmp_path):
    assert main(["run", "two_centers", "--horizon", "10",
                 "--out", str(tmp_path / "builtin")]) == 0


def test_run_schema_error_exit_2(tmp_path, capsys):
    bad = write(tmp_path, "[scenario]\nsystem = unknown_system\n")
    assert main(["run", bad]) == 2
    assert "scenario error" in capsys.readouterr().err
    assert not (tmp_path / "artifacts_unknown_system").exists()


def test_run_malformed_ini_exit_2(tmp_path, capsys):
    bad = write(tmp_path, "system = example1 no section header\n")
    assert main(["run", bad]) == 2


def test_run_missing_file_exit_2(tmp_path, capsys):
    assert main(["run", str(tmp_path / "ghost.ini")]) == 2


def test_run_blow_up_exit_3(tmp_path, capsys):
    from switchcert.lyapunov import LyapunovCandidate
    from switchcert.scenarios import FeedbackSource, Scenario, register_scenario
    from switchcert.signals import ModeSet
    from switchcert.systems import Covering, FeedbackRule, IntegratorOptions, SwitchedSystem

    def build(**overrides):
        m = ModeSet(1)
        sys_ = SwitchedSystem(1, {1: lambda x: x ** 2}, m, Covering.trivial(m))
        return Scenario(
            name="escaper",
            system=sys_,
            V=LyapunovCandidate(value=lambda x, g: float(np.dot(x, x))),
            W=None,
            source=FeedbackSource(FeedbackRule(lambda x: 1, {1: lambda x: -1.0})),
            initial_states=np.array([[1.0]]),
            horizon=2.0,
            integrator=IntegratorOptions(max_dx=math.inf),
        )

    register_scenario("escaper", build)
    try:
        assert main(["run", "escaper", "--out", str(tmp_path / "esc")]) == 3
        assert "blow-up" in capsys.readouterr().err
    finally:
        from switchcert import scenarios

        scenarios._BUILTINS.pop("escaper", None)


def test_simulate_writes_trajectories(small_scenario):
    path, tmp = small_scenario
    out = tmp / "sim_out"
    assert main(["simulate", path, "--out", str(out)]) == 0
    names = sorted(p.name for p in out.iterdir())
    assert "trajectory_000.csv" in names and "signal_001.txt" in names
    assert not any(n.startswith("omega") for n in names)


def test_omega_writes_estimates(small_scenario, capsys):
    path, tmp = small_scenario
    out = tmp / "om_out"
    assert main(["omega", path, "--out", str(out)]) == 0
    names = sorted(p.name for p in out.iterdir())
    assert "omega_000.csv" in names and "omega_sharp_001.csv" in names
    assert "limit points" in capsys.readouterr().out


def test_run_file_signal_source(tmp_path):
    sig_path = tmp_path / "sig.txt"
    save_signal(SwitchingSignal(np.array([2.0, 7.0]), np.array([1, 2, 1]), 15.0),
                ModeSet(2), sig_path)
    scn = write(tmp_path, f"""
[scenario]
system = example1
horizon = 15.0

[initial_conditions]
points = 1 0

[signal]
source = file
paths = {sig_path.name}
""")
    out = tmp_path / "file_out"
    assert main(["simulate", scn, "--out", str(out)]) == 0
    assert (out / "trajectory_000.csv").is_file()
