import io
import json
import math
import subprocess
import sys

import pytest

import kdvcrit.cli as cli
from kdvcrit.cli import dumps, parse_number, resolve_config, run
from kdvcrit.spectrum_b import SpectrumError


def invoke(*argv):
    buf = io.StringIO()
    code = run(list(argv), stdout=buf)
    return code, buf.getvalue()


def load(*argv):
    code, text = invoke(*argv)
    return code, json.loads(text)


def test_parse_number():
    assert parse_number("2*pi") == 2 * math.pi
    assert parse_number("2*pi*sqrt(7/3)") == pytest.approx(2 * math.pi * math.sqrt(7 / 3), rel=1e-15)
    assert parse_number("-1e-3") == -1e-3
    for bad in ("__import__('os')", "pi(", "1/0", "x"):
        with pytest.raises(ValueError):
            parse_number(bad)


def test_dumps_seventeen_digits():
    text = dumps({"a": 0.1, "b": [1, 2.5], "c": complex(1, -2), "d": math.inf, "e": None})
    data = json.loads(text)
    assert '"a": 0.10000000000000001' in text
    assert data["b"] == [1, 2.5] and data["c"] == [1.0, -2.0]
    assert data["d"] == "inf" and data["e"] is None


@pytest.mark.parametrize(
    "argv, cls, n0",
    [
        (("--L", "2*pi"), "N1", 1),
        (("--L", "2*pi*sqrt(7/3)"), "N2", 2),
        (("--L", "2*pi*sqrt(7)"), "N3", 2),
        (("--n", "147"), "N3", 3),
    ],
)
def test_classify_table(argv, cls, n0):
    code, out = load("classify", *argv)
    assert code == 0
    assert out["results"]["class"] == cls and out["results"]["N0"] == n0
    assert set(out) == {"config", "results", "diagnostics", "warnings"}


def test_classify_fourteen_pi_pairs():
    _, out = load("classify", "--L", "14*pi")
    assert {(p["k"], p["l"]) for p in out["results"]["pairs"]} == {(7, 7), (11, 2)}


def test_classify_not_critical():
    code, out = load("classify", "--L", "5.0")
    assert code == 0
    assert out["results"]["critical"] is False
    assert out["results"]["I_C"] == pytest.approx(3 * (5 / (2 * math.pi)) ** 2)


def test_spectrum_outputs(tmp_path):
    code, out = load("spectrum", "--L", "2*pi+0.05", "--jmax", "5", "--out", str(tmp_path))
    assert code == 0
    modes = out["results"]["modes"]
    lam = {m["j"]: m["lambda"] for m in modes}
    assert all(abs(lam[j] + lam[-j]) < 1e-12 for j in range(1, 6))
    assert out["diagnostics"]["max_bc_residual"] < 1e-8
    lines = (tmp_path / "spectrum.csv").read_text().splitlines()
    assert lines[0] == "j,tau,lambda,regime,abs_dE_L"
    assert len(lines) == 11
    assert json.loads((tmp_path / "spectrum.json").read_text()) == out


def test_deterministic_output():
    a = invoke("control", "--L", "2*pi+0.3", "--nmax", "1", "--seed", "3")
    b = invoke("control", "--L", "2*pi+0.3", "--nmax", "1", "--seed", "3")
    assert a == b
    assert invoke("sweep", "--L0", "2*pi") == invoke("sweep", "--L0", "2*pi")


def test_control_zero_and_random(tmp_path):
    code, out = load("control", "--L", "2*pi+0.3", "--nmax", "1", "--init", "zero")
    assert code == 0 and out["results"]["u_sup"] == 0.0
    code, out = load("control", "--L", "2*pi+0.3", "--nmax", "1", "--out", str(tmp_path))
    assert code == 0 and out["results"]["ratios"][0] < 0.05
    assert out["config"]["Q"] == 1.0 and out["config"]["variant"] == "basic"
    header, first = (tmp_path / "control_u.csv").read_text().splitlines()[:2]
    assert header == "t,u" and first == "0,0"


def test_control_single_mode():
    code, out = load("control", "--L", "2*pi+0.3", "--nmax", "1", "--init", "mode=3")
    assert code == 0 and out["results"]["ratios"][0] < 0.05


def test_sweep_exponent():
    code, out = load("sweep", "--L0", "2*pi", "--offsets", "0.1,0.01,0.001")
    assert code == 0
    assert out["results"]["exponent_rate"] == pytest.approx(2.0, abs=0.05)
    assert out["config"]["offsets"] == [0.1, 0.01, 0.001]


def test_sweep_parallel_matches_serial():
    argv = ("sweep", "--L0", "2*pi", "--offsets", "0.1,0.05", "--simulate", "--grid", "256")
    serial = invoke(*argv)
    assert invoke(*argv, "--jobs", "2") == (serial[0], serial[1].replace('"jobs": 1', '"jobs": 2'))


def test_nonlinear_small_datum():
    code, out = load("nonlinear", "--L", "2*pi+0.1", "--L0", "2*pi", "--T", "2", "--grid", "256")
    assert code == 0
    assert out["results"]["rate_spectral"] == pytest.approx(-2 * out["results"]["zeta"][0])
    assert out["diagnostics"]["max_energy_gap"] < 1e-6


def test_verify_passes():
    code, out = load("verify")
    assert code == 0 and out["results"]["all_passed"]


def test_config_precedence(tmp_path):
    path = tmp_path / "c.json"
    path.write_text(json.dumps({"L": "2*pi+0.05", "jmax": 4}))
    cfg = resolve_config("spectrum", {"config": str(path), "jmax": "6"})
    assert cfg["jmax"] == 6 and cfg["L"] == pytest.approx(2 * math.pi + 0.05)
    path.write_text(json.dumps({"Q": 2}))
    with pytest.raises(cli.ConfigError) as err:
        resolve_config("spectrum", {"config": str(path)})
    assert err.value.key == "Q"


@pytest.mark.parametrize(
    "argv, key",
    [
        (("spectrum",), "L"),
        (("spectrum", "--L", "2*pi"), "L"),
        (("spectrum", "--L", "7", "--jmax", "0"), "jmax"),
        (("sweep", "--L0", "2*pi", "--offsets", "0.1,0"), "offsets"),
        (("sweep", "--L0", "5"), "L0"),
        (("control", "--L", "7", "--init", "mode=99", "--jmax", "3", "--ktrunc", "3"), "init"),
        (("classify",), "L"),
    ],
)
def test_input_errors_exit_two(argv, key):
    code, out = load(*argv)
    assert code == 2
    assert out["error"]["key"] == key


def test_argparse_errors_exit_two():
    with pytest.raises(SystemExit) as err:
        run(["spectrum", "--variant", "fancy"], stdout=io.StringIO())
    assert err.value.code == 2


def test_numerical_failure_exits_three(monkeypatch):
    def boom(cfg):
        raise SpectrumError("no convergence")

    monkeypatch.setitem(cli.COMMANDS, "spectrum", boom)
    code, out = load("spectrum", "--L", "7")
    assert code == 3 and out["error"]["kind"] == "numerical"


def test_console_entry_point():
    proc = subprocess.run([sys.executable, "-m", "kdvcrit", "classify", "--L", "2*pi"], capture_output=True, text=True)
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["results"]["class"] == "N1"
