import json
import math

import numpy as np
import pytest

from microcanon.cli import main
from microcanon.config import load_config
from microcanon.errors import UsageError


def _csv(path):
    lines = path.read_text().splitlines()
    header = [l for l in lines if l.startswith("#")]
    body = [l for l in lines if not l.startswith("#")]
    return header, body[0].split(","), [list(map(str, r.split(","))) for r in body[1:]]


def test_config_file_parsing(tmp_path):
    p = tmp_path / "run.cfg"
    p.write_text("# comment\nmodel.name = quartic1d\nmc.seed = 4  # inline\nbeta.values = 1, 2\n")
    cfg = load_config(str(p), env={})
    assert cfg["model.name"] == "quartic1d" and cfg["mc.seed"] == 4 and cfg["beta.values"] == (1.0, 2.0)


def test_unknown_key_rejected():
    with pytest.raises(UsageError, match="mc.sed"):
        load_config(None, ["mc.sed = 3"], env={})


def test_env_overrides_seed_and_workers():
    cfg = load_config(None, [], env={"MICROCANON_SEED": "17", "MICROCANON_WORKERS": "3"})
    assert cfg["mc.seed"] == 17 and cfg["mc.workers"] == 3


def test_hash_ignores_workers_and_output():
    a = load_config(None, ["mc.workers = 1", "output.dir = a"], env={})
    b = load_config(None, ["mc.workers = 8", "output.dir = b"], env={})
    c = load_config(None, ["mc.seed = 1"], env={})
    assert a.sha256() == b.sha256() != c.sha256()


def test_model_param_must_apply():
    cfg = load_config(None, ["model.name = quartic1d", "model.n = 2"], env={})
    with pytest.raises(UsageError, match="model.n"):
        cfg.model()


def test_dos_default_omega_near_two_pi(tmp_path):
    assert main(["dos", "-o", str(tmp_path)]) == 0
    header, cols, rows = _csv(tmp_path / "dos.csv")
    assert any("config_sha256" in h for h in header) and any(h.startswith("# seed") for h in header)
    k = cols.index("omega_fd")
    omega = np.array([float(r[k]) for r in rows])
    assert np.allclose(omega[3:-3], 2 * math.pi, rtol=0.05)


def test_unknown_model_exit_1(tmp_path, capsys):
    assert main(["dos", "-o", str(tmp_path), "-s", "model.name=nope"]) == 1
    assert "harmonic" in capsys.readouterr().err


def test_bad_arguments_exit_1(capsys):
    assert main(["nonsense"]) == 1
    assert main(["verify", "bogus"]) == 1


def test_range_error_exit_2(tmp_path):
    assert main(["zeta", "-o", str(tmp_path), "-s", "beta.values=0.2"]) == 2


def test_verification_fail_exit_3(tmp_path):
    # an absurd expected value forces the coarea check to FAIL
    assert main(["verify", "coarea", "-o", str(tmp_path), "-s", "verify.expected=100",
                 "-s", "mc.count=100000"]) == 3
    data = json.loads((tmp_path / "verify_coarea.json").read_text())
    assert data["pass"] is False and "config_sha256" in data and data["seed"] == 0


def test_verify_invariance_default(tmp_path):
    assert main(["verify", "invariance", "-o", str(tmp_path)]) == 0
    data = json.loads((tmp_path / "verify_invariance.json").read_text())
    assert data["pass"] is True
    assert {"check", "model", "params", "seed", "estimates", "pass"} <= set(data)


def test_thermo_and_models(tmp_path):
    assert main(["models", "-o", str(tmp_path)]) == 0
    assert main(["thermo", "-o", str(tmp_path), "-s", "model.n=3", "-s", "grid.min=0.001",
                 "-s", "grid.count=4000", "-s", "thermo.n_list=2,4,8,16,32,64,128,256"]) == 0
    _, cols, rows = _csv(tmp_path / "thermo.csv")
    fe, fl = cols.index("F_exact"), cols.index("F_legendre")
    for r in rows:
        assert math.isclose(float(r[fe]), float(r[fl]), rel_tol=1e-5)
    assert json.loads((tmp_path / "thermo_limit.json").read_text())["pass"] is True
