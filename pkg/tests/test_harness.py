import statistics

import numpy as np
import pytest

from lrcs import cli
from lrcs.errors import ConfigurationError
from lrcs.harness import (HISTORY_COLUMNS, RESULT_COLUMNS, SUMMARY_COLUMNS, ExperimentSpec,
                          derive_seed, emit_summary, load_spec, parse_config_text, read_csv,
                          run_experiment, spec_from_settings)
from lrcs.model import load_instance

SMALL = """
# tiny sweep
n = 20
q = 20
r = 2
m = 12, 24     # two cells
trials = 2
max_iters = 60
base_seed = 5
"""


def write_cfg(tmp_path, text=SMALL):
    p = tmp_path / "exp.cfg"
    p.write_text(text)
    return p


def test_parse_grammar():
    d = parse_config_text("a = 1\n\n  # c\nb=2, 3 # tail\n")
    assert d == {"a": "1", "b": "2, 3"}
    with pytest.raises(ConfigurationError):
        parse_config_text("oops\n")


def test_spec_from_settings():
    spec = spec_from_settings(parse_config_text(SMALL))
    assert spec.grid["m"] == [12, 24]
    assert spec.trials_per_cell == 2 and spec.solver_cfg.max_iters == 60
    assert len(spec.cells()) == 2
    with pytest.raises(ConfigurationError):
        spec_from_settings({"n": "10", "bogus": "1"})
    with pytest.raises(ConfigurationError):
        spec_from_settings({"n": "10", "q": "10", "r": "2", "m": "0"})


def test_empty_grid_rejected():
    with pytest.raises(ConfigurationError):
        ExperimentSpec(grid={}).validate()
    with pytest.raises(ConfigurationError):
        ExperimentSpec(grid={"n": [], "q": [5], "r": [1], "m": [3]}).validate()


def test_sigma_and_nsr_exclusive():
    with pytest.raises(ConfigurationError):
        ExperimentSpec(grid={"n": [5], "q": [5], "r": [1], "m": [3], "sigma_v": [0],
                             "nsr": [1e-4]}).validate()


def test_memory_guard():
    spec = ExperimentSpec(grid={"n": [1000], "q": [1000], "r": [2], "m": [1000]},
                          mem_budget_bytes=1e6)
    with pytest.raises(ConfigurationError):
        spec.validate()


def test_seed_derivation_stable_under_grid_growth():
    cell = {"n": 20, "q": 20, "r": 2, "m": 12, "kappa": 1.0, "sigma_v": 0.0}
    s = derive_seed(5, cell, 0)
    assert s == derive_seed(5, dict(cell), 0)
    assert s != derive_seed(5, cell, 1) and s != derive_seed(6, cell, 0)
    assert 0 <= s < 2**64
    small = spec_from_settings(parse_config_text(SMALL))
    grown = spec_from_settings(parse_config_text(SMALL.replace("m = 12, 24", "m = 6, 12, 24, 48")))
    before = {tuple(c.items()): derive_seed(5, c, 0) for c in small.cells()}
    after = {tuple(c.items()): derive_seed(5, c, 0) for c in grown.cells()}
    assert all(after[k] == v for k, v in before.items())


def test_run_experiment_outputs(tmp_path):
    spec = load_spec(write_cfg(tmp_path), {"out": str(tmp_path / "o")})
    res = run_experiment(spec)
    rows = read_csv(res["paths"]["results"])
    assert list(rows[0]) == list(RESULT_COLUMNS)
    assert len(rows) == 4 and all(r["status"] == "ok" for r in rows)
    hist = read_csv(res["paths"]["history"])
    assert list(hist[0]) == list(HISTORY_COLUMNS)
    assert {h["run_id"] for h in hist} == {"0", "1", "2", "3"}
    for i, r in enumerate(rows):
        n_hist = sum(1 for h in hist if h["run_id"] == str(i))
        assert n_hist == int(r["iters"]) <= 60
    summ = read_csv(res["paths"]["summary"])
    assert list(summ[0]) == list(SUMMARY_COLUMNS) and len(summ) == 2


def test_header_schema_pinned(tmp_path):
    res = run_experiment(load_spec(write_cfg(tmp_path), {"out": str(tmp_path / "o")}))
    heads = {k: res["paths"][k].read_text().splitlines()[0] for k in ("results", "history")}
    assert heads["results"] == ("n,q,r,m,sigma_v,nsr,mu,kappa,seed,solver,final_sd2,"
                                "final_frob_rel,iters,init_ms,total_ms,status")
    assert heads["history"] == "run_id,iter,sd2,frob_rel,grad_norm,eta,wall_ms"


def test_byte_identical_reruns(tmp_path):
    cfg = write_cfg(tmp_path, SMALL.replace("m = 12, 24     # two cells", "m = 16"))
    outs = []
    for i, threads in enumerate((1, 3)):
        spec = load_spec(cfg, {"out": str(tmp_path / f"o{i}"), "record_timing": "false",
                               "threads": str(threads)})
        outs.append(run_experiment(spec)["paths"])
    for name in ("results", "history", "summary", "manifest"):
        assert outs[0][name].read_bytes() == outs[1][name].read_bytes(), name


def test_nsr_grid_and_altmin(tmp_path):
    text = SMALL.replace("m = 12, 24     # two cells", "m = 20\nnsr = 1e-4\nsolver = altmin")
    res = run_experiment(load_spec(write_cfg(tmp_path, text), {"out": str(tmp_path / "o")}))
    rows = res["rows"]
    assert all(r["solver"] == "altmin" for r in rows)
    assert all(r["nsr"] == pytest.approx(1e-4) for r in rows)


def test_failed_cells_recorded_not_raised(tmp_path):
    # m = 3 < nr/q for altmin: precondition failure becomes a status row
    text = SMALL.replace("m = 12, 24     # two cells", "m = 1, 12").replace(
        "max_iters = 60", "max_iters = 5\nsolver = altmin")
    res = run_experiment(load_spec(write_cfg(tmp_path, text), {"out": str(tmp_path / "o")}))
    status = [r["status"] for r in res["rows"]]
    assert status[:2] == ["ConfigurationError"] * 2 and status[2:] == ["ok", "ok"]


def _row(sd, ms, m=10):
    return {"n": 5, "q": 5, "r": 1, "m": m, "sigma_v": 0.0, "nsr": 0.0, "kappa": 1.0,
            "solver": "altgdmin", "final_sd2": sd, "total_ms": ms, "status": "ok"}


def test_summary_single_and_identical():
    s = emit_summary([_row(0.25, 3.0)])[0]
    assert s["sd2_median"] == s["sd2_q25"] == s["sd2_q75"] == 0.25
    assert s["total_ms_median"] == 3.0 and s["trials"] == 1
    s2 = emit_summary([_row(0.25, 3.0), _row(0.25, 3.0)])[0]
    assert s2["sd2_q75"] - s2["sd2_q25"] == 0.0
    with pytest.raises(ValueError):
        emit_summary([])


def test_summary_medians_match_script():
    rng = np.random.default_rng(0)
    vals = rng.uniform(0, 1, 20)
    times = rng.uniform(1, 100, 20)
    rows = [_row(float(v), float(t), m=10 + (i % 2)) for i, (v, t) in enumerate(zip(vals, times))]
    summ = {s["m"]: s for s in emit_summary(rows, success_sd2=0.5)}
    for m in (10, 11):
        mine = [r for r in rows if r["m"] == m]
        assert summ[m]["sd2_median"] == pytest.approx(statistics.median(r["final_sd2"] for r in mine))
        assert summ[m]["total_ms_median"] == pytest.approx(statistics.median(r["total_ms"] for r in mine))
        assert summ[m]["success_rate"] == sum(r["final_sd2"] <= 0.5 for r in mine) / len(mine)


def test_cli_run_and_overrides(tmp_path, capsys):
    cfg = write_cfg(tmp_path)
    out = tmp_path / "cli"
    rc = cli.main(["run", "--config", str(cfg), "--out", str(out), "--solver", "altmin",
                   "--seed", "9", "--threads", "2"])
    assert rc == 0
    rows = read_csv(out / "results.csv")
    assert {r["solver"] for r in rows} == {"altmin"}
    assert "wrote 4 runs" in capsys.readouterr().out


def test_cli_config_errors(tmp_path, capsys):
    cfg = write_cfg(tmp_path, "n = 10\nq = 10\nr = 2\n")
    assert cli.main(["run", "--config", str(cfg), "--out", str(tmp_path / "x")]) != 0
    assert cli.main(["run", "--config", str(tmp_path / "missing.cfg")]) != 0


def test_threads_env_fallback(tmp_path, monkeypatch):
    monkeypatch.setenv("LRCS_THREADS", "2")
    spec = load_spec(write_cfg(tmp_path), {"out": str(tmp_path / "o")})
    assert spec.threads is None
    run_experiment(spec)
    monkeypatch.setenv("LRCS_THREADS", "x")
    with pytest.raises(ConfigurationError):
        run_experiment(spec)


def test_cli_gen(tmp_path, capsys):
    out = tmp_path / "inst"
    assert cli.main(["gen", "--n", "8", "--q", "5", "--r", "2", "--m", "6", "--nsr", "1e-3",
                     "--seed", "3", "--out", str(out)]) == 0
    inst = load_instance(out)
    assert (inst.n, inst.q, inst.m, inst.truth.r) == (8, 5, 6, 2)
    assert sorted(p.name for p in out.iterdir())[:2] == ["A_0.bin", "A_1.bin"]


def test_cli_verify_init(capsys):
    assert cli.main(["verify-init", "--reps", "500", "--tolerance", "0.5"]) == 0
    out = capsys.readouterr().out
    assert "relative Frobenius deviation" in out and "max relative deviation" in out
    assert cli.main(["verify-init", "--reps", "10", "--tolerance", "1e-9"]) == 1
