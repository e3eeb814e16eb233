import csv
import io
import json

import pytest

import awgn_lab.cli as cli
from awgn_lab.cache import ResultCache, atomic_write_text, canonical_json
from awgn_lab.capacity import NoConvergence, reference_capacity
from awgn_lab.checks import CheckResult


@pytest.fixture(autouse=True)
def fresh_cache(tmp_path, monkeypatch):
    d = tmp_path / "cache"
    monkeypatch.setenv("AWGN_LAB_CACHE", str(d))
    return d


def run(args, tmp_path, name="out.json"):
    out = tmp_path / name
    code = cli.main([*args, "--out", str(out)])
    return code, (out.read_text() if out.exists() else None)


def result_of(text):
    return json.loads(text)["result"]


def csv_rows(text):
    body = "\n".join(l for l in text.splitlines() if not l.startswith("# "))
    return list(csv.DictReader(io.StringIO(body)))


# --- capacity ---------------------------------------------------------------


def test_capacity_unit_amplitude(tmp_path):
    code, text = run(["capacity", "--A", "1", "--tol", "1e-9", "--seed", "7"], tmp_path)
    assert code == 0
    res = result_of(text)
    assert res["status"] == "ok" and res["convergence_gap"] <= 1e-9
    assert res["capacity_nats"] == pytest.approx(0.3368308203, abs=1e-9)
    meta = json.loads(text)["metadata"]
    assert meta["seed"] == 7 and meta["units"] == "nats" and meta["flags"]["tol"] == 1e-9


@pytest.mark.parametrize("args", [
    ["capacity", "--A", "-1", "--seed", "1"],
    ["capacity", "--A", "1"],
    ["capacity", "--seed", "1"],
    ["capacity", "--A", "1", "--seed", "1", "--tol", "1e-15"],
    ["capacity", "--A", "1", "--seed", "-3"],
])
def test_capacity_rejects_bad_settings(args, tmp_path, capsys):
    code, text = run(args, tmp_path)
    assert code == 2 and text is None
    assert "error:" in capsys.readouterr().err


def test_capacity_tiny_amplitude(tmp_path):
    code, text = run(["capacity", "--A", "0.01", "--seed", "1"], tmp_path)
    assert code == 0 and result_of(text)["capacity_nats"] < 1e-4


def test_capacity_no_convergence_writes_best(tmp_path, monkeypatch):
    best = reference_capacity(1.0)

    def fail(*a, **k):
        raise NoConvergence("stuck", best)

    monkeypatch.setattr(cli, "reference_capacity", fail)
    code, text = run(["capacity", "--A", "1", "--seed", "1"], tmp_path)
    assert code == 3
    res = result_of(text)
    assert res["status"] == "no_convergence" and res["capacity_nats"] == best.capacity_nats


def test_bits_changes_only_the_summary(tmp_path, capsys):
    _, nats = run(["capacity", "--A", "1", "--seed", "1"], tmp_path, "a.json")
    err_nats = capsys.readouterr().err
    _, bits = run(["capacity", "--A", "1", "--seed", "1", "--bits"], tmp_path, "b.json")
    err_bits = capsys.readouterr().err
    assert nats == bits
    assert "nats" in err_nats and "bits" in err_bits


# --- keps -------------------------------------------------------------------


@pytest.mark.parametrize("eps, expect", [("1e-3", 2), ("10", 1)])
def test_keps_examples(eps, expect, tmp_path):
    code, text = run(["keps", "--A", "1", "--eps", eps, "--seed", "7"], tmp_path)
    res = result_of(text)
    assert code == 0 and res["k_eps"] == expect
    assert len(res["achieving_input"]["points"]) == expect


def test_keps_budget_exhausted(tmp_path):
    code, text = run(["keps", "--A", "4", "--eps", "1e-3", "--seed", "1", "--k-cap", "2"], tmp_path)
    res = result_of(text)
    assert code == 4 and res["status"] == "budget_exhausted" and not res["complete"]
    # the cached failure replays with the same outcome
    again, text2 = run(["keps", "--A", "4", "--eps", "1e-3", "--seed", "1", "--k-cap", "2"],
                       tmp_path, "again.json")
    assert again == 4 and text2 == text


def test_keps_repeat_is_byte_identical(tmp_path):
    args = ["keps", "--A", "2", "--eps", "1e-2", "--seed", "7"]
    _, a = run(args, tmp_path, "a.json")
    _, b = run(args, tmp_path, "b.json")
    _, c = run([*args, "--no-cache"], tmp_path, "c.json")
    assert a == b == c


# --- bounds -----------------------------------------------------------------


def test_bounds_in_hypothesis(tmp_path):
    code, text = run(["bounds", "--A", "2000", "--eps-rule", "poly", "--beta", "1"], tmp_path)
    res = result_of(text)
    assert code == 0 and res["band"]["in_hypothesis"] is True
    assert set(res["band"]) >= {"poly_lower", "poly_upper", "exp_lower", "exp_upper"}
    assert res["eps"] == 1 / 2000


def test_bounds_hypothesis_guard(tmp_path):
    assert run(["bounds", "--A", "10", "--eps", "0.5"], tmp_path)[0] == 2
    code, text = run(["bounds", "--A", "10", "--eps", "0.5", "--allow-out-of-hypothesis"], tmp_path)
    assert code == 0 and result_of(text)["flags"]


@pytest.mark.parametrize("kappa, code", [("321.0", 2), ("321.3685907710027", 0), ("400", 0)])
def test_bounds_kappa_guard(kappa, code, tmp_path):
    assert run(["bounds", "--A", "1", "--eps", "1", "--kappa", kappa], tmp_path)[0] == code


def test_bounds_needs_no_seed(tmp_path):
    assert run(["bounds", "--A", "3", "--eps-rule", "exp"], tmp_path)[0] == 0


# --- sweep ------------------------------------------------------------------

SWEEP = ["sweep", "--A-list", "0.5,1,2,4", "--eps", "1e-2", "--seed", "7"]


def test_sweep_rows_and_resume(tmp_path, monkeypatch):
    real = cli.cached_keps

    def interrupt(cfg, A, eps, ref):
        if A == 2.0:
            raise KeyboardInterrupt
        return real(cfg, A, eps, ref)

    monkeypatch.setattr(cli, "cached_keps", interrupt)
    with pytest.raises(KeyboardInterrupt):
        run(SWEEP, tmp_path, "partial.csv")
    assert not (tmp_path / "partial.csv").exists()
    monkeypatch.setattr(cli, "cached_keps", real)
    code, resumed = run(SWEEP, tmp_path, "resumed.csv")
    _, fresh = run([*SWEEP, "--no-cache"], tmp_path, "fresh.csv")
    assert code == 0 and resumed == fresh
    rows = csv_rows(resumed)
    assert len(rows) == 4
    ks = [int(r["k_eps_empirical"]) for r in rows]
    assert ks == sorted(ks)
    assert all(int(r["k_eps_empirical"]) <= int(r["achievability_m"]) for r in rows if r["achievability_m"])
    header = [l for l in resumed.splitlines() if l.startswith("# ")]
    assert any("seed: 7" in l for l in header) and any(l.startswith("# column ") for l in header)


def test_sweep_json_format(tmp_path):
    code, text = run(["sweep", "--A-list", "1", "--eps", "0.1", "--seed", "1", "--format", "json"],
                     tmp_path)
    assert code == 0 and result_of(text)["rows"][0]["k_eps_empirical"] == 2


@pytest.mark.parametrize("args", [
    ["sweep", "--eps", "1e-2", "--seed", "1"],
    ["sweep", "--A-list", "1,x", "--eps", "1e-2", "--seed", "1"],
    ["sweep", "--A-list", "1", "--eps", "1e-2", "--eps-rule", "poly", "--seed", "1"],
    ["sweep", "--A-list", "1,2", "--eps", "1e-2"],
])
def test_sweep_rejects_bad_settings(args, tmp_path):
    assert run(args, tmp_path)[0] == 2


# --- verify -----------------------------------------------------------------


def test_verify_single_check(tmp_path, capsys):
    code, text = run(["verify", "--checks", "wrap-uniformity", "--A", "2"], tmp_path)
    res = result_of(text)
    assert code == 0 and [c["name"] for c in res["checks"]] == ["wrap-uniformity"]
    assert res["checks"][0]["worst_excess"] < 0
    assert "wrap-uniformity" in capsys.readouterr().err


@pytest.mark.parametrize("args", [["verify", "--trials", "0"], ["verify", "--checks", "nope"]])
def test_verify_rejects_degenerate(args, tmp_path):
    assert run(args, tmp_path)[0] == 2


def test_verify_failure_exit(tmp_path, monkeypatch):
    bad = CheckResult("wrap-mass", "anchor", trials=3, failures=1, worst=0.5)
    monkeypatch.setattr(cli, "run_checks", lambda names, cfg: [bad])
    code, text = run(["verify"], tmp_path)
    assert code == 5 and result_of(text)["failed"] == ["wrap-mass"]


@pytest.mark.slow
def test_verify_default_suite_passes(tmp_path):
    code, text = run(["verify"], tmp_path)
    res = result_of(text)
    assert code == 0 and res["passed"] and len(res["checks"]) >= 12
    assert all(c["anchor"] for c in res["checks"])


# --- approx -----------------------------------------------------------------


def test_approx_small_range(tmp_path):
    code, text = run(["approx", "--A", "1", "--m-min", "2", "--m-max", "6", "--seed", "3",
                      "--restarts", "4"], tmp_path, "a.csv")
    rows = csv_rows(text)
    chi = [float(r["chi2"]) for r in rows]
    assert code == 0 and all(a > b for a, b in zip(chi, chi[1:]))
    # every m here sits below the regime floor
    assert {r["bound"] for r in rows} == {"out_of_regime"}


def test_approx_rejects_bad_range(tmp_path):
    assert run(["approx", "--A", "1", "--m-min", "5", "--m-max", "3", "--seed", "1"], tmp_path)[0] == 2


# --- config precedence ------------------------------------------------------


def test_config_file_and_flag_precedence(tmp_path):
    conf = tmp_path / "run.conf"
    conf.write_text("# settings\nA = 2\nseed = 4\ntol = 1e-10\nmax-iters = 500\n")
    _, text = run(["capacity", "--config", str(conf)], tmp_path, "a.json")
    flags = json.loads(text)["metadata"]["flags"]
    assert (flags["A"], flags["seed"], flags["tol"], flags["max_iters"]) == (2.0, 4, 1e-10, 500)
    _, text = run(["capacity", "--config", str(conf), "--A", "1"], tmp_path, "b.json")
    flags = json.loads(text)["metadata"]["flags"]
    assert flags["A"] == 1.0 and flags["seed"] == 4
    assert "config" not in flags and "out" not in flags


@pytest.mark.parametrize("body", ["A 2\n", "unknown = 3\n", "A = two\n", "allow_out_of_hypothesis = maybe\n"])
def test_bad_config_file(body, tmp_path):
    conf = tmp_path / "bad.conf"
    conf.write_text(body)
    assert run(["bounds", "--config", str(conf), "--A", "2", "--eps", "0.1"], tmp_path)[0] == 2


def test_missing_config_file(tmp_path):
    assert run(["bounds", "--config", str(tmp_path / "none.conf"), "--A", "2", "--eps", "0.1"],
               tmp_path)[0] == 2


# --- cache ------------------------------------------------------------------


def test_cache_round_trip_and_keying(tmp_path):
    c = ResultCache(tmp_path / "c")
    assert c.get("k", {"a": 1}) is None
    c.put("k", {"a": 1}, {"x": [1.5, 2]})
    assert c.get("k", {"a": 1}) == {"x": [1.5, 2]}
    assert c.key("k", {"a": 1, "b": 2}) == c.key("k", {"b": 2, "a": 1})
    assert c.key("k", {"a": 1}) != c.key("j", {"a": 1})
    off = ResultCache(tmp_path / "c", enabled=False)
    assert off.get("k", {"a": 1}) is None


def test_cache_ignores_corrupt_entries(tmp_path):
    c = ResultCache(tmp_path / "c")
    c.put("k", {"a": 1}, 5)
    c.path("k", {"a": 1}).write_text("{not json")
    assert c.get("k", {"a": 1}) is None
    calls = []
    v = c.memo("k", {"a": 1}, lambda: calls.append(1) or 7, lambda r: r, lambda r: r)
    assert v == 7 and c.memo("k", {"a": 1}, lambda: 8, lambda r: r, lambda r: r) == 7
    assert calls == [1]


def test_cache_dir_follows_env(fresh_cache):
    assert ResultCache().root == fresh_cache


def test_atomic_write_leaves_no_temp_files(tmp_path):
    p = tmp_path / "sub" / "f.txt"
    atomic_write_text(p, "hello")
    atomic_write_text(p, "world")
    assert p.read_text() == "world" and sorted(x.name for x in p.parent.iterdir()) == ["f.txt"]
    assert canonical_json({"b": 1, "a": [1.0]}) == '{"a":[1.0],"b":1}'
