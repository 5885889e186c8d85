import json
import math

import numpy as np
import pytest

from sinai.errors import GammaTooSmall, NoGoodEnvironmentFound
from sinai.harness import (ExperimentConfig, default_q_grid, mean_se, monotone_within,
                           normalize_row, read_csv, run_experiment, write_csv)

SMALL = {
    "containment": dict(n_grid=[1000, 10000], envs=6, walks=5, all_envs=True,
                        barrier_budget=1 << 10, search_cap=1 << 16),
    "localization": dict(n_grid=[1000, 10000], envs=6, walks=5, all_envs=True,
                         barrier_budget=1 << 10, search_cap=1 << 16),
    "subdiff": dict(n_grid=[10, 100, 1000, 10000], envs=4, walks=5, flat_walks=12,
                    flat_halfwidth=2000),
    "tails": dict(envs=3, tail_walks=100, tail_n=10**4, q_grid=[1, 10, 100, 1000]),
    "goodenv": dict(n_grid=[10**4, 10**6], replicas=100, barrier_budget=1 << 8),
}


def small(name, **kw):
    return ExperimentConfig(name, **{**SMALL[name], **kw})


def csv_bytes(res, tmp_path, tag):
    out = tmp_path / tag
    paths = res.write(out, plot=True)
    return {p.name: p.read_bytes() for p in paths if p.suffix in (".csv", ".dat")}


@pytest.mark.parametrize("name", sorted(SMALL))
def test_csv_independent_of_worker_count(name, tmp_path):
    a = csv_bytes(run_experiment(small(name, workers=1)), tmp_path, "w1")
    b = csv_bytes(run_experiment(small(name, workers=2)), tmp_path, "w2")
    assert a == b and a


@pytest.mark.parametrize("name", ["containment", "tails", "subdiff"])
def test_csv_round_trip(name, tmp_path):
    res = run_experiment(small(name, workers=1))
    res.write(tmp_path)
    for tname, rows in res.tables.items():
        back = read_csv(tmp_path / f"{res.config.experiment}_{tname}.csv")
        assert back == [normalize_row(r) for r in rows]


def test_json_report(tmp_path):
    res = run_experiment(small("containment", workers=1))
    res.write(tmp_path)
    d = json.loads((tmp_path / "containment.json").read_text())
    assert d["exit_code"] == res.exit_code
    assert ExperimentConfig.from_dict(d["config"]) == res.config
    assert {a["status"] for a in d["assertions"]} <= {"pass", "fail", "skipped"}


def test_bound_columns_match_exact_evaluators():
    from sinai.env import derived_scales
    from sinai.exact import theorem_bounds
    res = run_experiment(small("containment", workers=1))
    for s in res.tables["summary"]:
        sc = derived_scales(s["n"], 3.0, 1.0, res.config.spec.moments().sigma2)
        assert s["bound"] == theorem_bounds(sc).containment
        lg2 = math.log(math.log(s["n"]))
        assert s["bound"] == pytest.approx(
            2 * lg2 / (sc.sigma ** 2 * math.log(s["n"]) ** (3.0 - 2)), rel=1e-12)


def test_exit_code_reflects_failed_assertions():
    res = run_experiment(small("subdiff", workers=1))
    failed = any(a["status"] == "fail" for a in res.assertions)
    assert res.exit_code == (2 if failed else 0)
    res.assertions.append({"name": "x", "status": "fail", "detail": None})
    assert res.exit_code == 2


def test_tails_rows_consistent():
    res = run_experiment(small("tails", workers=1))
    for r in res.tables["rows"]:
        assert r["violation"] == (r["tail"] > r["bound"] + 3 * r["se"])
        assert 0.0 <= r["tail"] <= 1.0


def test_included_requires_good_clauses_unless_all_envs():
    res = run_experiment(small("containment", workers=1, all_envs=False, envs=30,
                               n_grid=[10**4]))
    for r in res.tables["rows"]:
        assert r["included"] == r["good"]
        assert (r["walks"] > 0) == r["included"]


def test_no_good_environment_is_an_error():
    with pytest.raises(NoGoodEnvironmentFound):
        run_experiment(small("containment", workers=1, all_envs=False, envs=1,
                             good_clauses="all", n_grid=[1000]))


def test_config_validation():
    with pytest.raises(ValueError):
        ExperimentConfig("nope")
    with pytest.raises(ValueError):
        ExperimentConfig("tails", n_grid=[10, 5])
    with pytest.raises(GammaTooSmall):
        ExperimentConfig("containment", gamma=2.0)
    with pytest.raises(ValueError):
        ExperimentConfig.from_dict({"experiment": "tails", "bogus": 1})
    assert ExperimentConfig("subdiffusivity").experiment == "subdiff"
    assert ExperimentConfig("tails", n_grid=["1e3", 1e4]).n_grid == [1000, 10000]


def test_csv_helpers(tmp_path):
    rows = [{"a": 1, "b": 0.1 + 0.2, "c": None, "d": True, "e": "x;y", "f": np.float64(1e-300)},
            {"a": -3, "b": math.inf, "c": 2.5, "d": False, "e": "", "f": np.int64(7)}]
    p = tmp_path / "t.csv"
    write_csv(p, rows)
    assert read_csv(p) == [normalize_row(r) for r in rows]
    assert read_csv(p)[0]["b"] == 0.1 + 0.2


def test_statistics_helpers():
    p, se = mean_se([0.0, 0.0, 0.0], 10)
    assert p == 0 and se == 0
    p, se = mean_se([0.2, 0.4], 10)
    assert p == pytest.approx(0.3)
    assert se >= math.sqrt(0.3 * 0.7 / 20)
    ok, bad = monotone_within([0.5, 0.4, 0.45], [0.01, 0.01, 0.01], -1)
    assert not ok and bad == [(1, 2)]
    ok, _ = monotone_within([0.5, 0.4, 0.42], [0.01, 0.01, 0.01], -1)
    assert ok
    ok, _ = monotone_within([0.1, 0.2, 0.3], [0, 0, 0], +1)
    assert ok


def test_default_q_grid():
    q = default_q_grid(1e6)
    assert len(q) == 20 and q[0] == 1 and q[-1] == 10**6
    assert all(b > a for a, b in zip(q, q[1:]))
