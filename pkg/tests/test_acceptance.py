"""Acceptance suite: runs the full default verification corpus once and
checks every acceptance criterion at its stated tolerance, printing one
pass/fail line per criterion."""

import json
import math

import numpy as np
import pytest

from localext.harness import default_config, run_verification


@pytest.fixture(scope="session")
def full_run():
    cfg = default_config()
    cfg["figures"] = False
    report = run_verification(cfg)
    by_name = {}
    for r in report:
        by_name.setdefault(r.name.split(":")[0], []).append(r)
    return cfg, report, by_name


def _announce(num, label, ok):
    print(f"\ncriterion {num} [{label}]: {'PASS' if ok else 'FAIL'}")
    assert ok, f"criterion {num} ({label}) failed"


def _all(by_name, key, statuses=("pass",)):
    rows = by_name.get(key, [])
    assert rows, f"no results for {key}"
    return rows, all(r.status in statuses for r in rows)


def test_criterion_1_poly_reproduction(full_run):
    cfg, report, by_name = full_run
    rows, ok = _all(by_name, "extension_poly_reproduction")
    ok = ok and all(r.measured_constant <= 1e-8 for r in rows)
    ok = ok and all(r.details["kmax"] >= 4 for r in rows)
    secs = cfg.get("_poly_seconds", {})
    for tag, sec in secs.items():
        if tag.endswith(":fine") and ("2d" in tag):
            ok = ok and sec <= 60.0
    _announce(1, "polynomial reproduction <= 1e-8, k <= 4, <= 60 s per 2-D set", ok)


def test_criterion_2_whitney_invariants(full_run):
    _, report, by_name = full_run
    ok = True
    for key in ("whitney_cover", "whitney_size_window", "whitney_overlap", "whitney_neighbor_ratio"):
        _, good = _all(by_name, key)
        ok = ok and good
    for r in by_name["whitney_overlap"]:
        n = 2 if "2d" in r.details["set"] else 1
        ok = ok and r.measured_constant <= 2 ** n
    for r in by_name["whitney_neighbor_count"]:
        ok = ok and np.isfinite(r.measured_constant)
    _announce(2, "Whitney invariants exact; overlap and neighbor counts bounded", ok)


def test_criterion_3_quasicubes(full_run):
    _, report, by_name = full_run
    ok = True
    for key in ("quasicube_inclusion", "quasicube_overlap", "quasicube_disjointness"):
        _, good = _all(by_name, key)
        ok = ok and good
    for r in by_name["quasicube_measure"]:
        ok = ok and r.status == "pass" and np.isfinite(r.measured_constant)
    drift = [
        r
        for r in by_name.get("stability", [])
        if r.name in ("stability:quasicube_measure", "stability:quasicube_overlap")
    ]
    ok = ok and drift and all(r.status == "pass" for r in drift)
    _announce(3, "quasi-cube invariants exact, gamma constants finite, drift < 2x", ok)


def test_criterion_4_nearbest(full_run):
    _, report, by_name = full_run
    rows, ok = _all(by_name, "projector_nearbest")
    total = sum(r.samples for r in rows)
    ok = ok and total >= 50
    for r in rows:
        ok = ok and r.details["ratio_l1"] <= 10 and r.details["ratio_linf"] <= 10
        ok = ok and r.details["ratio_l2"] <= 1 + 1e-8
    _announce(4, ">= 50 near-best pairs, L1/Linf ratio <= 10, L2 ratio <= 1+1e-8", ok)


def test_criterion_5_local_approx_preservation(full_run):
    _, report, by_name = full_run
    ok = True
    for key in ("approx_preservation", "extension_lu_bound"):
        rows, good = _all(by_name, key)
        ok = ok and good and all(np.isfinite(r.measured_constant) for r in rows)
        ok = ok and all(r.details.get("violations", 0) == 0 for r in rows if "violations" in r.details)
    drift = [
        r
        for r in by_name.get("stability", [])
        if r.name in ("stability:approx_preservation", "stability:extension_lu_bound")
    ]
    ok = ok and drift and all(r.status == "pass" for r in drift)
    _announce(5, "local-approximation preservation: finite constants, drift < 2x", ok)


def test_criterion_6_maximal(full_run):
    _, report, by_name = full_run
    rows, ok = _all(by_name, "sharp_pointwise")
    ok = ok and all(r.samples >= 1000 for r in rows)
    hlw, good = _all(by_name, "hl_maximal_bound")
    ok = ok and good and all(r.measured_constant < 10 for r in hlw)
    _announce(6, "pointwise maximal bound at >= 1e3 samples; HLW constant < 10", ok)


def test_criterion_7_norm_equivalences(full_run):
    _, report, by_name = full_run
    ok = True
    for key in ("equivalence_sobolev", "equivalence_tl", "equivalence_besov"):
        rows, good = _all(by_name, key, statuses=("pass", "skipped"))
        ok = ok and good
        finite = [r for r in rows if r.status == "pass" and r.measured_constant is not None]
        ok = ok and all(np.isfinite(r.measured_constant) for r in finite)
        # the restriction direction never fails on passing rows
        for r in finite:
            rr = r.details.get("restriction_ratio")
            if rr is not None:
                ok = ok and rr <= r.details.get("tol", 1.5) + 1e-9
    drift = [
        r
        for r in by_name.get("stability", [])
        if r.name.startswith(("stability:equivalence_",))
    ]
    ok = ok and drift and all(r.status == "pass" for r in drift)
    _announce(7, "two-sided norm equivalences finite, stable, restriction holds", ok)


def test_criterion_8_moduli(full_run):
    _, report, by_name = full_run
    ok = True
    for key in (
        "moduli_sandwich",
        "moduli_eqm",
        "moduli_difm",
        "moduli_quasimonotone",
        "kps_transfer",
        "cover_split",
    ):
        rows, good = _all(by_name, key)
        ok = ok and good and all(np.isfinite(r.measured_constant) for r in rows)
    ms, good = _all(by_name, "ms_modulus_transfer")
    ok = ok and good
    ok = ok and all(r.details["quadrature_consistency"] <= 0.01 for r in ms)
    _announce(8, "moduli machinery: sandwich/EQM/DIFM/QMON/transfer, 1% consistency", ok)


def test_criterion_9_quadrature(full_run):
    _, report, by_name = full_run
    rows, ok = _all(by_name, "ladder_density")
    ok = ok and all(r.measured_constant < 0.01 for r in rows)
    q64, good = _all(by_name, "sharp_q64_vs_inf")
    ok = ok and good and all(r.measured_constant <= 0.05 for r in q64)
    _announce(9, "ladder-density < 1%; q=64 vs q=inf within 5%", ok)


def test_total_runtime_budget(full_run):
    cfg, report, _ = full_run
    total = sum(cfg.get("_timings", {}).values())
    print(f"\nfull verification wall time: {total:.1f} s")
    assert total <= 900.0, f"verification exceeded 15 minutes: {total:.0f} s"


def test_no_failures_anywhere(full_run):
    _, report, _ = full_run
    fails = [r for r in report if r.status == "fail"]
    assert not fails, [(r.name, r.details.get("set"), r.details.get("resolution")) for r in fails]
