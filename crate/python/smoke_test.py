#!/usr/bin/env python3
"""Smoke test for the pdcluster Python bindings.

Builds the extension module with cargo if needed, loads it straight from the
target directory, and exercises the main types and operations. Exits nonzero
on any failure.

Usage: python3 python/smoke_test.py
"""

import importlib.util
import json
import math
import pathlib
import shutil
import subprocess
import sys

ROOT = pathlib.Path(__file__).resolve().parent.parent


def load_module():
    lib = ROOT / "target" / "release" / "libpdcluster_py.so"
    if not lib.exists():
        print("building pdcluster-py (release)...")
        subprocess.run(
            ["cargo", "build", "--release", "-p", "pdcluster-py"],
            cwd=ROOT,
            check=True,
        )
    loadable = lib.parent / "pdcluster_py.so"
    if not loadable.exists() or loadable.stat().st_mtime < lib.stat().st_mtime:
        shutil.copy2(lib, loadable)
    spec = importlib.util.spec_from_file_location("pdcluster_py", loadable)
    module = importlib.util.module_from_spec(spec)
    spec.loader.exec_module(module)
    return module


def approx(a, b, tol=1e-9):
    assert abs(a - b) <= tol, f"{a} != {b} (tol {tol})"


def main():
    pd = load_module()

    # instance construction and the exact oracle
    inst = pd.Instance(
        "kmedian",
        clients=[[0.0], [1.0], [2.0]],
        facilities=[[0.0], [1.0], [2.0]],
    )
    assert inst.objective == "kmedian"
    assert inst.num_clients == 3 and inst.num_facilities == 3
    indices, cost = inst.brute_force_opt(1)
    assert indices == [1], indices
    approx(cost, 2.0)
    approx(inst.assignment_cost([0, 2]), 1.0)

    # JSON round trip
    back = pd.Instance.from_json(inst.to_json())
    assert json.loads(back.to_json())["objective"] == "kmedian"

    # certified envelope constants
    approx_cap = pd.rho("kmeans", 0.402)
    assert approx_cap <= 3 + 2 * math.sqrt(2) + 1e-9, approx_cap
    assert pd.rho("kmedian", 0.068) <= 2.395 + 1e-9
    assert pd.group_rho("kmeans", 5, 0.3) == 5.68
    approx(pd.eval_case_bound("kmeans", "1.a", 0.3), (1 + math.sqrt(2)) ** 2)
    assert pd.eval_case_bound("kmedian", "4.b'", 0.068) == 1 / (1 - 0.136)
    assert pd.final_ratio_bound("kmeans") <= 5.979
    assert pd.final_ratio_bound("kmedian") <= 2.408

    # full pipeline on a generated instance, checked against the oracle
    rand = pd.gen_random_instance(12, 6, 2, kind="uniform", objective="kmeans", seed=7)
    centers, cost = rand.solve(3, seed=1, mc_samples=300)
    opt_centers, opt_cost = rand.brute_force_opt(3)
    assert len(centers) <= 3
    assert cost <= 5.912 * opt_cost + 1e-9, (cost, opt_cost)

    # dual growth and layer sizes are exposed
    alpha, tight, t_vals = rand.grow_duals(1.0)
    assert len(alpha) == 12 and len(tight) == len(t_vals) >= 1
    i1, i2, i3 = rand.nqis_sizes(1.0)
    assert i1 >= 1
    report = json.loads(rand.lmp(1.0, seed=2, mc_samples=200))
    assert report["sampled_costs"]["samples"] == 200

    # grid certification through the bindings (narrow target check is the
    # fast direction: an undershot target must fail with a witness)
    lb_inst, lam = pd.gen_lower_bound_instance(1.0, 10, 4, 0.1)
    assert lam == 1.0 and lb_inst.objective == "kmedian"

    print("pdcluster_py smoke test: OK")


if __name__ == "__main__":
    try:
        main()
    except AssertionError as err:
        print(f"smoke test FAILED: {err}", file=sys.stderr)
        sys.exit(1)
