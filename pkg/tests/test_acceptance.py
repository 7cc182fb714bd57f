"""End-to-end acceptance checks, one test group per criterion.

Each test records its measured numbers through the ``acceptance`` fixture;
the terminal summary prints one PASS/FAIL line per criterion.  Set
``TNGP_REGEN_GOLDEN=1`` to rewrite the committed adjudication verdict.
"""

import json
import math
import os
import time
from pathlib import Path

import numpy as np
import pytest
from scipy.stats import ks_2samp, multivariate_normal

from tngp import gp, stats
from tngp.cli import main, mc_check
from tngp.config import parse_config
from tngp.kernels import (
    KernelFunction,
    activation_expectation,
    activation_expectation_mc,
    mc_cov,
    taylor_expectation,
)
from tngp.mps import FeatureMap, MpsSpec, TensorParams, brute_force_evaluate, evaluate_hidden, evaluate_pure
from tngp.network import Model, sample_responses
from tngp.priors import PriorSpec, Seed

GOLDEN = Path(__file__).parent / "golden" / "adjudication.json"
AUTO = PriorSpec(scaling="auto_alpha")
LC = FeatureMap()


# 1. contraction oracle

def test_c1_contraction_oracle(acceptance):
    rng = np.random.default_rng(2024)
    start = time.perf_counter()
    worst = 0.0
    for i in range(50):
        n, alpha = int(rng.integers(1, 5)), int(rng.integers(1, 4))
        boundary = ("periodic", "open")[i % 2]
        hidden = i % 5 == 4
        out_dim = int(rng.integers(1, 4)) if hidden else None
        site = int(rng.integers(n)) if hidden else None
        spec = MpsSpec(n, alpha, 2, boundary, out_dim, site)
        params = TensorParams(tuple(rng.standard_normal(spec.node_shape(k)) for k in range(n)))
        x = rng.uniform(0, 1, n)
        fast = evaluate_hidden(spec, params, LC, x) if hidden else evaluate_pure(spec, params, LC, x)
        slow = brute_force_evaluate(spec, params, LC, x)
        rel = np.max(np.abs(np.asarray(fast) - slow) / np.maximum(np.abs(slow), 1e-300))
        worst = max(worst, float(rel))
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-10 and elapsed < 10
    acceptance(1, "fast contraction vs brute force, 50 instances",
               ok, f"max rel err {worst:.2e}, {elapsed:.2f}s")
    assert ok


# 2. closed-form covariance adjudication

def _adjudication_config(boundary):
    return {
        "experiment": "mc-check",
        "seed": 20240601,
        "model": {"kind": "pure_mps", "n_sites": 3, "bond_dim": 2, "boundary": boundary},
        "prior": {"scaling": "auto_alpha"},
        "mc_check": {"n_pairs": 10, "m": 100_000},
    }


def test_c2_prefactor_adjudication(acceptance):
    start = time.perf_counter()
    verdicts = {}
    for boundary in ("open", "periodic"):
        v = mc_check(parse_config(_adjudication_config(boundary)))
        verdicts[boundary] = {
            "matching": v["matching"],
            "max_abs_z": {c: round(v["conventions"][c]["max_abs_z"], 2) for c in v["conventions"]},
        }
    elapsed = time.perf_counter() - start
    if os.environ.get("TNGP_REGEN_GOLDEN"):
        GOLDEN.parent.mkdir(exist_ok=True)
        GOLDEN.write_text(json.dumps({b: {"matching": verdicts[b]["matching"],
                                          "config": _adjudication_config(b)}
                                      for b in verdicts}, indent=2, sort_keys=True) + "\n")
    golden = json.loads(GOLDEN.read_text())
    for boundary, v in verdicts.items():
        ok = len(v["matching"]) == 1 and v["matching"] == golden[boundary]["matching"]
        acceptance(2, f"{boundary} chain", ok,
                   f"matching {v['matching']}, max |z| {v['max_abs_z']}")
    ok = elapsed < 120
    acceptance(2, "runtime", ok, f"{elapsed:.1f}s")
    assert all(len(v["matching"]) == 1 for v in verdicts.values())
    assert {b: v["matching"] for b, v in verdicts.items()} == {b: g["matching"] for b, g in golden.items()}
    assert ok


# 3. scaling rule

def test_c3_scaling_rule(acceptance):
    worst = 0.0
    for alpha in range(1, 9):
        for n in range(1, 11):
            model = Model("pure_mps", MpsSpec(n, alpha, boundary="open"), AUTO)
            var = KernelFunction(model).covariance([0.0] * n, [0.0] * n)
            worst = max(worst, abs(var - 1.0))
    ok = worst <= 1e-12
    acceptance(3, "variance at x = 0 over alpha 1..8, n 1..10", ok, f"max |var - 1| {worst:.1e}")
    assert ok


# 4. convergence sweeps

SWEEPS = {
    "pure_mps": (Model("pure_mps", MpsSpec(3, 2, boundary="periodic"), AUTO), "bond_dim", [[0.3, 0.6, 0.8]]),
    "neural_kernel_mps": (
        Model("neural_kernel_mps", MpsSpec(3, 16, 2, "periodic"), AUTO, FeatureMap("neural_kernel", "erf")),
        "phys_dim", [[0.3]]),
    "mps_hidden_nn": (
        Model("mps_hidden_nn", MpsSpec(3, 16, 2, "open", 2, 1), AUTO, activation="tanh"),
        "output_dim", [[0.3, 0.6, 0.8]]),
}


@pytest.mark.slow
@pytest.mark.parametrize("kind", sorted(SWEEPS))
def test_c4_width_sweep(kind, acceptance):
    model, axis, points = SWEEPS[kind]
    start = time.perf_counter()
    report = stats.width_sweep(model, axis, [2, 4, 8, 16], points, 10_000, Seed(4))
    elapsed = time.perf_counter() - start
    ks = report.ks_values
    ok = ks[-1] < 0.05 and ks[-1] < ks[0] and elapsed < 300
    acceptance(4, f"{kind} over {axis}", ok,
               "KS " + ", ".join(f"{k:.4f}" for k in ks) + f", {elapsed:.1f}s")
    assert ok


# 5. prior forward samples vs GP samples

@pytest.mark.slow
def test_c5_prior_matches_gp(acceptance):
    model = Model("pure_mps", MpsSpec(16, 32, boundary="periodic"), AUTO)
    points = [[t] + [0.5] * 15 for t in (0.25, 0.5, 0.75)]
    prior = sample_responses(model, points, 10_000, Seed(5).child("prior"))
    paths = gp.sample_paths_gp(KernelFunction(model), points, 10_000, Seed(5).child("gp"))
    gp_vals = np.array([p.values for p in paths])
    ks = [ks_2samp(prior[:, i], gp_vals[:, i]).statistic for i in range(3)]
    ok = max(ks) < 0.05
    acceptance(5, "two-sample KS at t = 0.25, 0.5, 0.75 (n = 16)", ok,
               ", ".join(f"{k:.4f}" for k in ks))
    assert ok


# 6. GP engine exactness

class MatrixKernel:
    """Kernel over integer point labels backed by a fixed matrix."""

    estimator = "analytic"

    def __init__(self, matrix):
        self.matrix = np.asarray(matrix, dtype=float)

    def covariance(self, a, b):
        return self.matrix[int(np.ravel(a)[0]), int(np.ravel(b)[0])]

    def cross(self, pa, pb):
        return np.array([[self.covariance(a, b) for b in pb] for a in pa])


def test_c6_gp_exactness(acceptance):
    rng = np.random.default_rng(6)
    model = Model("pure_mps", MpsSpec(3, 3, boundary="periodic"), PriorSpec(sigma_A=0.9))
    k = KernelFunction(model)
    pts = [rng.uniform(0, 1, 3) for _ in range(8)]
    y = rng.standard_normal(8)
    mean, _ = gp.predict(gp.fit(k, pts, y), pts)
    interp = float(np.max(np.abs(mean - y)))
    acceptance(6, "noiseless interpolation", interp <= 1e-8, f"max err {interp:.1e}")

    worst = 0.0
    for _ in range(20):
        b = rng.standard_normal((4, 4))
        cov = b @ b.T + 0.1 * np.eye(4)
        target = rng.standard_normal(4)
        post = gp.fit(MatrixKernel(cov), [[i] for i in range(4)], target)
        oracle = multivariate_normal(np.zeros(4), cov).logpdf(target)
        worst = max(worst, abs(gp.log_marginal_likelihood(post) - oracle))
    acceptance(6, "log marginal likelihood vs dense normal density, 20 cases", worst <= 1e-9,
               f"max err {worst:.1e}")

    one = gp.log_marginal_likelihood(gp.fit(MatrixKernel([[1.0]]), [[0]], [0.0]))
    err = abs(one + 0.5 * math.log(2 * math.pi))
    acceptance(6, "1x1 identity case", err <= 1e-12, f"err {err:.1e}")
    assert interp <= 1e-8 and worst <= 1e-9 and err <= 1e-12


# 7. Taylor approximation

def _hidden(n, act, sigma=0.1, sigma_b=1.0):
    spec = MpsSpec(n, 2 if n > 1 else 1, 2, "open", 4, 0)
    return Model("mps_hidden_nn", spec, PriorSpec(sigma_A=sigma, sigma_b=sigma_b), activation=act)


def test_c7_identity_single_site(acceptance):
    model = _hidden(1, "identity", sigma=0.8)
    x, xp = [0.3], [0.6]
    taylor = KernelFunction(model, "taylor").covariance(x, xp)
    z = mc_cov(model, x, xp, 100_000, Seed(7)).z_score(taylor)
    ok = abs(z) < 4
    acceptance(7, "identity activation, n = 1", ok, f"taylor {taylor:.6f}, z {z:.2f}")
    assert ok


@pytest.mark.xfail(strict=True, reason="the integrand has degree 2n; at zero weights the diagonal "
                                       "second derivatives vanish for n >= 2")
def test_c7_identity_two_sites(acceptance):
    model = _hidden(2, "identity")
    x, xp = [0.3, 0.7], [0.6, 0.2]
    taylor = KernelFunction(model, "taylor").covariance(x, xp)
    est = mc_cov(model, x, xp, 100_000, Seed(7))
    z = est.z_score(taylor)
    ok = abs(z) < 4
    acceptance(7, "identity activation, n = 2, sigma_A = 0.1", ok,
               f"taylor {taylor:.8f}, mc {est.value:.8f}, z {z:.1f}")
    assert ok


def test_c7_tanh(acceptance):
    x, xp = [0.3, 0.7], [0.6, 0.2]
    model = _hidden(2, "tanh")
    taylor = KernelFunction(model, "taylor").covariance(x, xp)
    mc = mc_cov(model, x, xp, 100_000, Seed(8)).value
    rel = abs(taylor - mc) / abs(mc)
    bare = _hidden(2, "tanh", sigma_b=0.0)
    bare_taylor = KernelFunction(bare, "taylor").covariance(x, xp)
    bare_mc = mc_cov(bare, x, xp, 100_000, Seed(8)).value
    bare_rel = abs(bare_taylor - bare_mc) / abs(bare_mc)
    ok = rel < 0.10
    acceptance(7, "tanh, n = 2, alpha = 2, sigma_A = 0.1, sigma_b = 1", ok,
               f"rel err {rel:.2e} (without bias: rel err {bare_rel:.2f})")
    assert ok


def test_c7_quartic_remainder(acceptance):
    var = 0.5
    got = taylor_expectation(lambda a: a[0] ** 4, [0.0], [var], 1e-3)
    error = 3 * var**2 - got
    ok = abs(error - 3 * var**2) <= 1e-5 * 3 * var**2
    acceptance(7, "A^4 remainder", ok, f"taylor {got:.2e}, error {error:.6f} vs 3 sigma^4 = {3 * var**2}")
    assert ok


# 8. erf expectation

def test_c8_erf_expectation(acceptance):
    rng = np.random.default_rng(8)
    worst = 0.0
    for i in range(10):
        x, xp = rng.uniform(-1, 2, 1), rng.uniform(-1, 2, 1)
        est = activation_expectation_mc("erf", 1.2, x, xp, 100_000, Seed(8).child("pair", i))
        worst = max(worst, abs(est.z_score(activation_expectation("erf", 1.2, x, xp))))
    ok = worst < 4
    acceptance(8, "arcsine form vs Monte Carlo, 10 pairs", ok, f"max |z| {worst:.2f}")
    assert ok


# 9. figure protocols through the CLI

def _run(tmp_path, cfg, out):
    path = tmp_path / f"{out}.json"
    path.write_text(json.dumps(cfg))
    code = main(["--config", str(path), "--out", str(tmp_path / out), "--quiet"])
    return code, tmp_path / out


def _rows(path):
    lines = path.read_text().split("\n")
    assert lines[0].startswith("# ") and lines[-1] == ""
    return lines[1].split(","), [line.split(",") for line in lines[2:] if line]


def test_c9_figure_protocols(tmp_path, acceptance):
    slice_cfg = {"experiment": "sample-paths", "seed": 9, "model": {"n_sites": 5, "bond_dim": 8, "phys_dim": 2},
            "paths": {"count": 4}}
    code, out = _run(tmp_path, slice_cfg, "slice")
    header, rows = _rows(out / "paths.csv")
    schema = code == 0 and header == ["path_id", "source", "sigma_A", "t", "value"]
    worst = 0.0
    for pid in "0123":
        t = np.array([float(r[3]) for r in rows if r[0] == pid])
        v = np.array([float(r[4]) for r in rows if r[0] == pid])
        for i in range(1, len(t) - 1):
            # three-point collinearity with the path endpoints
            dev = abs((v[i] - v[0]) * (t[-1] - t[0]) - (v[-1] - v[0]) * (t[i] - t[0]))
            worst = max(worst, dev / (1 + np.max(np.abs(v))))
    ok1 = schema and len(rows) == 200 and worst <= 1e-9
    acceptance(9, "n = 5, alpha = 8, s = 2, 4 slice paths", ok1, f"collinearity dev {worst:.1e}")

    fam = dict(slice_cfg, paths={"sigma_family": [0.6, 0.8, 1.0, 1.2]})
    code, out = _run(tmp_path, fam, "family")
    header, rows = _rows(out / "paths.csv")
    sigmas = sorted({float(r[2]) for r in rows})
    base = np.array([float(r[4]) for r in rows if r[0] == "2"])
    scale_err = max(
        float(np.max(np.abs(np.array([float(r[4]) for r in rows if float(r[2]) == s]) - s**5 * base)))
        for s in sigmas
    )
    ok2 = code == 0 and sigmas == [0.6, 0.8, 1.0, 1.2] and scale_err <= 1e-9 * (1 + np.max(np.abs(base)))
    acceptance(9, "sigma-family protocol on shared draws", ok2, f"max scaling err {scale_err:.1e}")
    assert ok1 and ok2


# 10. determinism

def test_c10_determinism(tmp_path, acceptance):
    (tmp_path / "train.csv").write_text("x0,x1,y\n0.1,0.2,0.5\n0.7,0.5,-0.3\n0.4,0.9,0.1\n")
    small = {"n_sites": 2, "bond_dim": 2}
    configs = {
        "sample-paths": {"experiment": "sample-paths", "model": small, "paths": {"source": "both"}},
        "gram": {"experiment": "gram", "model": small, "grid": {"steps": 6}},
        "converge": {"experiment": "converge", "model": small, "converge": {"widths": [2, 4], "m": 1000}},
        "mc-check": {"experiment": "mc-check", "model": {**small, "boundary": "open"},
                     "mc_check": {"n_pairs": 3, "m": 5000}},
        "fit-predict": {"experiment": "fit-predict", "model": small,
                        "fit": {"data": str(tmp_path / "train.csv"), "sigma_n": 0.1, "sigma_grid": [0.5, 1.0]}},
        "sigma-sweep": {"experiment": "sigma-sweep", "model": small,
                        "fit": {"data": str(tmp_path / "train.csv"), "sigma_n": 0.1, "sigma_grid": [0.5, 1.0]}},
    }
    for name, cfg in configs.items():
        path = tmp_path / f"{name}.json"
        path.write_text(json.dumps(dict(cfg, seed=10)))
        codes, outs = [], []
        for rep in ("a", "b"):
            out = tmp_path / f"{name}-{rep}"
            codes.append(main(["--config", str(path), "--out", str(out), "--quiet", "--plot"]))
            outs.append({p.name: p.read_bytes() for p in sorted(out.iterdir())})
        ok = codes == [0, 0] and outs[0] == outs[1] and outs[0]
        acceptance(10, name, ok, f"{len(outs[0])} files byte-identical" if ok else f"exit codes {codes}")
        assert ok
