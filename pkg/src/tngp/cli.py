"""``tngp`` command line: run one configured experiment and write its report.

Exit codes: 0 success, 2 configuration or input error, 3 statistical
harness failure, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys

import numpy as np

from . import gp, io, kernels, stats
from .config import grid_points, load_config
from .errors import ConfigError, StatisticsError, TngpError
from .network import sample_responses
from .priors import Seed

log = logging.getLogger("tngp")


def _comment(cfg):
    return f"tngp experiment={cfg.experiment} config_sha256={cfg.digest()} seed={cfg.seed}"


def _out(out_dir, name):
    return os.path.join(out_dir, name)


def cmd_sample_paths(cfg, out_dir, plot=False):
    model = cfg.build_model()
    points, coords, names = grid_points(cfg, model)
    seed = Seed(cfg.seed)
    paths = []
    if cfg.paths.sigma_family:
        for p in gp.sample_sigma_family(model, points, cfg.paths.sigma_family, seed.child("paths")):
            paths.append(("prior_forward", p.label["sigma_A"], p.values))
    else:
        sigma = model.prior.tensor_std(model.spec)
        if cfg.paths.source in ("prior_forward", "both"):
            for p in gp.sample_paths_prior(model, points, cfg.paths.count, seed.child("paths")):
                paths.append(("prior_forward", sigma, p.values))
        if cfg.paths.source in ("gp", "both"):
            kernel = cfg.build_kernel(model)
            for p in gp.sample_paths_gp(kernel, points, cfg.paths.count, seed.child("gp")):
                paths.append(("gp_cholesky", sigma, p.values))
    rows = []
    for pid, (source, sigma, values) in enumerate(paths):
        for c, v in zip(coords, values):
            rows.append([pid, source, sigma, *c, v])
    header = ["path_id", "source", "sigma_A", *names, "value"]
    csv_path = _out(out_dir, "paths.csv")
    io.write_csv(csv_path, _comment(cfg), header, rows)
    if plot:
        from .plotting import plot_paths

        labels = [f"{s} sigma_A={sig:.3g}" if cfg.paths.sigma_family else f"{s} #{i}"
                  for i, (s, sig, _) in enumerate(paths)]
        plot_paths(_out(out_dir, "paths.png"), coords, [p[2] for p in paths], labels,
                   title=f"{cfg.model.kind} n={cfg.model.n_sites} bond={cfg.model.bond_dim}")
    return [csv_path]


def cmd_gram(cfg, out_dir, plot=False):
    model = cfg.build_model()
    points, coords, names = grid_points(cfg, model)
    gram = kernels.build_gram(cfg.build_kernel(model), points)
    header = [str(i) for i in range(gram.size)]
    written = [_out(out_dir, "gram.csv"), _out(out_dir, "gram_points.csv")]
    io.write_csv(written[0], _comment(cfg) + f" jitter={io.fmt(gram.jitter)}", header,
                 gram.entries.tolist())
    io.write_csv(written[1], _comment(cfg),
                 ["point_id", *names, *[f"x{j}" for j in range(model.input_length)]],
                 [[i, *c, *p] for i, (c, p) in enumerate(zip(coords, points))])
    if plot:
        from .plotting import plot_gram

        plot_gram(_out(out_dir, "gram.png"), gram.entries)
    return written


def cmd_converge(cfg, out_dir, plot=False):
    model = cfg.build_model()
    c = cfg.converge
    points = c.points or [[0.5] * model.input_length,
                          [0.2] * model.input_length,
                          [0.8] * model.input_length]
    report = stats.width_sweep(model, c.axis, c.widths, points, c.m, Seed(cfg.seed).child("converge"))
    payload = report.to_dict()
    payload["config_sha256"] = cfg.digest()
    payload["ks_decreased"] = report.ks_values[-1] < report.ks_values[0]
    json_path, csv_path = _out(out_dir, "report.json"), _out(out_dir, "report.csv")
    io.write_json(json_path, payload)
    header = ["width", "samples", "mean", "std", "skewness", "excess_kurtosis", "ks",
              "overflow_fraction", "flagged"]
    rows = [[r.width, r.samples, r.mean, r.std, r.skewness, r.excess_kurtosis, r.ks,
             r.overflow_fraction, int(r.flagged)] for r in report.records]
    io.write_csv(csv_path, _comment(cfg), header, rows)
    if plot:
        from .plotting import plot_ks

        plot_ks(_out(out_dir, "report.png"), c.widths, report.ks_values, c.axis)
    return [json_path, csv_path]


def _mc_pairs(cfg, model):
    if cfg.mc_check.pairs:
        return [(np.asarray(a, float), np.asarray(b, float)) for a, b in cfg.mc_check.pairs]
    rng = Seed(cfg.seed).child("mc_pairs").generator()
    u = rng.uniform(0.0, 1.0, size=(cfg.mc_check.n_pairs, 2, model.input_length))
    return [(p[0], p[1]) for p in u]


def mc_check(cfg):
    """Compare Monte Carlo covariances with both closed-form prefactors."""
    model = cfg.build_model()
    pairs = _mc_pairs(cfg, model)
    flat = [p for pair in pairs for p in pair]
    values = sample_responses(model, flat, cfg.mc_check.m, Seed(cfg.seed).child("mc_check"))
    rows, per_conv = [], {}
    for conv in kernels.CONVENTIONS:
        per_conv[conv] = {"max_abs_z": 0.0, "pass": True}
    for k, (x, xp) in enumerate(pairs):
        est = kernels.mc_summary(values[:, 2 * k] * values[:, 2 * k + 1], cfg.mc_check.m)
        row = {"x": x, "xp": xp, "mc": est.value, "std_error": est.std_error,
               "rejected": est.rejected, "analytic": {}, "z": {}}
        for conv in kernels.CONVENTIONS:
            kern = kernels.KernelFunction(model, "analytic", prefactor_convention=conv)
            ref = kern.covariance(x, xp)
            z = est.z_score(ref)
            row["analytic"][conv], row["z"][conv] = ref, z
            per_conv[conv]["max_abs_z"] = max(per_conv[conv]["max_abs_z"], abs(z))
            per_conv[conv]["pass"] &= abs(z) < 4.0
        rows.append(row)
    matching = [c for c in kernels.CONVENTIONS if per_conv[c]["pass"]]
    return {
        "model_kind": model.kind,
        "boundary": model.spec.boundary,
        "n_sites": model.spec.n_sites,
        "bond_dim": model.spec.bond_dim,
        "samples": cfg.mc_check.m,
        "threshold_z": 4.0,
        "pairs": rows,
        "conventions": per_conv,
        "matching": matching,
        "default_convention": kernels.default_convention(model.spec.boundary),
        "verdict": "pass" if len(matching) == 1 else "fail",
        "config_sha256": cfg.digest(),
        "seed": cfg.seed,
    }


def cmd_mc_check(cfg, out_dir, plot=False):
    verdict = mc_check(cfg)
    path = _out(out_dir, "mc_check.json")
    io.write_json(path, verdict)
    if verdict["verdict"] != "pass":
        raise StatisticsError(
            f"Monte Carlo check matched conventions {verdict['matching']} (expected exactly one)"
        )
    return [path]


def _fit_inputs(cfg, model):
    points, y = io.read_training_data(cfg.fit.data, model.input_length)
    for p in points:
        model.point(p)
    return points, y


def _sweep_rows(table):
    return [[s, ll] for s, ll in table]


def _on_grid_line(cfg, points, y):
    """Training points lying on the 1-D prediction line, as ``(t, y)``."""
    g = cfg.grid
    t, kept = [], []
    for p, target in zip(points, y):
        if g.mode == "diagonal":
            on_line = np.allclose(p, p[0])
            coord = p[0]
        else:
            rest = np.delete(p, g.site)
            on_line = np.allclose(rest, g.fixed)
            coord = p[g.site]
        if on_line:
            t.append(coord)
            kept.append(target)
    return t, kept


def cmd_fit_predict(cfg, out_dir, plot=False):
    model = cfg.build_model()
    kernel = cfg.build_kernel(model)
    points, y = _fit_inputs(cfg, model)
    written = []
    if cfg.fit.sigma_grid:
        best, table = gp.grid_search_sigma(kernel, points, y, cfg.fit.sigma_n, cfg.fit.sigma_grid)
        kernel = kernel.with_prior(sigma_A=best, scaling="fixed")
        path = _out(out_dir, "sigma_sweep.csv")
        io.write_csv(path, _comment(cfg), ["sigma_A", "log_marginal_likelihood"], _sweep_rows(table))
        written.append(path)
    post = gp.fit(kernel, points, y, cfg.fit.sigma_n)
    grid, coords, names = grid_points(cfg, model)
    mean, cov = gp.predict(post, grid)
    std = np.sqrt(np.clip(np.diag(cov), 0.0, None))
    rows = [[i, *p, m, s] for i, (p, m, s) in enumerate(zip(grid, mean, std))]
    pred_path = _out(out_dir, "predictions.csv")
    io.write_csv(pred_path, _comment(cfg),
                 ["point_id", *[f"x{j}" for j in range(model.input_length)], "mean", "std"], rows)
    terms = gp.likelihood_terms(post)
    ll_path = _out(out_dir, "likelihood.json")
    io.write_json(ll_path, {
        "data_fit": terms.data_fit,
        "complexity": terms.complexity,
        "constant": terms.constant,
        "log_marginal_likelihood": terms.total,
        "sigma_A": kernel.model.prior.tensor_std(kernel.model.spec),
        "sigma_n": cfg.fit.sigma_n,
        "jitter": post.jitter,
        "n_train": len(points),
        "config_sha256": cfg.digest(),
        "seed": cfg.seed,
    })
    written += [pred_path, ll_path]
    if plot and coords.shape[1] == 1:
        from .plotting import plot_prediction

        train_t, train_y = _on_grid_line(cfg, points, y)
        plot_prediction(_out(out_dir, "predictions.png"), coords, mean, std, train_t, train_y)
    return written


def cmd_sigma_sweep(cfg, out_dir, plot=False):
    model = cfg.build_model()
    kernel = cfg.build_kernel(model)
    points, y = _fit_inputs(cfg, model)
    best, table = gp.grid_search_sigma(kernel, points, y, cfg.fit.sigma_n, cfg.fit.sigma_grid)
    csv_path, json_path = _out(out_dir, "sigma_sweep.csv"), _out(out_dir, "sigma_sweep.json")
    io.write_csv(csv_path, _comment(cfg), ["sigma_A", "log_marginal_likelihood"], _sweep_rows(table))
    io.write_json(json_path, {"best_sigma_A": best, "table": table,
                              "config_sha256": cfg.digest(), "seed": cfg.seed})
    return [csv_path, json_path]


COMMANDS = {
    "sample-paths": cmd_sample_paths,
    "gram": cmd_gram,
    "converge": cmd_converge,
    "mc-check": cmd_mc_check,
    "fit-predict": cmd_fit_predict,
    "sigma-sweep": cmd_sigma_sweep,
}


def _u64(text):
    value = int(text)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return value


def build_parser():
    parser = argparse.ArgumentParser(
        prog="tngp",
        description="Sample, fit and test the Gaussian processes induced by wide tensor networks.",
    )
    parser.add_argument("--config", required=True, help="JSON run configuration")
    parser.add_argument("--seed", type=_u64, help="override the config seed")
    parser.add_argument("--out", help="output directory (default: config 'output' or ./tngp-out)")
    parser.add_argument("--quiet", action="store_true", help="only report errors")
    parser.add_argument("--plot", action="store_true", help="also render PNG figures")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(levelname)s: %(message)s")
    try:
        cfg = load_config(args.config, seed=args.seed)
        out_dir = args.out or cfg.output or "tngp-out"
        command = COMMANDS[cfg.experiment]
        try:
            written = command(cfg, out_dir, plot=args.plot)
        except (ConfigError, StatisticsError):
            raise
        except TngpError as exc:
            if cfg.experiment == "converge":
                exc.exit_code = 3
            raise
    except TngpError as exc:
        log.error("%s", exc)
        return exc.exit_code
    except OSError as exc:
        log.error("%s", exc)
        return 2
    for path in written:
        log.info("wrote %s", path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
