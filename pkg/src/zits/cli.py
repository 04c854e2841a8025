"""Command-line driver: simulate, fit, detect, impute, eval, dist-table,
report, and replay over the documented text formats.

Exit codes: 0 success, 2 usage error, 3 data error, 4 numeric failure.
"""

from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path

import numpy as np

from . import detect_impute, io, plots, zip_dist
from .basis import KINDS
from .fitting import FitConfig, fit_pipeline
from .init_schemes import SCHEMES
from .model_core import ModelParams, build_links, lambda_p_of
from .sim_eval import (SimConfig, ari, detection_metrics, false_zero_cells,
                       kmeans, pca_project, rel_error, simulate)
from .tensor_ops import CountTensor, pair_indices

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4

BASIS_CODES = {name: float(code) for code, name in enumerate(KINDS)}


class NumericFailure(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# params bundle round trip
# ---------------------------------------------------------------------------

def write_params(path, m: ModelParams) -> None:
    io.write_bundle(path, {
        "h": m.basis.h,
        "gamma": m.gamma,
        "w_beta": m.w_beta,
        "w_xi": m.w_xi,
        "meta": np.array([[float(m.n_blocks), BASIS_CODES[m.basis.kind]]]),
    })


def read_params(path) -> ModelParams:
    from .basis import BasisMatrix
    b = io.read_bundle(path)
    try:
        n_blocks, code = int(b["meta"][0, 0]), int(b["meta"][0, 1])
        basis = BasisMatrix(KINDS[code], b["h"])
        return ModelParams(basis, b["gamma"], b["w_beta"], b["w_xi"], n_blocks)
    except (KeyError, IndexError, ValueError) as exc:
        raise io.DataFormatError(f"{path}: not a params bundle ({exc})") from exc


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def _manifest_config(args) -> dict:
    cfg = {k: v for k, v in vars(args).items() if k != "func"}
    return {k: (str(v) if isinstance(v, Path) else v) for k, v in cfg.items()}


def _finish(args, argv, t0, inputs, outputs, manifest_path):
    io.write_manifest(manifest_path, args.subcommand, _manifest_config(args),
                      getattr(args, "seed", None), inputs, outputs,
                      time.perf_counter() - t0, argv)
    return EXIT_OK


def cmd_simulate(args, argv):
    t0 = time.perf_counter()
    outputs = []
    for rep in range(args.reps):
        suffix = "" if args.reps == 1 else f"_rep{rep}"
        prefix = f"{args.out_prefix}{suffix}"
        cfg = SimConfig(args.N, args.K, args.L, args.R,
                        args.mu_alpha, args.mu_beta, args.mu_xi,
                        args.sigma_alpha, args.sigma_beta, args.sigma_xi,
                        args.seed + rep)
        data, truth = simulate(cfg)
        n, k = cfg.n_loci, cfg.n_cells
        io.write_tensor(f"{prefix}.tensor.txt", data)
        io.write_bundle(f"{prefix}.truth.txt", {
            "alpha": truth.alpha,
            "beta": truth.beta,
            "xi": truth.xi,
            "labels": truth.labels.reshape(-1, 1).astype(float),
            "lam": truth.lam.reshape(n * n, k),
            "p": truth.p.reshape(n * n, k),
            "b": truth.b.reshape(n * n, k).astype(float),
            "latent": truth.latent.reshape(n * n, k).astype(float),
        })
        io.write_keyvalues(f"{prefix}.simconfig.txt", {
            "N": cfg.n_loci, "K": cfg.n_cells, "L": cfg.rank,
            "R": cfg.n_clusters, "mu_alpha": cfg.mu_alpha,
            "mu_beta": cfg.mu_beta, "mu_xi": cfg.mu_xi,
            "sigma_alpha": cfg.widths()[0], "sigma_beta": cfg.widths()[1],
            "sigma_xi": cfg.widths()[2], "seed": cfg.seed,
        })
        outputs += [f"{prefix}.tensor.txt", f"{prefix}.truth.txt",
                    f"{prefix}.simconfig.txt"]
    return _finish(args, argv, t0, [], outputs, f"{args.out_prefix}.manifest.json")


def _binarize(data: CountTensor) -> CountTensor:
    return CountTensor(data.n_loci, data.n_cells, data.i, data.j, data.k,
                       np.ones_like(data.c))


def cmd_fit(args, argv):
    t0 = time.perf_counter()
    data = io.read_tensor(args.data, args.ingest_1based)
    if args.model == "binary" and args.binarize:
        data = _binarize(data)
    cfg = FitConfig(max_iters=args.max_iters, rel_tol=args.rel_tol,
                    beta_max=args.beta_max, xi_max=args.xi_max,
                    seed=args.seed, exclude_diag_band=args.exclude_diag_band)
    fitted, clusters, report = fit_pipeline(
        data, args.R, args.Lhat, args.Q, args.init, cfg,
        model=args.model, basis_kind=args.basis)
    if not all(np.isfinite(t) for t in report.nll_trace):
        raise NumericFailure("non-finite NLL encountered during fitting")
    prefix = args.out_prefix
    write_params(f"{prefix}.params.txt", fitted)
    io.write_bundle(f"{prefix}.clusters.txt", {
        "z": clusters.z,
        "beta_bar": clusters.beta_bar,
        "xi_bar": clusters.xi_bar,
        "objective": np.array([[clusters.objective]]),
    })
    lines = [f"# converged = {report.converged}",
             f"# stalled = {report.stalled}",
             f"# iterations = {report.iterations}",
             "iter,nll,max_rel_change"]
    lines.append(f"0,{report.nll_trace[0]:.17g},")
    for it, (nll_v, rc) in enumerate(zip(report.nll_trace[1:],
                                         report.rel_change_trace), start=1):
        lines.append(f"{it},{nll_v:.17g},{rc:.17g}")
    Path(f"{prefix}.report.csv").write_text("\n".join(lines) + "\n")
    outputs = [f"{prefix}.params.txt", f"{prefix}.clusters.txt", f"{prefix}.report.csv"]
    return _finish(args, argv, t0, [str(args.data)], outputs,
                   f"{prefix}.manifest.json")


def cmd_detect(args, argv):
    t0 = time.perf_counter()
    data = io.read_tensor(args.data, args.ingest_1based)
    fitted = read_params(args.params)
    res = detect_impute.detect(data, fitted, args.exclude_diag_band)
    prefix = args.out_prefix
    io.write_flags(f"{prefix}.flags.txt", data.n_loci, data.n_cells, res.flags)
    io.write_keyvalues(f"{prefix}.detect.txt", {
        "zeros_scanned": res.zeros_scanned,
        "zeros_flagged": res.zeros_flagged,
        "mean_posterior": float(res.posterior.mean()) if res.posterior.size else 0.0,
    })
    return _finish(args, argv, t0, [str(args.data), str(args.params)],
                   [f"{prefix}.flags.txt", f"{prefix}.detect.txt"],
                   f"{prefix}.manifest.json")


def cmd_impute(args, argv):
    t0 = time.perf_counter()
    data = io.read_tensor(args.data, args.ingest_1based)
    fitted = read_params(args.params)
    flags = io.read_flags(args.flags)
    dense = detect_impute.impute(data, fitted, flags, mode=args.mode)
    prefix = args.out_prefix
    io.write_rtensor(f"{prefix}.imputed.txt", dense)
    return _finish(args, argv, t0,
                   [str(args.data), str(args.params), str(args.flags)],
                   [f"{prefix}.imputed.txt"], f"{prefix}.manifest.json")


def cmd_eval(args, argv):
    t0 = time.perf_counter()
    data = io.read_tensor(args.data, args.ingest_1based)
    truth = io.read_bundle(args.truth)
    fitted = read_params(args.params)
    n, k = data.n_loci, data.n_cells
    lam_true = truth["lam"].reshape(n, n, k)
    p_true = truth["p"].reshape(n, n, k)
    labels_true = truth["labels"].ravel().astype(int)
    lam_hat, p_hat = lambda_p_of(build_links(fitted))

    metrics: dict = {
        "re_lambda": rel_error(lam_hat, lam_true),
        "re_p": rel_error(p_hat, p_true),
    }

    if args.flags is not None:
        flags = io.read_flags(args.flags)
    else:
        flags = detect_impute.detect(data, fitted, args.exclude_diag_band).flags
    iu, ju = pair_indices(n, args.exclude_diag_band)
    c_u = data.upper_counts(iu, ju)
    pu, ku = np.nonzero(c_u == 0)
    zeros = np.column_stack([iu[pu], ju[pu], ku])
    b = truth["b"].reshape(n, n, k)
    latent = truth["latent"].reshape(n, n, k)
    pos_mask = (b[iu[pu], ju[pu], ku] == 0) & (latent[iu[pu], ju[pu], ku] > 0)
    positives = zeros[pos_mask]
    dm = detection_metrics(flags, positives, zeros)
    metrics.update(accuracy=dm.accuracy, precision=dm.precision, recall=dm.recall)

    r = args.R if args.R is not None else int(labels_true.max()) + 1
    feats_raw = pca_project(c_u.T)
    metrics["ari_raw"] = ari(kmeans(feats_raw, r, args.seed), labels_true)
    if args.imputed is not None:
        imp = io.read_rtensor_dense(args.imputed)
        feats_imp = pca_project(imp[iu, ju].T)
        metrics["ari_imputed"] = ari(kmeans(feats_imp, r, args.seed), labels_true)
    metrics["ari_beta"] = ari(kmeans(fitted.w_beta, r, args.seed), labels_true)
    metrics["ari_xi"] = ari(kmeans(fitted.w_xi, r, args.seed), labels_true)

    out = f"{args.out_prefix}.metrics.txt"
    io.write_keyvalues(out, metrics)
    inputs = [str(args.data), str(args.truth), str(args.params)]
    if args.imputed:
        inputs.append(str(args.imputed))
    return _finish(args, argv, t0, inputs, [out], f"{args.out_prefix}.manifest.json")


def cmd_dist_table(args, argv):
    t0 = time.perf_counter()
    params = zip_dist.ZipParams(args.p, args.lam)
    cs = np.arange(args.max_count + 1)
    pmf = zip_dist.zip_pmf(params, cs)
    lines = [f"{c} {v:.17g}" for c, v in zip(cs, pmf)] + [""]
    lines += [f"mean = {zip_dist.zip_mean(params):.17g}",
              f"var = {zip_dist.zip_var(params):.17g}",
              f"psi1 = {zip_dist.orlicz_psi1_zip(params):.17g}",
              f"bayes_flag = {zip_dist.bayes_flag(args.p, args.lam)}",
              f"posterior_false_zero = {zip_dist.posterior_false_zero(args.p, args.lam):.17g}"]
    out = f"{args.out_prefix}.disttable.txt"
    Path(out).write_text("\n".join(lines) + "\n")
    return _finish(args, argv, t0, [], [out], f"{args.out_prefix}.manifest.json")


def cmd_report(args, argv):
    t0 = time.perf_counter()
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    outputs = []
    summary: dict = {}
    if args.fit_report:
        nll, rel = [], []
        for ln in Path(args.fit_report).read_text().splitlines():
            if ln.startswith("#"):
                key, _, val = ln.lstrip("# ").partition(" = ")
                summary[f"fit_{key}"] = val
                continue
            parts = ln.split(",")
            if parts[0] == "iter" or len(parts) < 2:
                continue
            nll.append(float(parts[1]))
            if len(parts) > 2 and parts[2]:
                rel.append(float(parts[2]))
        if not nll:
            raise io.DataFormatError(f"{args.fit_report}: no trace rows")
        outputs.append(plots.save_nll_trace(nll, rel, out_dir / "nll_trace.png"))
        summary["final_nll"] = f"{nll[-1]:.17g}"
    if args.metrics:
        kv = {k: float(v) for k, v in io.read_keyvalues(args.metrics).items()}
        outputs.append(plots.save_metrics_bars(kv, out_dir / "metrics.png"))
        summary.update({k: f"{v:.17g}" for k, v in kv.items()})
    if not outputs:
        raise ValueError("report needs --fit-report and/or --metrics")
    summary_path = out_dir / "summary.csv"
    summary_path.write_text("key,value\n" + "".join(
        f"{k},{v}\n" for k, v in summary.items()))
    outputs.append(str(summary_path))
    inputs = [str(p) for p in (args.fit_report, args.metrics) if p]
    return _finish(args, argv, t0, inputs, outputs,
                   str(out_dir / "report.manifest.json"))


def cmd_replay(args, argv):
    manifest = io.read_manifest(args.manifest)
    recorded = manifest.get("argv")
    if not recorded or recorded[0] == "replay":
        raise io.DataFormatError(f"{args.manifest}: no replayable argv")
    return main(recorded)


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    top = argparse.ArgumentParser(prog="zits",
                                  description="zero-inflated tensor toolkit")
    sub = top.add_subparsers(dest="subcommand", required=True)

    def add_common(p):
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out-prefix", required=True)

    p = sub.add_parser("simulate", help="generate a synthetic dataset")
    p.add_argument("--N", type=int, required=True)
    p.add_argument("--K", type=int, required=True)
    p.add_argument("--L", type=int, required=True)
    p.add_argument("--R", type=int, default=1)
    p.add_argument("--mu-alpha", type=float, default=0.5)
    p.add_argument("--mu-beta", type=float, default=5.0)
    p.add_argument("--mu-xi", type=float, default=1.0)
    p.add_argument("--sigma-alpha", type=float, default=None)
    p.add_argument("--sigma-beta", type=float, default=None)
    p.add_argument("--sigma-xi", type=float, default=None)
    p.add_argument("--reps", type=int, default=1)
    add_common(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fit", help="fit the model to a count tensor")
    p.add_argument("--data", required=True)
    p.add_argument("--Lhat", type=int, required=True)
    p.add_argument("--R", type=int, default=1)
    p.add_argument("--Q", type=int, default=5)
    p.add_argument("--basis", choices=list(KINDS), default="cubic_bspline")
    p.add_argument("--init", choices=list(SCHEMES), default="eigenb")
    p.add_argument("--model", choices=["zip", "binary"], default="zip")
    p.add_argument("--binarize", action="store_true")
    p.add_argument("--max-iters", type=int, default=500)
    p.add_argument("--rel-tol", type=float, default=1e-4)
    p.add_argument("--beta-max", type=float, default=50.0)
    p.add_argument("--xi-max", type=float, default=50.0)
    p.add_argument("--exclude-diag-band", type=int, default=0)
    p.add_argument("--ingest-1based", action="store_true")
    add_common(p)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("detect", help="flag false zeros under a fitted model")
    p.add_argument("--data", required=True)
    p.add_argument("--params", required=True)
    p.add_argument("--exclude-diag-band", type=int, default=0)
    p.add_argument("--ingest-1based", action="store_true")
    add_common(p)
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("impute", help="impute flagged zeros")
    p.add_argument("--data", required=True)
    p.add_argument("--params", required=True)
    p.add_argument("--flags", required=True)
    p.add_argument("--mode", choices=["intensity", "expected"], default="expected")
    p.add_argument("--ingest-1based", action="store_true")
    add_common(p)
    p.set_defaults(func=cmd_impute)

    p = sub.add_parser("eval", help="evaluate a fit against simulation truth")
    p.add_argument("--data", required=True)
    p.add_argument("--truth", required=True)
    p.add_argument("--params", required=True)
    p.add_argument("--imputed", default=None)
    p.add_argument("--flags", default=None)
    p.add_argument("--R", type=int, default=None)
    p.add_argument("--exclude-diag-band", type=int, default=0)
    p.add_argument("--ingest-1based", action="store_true")
    add_common(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("dist-table", help="tabulate one ZIP distribution")
    p.add_argument("--p", type=float, required=True)
    p.add_argument("--lam", type=float, required=True)
    p.add_argument("--max-count", type=int, default=20)
    add_common(p)
    p.set_defaults(func=cmd_dist_table)

    p = sub.add_parser("report", help="render figures and a delimited summary")
    p.add_argument("--fit-report", default=None)
    p.add_argument("--metrics", default=None)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("replay", help="re-run the command recorded in a manifest")
    p.add_argument("--manifest", required=True)
    p.set_defaults(func=cmd_replay)

    return top


def main(argv=None) -> int:
    if argv is None:
        argv = sys.argv[1:]
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args, list(argv))
    except NumericFailure as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except np.linalg.LinAlgError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (io.DataFormatError, FileNotFoundError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (ValueError, RuntimeError) as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
