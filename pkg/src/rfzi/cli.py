"""Command-line front end: ``rfzi simulate | select | fit-zi | report``.

Each command writes into ``--out`` and leaves a ``manifest.json`` there
recording the resolved flags, input digests and tool version.
``rfzi report --rerun DIR/manifest.json --out NEW`` repeats the recorded
run; every artifact except the manifest comes out byte-identical.

Exit codes: 0 success, 2 usage, 3 data, 4 convergence.
"""

import argparse
import hashlib
import json
import logging
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, plotting, report
from .dataset import CountDataset, DataError, load_csv, write_csv, write_schema
from .forest import THREADS_ENV, default_threads, variable_importance
from .simgen import SimConfig, generate_selection_sim, generate_zi_counts
from .varselect import (SelectionConfig, SelectionError, elimination_step, exhaustive_search,
                        forward_selection, run_procedure)
from .zicount import CONVERGED, FAMILIES, ZISpec, fit_mle, gof_chisq, observed_frequencies, predict
from .zicount.gof import expected_frequencies

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_CONVERGENCE = 0, 2, 3, 4
MANIFEST = "manifest.json"

log = logging.getLogger("rfzi")


class UsageError(Exception):
    pass


def _digest(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _write_manifest(out, args, argv, inputs, started):
    flags = {k: v for k, v in sorted(vars(args).items()) if k != "func"}
    manifest = {
        "command": args.command,
        "argv": list(argv),
        "cwd": str(Path.cwd()),
        "flags": flags,
        "seed": flags.get("seed"),
        "inputs": {str(p): _digest(p) for p in inputs},
        "tool": "rfzi",
        "version": __version__,
        "timing": {"seconds": round(time.perf_counter() - started, 3)},
    }
    report.write_json(manifest, out / MANIFEST)


def _positive(v):
    n = int(v)
    if n < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {v}")
    return n


def _names(v):
    return [s.strip() for s in v.split(",") if s.strip()] if v else []


def _out_dir(args):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _schema_path(args):
    if args.schema:
        return Path(args.schema)
    return Path(args.input).with_suffix(".schema")


def _load(args, response):
    schema = _schema_path(args)
    if not schema.is_file():
        raise DataError(f"schema file not found: {schema}")
    return load_csv(args.input, schema, response=response), [Path(args.input), schema]


# ---------------------------------------------------------------- simulate

def cmd_simulate(args, out):
    if args.design == "selection":
        cfg = SimConfig(n=args.n, noise_sd=args.noise_sd, pair_correlation=args.pair_correlation,
                        seed=args.seed)
        ds = generate_selection_sim(cfg)
        write_csv(ds, out / "data.csv")
        write_schema(ds, out / "data.schema")
        print(f"wrote {ds.n_rows} rows x {ds.n_cols} covariates to {out / 'data.csv'}")
        return EXIT_OK
    # a count design: one group covariate drives both components
    gen = np.random.default_rng(args.seed)
    groups = args.groups
    x = gen.uniform(0.0, 6.0, groups)
    theta = args.theta if args.family == "zinb" else None
    cd = generate_zi_counts(args.family, (-1.3, 0.84), (0.0, -0.26), x, x, args.n // groups or 1,
                            theta=theta, seed=args.seed, x_names=["x1"], z_names=["x1"])
    path = out / "data.csv"
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("x1,y,group\n")
        for g, c in zip(cd.group_id, cd.counts):
            fh.write(f"{float(x[g])!r},{int(c)},g{g:04d}\n")
    (out / "data.schema").write_text("x1:continuous\ny:continuous\ngroup:group\n", encoding="utf-8")
    print(f"wrote {cd.n_obs} counts in {cd.n_groups} groups to {path}")
    return EXIT_OK


# ---------------------------------------------------------------- select

def _selection_config(args):
    return SelectionConfig(nfor=args.nfor, ntree=args.ntree, ntree_nested=args.ntree_nested,
                           mtry=args.mtry, seed=args.seed, exhaustive_cap=args.exhaustive_cap)


def cmd_select(args, out):
    ds, inputs = _load(args, args.response)
    if ds.response is None:
        raise DataError(f"response column {args.response!r} not found")
    cfg = _selection_config(args)
    if cfg.mtry is not None and cfg.mtry > ds.n_cols:
        raise UsageError(f"--mtry {cfg.mtry} exceeds the {ds.n_cols} covariates")
    X, y = np.ascontiguousarray(ds.values), np.ascontiguousarray(ds.response)
    threads = args.threads
    profile = variable_importance(X, y, cfg.importance_forest(), cfg.nfor, ds.names, threads)
    if args.variant == "standard":
        trace = run_procedure(ds, cfg, threads, profile=profile)
        report.write_json(trace.to_dict(), out / "trace.json")
        report.write_importance_csv(trace, out / "importance.csv")
        plotting.selection_figure(trace, out / "selection.svg")
        print(report.selection_text(trace))
        return EXIT_OK, inputs

    threshold, survivors, _ = elimination_step(profile)
    if not survivors:
        raise SelectionError("no variable has mean importance above the elimination threshold")
    selected, path, errors = forward_selection(X, y, survivors, cfg, cfg.nfor, threads)
    k = len(selected)
    result = {"variant": args.variant, "threshold_value": threshold,
              "survivors": [ds.names[j] for j in survivors],
              "forward_path": [ds.names[j] for j in path], "forward_oob": errors,
              "forward_set": [ds.names[j] for j in selected], "forward_set_oob": errors[k - 1]}
    plotting.path_figure([ds.names[j] for j in path], errors, out / "forward.svg")
    print(f"forward set ({k}): {', '.join(result['forward_set'])}  OOB error {errors[k - 1]:.6g}")
    if args.variant == "exhaustive":
        best, err, n_eval = exhaustive_search(X, y, selected, cfg, cfg.nfor, cfg.exhaustive_cap, threads)
        result.update(exhaustive_set=[ds.names[j] for j in best], exhaustive_oob=err,
                      exhaustive_models=n_eval)
        print(f"exhaustive set ({len(best)}): {', '.join(result['exhaustive_set'])}  "
              f"OOB error {err:.6g} over {n_eval} models")
    report.write_json(result, out / f"{args.variant}.json")
    return EXIT_OK, inputs


# ---------------------------------------------------------------- fit-zi

def _fit_outputs(fit, data, out):
    fam = fit.spec.family
    gof = None
    try:
        gof = gof_chisq(fit, data)
    except ValueError as exc:
        log.warning("goodness of fit unavailable for %s: %s", fam, exc)
    report.write_coefficients_csv(fit, out / f"coef_{fam}.csv")
    report.write_json(report.fit_to_dict(fit, gof), out / f"fit_{fam}.json")
    print(report.coefficient_text(fit, gof))
    print()
    return gof


def zi_figures(fits, data, out, covariate=None):
    """Observed-vs-expected frequencies and the mean-vs-covariate plot."""
    kmax = int(data.counts.max(initial=0))
    observed = observed_frequencies(data.counts, kmax)
    expected = {f.spec.family.upper(): expected_frequencies(f, data, kmax) for f in fits}
    plotting.frequency_figure(observed, expected, out / "frequencies.svg")
    names = data.x_names or data.z_names
    if not names:
        return
    covariate = covariate or names[0]
    src = data.group_x if covariate in data.x_names else data.group_z
    col = (data.x_names if covariate in data.x_names else data.z_names).index(covariate)
    sizes = data.group_sizes()
    obs_mean = np.bincount(data.group_id, weights=data.counts, minlength=data.n_groups) / sizes
    fitted = {f.spec.family.upper(): predict(f, data.group_x, data.group_z)[0] for f in fits}
    plotting.mean_figure(src[:, col], obs_mean, fitted, out / "mean.svg", xlabel=covariate)


def cmd_fit_zi(args, out):
    ds, inputs = _load(args, args.response)
    if ds.response is None:
        raise DataError(f"response column {args.response!r} not found")
    if ds.group_id is None:
        log.info("no group column; each row is its own group")
    count_cov, zero_cov = _names(args.count), _names(args.zero)
    for name in count_cov + zero_cov:
        ds.index(name)
    data = CountDataset.from_dataset(ds, count_cov, zero_cov)
    families = FAMILIES if args.family == "both" else (args.family,)
    fits = []
    for fam in families:
        fit = fit_mle(ZISpec(fam, count_cov, zero_cov), data, maxiter=args.maxiter)
        _fit_outputs(fit, data, out)
        fits.append(fit)
    zi_figures(fits, data, out)
    bad = [f.spec.family for f in fits if f.convergence != CONVERGED]
    if bad:
        print(f"not converged: {', '.join(bad)}", file=sys.stderr)
        return EXIT_CONVERGENCE, inputs
    return EXIT_OK, inputs


# ---------------------------------------------------------------- report

def cmd_report(args):
    if args.rerun:
        manifest = json.loads(Path(args.rerun).read_text(encoding="utf-8"))
        if not args.out:
            raise UsageError("--rerun needs --out")
        argv = _replace_out(manifest["argv"], Path(args.out).resolve())
        here = Path.cwd()
        os.chdir(manifest.get("cwd", here))
        try:
            for p, digest in manifest.get("inputs", {}).items():
                if not Path(p).is_file() or _digest(p) != digest:
                    raise DataError(f"input {p} changed since the recorded run")
            return main(argv)
        finally:
            os.chdir(here)
    if not args.dir:
        raise UsageError("report needs a run directory or --rerun")
    d = Path(args.dir)
    if (d / "trace.json").is_file():
        from .varselect import SelectionTrace
        trace = SelectionTrace.from_dict(json.loads((d / "trace.json").read_text(encoding="utf-8")))
        plotting.selection_figure(trace, d / "selection.svg")
        print(report.selection_text(trace))
    fits = sorted(d.glob("fit_*.json"))
    for f in fits:
        info = json.loads(f.read_text(encoding="utf-8"))
        print(f"{info['family']}: loglik {info['loglik']:.3f}, AIC {info['aic']:.3f}, "
              f"{info['convergence']}")
        if "gof" in info:
            g = info["gof"]
            print(f"  chi2 = {g['statistic']:.3f}, df = {g['df']}, p = {g['p_value']}")
    if not fits and not (d / "trace.json").is_file():
        raise DataError(f"{d} holds no trace.json or fit_*.json")
    return EXIT_OK


def _replace_out(argv, out):
    argv = list(argv)
    for k, a in enumerate(argv):
        if a == "--out" and k + 1 < len(argv):
            argv[k + 1] = str(out)
        elif a.startswith("--out="):
            argv[k] = f"--out={out}"
    return argv


# ---------------------------------------------------------------- parser

def build_parser():
    p = argparse.ArgumentParser(prog="rfzi", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"rfzi {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="write a synthetic dataset")
    s.add_argument("--design", choices=("selection", "counts"), default="selection")
    s.add_argument("--n", type=_positive, default=200, help="rows (selection) or total counts")
    s.add_argument("--noise-sd", type=float, default=0.0)
    s.add_argument("--pair-correlation", type=float, default=0.9)
    s.add_argument("--family", choices=FAMILIES, default="zinb")
    s.add_argument("--groups", type=_positive, default=40)
    s.add_argument("--theta", type=float, default=0.5)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)

    def data_args(q):
        q.add_argument("input")
        q.add_argument("--schema", help="defaults to the input path with a .schema suffix")
        q.add_argument("--response", default="y")
        q.add_argument("--out", required=True)

    s = sub.add_parser("select", help="random-forest variable selection")
    data_args(s)
    s.add_argument("--variant", choices=("standard", "forward", "exhaustive"), default="standard")
    s.add_argument("--nfor", type=_positive, default=50)
    s.add_argument("--ntree", type=_positive, default=500)
    s.add_argument("--ntree-nested", type=_positive, default=500)
    s.add_argument("--mtry", type=_positive)
    s.add_argument("--exhaustive-cap", type=_positive, default=15)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--threads", type=_positive, default=None,
                   help=f"worker threads (default ${THREADS_ENV} or 1)")

    s = sub.add_parser("fit-zi", help="zero-inflated count regression")
    data_args(s)
    s.add_argument("--family", choices=FAMILIES + ("both",), default="both")
    s.add_argument("--count", default="", help="comma-separated count covariates")
    s.add_argument("--zero", default="", help="comma-separated zero covariates")
    s.add_argument("--maxiter", type=_positive, default=500)

    s = sub.add_parser("report", help="re-render a run directory or repeat a run")
    s.add_argument("dir", nargs="?")
    s.add_argument("--rerun", metavar="MANIFEST")
    s.add_argument("--out")
    return p


def _run(args, argv):
    started = time.perf_counter()
    if args.command == "report":
        return cmd_report(args)
    if getattr(args, "threads", "unset") is None:
        args.threads = default_threads()
    out = _out_dir(args)
    if args.command == "simulate":
        if not -1 < args.pair_correlation < 1:
            raise UsageError("--pair-correlation must lie in (-1, 1)")
        code, inputs = cmd_simulate(args, out), []
    elif args.command == "select":
        code, inputs = cmd_select(args, out)
    else:
        code, inputs = cmd_fit_zi(args, out)
    _write_manifest(out, args, argv, inputs, started)
    return code


def main(argv=None):
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return _run(args, argv)
    except UsageError as exc:
        print(f"rfzi: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, SelectionError, KeyError, FileNotFoundError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"rfzi: data error: {msg}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
