"""Command-line driver: simulation, fitting, validation, and reporting.

Exit codes: 0 success, 2 bad config/usage, 3 generation failure, 4 malformed
data, 5 MCMC divergence, 6 oracle-suite failure, 7 chain/truth mismatch.
"""

import argparse
import dataclasses
import logging
import os
import shutil
import sys
from pathlib import Path

import numpy as np

from . import config as cfgmod
from . import estimators, io, spd
from . import validate as valmod
from .errors import (
    DegenerateFA,
    CholeskyFailure,
    InvalidParams,
    MalformedData,
    MissingTruth,
    NonFiniteLikelihood,
    TensorFieldError,
)
from .gp import GridDomain
from .inference import fit as fit_model
from .regression import generate_dataset

log = logging.getLogger("tensorfield.cli")

EXIT_CONFIG = 2
EXIT_GENERATION = 3
EXIT_DATA = 4
EXIT_DIVERGENCE = 5
EXIT_ORACLE = 6
EXIT_MISMATCH = 7


def _setup_logging():
    level = os.environ.get("TENSORFIELD_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")


def _apply_threads(threads):
    if threads is None:
        return
    try:
        import numba

        numba.set_num_threads(max(1, min(int(threads), numba.config.NUMBA_NUM_THREADS)))
    except (ImportError, ValueError):
        pass


def _overrides_from(args, keys):
    out = {}
    for attr, key in keys.items():
        val = getattr(args, attr, None)
        if val is not None:
            out[key] = val
    return out


def _load_config(args, extra_keys):
    overrides = _overrides_from(args, extra_keys)
    return cfgmod.load_config(getattr(args, "config", None), overrides)


def _fail(code, message):
    print(f"error: {message}", file=sys.stderr)
    return code


def _outdir(args, default):
    out = Path(args.out if args.out else default)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _finish(out, command, cfg, seed, written):
    manifest = cfgmod.build_manifest(command, cfg, seed, [str(p) for p in written])
    cfgmod.write_manifest(out / "manifest.json", manifest, cfg)
    return manifest


def _read_run_dir(path):
    """Resolve a data/fit directory: returns (dir, manifest payload or None)."""
    p = Path(path)
    if p.is_file():
        p = p.parent
    manifest = None
    mpath = p / "manifest.json"
    if mpath.exists():
        import json

        with open(mpath) as f:
            manifest = json.load(f)
    return p, manifest


def cmd_simulate(args):
    try:
        cfg = _load_config(
            args,
            {"seed": "seed", "grid": "grid", "subjects": "subjects", "model": "model"},
        )
    except InvalidParams as exc:
        return _fail(EXIT_CONFIG, f"config: {exc}")
    out = _outdir(args, "simulate_out")
    try:
        scenario = cfgmod.build_scenario(cfg)
        dataset = generate_dataset(scenario, cfg["model"], cfg["seed"])
    except (TensorFieldError, np.linalg.LinAlgError) as exc:
        return _fail(EXIT_GENERATION, f"generation failed: {exc}")
    io.write_tensor_csv(out / "data.csv", dataset.tensors, scenario.domain)
    io.write_design_csv(out / "design.csv", dataset.design)
    io.write_truth_json(out / "truth.json", dataset)
    _finish(out, "simulate", cfg, cfg["seed"], ["data.csv", "design.csv", "truth.json"])
    n_rows = dataset.tensors.shape[0] * dataset.tensors.shape[1]
    print(f"simulate: wrote {n_rows} tensor rows ({cfg['model']}) to {out}")
    return 0


def _load_fit_inputs(args, cfg):
    data_dir, _ = _read_run_dir(args.data)
    data_path = data_dir / "data.csv" if (data_dir / "data.csv").exists() else Path(args.data)
    tensors, domain = io.read_tensor_csv(data_path, spacing=cfg["spacing"])
    design_path = data_dir / "design.csv"
    if not design_path.exists():
        raise MalformedData(f"no design.csv next to {data_path}")
    design = io.read_design_csv(design_path)
    if design.shape[0] != tensors.shape[0]:
        raise MalformedData(
            f"design has {design.shape[0]} subjects, data has {tensors.shape[0]}"
        )
    ok = spd.is_spd(tensors)
    if not np.all(ok):
        subj, vox = np.argwhere(~ok)[0]
        raise MalformedData(
            f"tensor not positive definite at subject {subj} voxel {vox}",
            subject=int(subj),
            voxel=int(vox),
        )
    # manifest must record the data's real geometry, not the config default
    cfg["grid"] = f"{domain.width}x{domain.height}"
    cfg["subjects"] = int(design.shape[0])
    return tensors, design, domain, data_dir


def cmd_fit(args):
    try:
        cfg = _load_config(
            args,
            {"seed": "mcmc.seed", "q": "vecchia.q", "iters": "mcmc.iters", "burnin": "mcmc.burnin"},
        )
        spec = cfgmod.build_model_spec(cfg)
    except InvalidParams as exc:
        return _fail(EXIT_CONFIG, f"config: {exc}")
    _apply_threads(args.threads)
    try:
        tensors, design, domain, data_dir = _load_fit_inputs(args, cfg)
    except MalformedData as exc:
        return _fail(EXIT_DATA, f"malformed data: {exc}")
    except OSError as exc:
        return _fail(EXIT_DATA, f"cannot read data: {exc}")
    out = _outdir(args, "fit_out")
    spec = dataclasses.replace(spec, progress_every=max(1, spec.iters // 20))
    log.info("fitting %d subjects on %dx%d grid, q=%d, %d iterations",
             design.shape[0], domain.width, domain.height, spec.q, spec.iters)
    try:
        chain = fit_model(tensors, design, domain, spec)
    except (NonFiniteLikelihood, CholeskyFailure) as exc:
        return _fail(EXIT_DIVERGENCE, f"chain diverged: {exc}")
    except TensorFieldError as exc:
        return _fail(EXIT_DATA, f"malformed data: {exc}")
    io.write_chain_csv(out / "chain.csv", chain)
    io.write_summary_csv(out / "summary.csv", chain)
    shutil.copyfile(data_dir / "design.csv", out / "design.csv")
    written = ["chain.csv", "summary.csv", "design.csv"]
    if (data_dir / "truth.json").exists():
        shutil.copyfile(data_dir / "truth.json", out / "truth.json")
        written.append("truth.json")
    io.write_json(
        out / "fit_stats.json",
        {
            "accept_rates": chain.accept_rates,
            "n_stored": chain.n_stored,
            "final_log_post": float(chain.log_post[-1]),
        },
    )
    written.append("fit_stats.json")
    _finish(out, "fit", cfg, spec.seed, written)
    rates = ", ".join(f"{k}={v:.2f}" for k, v in chain.accept_rates.items())
    print(f"fit: stored {chain.n_stored} draws to {out} (accept: {rates})")
    return 0


def _load_chain_dir(path, spacing_default=1.0):
    run_dir, manifest = _read_run_dir(path)
    chain_path = run_dir / "chain.csv"
    if not chain_path.exists():
        raise MalformedData(f"no chain.csv in {run_dir}")
    design_path = run_dir / "design.csv"
    if not design_path.exists():
        raise MalformedData(f"no design.csv in {run_dir}")
    design = io.read_design_csv(design_path)
    if manifest is None or "config" not in manifest:
        raise MalformedData(f"no manifest.json with config in {run_dir}")
    cfg = dict(cfgmod.DEFAULTS)
    cfg.update(manifest["config"])
    w, h = cfgmod.parse_grid(cfg["grid"])
    domain = GridDomain(w, h, float(cfg.get("spacing", spacing_default)))
    seed = manifest.get("seed", -1)
    chain = io.read_chain_csv(chain_path, domain, design=design, seed=seed)
    return run_dir, chain, design, domain, cfg


def cmd_estimate_fa(args):
    try:
        run_dir, chain, design, domain, cfg = _load_chain_dir(args.chain)
    except MalformedData as exc:
        return _fail(EXIT_DATA, f"malformed input: {exc}")
    drug = args.drug_column if args.drug_column is not None else cfg["drug_column"]
    if chain.beta.shape[3] != domain.n:
        return _fail(
            EXIT_MISMATCH,
            f"chain has {chain.beta.shape[3]} voxels but grid {domain.width}x{domain.height}",
        )
    if not 0 <= drug < design.shape[1]:
        return _fail(EXIT_CONFIG, f"drug column {drug} out of range")
    out = _outdir(args, "estimate_fa_out")
    try:
        delta = estimators.delta_fa(chain, design, drug)
    except TensorFieldError as exc:
        return _fail(EXIT_MISMATCH, f"estimation failed: {exc}")
    summary = delta.summary()
    io.write_grid_csv(out / "delta_fa_mean.csv", summary.mean, domain)
    io.write_grid_csv(out / "delta_fa_sd.csv", summary.sd, domain)
    io.write_grid_csv(out / "delta_fa_z.csv", summary.z, domain)
    io.write_json(
        out / "delta_fa_summary.json",
        {
            "median_sd": float(np.median(summary.sd)),
            "max_abs_mean": float(np.max(np.abs(summary.mean))),
            "n_voxels": int(domain.n),
            "drug_column": int(drug),
        },
    )
    _finish(out, "estimate-fa", cfg, chain.seed,
            ["delta_fa_mean.csv", "delta_fa_sd.csv", "delta_fa_z.csv", "delta_fa_summary.json"])
    print(f"estimate-fa: wrote delta maps for {domain.n} voxels to {out}")
    return 0


def cmd_report(args):
    try:
        run_dir, chain, design, domain, cfg = _load_chain_dir(args.chain)
    except MalformedData as exc:
        return _fail(EXIT_DATA, f"malformed input: {exc}")
    if chain.beta.shape[3] != domain.n:
        return _fail(EXIT_MISMATCH, f"chain voxel count {chain.beta.shape[3]} != grid {domain.n}")
    out = _outdir(args, "report_out")
    written = []
    io.write_summary_csv(out / "summary.csv", chain)
    written.append("summary.csv")
    # posterior z maps for every coefficient surface
    mean = chain.beta.mean(axis=0)
    sd = chain.beta.std(axis=0)
    with np.errstate(invalid="ignore"):
        z = np.where(sd > 0, mean / np.where(sd > 0, sd, 1.0), 0.0)
    for c, name in enumerate(chain.component_names):
        for j in range(chain.beta.shape[2]):
            fname = f"zmap_beta_{name}_{j}.csv"
            io.write_grid_csv(out / fname, z[c, j], domain)
            written.append(fname)
    drug = args.drug_column if args.drug_column is not None else cfg["drug_column"]
    if 0 <= drug < design.shape[1] and len(chain.component_names) == 6:
        delta = estimators.delta_fa(chain, design, drug)
        summary = delta.summary()
        io.write_grid_csv(out / "delta_fa_mean.csv", summary.mean, domain)
        io.write_grid_csv(out / "delta_fa_z.csv", summary.z, domain)
        written.extend(["delta_fa_mean.csv", "delta_fa_z.csv"])
    truth_path = Path(args.truth) if args.truth else run_dir / "truth.json"
    if truth_path.exists():
        try:
            truth = io.read_truth_json(truth_path)
            report = estimators.score_chain(chain, truth["beta"])
        except (MissingTruth, KeyError, ValueError) as exc:
            return _fail(EXIT_MISMATCH, f"chain/truth mismatch: {exc}")
        io.write_score_csv(out / "score.csv", report)
        written.append("score.csv")
        for name, mad, coverage, mcsd in report.rows():
            print(f"report: {name} mad={mad:.4f} coverage={coverage:.1%} mcsd={mcsd:.4f}")
    elif args.truth:
        return _fail(EXIT_MISMATCH, f"truth file {args.truth} not found")
    _finish(out, "report", cfg, chain.seed, written)
    print(f"report: wrote {len(written)} files to {out}")
    return 0


def cmd_validate(args):
    out = _outdir(args, "validate_out")
    kwargs = {}
    if args.seed is not None:
        kwargs["seed"] = args.seed
    report = valmod.run_suite(args.suite, **kwargs)
    io.write_json(out / f"validate_{args.suite}.json", report)
    for check in report["checks"]:
        status = "pass" if check["passed"] else "FAIL"
        print(f"validate {args.suite}: {check['name']}: {status}")
    if not report["passed"]:
        return _fail(EXIT_ORACLE, f"suite {args.suite} failed")
    print(f"validate {args.suite}: all checks passed")
    return 0


def cmd_baseline_fit(args):
    try:
        cfg = _load_config(
            args,
            {"seed": "mcmc.seed", "q": "vecchia.q", "iters": "mcmc.iters", "burnin": "mcmc.burnin"},
        )
        spec = cfgmod.build_model_spec(cfg)
    except InvalidParams as exc:
        return _fail(EXIT_CONFIG, f"config: {exc}")
    _apply_threads(args.threads)
    try:
        tensors, design, domain, data_dir = _load_fit_inputs(args, cfg)
    except MalformedData as exc:
        return _fail(EXIT_DATA, f"malformed data: {exc}")
    except OSError as exc:
        return _fail(EXIT_DATA, f"cannot read data: {exc}")
    out = _outdir(args, "baseline_out")
    drug = args.drug_column if args.drug_column is not None else cfg["drug_column"]
    if not 0 <= drug < design.shape[1]:
        return _fail(EXIT_CONFIG, f"drug column {drug} out of range")
    try:
        result = estimators.fit_univariate_baseline(tensors, design, domain, spec, drug_column=drug)
    except DegenerateFA as exc:
        return _fail(EXIT_DATA, f"degenerate FA values: {exc}")
    except (NonFiniteLikelihood, CholeskyFailure) as exc:
        return _fail(EXIT_DIVERGENCE, f"chain diverged: {exc}")
    chain = result.chain
    io.write_chain_csv(out / "chain.csv", chain)
    io.write_summary_csv(out / "summary.csv", chain)
    shutil.copyfile(data_dir / "design.csv", out / "design.csv")
    written = ["chain.csv", "summary.csv", "design.csv"]
    summary = result.delta.summary()
    io.write_grid_csv(out / "delta_fa_mean.csv", summary.mean, domain)
    io.write_grid_csv(out / "delta_fa_sd.csv", summary.sd, domain)
    io.write_grid_csv(out / "delta_fa_z.csv", summary.z, domain)
    written.extend(["delta_fa_mean.csv", "delta_fa_sd.csv", "delta_fa_z.csv"])
    io.write_json(
        out / "fit_stats.json",
        {
            "accept_rates": chain.accept_rates,
            "n_stored": chain.n_stored,
            "degenerate_fraction": result.degenerate_fraction,
        },
    )
    written.append("fit_stats.json")
    _finish(out, "baseline-fit", cfg, spec.seed, written)
    print(f"baseline-fit: stored {chain.n_stored} draws to {out}")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="tensorfield",
        description="Simulation and Bayesian inference for spatial fields of SPD matrices.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--seed", type=int, help="override the seed")
        p.add_argument("--out", help="output directory")

    p = sub.add_parser("simulate", help="generate a synthetic dataset")
    add_common(p)
    p.add_argument("--grid", help="grid size as WxH, e.g. 20x20")
    p.add_argument("--subjects", type=int, help="number of subjects")
    p.add_argument("--model", choices=("swp", "cdp"), help="generating model")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fit", help="run the MCMC fit on a dataset")
    add_common(p)
    p.add_argument("data", help="dataset directory (or data.csv path)")
    p.add_argument("--q", type=int, help="Vecchia neighbor count")
    p.add_argument("--iters", type=int, help="total MCMC iterations")
    p.add_argument("--burnin", type=int, help="burn-in iterations")
    p.add_argument("--threads", type=int, help="cap worker threads")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("estimate-fa", help="FA treatment contrast from a fitted chain")
    add_common(p)
    p.add_argument("chain", help="fit output directory")
    p.add_argument("--drug-column", type=int, help="design column of the treatment flag")
    p.set_defaults(func=cmd_estimate_fa)

    p = sub.add_parser("validate", help="run a Monte Carlo oracle suite")
    add_common(p)
    p.add_argument("suite", choices=sorted(valmod.SUITES))
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("report", help="summaries, maps, and truth scoring")
    add_common(p)
    p.add_argument("chain", help="fit output directory")
    p.add_argument("--truth", help="ground-truth JSON (default: truth.json in chain dir)")
    p.add_argument("--drug-column", type=int, help="design column of the treatment flag")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("baseline-fit", help="univariate logit-FA baseline fit")
    add_common(p)
    p.add_argument("data", help="dataset directory (or data.csv path)")
    p.add_argument("--q", type=int, help="Vecchia neighbor count")
    p.add_argument("--iters", type=int, help="total MCMC iterations")
    p.add_argument("--burnin", type=int, help="burn-in iterations")
    p.add_argument("--threads", type=int, help="cap worker threads")
    p.add_argument("--drug-column", type=int, help="design column of the treatment flag")
    p.set_defaults(func=cmd_baseline_fit)

    return parser


def main(argv=None):
    _setup_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except TensorFieldError as exc:
        return _fail(EXIT_CONFIG, str(exc))


if __name__ == "__main__":
    sys.exit(main())
