"""On-disk formats: tensor-field CSV, design CSV, truth JSON, chain CSV, maps.

All floats are serialized with 17 significant digits so that write/read
round trips are exact for IEEE doubles. Tensor rows are one subject-voxel
pair each, lower-triangle order, subjects major, voxels in lexicographic
grid order.
"""

import csv
import json

import numpy as np

from .errors import DimensionMismatch, MalformedData
from .gp import GridDomain
from .inference import SPATIAL_NAMES, McmcChain

TENSOR_HEADER = ("subject", "ix", "iy", "a11", "a21", "a22", "a31", "a32", "a33")
CHAIN_HEADER = ("iteration", "parameter", "voxel", "value")

GLOBAL_PARAMS = ("prec_beta", "prec_m") + SPATIAL_NAMES + ("log_post",)


def _fmt(x):
    return format(float(x), ".17g")


def write_tensor_csv(path, tensors, domain):
    """Write a (subjects, voxels, 6) tensor field as CSV rows."""
    tensors = np.asarray(tensors, dtype=np.float64)
    if tensors.ndim != 3 or tensors.shape[1] != domain.n or tensors.shape[2] != 6:
        raise DimensionMismatch(f"tensors shape {tensors.shape} does not match domain")
    g = domain.grid_indices()
    with open(path, "w", newline="") as f:
        f.write(",".join(TENSOR_HEADER) + "\n")
        for i in range(tensors.shape[0]):
            rows = []
            for v in range(domain.n):
                vals = ",".join(_fmt(x) for x in tensors[i, v])
                rows.append(f"{i},{g[v, 0]},{g[v, 1]},{vals}\n")
            f.write("".join(rows))


def read_tensor_csv(path, spacing=1.0):
    """Read a tensor-field CSV; returns (tensors, domain).

    Grid dimensions are inferred from the coordinate columns. Every subject
    must supply every voxel exactly once; violations raise MalformedData with
    the offending row (1-based, counting the header) or the missing
    subject/voxel.
    """
    entries = {}
    max_ix = -1
    max_iy = -1
    max_subj = -1
    with open(path, newline="") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header is None or tuple(header) != TENSOR_HEADER:
            raise MalformedData(f"bad header {header}, expected {','.join(TENSOR_HEADER)}", row=1)
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 9:
                raise MalformedData(f"expected 9 fields, got {len(row)}", row=lineno)
            try:
                subj = int(row[0])
                ix = int(row[1])
                iy = int(row[2])
                vals = [float(x) for x in row[3:]]
            except ValueError as exc:
                raise MalformedData(f"unparseable value: {exc}", row=lineno) from exc
            if subj < 0 or ix < 0 or iy < 0:
                raise MalformedData("negative subject or coordinate", row=lineno)
            if not all(np.isfinite(vals)):
                raise MalformedData("non-finite tensor value", subject=subj, row=lineno)
            key = (subj, ix, iy)
            if key in entries:
                raise MalformedData(
                    f"duplicate row for subject {subj} voxel ({ix},{iy})",
                    subject=subj,
                    row=lineno,
                )
            entries[key] = vals
            max_ix = max(max_ix, ix)
            max_iy = max(max_iy, iy)
            max_subj = max(max_subj, subj)
    if not entries:
        raise MalformedData("no data rows")
    width, height, n_subj = max_ix + 1, max_iy + 1, max_subj + 1
    domain = GridDomain(width, height, spacing)
    tensors = np.empty((n_subj, domain.n, 6))
    for subj in range(n_subj):
        for iy in range(height):
            for ix in range(width):
                vals = entries.pop((subj, ix, iy), None)
                if vals is None:
                    raise MalformedData(
                        f"missing row for subject {subj} voxel ({ix},{iy})",
                        subject=subj,
                        voxel=iy * width + ix,
                    )
                tensors[subj, iy * width + ix] = vals
    return tensors, domain


def write_design_csv(path, design):
    """Write an (N, p) design matrix with header subject,x0,...,x{p-1}."""
    design = np.asarray(design, dtype=np.float64)
    p = design.shape[1]
    with open(path, "w", newline="") as f:
        f.write("subject," + ",".join(f"x{j}" for j in range(p)) + "\n")
        for i in range(design.shape[0]):
            f.write(f"{i}," + ",".join(_fmt(x) for x in design[i]) + "\n")


def read_design_csv(path):
    with open(path, newline="") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if not header or header[0] != "subject":
            raise MalformedData(f"bad design header {header}", row=1)
        p = len(header) - 1
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != p + 1:
                raise MalformedData("wrong design field count", row=lineno)
            try:
                subj = int(row[0])
                vals = [float(x) for x in row[1:]]
            except ValueError as exc:
                raise MalformedData(f"unparseable design value: {exc}", row=lineno) from exc
            if subj != len(rows):
                raise MalformedData(f"subjects out of order at {subj}", row=lineno)
            rows.append(vals)
    if not rows:
        raise MalformedData("empty design")
    return np.asarray(rows, dtype=np.float64)


def write_truth_json(path, dataset):
    """Ground-truth sidecar: scenario settings and generating coefficients."""
    sc = dataset.scenario
    payload = {
        "model": dataset.model,
        "seed": dataset.seed,
        "scenario": {
            "width": sc.width,
            "height": sc.height,
            "spacing": sc.spacing,
            "n_subjects": sc.n_subjects,
            "m": sc.m,
            "sigma_beta": sc.sigma_beta,
            "rho_u": sc.rho_u,
            "nu_u": sc.nu_u,
            "rho_beta": sc.rho_beta,
            "nu_beta": sc.nu_beta,
            "drug_effect": sc.drug_effect,
            "age_effect": sc.age_effect,
            "region_size": sc.region_size,
        },
        "component_names": ["t11", "t22", "t33", "t21", "t31", "t32"],
        "beta": dataset.coeffs.values.tolist(),
    }
    with open(path, "w") as f:
        json.dump(payload, f, sort_keys=True, indent=1)
        f.write("\n")


def read_truth_json(path):
    with open(path) as f:
        payload = json.load(f)
    payload["beta"] = np.asarray(payload["beta"], dtype=np.float64)
    return payload


def write_chain_csv(path, chain):
    """Columnar chain dump: iteration, parameter, voxel (-1 global), value."""
    t_count = chain.n_stored
    p = chain.beta.shape[2]
    n = chain.beta.shape[3]
    with open(path, "w", newline="") as f:
        f.write(",".join(CHAIN_HEADER) + "\n")
        for t in range(t_count):
            parts = []
            for c, name in enumerate(chain.component_names):
                for j in range(p):
                    pname = f"beta_{name}_{j}"
                    col = chain.beta[t, c, j]
                    parts.extend(
                        f"{t},{pname},{v},{_fmt(col[v])}\n" for v in range(n)
                    )
            parts.append(f"{t},prec_beta,-1,{_fmt(chain.prec_beta[t])}\n")
            parts.append(f"{t},prec_m,-1,{_fmt(chain.prec_m[t])}\n")
            for k, name in enumerate(SPATIAL_NAMES):
                parts.append(f"{t},{name},-1,{_fmt(chain.theta[t, k])}\n")
            parts.append(f"{t},log_post,-1,{_fmt(chain.log_post[t])}\n")
            f.write("".join(parts))


def read_chain_csv(path, domain, design=None, seed=-1, accept_rates=None):
    """Rebuild an McmcChain from its CSV dump.

    The domain must be supplied (grid shape is not stored in the chain file);
    design, seed, and acceptance rates are optional metadata.
    """
    comp_order = []
    beta_vals = {}
    globals_vals = {name: {} for name in GLOBAL_PARAMS}
    max_t = -1
    max_j = -1
    with open(path, newline="") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header is None or tuple(header) != CHAIN_HEADER:
            raise MalformedData(f"bad chain header {header}", row=1)
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 4:
                raise MalformedData("expected 4 fields", row=lineno)
            try:
                t = int(row[0])
                voxel = int(row[2])
                value = float(row[3])
            except ValueError as exc:
                raise MalformedData(f"unparseable chain value: {exc}", row=lineno) from exc
            pname = row[1]
            max_t = max(max_t, t)
            if pname.startswith("beta_"):
                comp, _, j = pname[5:].rpartition("_")
                try:
                    j = int(j)
                except ValueError as exc:
                    raise MalformedData(f"bad parameter name {pname}", row=lineno) from exc
                if comp not in comp_order:
                    comp_order.append(comp)
                max_j = max(max_j, j)
                beta_vals[(t, comp, j, voxel)] = value
            elif pname in globals_vals:
                globals_vals[pname][t] = value
            else:
                raise MalformedData(f"unknown parameter {pname}", row=lineno)
    if max_t < 0:
        raise MalformedData("empty chain file")
    t_count = max_t + 1
    p = max_j + 1
    n = domain.n
    beta = np.empty((t_count, len(comp_order), p, n))
    try:
        for t in range(t_count):
            for c, comp in enumerate(comp_order):
                for j in range(p):
                    for v in range(n):
                        beta[t, c, j, v] = beta_vals[(t, comp, j, v)]
    except KeyError as exc:
        raise MalformedData(f"incomplete chain: missing {exc}") from exc
    prec_beta = np.empty(t_count)
    prec_m = np.empty(t_count)
    theta = np.empty((t_count, 4))
    log_post = np.empty(t_count)
    try:
        for t in range(t_count):
            prec_beta[t] = globals_vals["prec_beta"][t]
            prec_m[t] = globals_vals["prec_m"][t]
            for k, name in enumerate(SPATIAL_NAMES):
                theta[t, k] = globals_vals[name][t]
            log_post[t] = globals_vals["log_post"][t]
    except KeyError as exc:
        raise MalformedData(f"incomplete chain globals: missing iteration {exc}") from exc
    return McmcChain(
        beta,
        prec_beta,
        prec_m,
        theta,
        log_post,
        accept_rates or {},
        seed,
        None,
        tuple(comp_order),
        domain,
        design,
    )


def write_summary_csv(path, chain):
    """Posterior mean/sd/z/quantiles per parameter (beta rows plus globals)."""
    p = chain.beta.shape[2]
    n = chain.beta.shape[3]
    mean = chain.beta.mean(axis=0)
    sd = chain.beta.std(axis=0)
    lo = np.quantile(chain.beta, 0.025, axis=0)
    hi = np.quantile(chain.beta, 0.975, axis=0)
    with np.errstate(invalid="ignore"):
        z = np.where(sd > 0, mean / np.where(sd > 0, sd, 1.0), 0.0)
    with open(path, "w", newline="") as f:
        f.write("parameter,voxel,mean,sd,z,q025,q975\n")
        for c, name in enumerate(chain.component_names):
            for j in range(p):
                for v in range(n):
                    f.write(
                        f"beta_{name}_{j},{v},{_fmt(mean[c, j, v])},{_fmt(sd[c, j, v])},"
                        f"{_fmt(z[c, j, v])},{_fmt(lo[c, j, v])},{_fmt(hi[c, j, v])}\n"
                    )
        for name, series in (
            ("prec_beta", chain.prec_beta),
            ("prec_m", chain.prec_m),
            ("log_rho_u", chain.theta[:, 0]),
            ("log_nu_u", chain.theta[:, 1]),
            ("log_rho_beta", chain.theta[:, 2]),
            ("log_nu_beta", chain.theta[:, 3]),
        ):
            m = series.mean()
            s = series.std()
            zval = m / s if s > 0 else 0.0
            f.write(
                f"{name},-1,{_fmt(m)},{_fmt(s)},{_fmt(zval)},"
                f"{_fmt(np.quantile(series, 0.025))},{_fmt(np.quantile(series, 0.975))}\n"
            )


def write_grid_csv(path, values, domain):
    """Write a per-voxel field as a height x width CSV grid (rows = iy)."""
    values = np.asarray(values, dtype=np.float64)
    if values.shape != (domain.n,):
        raise DimensionMismatch(f"values shape {values.shape} != ({domain.n},)")
    grid = values.reshape(domain.height, domain.width)
    with open(path, "w", newline="") as f:
        for iy in range(domain.height):
            f.write(",".join(_fmt(x) for x in grid[iy]) + "\n")


def write_score_csv(path, report):
    """Table of MAD / coverage / MCSD per component group."""
    with open(path, "w", newline="") as f:
        f.write("group,mad,coverage,mcsd\n")
        for name, mad, coverage, mcsd in report.rows():
            f.write(f"{name},{_fmt(mad)},{_fmt(coverage)},{_fmt(mcsd)}\n")


def write_json(path, payload):
    with open(path, "w") as f:
        json.dump(payload, f, sort_keys=True, indent=1, default=_json_default)
        f.write("\n")


def _json_default(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    raise TypeError(f"not JSON serializable: {type(obj)}")
