"""Command-line frontend.

    isdim <command> CONFIG [--set section.key=value ...] [--threads N] [--no-timestamp]

Each command writes one table of rows (CSV by default, or JSON) to the path
in ``run.output`` ("-" is standard output) and prints a one-line summary per
row to standard error. Exit status: 0 on success, 2 for configuration
errors, 3 for numerical failures at run time.
"""

from __future__ import annotations

import argparse
import csv
import datetime
import io
import json
import math
import os
import sys
import tempfile

import numpy as np

from isdim import __version__, config, filtering, inverse, measures, rng, sampler
from isdim.config import ExperimentConfig
from isdim.errors import ConfigError, IsdimError, NonIntegrableError
from isdim.measures import DiagonalGaussian, ScalarPotential

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3

HEADERS = {
    "diagnose": ["model", "d_u", "d_y", "tau", "efd", "log_rho", "kl", "verdict", "trace_verdict"],
    "sweep-cascade": [
        "regime", "parameter", "value", "beta", "gamma", "d", "tau", "efd",
        "log_rho_median", "log_rho_q25", "log_rho_q75", "verdict",
        "fit_axis", "fit_slope", "r2", "tau_slope", "efd_slope", "n_seeds",
    ],
    "verify-bounds": [
        "model", "phi", "n", "replications", "rho", "bias", "se_bias", "bias_bound", "bias_ok",
        "mse", "se_mse", "mse_bound", "mse_ok",
    ],
    "filter-compare": ["proposal", "log_rho", "rho_mc", "se", "ess", "verdict", "st_exceeds_op"],
    "sweep-filter": [
        "init", "r", "q", "p", "d", "eig_a_st", "eig_a_op", "tau_st", "tau_op", "efd_st", "efd_op",
        "log_rho_st", "log_rho_op", "fit_axis", "fit_slope_st", "r2_st", "fit_slope_op", "r2_op", "n_seeds",
    ],
    "deconvolve-demo": ["t", "s", "beta", "gamma", "d", "tau", "efd", "log_rho", "kl", "verdict", "trace_verdict"],
    "singular-limit": ["epsilon", "rho_exact", "rho_mc", "se", "laplace_rate", "fit_slope_exact", "fit_slope_mc"],
    "product-collapse": ["d", "log_rho_exact", "rho_mc", "se"],
}


def _cell(v) -> str:
    """Text for one CSV cell. Non-finite floats become empty cells; infinite
    quantities are reported through verdict columns instead."""
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return repr(v) if math.isfinite(v) else ""
    return str(v)


def _json_value(v):
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, (int, np.integer)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return v if math.isfinite(v) else None
    return v


def _slope(fit):
    return (fit.slope, fit.r2) if fit is not None else (math.nan, math.nan)


# Commands --------------------------------------------------------------------------


def _verdict(log_rho: float) -> str:
    return "finite" if math.isfinite(log_rho) else "inf"


def _cascade_from(model: dict, d: int | None = None) -> inverse.SpectralCascade:
    d = model["d"] if d is None else d
    truth = model["truth"]
    truth = np.full(d, float(truth)) if not isinstance(truth, list) else np.asarray(truth)
    return inverse.SpectralCascade(model["beta"], model["gamma"], d, truth)


def _ip_row(name: str, ip: inverse.LinearGaussianIP, y, trace_verdict: str = "") -> dict:
    dims = inverse.intrinsic_dims(inverse.operator_a(ip))
    lr = filtering.closed_form_log_rho(ip, y)
    kl = measures.kl_divergence(inverse.posterior(ip, y), ip.prior())
    return dict(model=name, d_u=ip.d_u, d_y=ip.d_y, tau=dims.tau, efd=dims.efd, log_rho=lr, kl=kl,
                verdict=_verdict(lr), trace_verdict=trace_verdict)


def _cascade_trace_verdict(c: inverse.SpectralCascade) -> str:
    quantity = lambda d: inverse.SpectralCascade(c.beta, c.gamma, d).intrinsic_dims().tau
    return filtering.truncation_verdict(quantity, c.d).label


def _filter_from(model: dict) -> filtering.OneStepFilter:
    if model["form"] == "dense":
        return filtering.OneStepFilter.dense(*(model[k] for k in "MHPQR"))
    return filtering.OneStepFilter.scalar(model["m"], model["h"], model["p"], model["q"], model["r"], model["d"])


def _filter_data(f: filtering.OneStepFilter, model: dict, seed: int) -> np.ndarray:
    """Configured y1, or y1 = R^{1/2} xi (truth v1 = 0)."""
    if model["y"] is not None:
        y = np.asarray(model["y"], dtype=float)
        if y.shape == (1,) and f.d_y > 1:
            y = np.full(f.d_y, y[0])
        if y.shape != (f.d_y,):
            raise ConfigError(f"y has {y.shape[0]} entries, expected {f.d_y}", field="model.y")
        return y
    xi = rng.generator(seed, 0).standard_normal(f.d_y)
    return math.sqrt(f.R) * xi if f.form == "scalar" else inverse._sym_sqrt(f.R) @ xi


def _pair_from(model: dict) -> tuple[DiagonalGaussian, DiagonalGaussian]:
    keys = ("target_mean", "target_var", "proposal_mean", "proposal_var")
    dim = max(len(model[k]) for k in keys)
    vec = [np.broadcast_to(np.asarray(model[k], dtype=float), (dim,)) for k in keys]
    return DiagonalGaussian(vec[0], vec[1]), DiagonalGaussian(vec[2], vec[3])


def cmd_diagnose(cfg: ExperimentConfig, threads) -> list[dict]:
    model, seed = cfg.model, cfg.run["seed"]
    kind = model["kind"]
    if kind == "cascade":
        c = _cascade_from(model)
        y = inverse.generate_data(c, seed)
        return [_ip_row("cascade", c.as_ip(), y, _cascade_trace_verdict(c))]
    if kind == "dense-ip":
        ip = inverse.LinearGaussianIP.dense(model["K"], model["Sigma"], model["Gamma"])
        if model["y"] is not None:
            y = np.asarray(model["y"], dtype=float)
            if y.shape != (ip.d_y,):
                raise ConfigError(f"y has {y.shape[0]} entries, expected {ip.d_y}", field="model.y")
        else:
            y = inverse._sym_sqrt(ip.Gamma) @ rng.generator(seed, 0).standard_normal(ip.d_y)
        return [_ip_row("dense-ip", ip, y)]
    if kind == "filter":
        f = _filter_from(model)
        y = _filter_data(f, model, seed)
        return [_ip_row(f"filter-{k.value}", filtering.reduction(f, k), y) for k in filtering.ProposalKind]
    target, proposal = _pair_from(model)
    kl = measures.kl_divergence(target, proposal)
    try:
        lr = measures.log_rho_gaussian(target, proposal)
    except NonIntegrableError:
        lr = math.inf
    return [dict(model="gaussian-pair", d_u=target.dim, d_y=None, tau=None, efd=None, log_rho=lr, kl=kl,
                 verdict=_verdict(lr), trace_verdict="")]


_REGIME_LISTS = {
    "small_noise_fixed_d": "gamma",
    "small_noise_infinite_d": "gamma",
    "large_d": "d",
    "joint": "d",
    "regularity": "beta",
}


def cmd_sweep_cascade(cfg: ExperimentConfig, threads) -> list[dict]:
    grid, model, run = cfg.grid, cfg.model, cfg.run
    regime = grid["regime"]
    driver = _REGIME_LISTS[regime]
    if grid[driver] is None:
        raise ConfigError(f"regime '{regime}' sweeps over a list of {driver}", field=f"grid.{driver}")
    sweep = {"beta": model["beta"], "gamma": model["gamma"], "d": model["d"], driver: grid[driver]}
    if regime == "joint":
        if grid["alpha"] is None:
            raise ConfigError("regime 'joint' needs alpha", field="grid.alpha")
        sweep["alpha"] = grid["alpha"]
    rep = inverse.sweep_table1(regime, sweep, run["seed"], run["data_seeds"], run["d_max"])
    slope, r2 = _slope(rep.fit_log_rho)
    rows = []
    for r in rep.rows:
        rows.append(dict(
            regime=r.regime, parameter=r.parameter, value=r.value, beta=r.beta, gamma=r.gamma, d=r.d,
            tau=r.tau, efd=r.efd, log_rho_median=r.log_rho_median, log_rho_q25=r.log_rho_q25,
            log_rho_q75=r.log_rho_q75, verdict="finite" if r.converged else "inf",
            fit_axis=rep.log_rho_fit_axis, fit_slope=slope, r2=r2, tau_slope=rep.fit_tau.slope,
            efd_slope=_slope(rep.fit_efd)[0], n_seeds=rep.n_seeds,
        ))
    return rows


def cmd_verify_bounds(cfg: ExperimentConfig, threads) -> list[dict]:
    target, proposal = _pair_from(cfg.model)
    model = sampler.GaussianISModel("gaussian-pair", proposal, target)
    phis = [p for p in sampler.BOUNDED_FAMILY if p.name in cfg.grid["phi"]]
    run = cfg.run
    rows = []
    for i, n in enumerate(cfg.grid["n"]):
        reports = sampler.bias_mse_experiment(model, phis, n, run["replications"], rng.derive_seed(run["seed"], i), threads)
        for b in reports:
            rows.append(dict(
                model=model.name, phi=b.phi, n=b.n_particles, replications=b.replications, rho=b.rho,
                bias=b.empirical_bias, se_bias=b.std_error_bias, bias_bound=b.bias_bound, bias_ok=b.bias_within_bound,
                mse=b.empirical_mse, se_mse=b.std_error_mse, mse_bound=b.mse_bound, mse_ok=b.mse_within_bound,
            ))
    return rows


def cmd_filter_compare(cfg: ExperimentConfig, threads) -> list[dict]:
    f = _filter_from(cfg.model)
    seed = cfg.run["seed"]
    y = _filter_data(f, cfg.model, seed)
    cmp = filtering.compare_proposals(f, y, cfg.run["n_particles"], seed)
    out = []
    for name, lr, mc, e in (("standard", cmp.log_rho_st, cmp.mc_st, cmp.ess_st), ("optimal", cmp.log_rho_op, cmp.mc_op, cmp.ess_op)):
        out.append(dict(proposal=name, log_rho=lr, rho_mc=mc.rho, se=mc.std_error, ess=e,
                        verdict=_verdict(lr), st_exceeds_op=cmp.st_exceeds_op))
    return out


def cmd_sweep_filter(cfg: ExperimentConfig, threads) -> list[dict]:
    model, grid, run = cfg.model, cfg.grid, cfg.run
    if model["m"] != 1.0 or model["h"] != 1.0:
        raise ConfigError("sweep-filter covers the M = H = I family; m and h must be 1", field="model.m")
    sweep = {k: (grid[k] if grid[k] is not None else model[k]) for k in ("r", "q", "p", "d")}
    rep = filtering.sweep_tables34(grid["init"], sweep, run["seed"], run["data_seeds"])
    s_st, r2_st = _slope(rep.fit_st)
    s_op, r2_op = _slope(rep.fit_op)
    axis = "log(1/r)" if rep.driver == "r" else "d"
    return [dict(
        init=r.init, r=r.r, q=r.q, p=r.p, d=r.d, eig_a_st=r.eig_a_st, eig_a_op=r.eig_a_op,
        tau_st=r.tau_st, tau_op=r.tau_op, efd_st=r.efd_st, efd_op=r.efd_op,
        log_rho_st=r.log_rho_st, log_rho_op=r.log_rho_op, fit_axis=axis,
        fit_slope_st=s_st, r2_st=r2_st, fit_slope_op=s_op, r2_op=r2_op, n_seeds=rep.n_seeds,
    ) for r in rep.rows]


def cmd_deconvolve_demo(cfg: ExperimentConfig, threads) -> list[dict]:
    model, seed = cfg.model, cfg.run["seed"]
    ds = cfg.grid["d"] or [model["d"]]
    if isinstance(model["truth"], list) and len(ds) > 1:
        raise ConfigError("a vector truth fixes d; give a scalar truth to sweep d", field="model.truth")
    rows = []
    for i, d in enumerate(ds):
        truth = model["truth"]
        truth = np.full(d, float(truth)) if not isinstance(truth, list) else truth
        c = inverse.deconvolution_model(model["t"], model["s"], d, model["gamma"], truth)
        y = inverse.generate_data(c, rng.derive_seed(seed, i))
        r = _ip_row("deconvolution", c.as_ip(), y, _cascade_trace_verdict(c))
        rows.append(dict(t=model["t"], s=model["s"], beta=c.beta, gamma=c.gamma, d=d, tau=r["tau"], efd=r["efd"],
                         log_rho=r["log_rho"], kl=r["kl"], verdict=r["verdict"], trace_verdict=r["trace_verdict"]))
    return rows


def cmd_singular_limit(cfg: ExperimentConfig, threads) -> list[dict]:
    model = cfg.model
    p = ScalarPotential.quadratic(model["u_star"], model["curvature"])
    proposal = DiagonalGaussian([model["proposal_mean"]], [model["proposal_var"]])
    rep = sampler.singular_limit_sweep(p, proposal, cfg.grid["epsilon"], cfg.run["n_particles"], cfg.run["seed"])
    fe, fm = _slope(rep.fit_exact)[0], _slope(rep.fit_mc)[0]
    return [dict(epsilon=r.epsilon, rho_exact=r.rho_exact, rho_mc=r.rho_mc, se=r.std_error, laplace_rate=r.rate,
                 fit_slope_exact=fe, fit_slope_mc=fm) for r in rep.rows]


def cmd_product_collapse(cfg: ExperimentConfig, threads) -> list[dict]:
    target, proposal = _pair_from(cfg.model)
    if target.dim != 1:
        raise ConfigError("product-collapse takes a one-dimensional gaussian-pair", field="model.target_mean")
    rho_1 = math.exp(measures.log_rho_gaussian(target, proposal))
    rows = sampler.product_collapse_sweep(rho_1, cfg.grid["d"], cfg.run["n_particles"], cfg.run["seed"], cfg.grid["mc_max_d"])
    return [dict(d=r.d, log_rho_exact=r.log_rho_exact, rho_mc=r.rho_mc, se=r.std_error) for r in rows]


COMMAND_FUNCS = {
    "diagnose": cmd_diagnose,
    "sweep-cascade": cmd_sweep_cascade,
    "verify-bounds": cmd_verify_bounds,
    "filter-compare": cmd_filter_compare,
    "sweep-filter": cmd_sweep_filter,
    "deconvolve-demo": cmd_deconvolve_demo,
    "singular-limit": cmd_singular_limit,
    "product-collapse": cmd_product_collapse,
}


# Output ----------------------------------------------------------------------------


def render(cfg: ExperimentConfig, rows: list[dict], timestamp: str | None = None) -> str:
    """Serialize rows with the version and normalized config embedded."""
    header = HEADERS[cfg.command]
    normalized = cfg.normalized()
    if cfg.run["format"] == "json":
        doc = {"version": __version__}
        if timestamp is not None:
            doc["timestamp"] = timestamp
        doc["config"] = normalized
        doc["rows"] = [{k: _json_value(r.get(k)) for k in header} for r in rows]
        return json.dumps(doc, indent=2) + "\n"
    buf = io.StringIO()
    buf.write(f"# isdim {__version__}\r\n")
    if timestamp is not None:
        buf.write(f"# timestamp {timestamp}\r\n")
    buf.write(f"# config {json.dumps(normalized, sort_keys=True)}\r\n")
    writer = csv.writer(buf, lineterminator="\r\n")
    writer.writerow(header)
    for r in rows:
        writer.writerow([_cell(r.get(k)) for k in header])
    return buf.getvalue()


def write_atomic(path: str, text: str) -> None:
    if path == "-":
        sys.stdout.write(text)
        sys.stdout.flush()
        return
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".isdim-", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _summary(command: str, row: dict) -> str:
    parts = [f"{k}={_cell(row.get(k)) or '-'}" for k in HEADERS[command][:8]]
    return f"{command}: " + " ".join(parts)


def run(cfg: ExperimentConfig, threads: int | None = None, timestamp: bool = True) -> list[dict]:
    """Execute a validated config; write the output file and return the rows."""
    rows = COMMAND_FUNCS[cfg.command](cfg, threads)
    stamp = None
    if timestamp and cfg.run["timestamp"]:
        stamp = datetime.datetime.now(datetime.timezone.utc).isoformat(timespec="seconds")
    write_atomic(cfg.run["output"], render(cfg, rows, stamp))
    for row in rows:
        print(_summary(cfg.command, row), file=sys.stderr)
    return rows


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="isdim", description="Importance sampling cost diagnostics.")
    parser.add_argument("--version", action="version", version=f"isdim {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in config.COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("config", help="TOML experiment config")
        p.add_argument("--set", dest="overrides", action="append", default=[], metavar="SECTION.KEY=VALUE",
                       help="override a config value; repeatable, wins over the file")
        p.add_argument("--threads", type=int, default=None, help="worker threads (default $ISDIM_THREADS or all cores)")
        p.add_argument("--no-timestamp", action="store_true", help="omit the timestamp header line")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        try:
            with open(args.config, encoding="utf-8") as fh:
                text = fh.read()
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc.strerror}", field=args.config) from None
        cfg = config.validate(text, args.command, args.overrides)
        if args.threads is not None and args.threads < 1:
            raise ConfigError("--threads must be at least 1", field="--threads")
        run(cfg, args.threads, timestamp=not args.no_timestamp)
    except ConfigError as exc:
        print(f"isdim: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"isdim: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (IsdimError, ValueError) as exc:
        # remaining library ValueErrors reject the requested model or grid
        print(f"isdim: invalid input: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
