"""
Command-line front end.

Subcommands
-----------
``sample``
    Nested sampling from both ends of the spectrum; writes record streams,
    the binned ``p_gs + p_anti_gs`` table and a run manifest.
``critical``
    Critical energy densities per system size, with the method chosen by
    model family unless overridden.
``ensemble``
    Typical-ensemble curves, the scaling collapse near the condensation
    point and the near-degenerate doublet analysis.
``models list``
    Catalog families with their parameters.
``selftest``
    A fast battery of internal consistency checks.

Configuration is a single TOML file with ``[model]``, ``[sampler]``,
``[ensemble]`` and ``[critical]`` tables (see the README for every key).
Unknown tables and keys are rejected.

Exit codes: 0 success, 2 configuration error, 3 numerical failure,
4 interrupted.
"""

from __future__ import annotations

import argparse
import concurrent.futures as cf
import logging
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from . import io as eio
from .critical import (CriticalEnergyReport, exact_critical_energy,
                       tridiagonal_bulk_inverse_sums,
                       free_fermion_report, moment_expansion_report,
                       stochastic_critical_energy)
from .ensemble import (default_beta_grid, ensemble_curve,
                       free_fermion_curve, critical_window_curve,
                       near_degeneracy_curve, scaling_transform,
                       window_betas)
from .freefermion import jordan_wigner_spectrum
from .models import (FAMILIES, ModelSpec, build, gaussian_ensemble_tridiagonal,
                     _DEFAULT_BOUNDARY, _DEFAULT_PARAMS)
from .sampler import (SampleRecord, SamplerConfig, StuckSamplerError,
                      bin_weights, nested_sampling)
from .statespace import Hamiltonian, spectral_moments

try:  # Python >= 3.11
    import tomllib
except ModuleNotFoundError:  # pragma: no cover - depends on interpreter
    import tomli as tomllib

log = logging.getLogger("eigencond")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_INTERRUPTED = 4

RANDOM_FAMILIES = ("GOE", "GUE")


class ConfigError(Exception):
    """Invalid or incomplete configuration."""


# -- configuration ---------------------------------------------------------

_SAMPLER_KEYS = {
    "n_live": 2, "path_length": 32.0, "step": 2.0 ** -10, "n_moves": 16,
    "max_iterations": 1000, "retry_cap": 100, "target_eps": None,
    "anti_target_eps": None, "chains": 1, "bin_width": 0.01, "seed": 0,
    "both_tails": True, "basis": "eigen",
}
_CRITICAL_KEYS = {
    "method": "auto", "sizes": None, "probes": 200, "solver_tol": 1e-8,
    "probe": "gaussian", "n_exact": 0, "seed": 0, "seeds": 1,
    "cross_check": True, "batch": 64,
}
_ENSEMBLE_KEYS = {
    "sizes": None, "points": 400, "betas": None, "curve": True,
    "scaling": True, "eta_max": 12.0, "scaling_points": 401,
    "near_degeneracy": False, "method": "auto",
}
_TABLES = {"model": None, "sampler": _SAMPLER_KEYS,
           "critical": _CRITICAL_KEYS, "ensemble": _ENSEMBLE_KEYS}


def load_config(path):
    """Parse and validate a TOML configuration file.

    Returns
    -------
    dict
        ``{"model": ModelSpec, "sampler": dict, "critical": dict,
        "ensemble": dict, "raw": dict}`` with defaults filled in.

    Raises
    ------
    ConfigError
        With the offending line (syntax errors) or field name.
    """
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file {path} not found") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    unknown = set(raw) - set(_TABLES)
    if unknown:
        raise ConfigError(f"unknown table(s): {', '.join(sorted(unknown))}")
    if "model" not in raw:
        raise ConfigError("missing required table [model]")
    try:
        model = ModelSpec.from_dict(raw["model"])
    except KeyError as exc:
        raise ConfigError(f"[model] missing required field "
                          f"{exc.args[0]!r}") from None
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[model] {exc}") from None
    out = {"model": model, "raw": raw}
    for name, defaults in _TABLES.items():
        if defaults is None:
            continue
        block = raw.get(name, {})
        bad = set(block) - set(defaults)
        if bad:
            raise ConfigError(f"[{name}] unknown key(s): "
                              f"{', '.join(sorted(bad))}")
        merged = dict(defaults)
        merged.update(block)
        out[name] = merged
    return out


def _sampler_config(block, seed, e_target=None):
    try:
        return SamplerConfig(int(block["n_live"]),
                             float(block["path_length"]),
                             float(block["step"]), int(block["n_moves"]),
                             int(block["max_iterations"]), e_target, seed,
                             int(block["retry_cap"]))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[sampler] {exc}") from None


def _threads(args):
    if args.threads is not None:
        return max(1, int(args.threads))
    env = os.environ.get("EIGENCOND_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigError(f"EIGENCOND_THREADS={env!r} is not an "
                              f"integer") from None
    return 1


def _seed_streams(seed, n):
    """Independent per-unit generators split from one root seed."""
    root = np.random.SeedSequence(int(seed))
    return [np.random.default_rng(child) for child in root.spawn(n)]


def _pool_map(args, func, items):
    """Apply ``func`` to independent work units, results in input order."""
    items = list(items)
    workers = min(_threads(args), max(len(items), 1))
    if workers == 1:
        return [func(item) for item in items]
    with cf.ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(func, items))


def _spec_for_size(spec, v):
    params = dict(spec.params)
    return ModelSpec(spec.family, int(v), params, spec.boundary, spec.seed)


def _is_free_fermion(spec):
    return (spec.family == "TFIM1D" and spec.resolved_boundary == "open"
            and "h_z" not in spec.params)


# -- sample ------------------------------------------------------------------

def _sample_chain(op, cfg, rng):
    try:
        return nested_sampling(op, cfg, rng, store_states=False), None
    except StuckSamplerError as exc:
        return list(exc.records), exc


def cmd_sample(args, conf, manifest):
    spec = conf["model"]
    block = conf["sampler"]
    seed = int(args.seed if args.seed is not None else block["seed"])
    chains = int(block["chains"])
    if chains < 1:
        raise ConfigError("[sampler] chains must be positive")
    if block["basis"] not in ("eigen", "computational"):
        raise ConfigError("[sampler] basis must be 'eigen' or "
                          "'computational'")
    manifest.data["seeds"] = {"root": seed, "units": 2 * chains,
                              "splitting": "SeedSequence.spawn"}
    manifest.data["basis"] = block["basis"]
    manifest.start()

    op = build(spec, exact_degeneracy_only=args.exact_degeneracy_only)
    if block["basis"] == "eigen" and op.representation != "diagonal":
        op = op.diagonalize(exact_degeneracy_only=args.exact_degeneracy_only)
    v = spec.n_sites
    target = block["target_eps"]
    cfg = _sampler_config(block, seed,
                          None if target is None else float(target) * v)
    flipped = op.reflected()
    e_max = op.anti_ground.energy
    anti_target = block["anti_target_eps"]
    anti_cfg = _sampler_config(
        block, seed,
        None if anti_target is None else e_max - float(anti_target) * v)

    rngs = _seed_streams(seed, 2 * chains)
    units = [(op, cfg, rngs[2 * c]) for c in range(chains)]
    if block["both_tails"]:
        units += [(flipped, anti_cfg, rngs[2 * c + 1])
                  for c in range(chains)]
    results = _pool_map(args, lambda u: _sample_chain(*u), units)

    ground = results[:chains]
    anti = results[chains:]
    out = Path(args.out)
    outputs = []
    stuck = []
    path = out / "records.ndjson"
    eio.write_records([], path)
    all_ground, all_anti = [], []
    for c, (recs, err) in enumerate(ground):
        eio.write_records(recs, path, append=True,
                          extra={"chain": c, "tail": "ground"})
        all_ground += recs
        if err is not None:
            stuck.append({"chain": c, "tail": "ground", "e_star": err.e_star})
    for c, (recs, err) in enumerate(anti):
        converted = [_unflip(r, e_max) for r in recs]
        eio.write_records(converted, path, append=True,
                          extra={"chain": c, "tail": "anti"})
        all_anti += converted
        if err is not None:
            stuck.append({"chain": c, "tail": "anti",
                          "e_star": e_max - err.e_star})
    outputs.append(path)
    if all_ground or all_anti:
        binned = bin_weights(all_ground, op, float(block["bin_width"]),
                             anti_records=all_anti)
        bins = out / "bins.csv"
        eio.write_csv(bins, {"eps": binned.centers, "mean": binned.means,
                             "stderr": binned.stderr,
                             "count": binned.counts})
        outputs.append(bins)
    if stuck:
        manifest.finalize(outputs, status="stuck", stuck=stuck,
                          partial=True)
        log.error("sampler stuck in %d chain(s); partial outputs written",
                  len(stuck))
        return EXIT_NUMERICAL
    manifest.finalize(outputs)
    return EXIT_OK


def _unflip(rec, e_max):
    return SampleRecord(rec.iteration, e_max - rec.e_star, None,
                        rec.log_measure, rec.accepts, rec.rejects,
                        rec.p_anti_gs, rec.p_gs)


# -- critical ----------------------------------------------------------------

def select_method(spec):
    """Default critical-energy method for a model."""
    v = spec.n_sites
    if _is_free_fermion(spec):
        return "free-fermion"
    if spec.family in RANDOM_FAMILIES:
        return "exact-sum" if v <= 16 else "stochastic-trace"
    if v <= 12:
        return "exact-sum"
    return "stochastic-trace"


def _gaussian_sample(family, v, seed):
    """Exact critical energies and ground energy of one random sample."""
    beta = 1 if family == "GOE" else 2
    rng = np.random.default_rng(seed)
    diag, off = gaussian_ensemble_tridiagonal(v, beta, rng)
    e_min, e_max, low, high = tridiagonal_bulk_inverse_sums(diag, off)
    n_bulk = diag.size - 1
    rep = CriticalEnergyReport("exact-sum", n_bulk / low / v,
                               (e_max - e_min - n_bulk / high) / v,
                               model={"family": family, "V": v,
                                      "seed": seed}, n_sites=v)
    return rep, e_min / v


def _critical_one(spec, method, block, rng, args):
    model = spec.to_dict()
    if method == "free-fermion":
        if not _is_free_fermion(spec):
            raise ConfigError("free-fermion method needs an open TFIM1D "
                              "chain")
        sp_ = jordan_wigner_spectrum(spec.n_sites, float(spec.param("J")),
                                     float(spec.param("h_x")))
        return free_fermion_report(sp_, model=model)
    op = build(spec, exact_degeneracy_only=args.exact_degeneracy_only,
               **({"diagonalize": False}
                  if spec.family in RANDOM_FAMILIES else {}))
    if method == "exact-sum":
        return exact_critical_energy(op.eigenvalues(), op.ground.degeneracy,
                                     op.anti_ground.degeneracy,
                                     n_sites=spec.n_sites, model=model)
    if method == "moment-expansion":
        return moment_expansion_report(spectral_moments(op),
                                       op.anti_ground.energy, model=model)
    if method == "stochastic-trace":
        return stochastic_critical_energy(
            op, int(block["probes"]), solver_tol=float(block["solver_tol"]),
            rng=rng, probe=block["probe"], batch=int(block["batch"]),
            n_exact=int(block["n_exact"]), model=model)
    raise ConfigError(f"unknown method {method!r}")


def cmd_critical(args, conf, manifest):
    spec = conf["model"]
    block = conf["critical"]
    method = args.method or block["method"]
    allowed = ("auto", "exact-sum", "stochastic-trace", "free-fermion",
               "moment-expansion")
    if method not in allowed:
        raise ConfigError(f"method must be one of {', '.join(allowed)}")
    sizes = block["sizes"] or [spec.n_sites]
    seed = int(args.seed if args.seed is not None else block["seed"])
    manifest.data["seeds"] = {"root": seed, "units": len(sizes),
                              "splitting": "SeedSequence.spawn"}
    manifest.start()
    out = Path(args.out)
    rngs = _seed_streams(seed, len(sizes))
    outputs = []
    rows = {"V": [], "method": [], "eps_c_minus": [], "eps_c_plus": [],
            "stderr_minus": [], "stderr_plus": []}

    if spec.family in RANDOM_FAMILIES and int(block["seeds"]) > 1 \
            and method in ("auto", "exact-sum"):
        n_seeds = int(block["seeds"])
        dist = {"V": [], "seed": [], "eps_c_minus": [], "eps_c_plus": [],
                "eps_gs": []}
        for j, v in enumerate(sizes):
            base = int(spec.seed or 0)
            # Distinct sample seeds per size keep sizes independent.
            seeds = [base + 1000003 * j + k for k in range(n_seeds)]
            minus = []
            for s in seeds:
                rep, gs = _gaussian_sample(spec.family, int(v), s)
                dist["V"].append(int(v))
                dist["seed"].append(s)
                dist["eps_c_minus"].append(rep.eps_c_minus)
                dist["eps_c_plus"].append(rep.eps_c_plus)
                dist["eps_gs"].append(gs)
                minus.append(rep.eps_c_minus)
            summary = {"method": "exact-sum", "V": int(v),
                       "model": _spec_for_size(spec, v).to_dict(),
                       "n_seeds": n_seeds, "seeds": seeds,
                       "mean_eps_c_minus": float(np.mean(minus)),
                       "std_eps_c_minus": float(np.std(minus, ddof=1))}
            path = out / f"report_V{v}.json"
            eio.write_json(path, summary)
            outputs.append(path)
        path = out / "critical_distribution.csv"
        eio.write_csv(path, dist)
        outputs.append(path)
        manifest.finalize(outputs)
        return EXIT_OK

    def unit(j):
        v = int(sizes[j])
        spec_v = _spec_for_size(spec, v)
        chosen = select_method(spec_v) if method == "auto" else method
        log.info("V = %d: %s", v, chosen)
        rep = _critical_one(spec_v, chosen, block, rngs[j], args)
        payload = rep.to_json()
        if chosen == "stochastic-trace":
            payload["seed"] = {"root": seed, "unit": j}
            if block["cross_check"] and _is_free_fermion(spec_v):
                ref = _critical_one(spec_v, "free-fermion", block, None,
                                    args)
                z = abs(rep.eps_c_minus - ref.eps_c_minus) / rep.stderr[0]
                payload["cross_check"] = {
                    "method": "free-fermion",
                    "eps_c_minus": ref.eps_c_minus,
                    "z_score": z, "within_3_stderr": bool(z <= 3.0)}
        path = out / f"report_V{v}.json"
        eio.write_json(path, payload)
        return path, rep, chosen

    for path, rep, chosen in _pool_map(args, unit, range(len(sizes))):
        outputs.append(path)
        rows["V"].append(rep.n_sites)
        rows["method"].append(chosen)
        rows["eps_c_minus"].append(rep.eps_c_minus)
        rows["eps_c_plus"].append(math.nan if rep.eps_c_plus is None
                                  else rep.eps_c_plus)
        se = rep.stderr or (math.nan, math.nan)
        rows["stderr_minus"].append(se[0])
        rows["stderr_plus"].append(math.nan if se[1] is None else se[1])
    path = out / "critical.csv"
    eio.write_csv(path, rows)
    outputs.append(path)
    manifest.finalize(outputs)
    return EXIT_OK


# -- ensemble ----------------------------------------------------------------

def cmd_ensemble(args, conf, manifest):
    spec = conf["model"]
    block = conf["ensemble"]
    if block["method"] not in ("auto", "spectral-sum", "free-fermion"):
        raise ConfigError("[ensemble] method must be auto, spectral-sum or "
                          "free-fermion")
    sizes = block["sizes"] or [spec.n_sites]
    manifest.start()
    out = Path(args.out)
    if block["method"] == "free-fermion" and not _is_free_fermion(spec):
        raise ConfigError("free-fermion curves need an open TFIM1D chain")
    betas = None if block["betas"] is None else \
        np.asarray(block["betas"], dtype=float)

    def unit(v):
        spec_v = _spec_for_size(spec, v)
        use_ff = block["method"] == "free-fermion" or (
            block["method"] == "auto" and _is_free_fermion(spec_v)
            and int(v) > 12)
        if use_ff:
            return _ensemble_free_fermion(spec_v, block, betas, out)
        return _ensemble_spectral(spec_v, block, betas, out, args)

    outputs = [p for paths in _pool_map(args, unit, sizes) for p in paths]
    manifest.finalize(outputs)
    return EXIT_OK


def _write_curve(path, curve):
    curve.check_monotone()
    eio.write_csv(path, curve.columns())
    return path


def _ensemble_free_fermion(spec, block, betas, out):
    v = spec.n_sites
    sp_ = jordan_wigner_spectrum(v, float(spec.param("J")),
                                 float(spec.param("h_x")))
    moments = sp_.moments()
    written = []
    if block["curve"]:
        if betas is None:
            betas = default_beta_grid(sp_.dim, int(block["points"]))
        curve = free_fermion_curve(sp_, betas)
        written.append(_write_curve(out / f"curve_V{v}.csv", curve))
    if block["scaling"]:
        window = critical_window_curve(sp_, moments,
                                       eta_max=float(block["eta_max"]),
                                       points=int(block["scaling_points"]))
        window.check_monotone()
        e_c = free_fermion_report(sp_).eps_c_minus
        data = scaling_transform(window, moments, e_c)
        path = out / f"scaling_V{v}.csv"
        eio.write_csv(path, {"eta": data.eta, "p_rescaled": data.p_rescaled,
                             "f_eta": data.f_eta})
        written.append(path)
    return written


def _ensemble_spectral(spec, block, betas, out, args):
    v = spec.n_sites
    op = build(spec, exact_degeneracy_only=args.exact_degeneracy_only,
               **({"diagonalize": False}
                  if spec.family in RANDOM_FAMILIES else {}))
    evals = op.eigenvalues()
    g, a = op.ground.degeneracy, op.anti_ground.degeneracy
    written = []
    if block["near_degeneracy"]:
        near = near_degeneracy_curve(evals, betas)
        written.append(_write_curve(out / f"curve_V{v}.csv", near.curve))
        path = out / f"near_degeneracy_V{v}.json"
        eio.write_json(path, {"V": v, "model": spec.to_dict(),
                          "eps_c1": near.eps_c1, "eps_c0": near.eps_c0,
                          "gap": near.gap})
        written.append(path)
        return written
    if block["curve"]:
        curve = ensemble_curve(evals, betas, ground_degeneracy=g,
                               anti_degeneracy=a)
        written.append(_write_curve(out / f"curve_V{v}.csv", curve))
    if block["scaling"]:
        if op.representation == "tridiagonal":
            moments = spectral_moments(Hamiltonian(evals, "diagonal", v,
                                                   check_dimension=False))
        else:
            moments = spectral_moments(op)
        e_c = exact_critical_energy(evals, g, a, n_sites=v).eps_c_minus
        grid = window_betas(evals, moments, e_c,
                            eta_max=float(block["eta_max"]),
                            points=int(block["scaling_points"]))
        window = ensemble_curve(evals, grid, ground_degeneracy=g,
                                anti_degeneracy=a)
        window.check_monotone()
        data = scaling_transform(window, moments, e_c, n_states=evals.size)
        path = out / f"scaling_V{v}.csv"
        eio.write_csv(path, {"eta": data.eta, "p_rescaled": data.p_rescaled,
                             "f_eta": data.f_eta})
        written.append(path)
    return written


# -- models list and selftest ------------------------------------------------

def cmd_models_list(args):
    for fam in FAMILIES:
        params = ", ".join(
            f"{k}={'<required>' if d is None else d}"
            for k, d in _DEFAULT_PARAMS[fam].items()) or "-"
        print(f"{fam:<13} boundary={_DEFAULT_BOUNDARY[fam]:<9} {params}")
    return EXIT_OK


def cmd_selftest(args):
    from . import selftest
    ok = selftest.run(verbose=True)
    return EXIT_OK if ok else EXIT_NUMERICAL


# -- entry point ---------------------------------------------------------------

def build_parser():
    parser = argparse.ArgumentParser(
        prog="eigencond",
        description="Typical-ensemble eigenstate condensation toolkit.")
    parser.add_argument("--version", action="version",
                        version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", required=True, help="TOML config file")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--seed", type=int, default=None,
                       help="root seed (overrides the config)")
        p.add_argument("--threads", type=int, default=None,
                       help="worker count (default: $EIGENCOND_THREADS or 1)")
        p.add_argument("--exact-degeneracy-only", action="store_true",
                       help="group only exactly degenerate extremal states")

    common(sub.add_parser("sample", help="nested sampling from both ends"))
    p = sub.add_parser("critical", help="critical energy densities")
    common(p)
    p.add_argument("--method", default=None,
                   choices=("auto", "exact-sum", "stochastic-trace",
                            "free-fermion", "moment-expansion"))
    common(sub.add_parser("ensemble", help="typical-ensemble curves"))
    models = sub.add_parser("models", help="model catalog")
    msub = models.add_subparsers(dest="models_command", required=True)
    msub.add_parser("list", help="list model families")
    sub.add_parser("selftest", help="run internal consistency checks")
    return parser


_COMMANDS = {"sample": cmd_sample, "critical": cmd_critical,
             "ensemble": cmd_ensemble}


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose
                        else logging.WARNING,
                        format="%(levelname)s %(message)s")
    if args.command == "models":
        return cmd_models_list(args)
    if args.command == "selftest":
        return cmd_selftest(args)

    manifest = None
    try:
        conf = load_config(args.config)
        _threads(args)
        manifest = eio.RunManifest(
            args.out, " ".join(["eigencond"] + list(argv or sys.argv[1:])),
            model=conf["model"].to_dict(),
            config={k: v for k, v in conf["raw"].items() if k != "model"})
        return _COMMANDS[args.command](args, conf, manifest)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        if manifest is not None and manifest.path.exists():
            manifest.finalize([], status="config-error", error=str(exc))
        return EXIT_CONFIG
    except KeyboardInterrupt:
        print("interrupted", file=sys.stderr)
        if manifest is not None and manifest.path.exists():
            manifest.finalize([], status="interrupted")
        return EXIT_INTERRUPTED
    except (ArithmeticError, RuntimeError, ValueError,
            np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}",
              file=sys.stderr)
        if manifest is not None and manifest.path.exists():
            manifest.finalize([], status="failed",
                              error=f"{type(exc).__name__}: {exc}")
        return EXIT_NUMERICAL


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
