"""Command-line entry point.

Subcommands: analyze, sweep, bottleneck, stability, localize, simulate, export.
Human-readable text and reports go to stdout; failures are written to stderr as
JSON ``{"code", "message", "context"}`` with exit status 2.  ``simulate`` exits
with status 3 when any Monte Carlo estimate sits more than 5 standard errors
from its spectral value.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import bottleneck as bn
from . import noise, simulate, stability
from .chain_models import (
    FAMILIES,
    Chain,
    FamilySpec,
    family_size,
    load_chain,
    make_family,
    save_chain,
)
from .errors import CapExceeded, InvalidParams, MarkovNoiseError
from .spectral import DEFAULT_MAX_STATES, decompose
from .specs import load_observable, observable_from_dict, write_csv

EXIT_SPEC_ERROR = 2
EXIT_MC_MISMATCH = 3
Z_TRIPWIRE = 5.0

CURVE_HEADER = ["alpha", "covariance", "flip_probability"]
SWEEP_BASE_HEADER = [
    "n",
    "n_states",
    "lambda1",
    "t_rel",
    "phi_star",
    "phi_method",
    "ratio_phi_lambda",
    "restricted_min",
    "gap_statistic",
    "lambda1_times_n2",
    "phi_star_times_n",
]
SIMULATE_HEADER = ["quantity", "t", "spectral", "estimate", "std_error", "trials", "seed", "z"]


@dataclass
class RunConfig:
    command: str
    chain: Path | None = None
    functions: list = field(default_factory=list)
    alphas: np.ndarray = field(default_factory=lambda: noise.DEFAULT_ALPHAS.copy())
    ks: list = field(default_factory=lambda: [1.5, 2.0, 4.0, 8.0])
    trials: int = 100_000
    seed: int | None = None
    out: Path | None = None
    fmt: str = "json"
    threads: int | None = None


def _float_list(text: str) -> list:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated list of numbers: {text!r}")


def _config(args) -> RunConfig:
    cfg = RunConfig(command=args.command)
    if getattr(args, "chain", None):
        cfg.chain = Path(args.chain)
        if not cfg.chain.exists():
            raise InvalidParams(f"chain spec {args.chain} does not exist", path=args.chain)
    for f in getattr(args, "function", None) or []:
        if not Path(f).exists():
            raise InvalidParams(f"function spec {f} does not exist", path=f)
        cfg.functions.append(Path(f))
    if getattr(args, "alphas", None) is not None:
        a = np.asarray(args.alphas, dtype=float)
        allow_zero = args.command == "simulate"
        if a.size == 0 or np.any(a < 0) or (not allow_zero and np.any(a == 0)):
            raise InvalidParams("alpha grid must be positive", alphas=a.tolist())
        if np.any(np.diff(a) <= 0):
            raise InvalidParams("alpha grid must be strictly ascending", alphas=a.tolist())
        cfg.alphas = a
    if getattr(args, "k", None) is not None:
        cfg.ks = list(args.k)
    cfg.trials = getattr(args, "trials", cfg.trials) or cfg.trials
    cfg.seed = getattr(args, "seed", None)
    cfg.out = Path(args.out) if getattr(args, "out", None) else None
    cfg.fmt = getattr(args, "format", "json") or "json"
    threads = getattr(args, "threads", None) or int(os.environ.get("MARKOV_NOISE_THREADS", 0))
    cfg.threads = threads or None
    return cfg


def _emit_json(cfg: RunConfig, payload: dict, name: str = "report.json") -> None:
    text = json.dumps(payload, indent=2, default=_jsonable)
    if cfg.out is None:
        print(text)
        return
    target = cfg.out / name if cfg.out.is_dir() else cfg.out
    target.write_text(text + "\n", encoding="utf-8")


def _jsonable(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(type(obj).__name__)


def _spectrum_summary(dec) -> dict:
    vals = dec.eigenvalues
    return {
        "n_states": dec.n_states,
        "lambda1": dec.spectral_gap,
        "t_rel": dec.relaxation_time,
        "lambda_max": float(vals[-1]),
        "gap_multiplicity": len(dec.band_of(dec.gap_index)),
        "n_bands": len(dec.bands),
        "eigenvalues_head": vals[: min(10, vals.size)].tolist(),
    }


def _bottleneck_section(chain: Chain, dec, threads=None) -> dict:
    if chain.n_states <= bn.ENUMERATION_CAP:
        rep = bn.exact_bottleneck(chain, threads=threads)
    else:
        rep = bn.sweep_cut(dec, chain)
    out = rep.to_dict(chain.states)
    out["lambda1"] = dec.spectral_gap
    out["ratio_phi_lambda"] = rep.phi / dec.spectral_gap
    return out


def _function_section(chain, dec, name, f, cfg) -> tuple:
    prof = noise.fourier_profile(dec, f)
    section = {"name": name, **prof.to_dict()}
    section["bands"] = {
        str(k): {
            "sensitivity_band_mass": noise.sensitivity_band_mass(prof, k),
            "stability_tail_mass": noise.stability_tail_mass(prof, k),
        }
        for k in cfg.ks
    }
    cov = noise.covariance_curve(prof, cfg.alphas)
    flips = noise.flip_curve(prof, cfg.alphas) if prof.is_boolean else [(a, None) for a, _ in cov]
    rows = [[a, c, fl] for (a, c), (_, fl) in zip(cov, flips)]
    if prof.is_boolean:
        mask = f.values.astype(bool)
        if mask.any() and not mask.all():
            section["pi_mass"] = float(chain.pi[mask].sum())
            section["phi"] = bn.phi(chain, mask)
    return section, rows


def cmd_analyze(cfg: RunConfig) -> int:
    chain = load_chain(cfg.chain)
    dec = decompose(chain)
    report = {
        "chain": {"n_states": chain.n_states, "family": chain.family.to_dict() if chain.family else None},
        "spectrum": _spectrum_summary(dec),
        "sensitive_existence_gap": noise.sensitive_existence_gap(dec),
        "uniform_pi": bool(np.allclose(chain.pi, 1.0 / chain.n_states, rtol=0, atol=1e-12)),
        "bottleneck": _bottleneck_section(chain, dec, cfg.threads),
        "functions": [],
    }
    curves = {}
    for path in cfg.functions:
        f = load_observable(path, chain, dec)
        section, rows = _function_section(chain, dec, path.stem, f, cfg)
        report["functions"].append(section)
        curves[path.stem] = rows
    if cfg.out is not None:
        cfg.out.mkdir(parents=True, exist_ok=True)
        _emit_json(cfg, report)
        for name, rows in curves.items():
            write_csv(cfg.out / f"curve_{name}.csv", CURVE_HEADER, rows)
    elif cfg.fmt == "csv":
        for name, rows in curves.items():
            print(f"# {name}")
            write_csv(sys.stdout, CURVE_HEADER, rows)
    else:
        for section in report["functions"]:
            section["curve"] = curves[section["name"]]
        _emit_json(cfg, report)
    return 0


def _sweep_functions(cfg: RunConfig) -> list:
    specs = []
    for path in cfg.functions:
        data = json.loads(path.read_text(encoding="utf-8"))
        if data.get("type") not in ("dictator", "threshold"):
            raise InvalidParams(
                "sweep functions must be size-independent (dictator or threshold)", path=str(path)
            )
        specs.append((path.stem, data))
    return specs


def cmd_sweep(cfg: RunConfig, family: str, n_values, slice_k: int | None, max_states: int) -> int:
    funcs = _sweep_functions(cfg)
    header = list(SWEEP_BASE_HEADER)
    for name, _ in funcs:
        for k in cfg.ks:
            header += [f"{name}_low_k{k:g}", f"{name}_tail_k{k:g}"]
    rows = []
    for n in n_values:
        params = {"n": n} if family != "slice_exclusion" else {"n": n, "k": slice_k}
        size = family_size(family, **params)
        if size > max_states:
            raise CapExceeded(f"{family}(n={n}) has {size} states", cap=max_states)
        chain = make_family(FamilySpec(family, params))
        dec = decompose(chain, max_states)
        lam = dec.spectral_gap
        if chain.n_states <= bn.ENUMERATION_CAP:
            restricted = bn.nondegenerate_minimizer(chain, threads=cfg.threads)
            phi_star, method, rmin = restricted.phi_star, "exact", restricted.phi
        else:
            phi_star, method, rmin = bn.sweep_cut(dec, chain).phi, "sweep", None
        row = [
            n,
            chain.n_states,
            lam,
            1.0 / lam,
            phi_star,
            method,
            phi_star / lam,
            rmin,
            noise.sensitive_existence_gap(dec),
            lam * n * n,
            phi_star * n,
        ]
        for _, data in funcs:
            prof = noise.fourier_profile(dec, observable_from_dict(chain, dec, data))
            for k in cfg.ks:
                row += [noise.sensitivity_band_mass(prof, k), noise.stability_tail_mass(prof, k)]
        rows.append(row)
    if cfg.out is not None:
        write_csv(cfg.out, header, rows)
    else:
        write_csv(sys.stdout, header, rows)
    return 0


def cmd_bottleneck(cfg: RunConfig, mode: str) -> int:
    chain = load_chain(cfg.chain)
    dec = decompose(chain)
    if mode == "auto":
        mode = "exact" if chain.n_states <= bn.ENUMERATION_CAP else "sweep"
    report = {"lambda1": dec.spectral_gap, "t_rel": dec.relaxation_time}
    sweep = bn.sweep_cut(dec, chain)
    report["sweep"] = sweep.to_dict(chain.states)
    if mode == "exact":
        restricted = bn.nondegenerate_minimizer(chain, threads=cfg.threads)
        exact = bn.exact_bottleneck(chain, threads=cfg.threads)
        phi_star = exact.phi
        report["exact"] = exact.to_dict(chain.states)
        report["restricted"] = restricted.to_dict(chain.states)
        report["cheeger"] = {
            "phi_star": phi_star,
            "lambda1": dec.spectral_gap,
            "lower": phi_star**2,
            "middle": 2 * dec.spectral_gap,
            "upper": 4 * phi_star,
            "holds": bool(
                phi_star**2 <= 2 * dec.spectral_gap + 1e-9
                and 2 * dec.spectral_gap <= 4 * phi_star + 1e-9
            ),
        }
    _emit_json(cfg, report)
    return 0


def cmd_stability(cfg: RunConfig, delta: float, epsilon: float, budget: int, g_exponent: float) -> int:
    chain = load_chain(cfg.chain)
    dec = decompose(chain)
    k = cfg.ks[0] if cfg.ks else 1.0
    sweep = stability.threshold_sweep(dec, 1.0, delta, g_exponent, cfg.alphas)
    payload = {
        "threshold_sweep": sweep.to_dict(),
        "condition_b": [
            stability.condition_b_probe(dec, kk, epsilon, budget, cfg.seed).to_dict()
            for kk in (cfg.ks or [k])
        ],
    }
    payload["threshold_sweep"]["best"]["indicator_states"] = [
        chain.states[i] for i in np.nonzero(sweep.best.indicator.values)[0]
    ]
    _emit_json(cfg, payload)
    return 0


def cmd_localize(cfg: RunConfig, deltas, norm_mode: str) -> int:
    chain = load_chain(cfg.chain)
    dec = decompose(chain)
    psi1 = dec.eigenvectors[:, dec.gap_index]
    payload = {
        "psi1": stability.localization_report(
            dec.pi, deltas, vector=psi1, norm_mode=norm_mode
        ).to_dict(chain.states),
        "bands": [],
    }
    for band in dec.bands[1:]:
        rep = stability.localization_report(dec.pi, deltas, dec=dec, band=band, norm_mode=norm_mode)
        entry = rep.to_dict(chain.states)
        entry["eigenvalue"] = float(dec.eigenvalues[band[0]])
        entry["dim"] = len(band)
        payload["bands"].append(entry)
    _emit_json(cfg, payload)
    return 0


def cmd_simulate(cfg: RunConfig) -> int:
    if cfg.seed is None:
        raise InvalidParams("simulate needs --seed")
    chain = load_chain(cfg.chain)
    dec = decompose(chain)
    t_rel = dec.relaxation_time
    rows = []
    functions = [(p.stem, load_observable(p, chain, dec)) for p in cfg.functions]
    for alpha in cfg.alphas:
        t = float(alpha * t_rel)
        est = simulate.estimate_return_prob(chain, t, cfg.trials, cfg.seed, cfg.threads)
        exact = noise.return_probability(dec, t)
        rows.append(["return_probability", t, exact, est.point_estimate, est.std_error, est.trials, est.seed, est.z_score(exact)])
        for name, f in functions:
            prof = noise.fourier_profile(dec, f)
            est = simulate.estimate_cov(chain, f, t, cfg.trials, cfg.seed, cfg.threads)
            exact = float(noise.covariance_at_times(prof, t)[0])
            rows.append([f"covariance:{name}", t, exact, est.point_estimate, est.std_error, est.trials, est.seed, est.z_score(exact)])
            if f.is_boolean:
                est = simulate.estimate_flip(chain, f, t, cfg.trials, cfg.seed, cfg.threads)
                exact = float(noise.flip_at_times(prof, t)[0])
                rows.append([f"flip_probability:{name}", t, exact, est.point_estimate, est.std_error, est.trials, est.seed, est.z_score(exact)])
    if cfg.fmt == "csv" or (cfg.out is not None and cfg.out.suffix == ".csv"):
        write_csv(cfg.out if cfg.out is not None else sys.stdout, SIMULATE_HEADER, rows)
    else:
        _emit_json(cfg, {"rows": [dict(zip(SIMULATE_HEADER, r)) for r in rows]})
    worst = max((abs(r[-1]) for r in rows), default=0.0)
    return EXIT_MC_MISMATCH if worst > Z_TRIPWIRE else 0


def cmd_export(cfg: RunConfig) -> int:
    chain = load_chain(cfg.chain)
    if cfg.out is None:
        print(json.dumps(chain.to_dict(), indent=1))
    else:
        save_chain(chain, cfg.out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="markov-noise",
        description="Spectral noise sensitivity/stability diagnostics for reversible Markov chains.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, chain=True):
        if chain:
            p.add_argument("--chain", required=True, help="chain spec JSON")
        p.add_argument("--out", help="output file or directory")
        p.add_argument("--format", choices=["json", "csv"], default="json")
        p.add_argument("--threads", type=int, help="worker threads (env MARKOV_NOISE_THREADS)")

    p = sub.add_parser("analyze", help="spectrum, profiles, curves and bottleneck summary")
    common(p)
    p.add_argument("--function", action="append", help="function spec JSON (repeatable)")
    p.add_argument("--alphas", type=_float_list)
    p.add_argument("--k", type=_float_list, help="band cut-offs, comma separated")

    p = sub.add_parser("sweep", help="per-n diagnostics over a family size range")
    common(p, chain=False)
    p.add_argument("--family", required=True, choices=FAMILIES)
    p.add_argument("--n-min", type=int, required=True)
    p.add_argument("--n-max", type=int, required=True)
    p.add_argument("--slice-k", type=int, default=2, help="weight k for slice_exclusion")
    p.add_argument("--max-states", type=int, default=DEFAULT_MAX_STATES)
    p.add_argument("--function", action="append", help="dictator/threshold spec JSON")
    p.add_argument("--k", type=_float_list)

    p = sub.add_parser("bottleneck", help="bottleneck ratio, Cheeger sandwich, restricted minimiser")
    common(p)
    mode = p.add_mutually_exclusive_group()
    mode.add_argument("--exact", dest="mode", action="store_const", const="exact")
    mode.add_argument("--sweep", dest="mode", action="store_const", const="sweep")
    p.set_defaults(mode="auto")

    p = sub.add_parser("stability", help="threshold sweep and condition (B) probe")
    common(p)
    p.add_argument("--k", type=_float_list)
    p.add_argument("--delta", type=float, default=0.2)
    p.add_argument("--epsilon", type=float, default=0.5)
    p.add_argument("--budget", type=int, default=360)
    p.add_argument("--g-exponent", type=float, default=1.0 / 3.0)
    p.add_argument("--alphas", type=_float_list)
    p.add_argument("--seed", type=int, required=True)

    p = sub.add_parser("localize", help="(L, delta)-localization of psi_1 and every band")
    common(p)
    p.add_argument("--delta", type=_float_list, default=[0.1])
    p.add_argument("--norm", choices=["pi", "counting"], default="pi")

    p = sub.add_parser("simulate", help="Monte Carlo cross-check against spectral values")
    common(p)
    p.add_argument("--function", action="append")
    p.add_argument("--alphas", type=_float_list, help="times as multiples of t_rel")
    p.add_argument("--trials", type=int, default=100_000)
    p.add_argument("--seed", type=int, required=True)

    p = sub.add_parser("export", help="write a chain spec in explicit generator form")
    common(p)
    return parser


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    cfg = _config(args)
    if args.command == "analyze":
        return cmd_analyze(cfg)
    if args.command == "sweep":
        if args.n_min > args.n_max:
            raise InvalidParams("n-min exceeds n-max")
        return cmd_sweep(
            cfg, args.family, range(args.n_min, args.n_max + 1), args.slice_k, args.max_states
        )
    if args.command == "bottleneck":
        return cmd_bottleneck(cfg, args.mode)
    if args.command == "stability":
        return cmd_stability(cfg, args.delta, args.epsilon, args.budget, args.g_exponent)
    if args.command == "localize":
        return cmd_localize(cfg, args.delta, "pi_weighted" if args.norm == "pi" else "counting")
    if args.command == "simulate":
        return cmd_simulate(cfg)
    return cmd_export(cfg)


def main(argv=None) -> int:
    try:
        return run(argv)
    except MarkovNoiseError as exc:
        print(json.dumps(exc.to_dict(), default=_jsonable), file=sys.stderr)
        return EXIT_SPEC_ERROR
    except (OSError, json.JSONDecodeError) as exc:
        err = {"code": type(exc).__name__, "message": str(exc), "context": {}}
        print(json.dumps(err), file=sys.stderr)
        return EXIT_SPEC_ERROR


if __name__ == "__main__":
    sys.exit(main())
