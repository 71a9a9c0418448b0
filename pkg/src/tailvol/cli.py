"""Command-line interface.

Subcommands cover the research loop end to end: ``estimate`` fits filter
parameters to return panels, ``filters`` runs a fitted spec over a series,
``varswap``/``moments`` price from a state and premia, ``calibrate`` backs
premia out of option chains, ``smile`` prices a Monte Carlo smile and
``validate`` checks a premia triple against its consistency bounds.

Exit codes: 0 success, 2 configuration problem (bad flags or config JSON),
3 unusable input data, 4 model or numerical failure.  Output artifacts are
deterministic for fixed inputs and seed, and embed the package version plus
a digest of the effective configuration.
"""

from __future__ import annotations

import argparse
import math
import sys

import numpy as np

from . import __version__
from .calibration import CalibrationInput, calibrate_sequential
from .data import (
    config_digest,
    dump_json,
    load_json,
    load_option_chains,
    load_return_panel,
    load_return_series,
    noise_from_dict,
    noise_to_dict,
    premia_from_dict,
    premia_to_dict,
    spec_from_dict,
    spec_to_dict,
    state_from_dict,
    state_to_dict,
    write_states_csv,
)
from .estimation import FreeParams, fit_garch
from .expansion import ForwardVarianceCurve, expansion_coefficients, expansion_integrals, model_moments, atm_skew
from .filters import DataError, FilterKind, NoiseModel, compute_filters
from .measure import (
    ModelError,
    kurtosis_bound,
    noise_moments,
    omega_eigen,
    pricing_params,
    validate_premia,
    varswap_price,
)
from .pricer import McConfig, smile
from .replication import market_moment_triple, replicate_moments, select_otm

__all__ = ["main"]


class ConfigError(ValueError):
    """Raised for malformed command-line or config-file input."""


def _floats(text: str) -> list[float]:
    try:
        return [float(tok) for tok in text.split(",") if tok.strip()]
    except ValueError as exc:
        raise ConfigError(f"expected comma-separated numbers, got {text!r}") from exc


def _strike_grid(text: str) -> np.ndarray:
    """Either ``lo:hi:n`` (inclusive linspace) or a comma list."""
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise ConfigError(f"strike grid must be lo:hi:n, got {text!r}")
        try:
            lo, hi, n = float(parts[0]), float(parts[1]), int(parts[2])
        except ValueError as exc:
            raise ConfigError(f"bad strike grid {text!r}") from exc
        if not (0.0 < lo < hi and n >= 2):
            raise ConfigError(f"strike grid needs 0 < lo < hi and n >= 2, got {text!r}")
        return np.linspace(lo, hi, n)
    grid = np.array(_floats(text))
    if grid.size == 0:
        raise ConfigError("empty strike grid")
    return grid


def _noise_from_args(args: argparse.Namespace) -> NoiseModel:
    try:
        return NoiseModel(family=args.noise_family, dof=args.noise_dof)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _load_spec(path: str):
    return spec_from_dict(load_json(path))


def _load_state(path: str, spec=None):
    return state_from_dict(load_json(path), spec)


def _load_premia(path: str):
    return premia_from_dict(load_json(path))


def _emit(args: argparse.Namespace, text: str) -> None:
    if getattr(args, "out", None):
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


# --- subcommands ------------------------------------------------------------


def _cmd_estimate(args: argparse.Namespace) -> int:
    noise = _noise_from_args(args)
    kinds = []
    for tok in args.kinds.split(","):
        tok = tok.strip().lower()
        if tok in ("symmetric", "sym", "s"):
            kinds.append(FilterKind.SYMMETRIC)
        elif tok in ("asymmetric", "asym", "a"):
            kinds.append(FilterKind.ASYMMETRIC)
        else:
            raise ConfigError(f"unknown filter kind {tok!r}")
    weights = _floats(args.init_weights)
    lengths = _floats(args.init_lengths)
    if not (len(kinds) == len(weights) == len(lengths)):
        raise ConfigError(
            f"kinds/init-weights/init-lengths must have equal length, got "
            f"{len(kinds)}/{len(weights)}/{len(lengths)}"
        )
    init = FreeParams(weights=tuple(weights), lengths=tuple(lengths), kinds=tuple(kinds))
    panel = load_return_panel(args.series)
    result = fit_garch(panel, noise, init, seed=args.seed, n_restarts=args.restarts)

    cfg = {
        "command": "estimate",
        "series": [str(p) for p in args.series],
        "noise": noise_to_dict(noise),
        "init": {"weights": weights, "lengths": lengths, "kinds": args.kinds},
        "seed": args.seed,
        "restarts": args.restarts,
    }
    payload = {
        "version": __version__,
        "config_digest": config_digest(cfg),
        "converged": result.converged,
        "nll": result.nll,
        "n_iter": result.n_iter,
        "params": {
            "base_weight": result.params.base_weight,
            "weights": list(result.params.weights),
            "lengths": list(result.params.lengths),
            "kinds": [k.value for k in result.params.kinds],
        },
        "spec": spec_to_dict(result.params.to_spec(base_length_days=args.base_length)),
    }
    dump_json(args.out, payload)
    print(f"wrote {args.out} (nll={result.nll:.6f}, converged={result.converged})")
    return 0


def _cmd_filters(args: argparse.Namespace) -> int:
    spec = _load_spec(args.spec)
    series = load_return_series(args.series)
    states = compute_filters(series, spec)
    write_states_csv(args.out, states)
    if args.state_out:
        payload = {"version": __version__, **state_to_dict(states[-1])}
        dump_json(args.state_out, payload)
    print(f"wrote {args.out} ({len(states)} states)")
    return 0


def _cmd_varswap(args: argparse.Namespace) -> int:
    spec = _load_spec(args.spec)
    state = _load_state(args.state, spec)
    premia = _load_premia(args.premia)
    maturities = _floats(args.maturities)
    if any(t <= 0 for t in maturities):
        raise ConfigError("maturities must be positive")
    eig = omega_eigen(spec, premia)
    lines = ["maturity_years,total_variance,fair_vol"]
    for t in maturities:
        total = varswap_price(state, eig, premia, t)
        if total <= 0.0:
            raise ModelError(f"non-positive varswap price {total!r} at maturity {t}")
        lines.append(f"{t!r},{total!r},{(total / t) ** 0.5!r}")
    _emit(args, "\n".join(lines) + "\n")
    return 0


def _cmd_moments(args: argparse.Namespace) -> int:
    spec = _load_spec(args.spec)
    state = _load_state(args.state, spec)
    premia = _load_premia(args.premia)
    noise = _noise_from_args(args)
    mom = noise_moments(noise)
    expiries = _floats(args.expiries)
    if any(t <= 0 for t in expiries):
        raise ConfigError("expiries must be positive")

    params = pricing_params(spec, premia, mom)
    eig = omega_eigen(spec, premia)
    curve = ForwardVarianceCurve.from_state(state, eig, premia)
    lines = ["expiry_years,vswap_vol,skew_moment,kurt_moment,atm_skew"]
    for t in expiries:
        coeffs = expansion_coefficients(eig, params, expansion_integrals(curve, t))
        trip = model_moments(coeffs)
        lines.append(
            f"{t!r},{trip.vswap_vol!r},{trip.skew_m!r},{trip.kurt_m!r},{atm_skew(coeffs)!r}"
        )
    _emit(args, "\n".join(lines) + "\n")
    return 0


def _cmd_calibrate(args: argparse.Namespace) -> int:
    spec = _load_spec(args.spec)
    state = _load_state(args.state, spec)
    noise = _noise_from_args(args)
    chains = load_option_chains(args.chains)
    if args.delta_range:
        lo, hi = _floats(args.delta_range)
        chains = [select_otm(c, lo, hi) for c in chains]
    market = []
    for chain in chains:
        m1, m2, m3 = replicate_moments(chain)
        market.append((chain.expiry_years, market_moment_triple(m1, m2, m3, chain.expiry_years)))
    inputs = CalibrationInput(
        state=state, spec=spec, noise=noise_moments(noise), market=tuple(market)
    )
    result = calibrate_sequential(inputs, mode=args.mode)

    cfg = {
        "command": "calibrate",
        "spec": spec_to_dict(spec),
        "state": state_to_dict(state),
        "chains": str(args.chains),
        "noise": noise_to_dict(noise),
        "mode": args.mode,
        "delta_range": args.delta_range,
    }
    payload = {
        "version": __version__,
        "config_digest": config_digest(cfg),
        **premia_to_dict(result.premia),
        "bound_saturated": result.bound_saturated,
        "kurtosis_floor": result.kurtosis_floor,
        # a saturated kurtosis stage has no residual; JSON has no NaN
        "stage_residuals": {
            name: None if math.isnan(stage.residual) else stage.residual
            for name, stage in result.stages.items()
        },
    }
    dump_json(args.out, payload)
    print(
        f"wrote {args.out} (lambda2={result.premia.lambda2:.4f}, "
        f"lambda3={result.premia.lambda3:.4f}, lambda4={result.premia.lambda4:.4f}"
        f"{', kurtosis floor saturated' if result.bound_saturated else ''})"
    )
    return 0


def _cmd_smile(args: argparse.Namespace) -> int:
    spec = _load_spec(args.spec)
    state = _load_state(args.state, spec)
    premia = _load_premia(args.premia)
    noise = _noise_from_args(args)
    expiries = _floats(args.expiries)
    grid = _strike_grid(args.strikes)
    cfg = McConfig(n_paths=args.paths, seed=args.seed, antithetic=not args.no_antithetic)
    surface = smile(spec, premia, state, noise_moments(noise), expiries, grid, cfg)

    lines = ["expiry_years,strike,implied_vol,stderr"]
    for t, ks, vols, errs in zip(
        surface.expiries, surface.strikes, surface.vols, surface.stderrs
    ):
        for k, v, e in zip(ks, vols, errs):
            lines.append(f"{float(t)!r},{float(k)!r},{float(v)!r},{float(e)!r}")
    _emit(args, "\n".join(lines) + "\n")
    for t, k, reason in surface.dropped:
        print(f"dropped expiry {t} strike {k}: {reason}", file=sys.stderr)
    return 0


def _cmd_validate(args: argparse.Namespace) -> int:
    spec = _load_spec(args.spec)
    premia = _load_premia(args.premia)
    noise = _noise_from_args(args)
    mom = noise_moments(noise)
    check = validate_premia(spec, premia, mom)
    floor = kurtosis_bound(premia.lambda2, premia.lambda3, mom, spec)
    print(f"rho_plus         = {check.rho_plus:+.6f}")
    print(f"rho_minus        = {check.rho_minus:+.6f}")
    print(f"rho_cross        = {check.rho_cross:+.6f}")
    print(f"rho_cross_resid  = {check.rho_cross_resid:+.6f}")
    print(f"kurtosis floor   = {floor:+.6f} (lambda4 = {premia.lambda4:+.6f})")
    if check.ok:
        print("premia admissible")
        return 0
    print("violated: " + ", ".join(check.violations))
    return 4


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tailvol",
        description="Multi-scale variance filters, tail-risk premia and option pricing.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_noise(p: argparse.ArgumentParser) -> None:
        p.add_argument("--noise-family", default="gaussian", choices=["gaussian", "student_t"])
        p.add_argument("--noise-dof", type=float, default=None, help="student_t degrees of freedom")

    p = sub.add_parser("estimate", help="fit filter weights/lengths to return series")
    p.add_argument("series", nargs="+", help="CSV files with date,return or date,price")
    p.add_argument("--out", required=True, help="output JSON path")
    p.add_argument("--kinds", default="symmetric", help="comma list: symmetric|asymmetric")
    p.add_argument("--init-weights", default="0.2", help="starting weights, comma list")
    p.add_argument("--init-lengths", default="30", help="starting lengths (days), comma list")
    p.add_argument("--base-length", type=float, default=1000.0, help="slow baseline filter length")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--restarts", type=int, default=3)
    add_noise(p)
    p.set_defaults(func=_cmd_estimate)

    p = sub.add_parser("filters", help="run a spec's filters over a return series")
    p.add_argument("series", help="CSV file with date,return or date,price")
    p.add_argument("--spec", required=True, help="spec JSON")
    p.add_argument("--out", required=True, help="output CSV of filter states")
    p.add_argument("--state-out", default=None, help="also write the final state JSON here")
    p.set_defaults(func=_cmd_filters)

    p = sub.add_parser("varswap", help="variance-swap term structure from a state")
    p.add_argument("--spec", required=True)
    p.add_argument("--state", required=True)
    p.add_argument("--premia", required=True)
    p.add_argument("--maturities", required=True, help="comma list of years")
    p.add_argument("--out", default=None, help="output CSV (default stdout)")
    p.set_defaults(func=_cmd_varswap)

    p = sub.add_parser("moments", help="model-implied moment triples per expiry")
    p.add_argument("--spec", required=True)
    p.add_argument("--state", required=True)
    p.add_argument("--premia", required=True)
    p.add_argument("--expiries", required=True, help="comma list of years")
    p.add_argument("--out", default=None, help="output CSV (default stdout)")
    add_noise(p)
    p.set_defaults(func=_cmd_moments)

    p = sub.add_parser("calibrate", help="back premia out of option chains")
    p.add_argument("--spec", required=True)
    p.add_argument("--state", required=True)
    p.add_argument("--chains", required=True, help="option quotes CSV")
    p.add_argument("--out", required=True, help="output premia JSON")
    p.add_argument("--mode", default="fit_all", choices=["fit_all", "saturate_kurtosis"])
    p.add_argument(
        "--delta-range",
        default=None,
        help="keep only OTM quotes with |delta| in lo,hi (needs quoted vols or deltas)",
    )
    add_noise(p)
    p.set_defaults(func=_cmd_calibrate)

    p = sub.add_parser("smile", help="Monte Carlo implied-volatility smile")
    p.add_argument("--spec", required=True)
    p.add_argument("--state", required=True)
    p.add_argument("--premia", required=True)
    p.add_argument("--expiries", required=True, help="comma list of years")
    p.add_argument("--strikes", required=True, help="lo:hi:n or comma list (forward = 1)")
    p.add_argument("--paths", type=int, default=100_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--no-antithetic", action="store_true")
    p.add_argument("--out", default=None, help="output CSV (default stdout)")
    add_noise(p)
    p.set_defaults(func=_cmd_smile)

    p = sub.add_parser("validate", help="check a premia triple against its bounds")
    p.add_argument("--spec", required=True)
    p.add_argument("--premia", required=True)
    add_noise(p)
    p.set_defaults(func=_cmd_validate)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except ModelError as exc:
        print(f"model error: {exc}", file=sys.stderr)
        return 4
    except (OSError, ValueError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
