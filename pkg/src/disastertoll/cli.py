"""``disastertoll`` command line: fit | project | bootstrap | depend | simulate.

Exit codes: 0 success, 1 usage or configuration error, 2 data error,
3 convergence failure. Every output file carries the config hash and seed.
"""
from __future__ import annotations

import argparse
import json
import sys
import warnings
from pathlib import Path

import numpy as np

from . import pipeline as pl
from .bootstrap import BootstrapConfig, run_bootstrap
from .calibration import published_fits, simulate_events, ssp1_like_path, synthetic_covariates, POSITIVE_DEATH_EVENTS, WORLD_RATE_1960_2019
from .data_model import covariate_panel, load_covariates, write_covariates, write_events
from .dependence import (
    chi_bar,
    count_residual_correlation,
    filtered_margins,
    pair_annual_maxima,
    residual_null_band,
    with_null_band,
)
from .errors import BoundaryError, ConvergenceError, DataError, DomainError
from .projection import load_scenarios, project, splice_path, write_scenarios


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _write(path: Path, text: str) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")
    return path


def _scenarios(cfg: pl.RunConfig, covariates):
    paths = load_scenarios(cfg.path("scenarios"))
    if cfg.scenario:
        if cfg.scenario not in paths:
            raise DataError(f"{cfg.path('scenarios')}: no scenario named {cfg.scenario!r}")
        paths = {cfg.scenario: paths[cfg.scenario]}
    if cfg.splice:
        paths = {k: splice_path(p, covariates, cfg.reference_year) for k, p in paths.items()}
    return paths


# ---------------------------------------------------------------------------
# subcommands


def cmd_simulate(cfg: pl.RunConfig) -> list[Path]:
    """Synthetic events, covariates and a raw scenario file at the configured input paths."""
    covariates = synthetic_covariates()
    generator = {k: v for k, v in (published_fits(cfg.window) if cfg.fits in ("", "published") else pl.load_fits(cfg)).items()
                 if k in cfg.disaster_types}
    rng = pl.child_rng(cfg.seed, 3)
    kw = {}
    if cfg.simulate_counts == "fixed":
        n_years = cfg.window[1] - cfg.window[0] + 1
        kw["totals"] = {k: int(round(WORLD_RATE_1960_2019[k] * n_years)) for k in generator}
        kw["positive_share"] = {k: min(1.0, POSITIVE_DEATH_EVENTS[k] / kw["totals"][k]) for k in generator}
    data = simulate_events(generator, covariates, rng, cfg.window, cfg.simulate_counts,
                           reference_year=cfg.reference_year, **kw)
    head = cfg.header_lines
    written = []
    for key in ("events", "covariates", "scenarios"):
        cfg.path(key).parent.mkdir(parents=True, exist_ok=True)
        written.append(cfg.path(key))
    write_events(data.events, cfg.path("events"), head)
    write_covariates(covariates, cfg.path("covariates"), head)
    write_scenarios([ssp1_like_path(covariates)], cfg.path("scenarios"), head)
    gen = {k: {"frequency": f.to_dict(), "severity": s.to_dict()} for k, (f, s) in generator.items()}
    written.append(_write(cfg.out_dir / "simulate" / "generator.json",
                          pl.dump_json({"generator": gen}, {"config_sha256": cfg.sha256, "seed": cfg.seed})))
    return written


def cmd_fit(cfg: pl.RunConfig) -> list[Path]:
    inputs = pl.load_inputs(cfg)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        bundles = pl.fit_all(inputs, cfg.disaster_types, cfg.window, cfg.specs, cfg.alpha, cfg.jobs,
                             pl.ladder_overrides(cfg.ladder_overrides))
    target = cfg.out_dir / "fits"
    pl.write_fits(bundles, target, cfg)
    head = "".join(f"# {line}\n" for line in cfg.header_lines)
    table = _write(cfg.out_dir / "fit_table.txt", head + pl.render_fit_table(bundles))
    return sorted(target.iterdir()) + [table]


def cmd_project(cfg: pl.RunConfig) -> list[Path]:
    fits = pl.load_fits(cfg)
    covariates = load_covariates(cfg.path("covariates"))
    written = []
    for name, path in _scenarios(cfg, covariates).items():
        table = project(fits, path, cfg.horizons, cfg.reference_year, cfg.on_boundary)
        written.append(_write(cfg.out_dir / "projection" / f"{name}.csv", table.to_csv(cfg.header_lines)))
        head = "".join(f"# {line}\n" for line in cfg.header_lines)
        written.append(_write(cfg.out_dir / "projection" / f"{name}.txt", head + table.render_text()))
    return written


def cmd_bootstrap(cfg: pl.RunConfig) -> list[Path]:
    fits = pl.load_fits(cfg)
    covariates = load_covariates(cfg.path("covariates"))
    panel = covariate_panel(covariates, cfg.window)
    written, notes = [], []
    for s_idx, (name, path) in enumerate(_scenarios(cfg, covariates).items()):
        for t_idx, (kind, (f, s)) in enumerate(fits.items()):
            # one independent master seed per (scenario, type) cell
            seed = int(np.random.SeedSequence(cfg.seed, spawn_key=(4, s_idx, t_idx)).generate_state(2, np.uint64)[0])
            bc = BootstrapConfig(cfg.replications, seed, cfg.subsample_count, cfg.subsample_size,
                                 cfg.interval_level, cfg.jobs, keep_replicates=cfg.dump_replicates)
            with warnings.catch_warnings(record=True) as caught:
                warnings.simplefilter("always")
                try:
                    res = run_bootstrap(f, s, panel, path, bc, cfg.horizons, cfg.reference_year)
                except BoundaryError as exc:
                    # no GPD to simulate from at some historical cell
                    if cfg.on_boundary == "raise":
                        raise
                    notes.append(f"{name} {kind}: skipped, {exc}")
                    print(f"warning: {name} {kind}: bootstrap skipped, {exc}", file=sys.stderr)
                    continue
            for w in caught:
                print(f"warning: {w.message}", file=sys.stderr)
            head = cfg.header_lines + [f"replications={bc.replications}", f"refit_failures={res.refit_failures}"]
            written.append(_write(cfg.out_dir / "bootstrap" / f"{name}_{kind}.csv", res.to_csv(head)))
            if cfg.dump_replicates:
                written.append(_write(cfg.out_dir / "bootstrap" / f"{name}_{kind}_replicates.csv",
                                      res.replicates_csv(head)))
    if notes:
        head = "".join(f"# {line}\n" for line in cfg.header_lines)
        written.append(_write(cfg.out_dir / "bootstrap" / "skipped.txt", head + "\n".join(notes) + "\n"))
    return written


def cmd_depend(cfg: pl.RunConfig) -> list[Path]:
    inputs = pl.load_inputs(cfg)
    needed = sorted({t for p in pl.pair_list(cfg) for t in p})
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        overrides = pl.ladder_overrides(cfg.ladder_overrides)
        bundles = {k: pl.fit_type(inputs, k, cfg.window, cfg.specs, cfg.alpha, overrides) for k in needed}
    written, notes = [], []
    for i, (a, b) in enumerate(pl.pair_list(cfg)):
        fa, fb = bundles[a], bundles[b]
        corr = count_residual_correlation(fa.frequency, fb.frequency, inputs.panel, cfg.window_length)
        band = residual_null_band(fa.frequency, fb.frequency, inputs.panel, cfg.window_length,
                                  n_sim=cfg.null_simulations, rng=pl.child_rng(cfg.seed, 2, i, 0))
        corr = with_null_band(corr, band)
        written.append(_write(cfg.out_dir / "depend" / f"residual_{a}~{b}.csv", corr.to_csv(cfg.header_lines)))
        notes.append(f"{a}~{b}: residual correlation inside the null band in "
                     f"{100 * corr.inside_null_share():.0f}% of windows")
        sa, sb = inputs.samples[a], inputs.samples[b]
        ma = filtered_margins(fa.severity, sa)
        mb = filtered_margins(fb.severity, sb)
        ya, yb, pa, pb, keys = pair_annual_maxima(sa, sb, ma, mb)
        if len(keys) < 50:
            notes.append(f"{a}~{b}: only {len(keys)} paired annual maxima, chi-bar skipped")
            continue
        for j, variant in enumerate(("raw", "filtered")):
            curve = chi_bar(ya, yb, cfg.u_grid, variant, margins=(pa, pb), conventional=cfg.conventional,
                            band_resamples=cfg.chi_band_resamples, rng=pl.child_rng(cfg.seed, 2, i, 1 + j),
                            pair=(a, b))
            written.append(_write(cfg.out_dir / "depend" / f"chibar_{a}~{b}_{variant}.csv",
                                  curve.to_csv(cfg.header_lines)))
    head = "".join(f"# {line}\n" for line in cfg.header_lines)
    written.append(_write(cfg.out_dir / "depend" / "summary.txt", head + "\n".join(notes) + "\n"))
    return written


COMMANDS = {
    "fit": cmd_fit,
    "project": cmd_project,
    "bootstrap": cmd_bootstrap,
    "depend": cmd_depend,
    "simulate": cmd_simulate,
}


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="disastertoll", description="Disaster frequency/severity models and death-toll projections.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    helps = {
        "fit": "fit frequency and severity models per disaster type",
        "project": "project counts and death tolls under scenario paths",
        "bootstrap": "parametric-bootstrap intervals for the projections",
        "depend": "residual correlation and chi-bar diagnostics",
        "simulate": "write a synthetic events/covariates/scenarios data set",
    }
    for name, text in helps.items():
        p = sub.add_parser(name, help=text)
        p.add_argument("--config", help="flat TOML run configuration")
        p.add_argument("--seed", type=int, help="master seed (overrides the config)")
        p.add_argument("--jobs", type=int, help="parallel workers (overrides the config)")
        p.add_argument("--out", help="output directory (overrides the config)")
        if name == "depend":
            p.add_argument("--conventional", action="store_true", default=None,
                           help="report chi-bar minus 1 (independence at 0)")
    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        overrides = {"seed": args.seed, "jobs": args.jobs, "out": args.out,
                     "conventional": getattr(args, "conventional", None)}
        if args.out is not None:
            # relative to where the command runs, not to the config file
            overrides["out"] = str(Path(args.out).resolve())
        cfg = pl.load_config(args.config, overrides)
        for path in COMMANDS[args.command](cfg):
            print(path)
        return 0
    except UsageError as exc:
        print(f"disastertoll: error: {exc}", file=sys.stderr)
        return 1
    except pl.ConfigError as exc:
        print(f"disastertoll: config error: {exc}", file=sys.stderr)
        return 1
    except (DataError, DomainError, FileNotFoundError) as exc:
        print(f"disastertoll: data error: {exc}", file=sys.stderr)
        return 2
    except ConvergenceError as exc:
        print(f"disastertoll: convergence failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
