"""Command-line interface: staged commands plus an end-to-end pipeline.

Every command reads an optional INI config (see ``config``), accepts
overriding flags, writes JSON reports and SVG figures into the output
directory, and exits 0 on success, 2 on data or configuration errors,
and 3 when a model failed to converge.  Outputs are byte-deterministic
for fixed inputs.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path
from typing import Optional

from . import __version__
from .basis import SmoothSpec, screen_vif
from .config import RunConfig, config_as_dict, ensure_output_dir, load_config
from .errors import DataError, SchemaError, SingularFitError, StreamGammError
from .figures import importance_bars, series_window, smooth_panels, summary_boxes
from .gam import stepwise_select
from .gamm import fit_gamm, variable_importance
from .ingest import align, frame_from_csv, frame_to_csv, load_series, parse_timestamp, summarize
from .neon_client import DEFAULT_REGISTRY, SITE_UTC_OFFSET, fetch_variables, unpack
from . import report as report_mod

EXIT_OK = 0
EXIT_DATA = 2
EXIT_NOCONV = 3


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="INI config file")
    p.add_argument("--output-dir", help="override [run] output_dir")
    p.add_argument("--seed", type=int, help="override [run] seed")
    p.add_argument(
        "--threads",
        type=int,
        help="worker threads for parallel searches (default: available cores)",
    )


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="streamgamm",
        description="Two-step additive modeling of stream sensor series",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fetch", help="download raw sensor files from the data API")
    _add_common(p)
    p.add_argument("--site", help="site code, e.g. ARIK")
    p.add_argument("--start-month", help="YYYY-MM")
    p.add_argument("--end-month", help="YYYY-MM")
    p.add_argument("--base-url", help="API base URL override")

    p = sub.add_parser("ingest", help="align raw series onto the 15-minute grid")
    _add_common(p)
    p.add_argument("--out", help="frame CSV path (default <output_dir>/frame.csv)")

    p = sub.add_parser("summarize", help="column summaries of an aligned frame")
    _add_common(p)
    p.add_argument("--frame", required=True, help="aligned frame CSV")
    p.add_argument("--svg", help="also write a box-plot SVG here")

    p = sub.add_parser("vif", help="collinearity screen of the covariates")
    _add_common(p)
    p.add_argument("--frame", required=True)
    p.add_argument("--threshold", type=float, help="exclusion threshold")

    p = sub.add_parser("fit-gam", help="stepwise additive fit, independence errors")
    _add_common(p)
    p.add_argument("--frame", required=True)
    p.add_argument("--candidates", help="comma-separated covariate names")
    p.add_argument("--svg", help="also write smooth panels here")

    p = sub.add_parser("fit-gamm", help="additive fit plus ARMA residual model")
    _add_common(p)
    p.add_argument("--frame", required=True)
    p.add_argument("--candidates", help="comma-separated covariate names")

    p = sub.add_parser("importance", help="leave-one-out deviance partition")
    _add_common(p)
    p.add_argument("--frame", required=True)
    p.add_argument("--candidates", help="comma-separated covariate names")
    p.add_argument("--svg", help="also write an importance bar chart here")

    p = sub.add_parser("plot", help="draw one figure from a frame")
    _add_common(p)
    p.add_argument("--frame", required=True)
    p.add_argument("--kind", required=True, choices=["series", "smooths", "importance"])
    p.add_argument(
        "--out",
        help="SVG path; for --kind smooths, a directory taking one SVG per term "
        "(defaults under <output_dir>)",
    )
    p.add_argument("--candidates", help="for smooths/importance fits")

    p = sub.add_parser("pipeline", help="ingest, screen, fit, partition, draw")
    _add_common(p)
    return parser


def _cfg_from_args(args) -> RunConfig:
    cfg = load_config(args.config)
    if getattr(args, "output_dir", None):
        cfg.output_dir = args.output_dir
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
    if getattr(args, "threads", None) is not None:
        cfg.threads = args.threads
    if getattr(args, "threshold", None) is not None:
        cfg.vif_threshold = args.threshold
    if getattr(args, "candidates", None):
        cfg.candidates = [c.strip() for c in args.candidates.split(",") if c.strip()]
    if getattr(args, "site", None):
        cfg.neon_site = args.site
    if getattr(args, "start_month", None):
        cfg.neon_start_month = args.start_month
    if getattr(args, "end_month", None):
        cfg.neon_end_month = args.end_month
    if getattr(args, "base_url", None):
        cfg.neon_base_url = args.base_url
    return cfg


def _ingest_frame(cfg: RunConfig):
    """Build an aligned frame from configured CSVs or fetched files."""
    if cfg.nitrate_path:
        nitrate = load_series(cfg.nitrate_path, variable="nitrate", unit="uM")
        others = [
            load_series(path, variable=name, unit="")
            for name, path in sorted(cfg.covariate_paths.items())
        ]
    elif cfg.neon_site:
        raw = Path(cfg.output_dir) / "raw"
        series = {
            v: unpack(raw / DEFAULT_REGISTRY[v].product, v) for v in sorted(DEFAULT_REGISTRY)
        }
        nitrate = series.pop("nitrate")
        others = [series[v] for v in sorted(series)]
    else:
        raise SchemaError("config must provide [inputs] nitrate or [neon] site")
    return align(nitrate, others, tolerance=cfg.tolerance_s)


def _candidate_names(cfg: RunConfig, frame) -> list[str]:
    names = cfg.candidates or list(frame.covariates)
    missing = [n for n in names if n not in frame.covariates]
    if missing:
        raise DataError(f"candidates not in frame: {missing}")
    return names


def _specs(cfg: RunConfig, names: list[str]) -> list[SmoothSpec]:
    return [SmoothSpec(covariate=n, basis_dim=cfg.basis_dim) for n in names]


def _vif_columns(frame, names: list[str]) -> dict:
    """Covariate columns on valid rows; the time index is never screened."""
    sensor = [n for n in names if n != "time_days"]
    return {n: frame.covariates[n][frame.valid] for n in sensor}


def _site_offset(cfg: RunConfig):
    """Site-local UTC offset for plot annotations, if the site is known."""
    return SITE_UTC_OFFSET.get((cfg.neon_site or "").upper())


def _window_start(cfg: RunConfig):
    if cfg.window_start is None:
        return None
    try:
        return parse_timestamp(cfg.window_start)
    except ValueError as exc:
        raise SchemaError(f"bad [plots] window_start: {exc}") from exc


def cmd_fetch(args) -> int:
    cfg = _cfg_from_args(args)
    if not (cfg.neon_site and cfg.neon_start_month and cfg.neon_end_month):
        raise SchemaError("fetch needs [neon] site, start_month, end_month")
    out = ensure_output_dir(cfg)
    series = fetch_variables(
        out / "raw",
        cfg.neon_site,
        cfg.neon_start_month,
        cfg.neon_end_month,
        base_url=cfg.neon_base_url,
        package=cfg.neon_package,
        release=cfg.neon_release,
    )
    products = sorted({DEFAULT_REGISTRY[v].product for v in series})
    rep = report_mod.build_report(
        "fetch",
        fetch={
            "site": cfg.neon_site,
            "products": products,
            "n_files": sum(1 for _ in (out / "raw").rglob("*.csv")),
        },
    )
    report_mod.write_report(out / "fetch.json", rep)
    for name, s in sorted(series.items()):
        print(f"{name}: {len(s)} rows")
    return EXIT_OK


def cmd_ingest(args) -> int:
    cfg = _cfg_from_args(args)
    out = ensure_output_dir(cfg)
    frame = _ingest_frame(cfg)
    dest = Path(args.out) if args.out else out / "frame.csv"
    frame_to_csv(frame, dest)
    rep = report_mod.build_report("ingest", data=report_mod.data_section(frame))
    report_mod.write_report(out / "ingest.json", rep)
    print(f"wrote {dest}: {frame.n_valid}/{frame.n_rows} valid rows, {len(frame.gaps)} gaps")
    return EXIT_OK


def cmd_summarize(args) -> int:
    cfg = _cfg_from_args(args)
    out = ensure_output_dir(cfg)
    frame = frame_from_csv(args.frame)
    summaries = summarize(frame)
    rep = report_mod.build_report(
        "summarize",
        data=report_mod.data_section(frame),
        summary=report_mod.summary_section(summaries),
    )
    report_mod.write_report(out / "summary.json", rep)
    if args.svg:
        Path(args.svg).write_text(summary_boxes(summaries))
    print(f"summarized {len(summaries)} columns -> {out / 'summary.json'}")
    return EXIT_OK


def cmd_vif(args) -> int:
    cfg = _cfg_from_args(args)
    out = ensure_output_dir(cfg)
    frame = frame_from_csv(args.frame)
    columns = _vif_columns(frame, list(frame.covariates))
    table, flagged = screen_vif(columns, threshold=cfg.vif_threshold)
    rep = report_mod.build_report(
        "vif", vif=report_mod.vif_section(table, cfg.vif_threshold, flagged)
    )
    report_mod.write_report(out / "vif.json", rep)
    for name, value in table.items():
        mark = " (excluded)" if name in flagged else ""
        print(f"{name}: {value:.3f}{mark}")
    return EXIT_OK


def cmd_fit_gam(args) -> int:
    cfg = _cfg_from_args(args)
    out = ensure_output_dir(cfg)
    frame = frame_from_csv(args.frame)
    names = _candidate_names(cfg, frame)
    fit = stepwise_select(frame, _specs(cfg, names))
    rep = report_mod.build_report(
        "fit-gam", data=report_mod.data_section(frame), gam=report_mod.gam_section(fit)
    )
    report_mod.write_report(out / "gam.json", rep)
    if args.svg and fit.terms:
        Path(args.svg).write_text(smooth_panels(fit))
    print(
        f"selected {fit.term_names}; deviance explained "
        f"{100 * fit.deviance_explained:.1f}%, aic {fit.aic:.1f}"
    )
    return EXIT_OK if fit.converged else EXIT_NOCONV


def cmd_fit_gamm(args) -> int:
    cfg = _cfg_from_args(args)
    out = ensure_output_dir(cfg)
    frame = frame_from_csv(args.frame)
    names = _candidate_names(cfg, frame)
    model = fit_gamm(
        frame,
        _specs(cfg, names),
        p_max=cfg.p_max,
        q_max=cfg.q_max,
        min_valid_rows=cfg.min_valid_rows,
        segmented=cfg.segmented,
        seed=cfg.seed,
        n_jobs=cfg.n_jobs,
    )
    rep = report_mod.build_report(
        "fit-gamm",
        data=report_mod.data_section(frame),
        gam=report_mod.gam_section(model.gam),
        arma=report_mod.arma_section(model.arma),
        comparison=report_mod.comparison_section(model),
    )
    report_mod.write_report(out / "gamm.json", rep)
    print(
        f"order ({model.arma.p},{model.arma.q}); "
        f"aAIC gam {model.aaic_gam:.1f} vs gamm {model.aaic_gamm:.1f} "
        f"-> {model.preferred}"
    )
    ok = model.gam.converged and model.arma.converged
    return EXIT_OK if ok else EXIT_NOCONV


def cmd_importance(args) -> int:
    cfg = _cfg_from_args(args)
    out = ensure_output_dir(cfg)
    frame = frame_from_csv(args.frame)
    names = _candidate_names(cfg, frame)
    model = fit_gamm(
        frame,
        _specs(cfg, names),
        p_max=cfg.p_max,
        q_max=cfg.q_max,
        min_valid_rows=cfg.min_valid_rows,
        segmented=cfg.segmented,
        seed=cfg.seed,
        n_jobs=cfg.n_jobs,
    )
    imp = variable_importance(model, frame, segmented=cfg.segmented, seed=cfg.seed)
    rep = report_mod.build_report(
        "importance",
        comparison=report_mod.comparison_section(model),
        importance=report_mod.importance_section(imp),
    )
    report_mod.write_report(out / "importance.json", rep)
    if args.svg:
        Path(args.svg).write_text(importance_bars(imp))
    for name in imp.ranking:
        entry = next(e for e in imp.entries if e.name == name)
        print(f"{name}: {entry.importance_pct:.2f} pp")
    print(f"serial correlation: {imp.arma_share_pct:.2f} pp")
    return EXIT_OK


def cmd_plot(args) -> int:
    cfg = _cfg_from_args(args)
    out = ensure_output_dir(cfg)
    frame = frame_from_csv(args.frame)
    if args.kind == "smooths":
        # One SVG per selected term, written under a directory.
        fit = stepwise_select(frame, _specs(cfg, _candidate_names(cfg, frame)))
        if not fit.terms:
            raise DataError("no covariates were selected; nothing to draw")
        dest_dir = Path(args.out) if args.out else out / "smooths"
        dest_dir.mkdir(parents=True, exist_ok=True)
        for name in fit.term_names:
            path = dest_dir / f"{name}.svg"
            path.write_text(smooth_panels(fit, names=[name]))
            print(f"wrote {path}")
        return EXIT_OK
    dest = Path(args.out) if args.out else out / f"{args.kind}.svg"
    if args.kind == "series":
        columns = [frame.response_name] + [c for c in frame.covariates if c != "time_days"]
        svg = series_window(
            frame,
            columns,
            start_epoch=_window_start(cfg),
            days=cfg.window_days,
            utc_offset_hours=_site_offset(cfg),
            title="sensor series",
        )
    else:
        model = fit_gamm(
            frame,
            _specs(cfg, _candidate_names(cfg, frame)),
            p_max=cfg.p_max,
            q_max=cfg.q_max,
            min_valid_rows=cfg.min_valid_rows,
            segmented=cfg.segmented,
            seed=cfg.seed,
            n_jobs=cfg.n_jobs,
        )
        imp = variable_importance(model, frame, segmented=cfg.segmented, seed=cfg.seed)
        svg = importance_bars(imp, title="deviance partition")
    dest.write_text(svg)
    print(f"wrote {dest}")
    return EXIT_OK


def cmd_pipeline(args) -> int:
    cfg = _cfg_from_args(args)
    out = ensure_output_dir(cfg)
    frame = _ingest_frame(cfg)
    frame_to_csv(frame, out / "frame.csv")
    summaries = summarize(frame)

    pool = _candidate_names(cfg, frame)
    vif_cols = _vif_columns(frame, pool)
    if len(vif_cols) >= 2:
        table, flagged = screen_vif(vif_cols, threshold=cfg.vif_threshold)
    else:
        table, flagged = {}, []
    survivors = [n for n in pool if n not in flagged]
    if not survivors:
        raise DataError("every candidate was excluded by the collinearity screen")

    model = fit_gamm(
        frame,
        _specs(cfg, survivors),
        p_max=cfg.p_max,
        q_max=cfg.q_max,
        min_valid_rows=cfg.min_valid_rows,
        segmented=cfg.segmented,
        seed=cfg.seed,
        n_jobs=cfg.n_jobs,
    )

    imp = None
    if len(model.gam.terms) >= 2:
        imp = variable_importance(model, frame, segmented=cfg.segmented, seed=cfg.seed)

    figures = []

    def draw(name: str, svg: str) -> None:
        (out / name).write_text(svg)
        figures.append(name)

    draw("summary.svg", summary_boxes(summaries, title="column summaries"))
    series_cols = [frame.response_name] + [c for c in frame.covariates if c != "time_days"]
    draw(
        "diel.svg",
        series_window(
            frame,
            series_cols,
            start_epoch=_window_start(cfg),
            days=cfg.window_days,
            utc_offset_hours=_site_offset(cfg),
            title="sensor series window",
        ),
    )
    if model.gam.terms:
        (out / "smooths").mkdir(parents=True, exist_ok=True)
        for name in model.gam.term_names:
            draw(f"smooths/{name}.svg", smooth_panels(model.gam, names=[name]))
    if imp is not None:
        draw("importance.svg", importance_bars(imp, title="deviance partition"))

    rep = report_mod.build_report(
        "pipeline",
        config=config_as_dict(cfg),
        data=report_mod.data_section(frame),
        summary=report_mod.summary_section(summaries),
        vif=report_mod.vif_section(table, cfg.vif_threshold, flagged) if table else None,
        gam=report_mod.gam_section(model.gam),
        arma=report_mod.arma_section(model.arma),
        comparison=report_mod.comparison_section(model),
        importance=report_mod.importance_section(imp) if imp is not None else None,
        figures=figures,
    )
    report_mod.write_report(out / "report.json", rep)
    print(
        f"pipeline done: {model.gam.term_names} + ARMA({model.arma.p},{model.arma.q}), "
        f"total deviance explained {100 * model.de_total:.1f}% -> {out / 'report.json'}"
    )
    ok = model.gam.converged and model.arma.converged
    return EXIT_OK if ok else EXIT_NOCONV


_COMMANDS = {
    "fetch": cmd_fetch,
    "ingest": cmd_ingest,
    "summarize": cmd_summarize,
    "vif": cmd_vif,
    "fit-gam": cmd_fit_gam,
    "fit-gamm": cmd_fit_gamm,
    "importance": cmd_importance,
    "plot": cmd_plot,
    "pipeline": cmd_pipeline,
}


def main(argv: Optional[list[str]] = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except SingularFitError as exc:
        print(f"error: model failed to converge: {exc}", file=sys.stderr)
        return EXIT_NOCONV
    except StreamGammError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
