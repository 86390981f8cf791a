"""Command-line front end: fringes, scan, reconstruct, report, rank."""
from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .config import RunConfig, load_config
from .errors import ConfigurationError, DataError, NumericalError, WhichwayError
from .instrument import (
    _bin_intensity,
    assignment_probability,
    load_scan_csv,
)
from .metrics import distinguishability, duality_check, match_profiles, visibility
from .optics import IntensityProfile, propagate_fresnel
from .pipeline import (
    direct_fringe_profile,
    make_source,
    reconstruct_tables,
    result_profile,
    run_all_scans,
)
from .reconstruct import full_rank_dims

_PLOT_SCRIPT = """\
# Plot helper emitted alongside {csv_name}; run with any Python that has
# matplotlib installed:  python {script_name}
import csv

import matplotlib.pyplot as plt

x, y = [], []
with open({csv_name!r}) as fh:
    reader = csv.DictReader(fh)
    cols = reader.fieldnames
    for row in reader:
        x.append(float(row[cols[0]]))
        y.append(float(row[cols[1]]))
plt.plot(x, y)
plt.xlabel(cols[0])
plt.ylabel(cols[1])
plt.title({title!r})
plt.show()
"""


def _scan_tag(width_m: float) -> str:
    return f"a{width_m * 1e3:g}mm"


def _out_dir(cfg: RunConfig) -> Path:
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _update_manifest(cfg: RunConfig, out: Path, stage: str, files, seconds: float):
    path = out / "run_manifest.json"
    manifest = {}
    if path.exists():
        try:
            manifest = json.loads(path.read_text())
        except json.JSONDecodeError:
            manifest = {}
    manifest["config_hash"] = cfg.config_hash()
    manifest["artifact_version"] = __version__
    stages = manifest.setdefault("stages", {})
    stages[stage] = {
        "files": [str(Path(f).name) for f in files],
        "seconds": round(seconds, 3),
    }
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def _write_plot_script(path: Path, csv_name: str, title: str):
    path.write_text(
        _PLOT_SCRIPT.format(csv_name=csv_name, script_name=path.name, title=title)
    )


def cmd_fringes(cfg: RunConfig, args) -> int:
    """Direct image of the interference fringes at the near plane D."""
    t0 = time.perf_counter()
    out = _out_dir(cfg)
    source = make_source(cfg)
    fine = direct_fringe_profile(cfg, source)
    det = cfg.detector
    edges = (np.arange(det.n_pixels + 1) - det.n_pixels / 2) * det.pixel_pitch
    values = _bin_intensity(fine.values, fine.origin, fine.pitch, edges)
    profile = IntensityProfile(
        -(det.n_pixels - 1) / 2 * det.pixel_pitch, det.pixel_pitch, values
    )
    csv_path = out / "fringes.csv"
    profile.to_csv(csv_path)
    script = out / "fringes_plot.py"
    _write_plot_script(script, csv_path.name, "direct double-slit fringes")
    _update_manifest(cfg, out, "fringes", [csv_path, script], time.perf_counter() - t0)
    print(f"wrote {csv_path}")
    return 0


def _scan_sidecar(series, cfg: RunConfig) -> dict:
    contamination, p, d = assignment_probability(series, cfg.guard_px)
    total = float(sum(r.detector_profile.values.sum() for r in series.records))
    sc = series.config
    return {
        "aperture_width_m": sc.aperture_width,
        "width_elems": sc.width_elems(),
        "opening": sc.opening,
        "anchor_elems": sc.anchor_elems,
        "exposure_s": sc.exposure,
        "stage_ratio": sc.stage_ratio,
        "guard_px": cfg.guard_px,
        "contamination": contamination,
        "p_correct": p,
        "distinguishability": d,
        "total_flux_sum": total,
        "noise_enabled": cfg.detector.noise_enabled,
        "rng_seed": cfg.detector.rng_seed,
    }


def cmd_scan(cfg: RunConfig, args) -> int:
    """Run every configured scan and write one flux CSV (plus sidecar) each."""
    t0 = time.perf_counter()
    out = _out_dir(cfg)
    series_list = run_all_scans(cfg)
    files = []
    for series in series_list:
        tag = _scan_tag(series.config.aperture_width)
        csv_path = out / f"scan_{tag}.csv"
        series.to_csv(csv_path)
        sidecar = out / f"scan_{tag}.json"
        sidecar.write_text(
            json.dumps(_scan_sidecar(series, cfg), indent=2, sort_keys=True) + "\n"
        )
        files += [csv_path, sidecar]
        if args.profiles:
            series.export_profiles(out / f"profiles_{tag}")
        print(f"wrote {csv_path}")
    _update_manifest(cfg, out, "scan", files, time.perf_counter() - t0)
    return 0


def _discover_scans(cfg: RunConfig, out: Path):
    paths, widths, exposures, openings, anchors = [], [], [], [], []
    for scan in cfg.scans:
        tag = _scan_tag(scan.aperture_width)
        csv_path = out / f"scan_{tag}.csv"
        if not csv_path.exists():
            raise DataError(f"missing scan output: {csv_path}")
        sidecar_path = out / f"scan_{tag}.json"
        exposure = scan.exposure or 1.0
        if sidecar_path.exists():
            sidecar = json.loads(sidecar_path.read_text())
            exposure = float(sidecar.get("exposure_s", exposure))
        paths.append(csv_path)
        widths.append(scan.width_elems())
        exposures.append(exposure)
        openings.append(scan.opening)
        anchors.append(scan.anchor_elems)
    if len(set(openings)) != 1 or len(set(anchors)) != 1:
        raise ConfigurationError("stacked scans must share opening and anchor")
    return paths, widths, exposures, openings[0], anchors[0]


def cmd_reconstruct(cfg: RunConfig, args) -> int:
    """Solve the stacked flux equations from scan CSVs."""
    t0 = time.perf_counter()
    out = _out_dir(cfg)
    if args.flux_csv:
        paths = [Path(p) for p in args.flux_csv]
        if args.widths_mm is None:
            raise ConfigurationError(
                "--widths-mm is required when flux CSVs are given explicitly"
            )
        widths_mm = [float(w) for w in args.widths_mm.split(",")]
        if len(widths_mm) != len(paths):
            raise ConfigurationError("need one width per flux CSV")
        step = cfg.scans[0].step
        widths = []
        for w_mm in widths_mm:
            w = w_mm * 1e-3 / step
            if abs(w - round(w)) > 1e-6:
                raise ConfigurationError(
                    f"width {w_mm} mm is not an integer multiple of the scan step"
                )
            widths.append(int(round(w)))
        exposures = [1.0] * len(paths)
        for p, w_mm in zip(paths, widths_mm):
            sidecar = p.with_suffix(".json")
            if sidecar.exists():
                exposures[paths.index(p)] = float(
                    json.loads(sidecar.read_text()).get("exposure_s", 1.0)
                )
        opening, anchor = cfg.scans[0].opening, cfg.scans[0].anchor_elems
    else:
        paths, widths, exposures, opening, anchor = _discover_scans(cfg, out)
    tables = [load_scan_csv(p) for p in paths]
    if len(set(widths)) < len(widths):
        raise ConfigurationError("stacked scans must use distinct aperture widths")
    result = reconstruct_tables(
        tables,
        widths,
        exposures,
        opening=opening,
        anchor=anchor,
        cutoff=cfg.recon_cutoff,
        smoothing_rms=cfg.smoothing_rms,
    )
    n = tables[0]["F"].size
    if len(widths) == 1 and result.effective_rank < n:
        print(
            f"warning: rank-deficient system (rank {result.effective_rank} < {n}); "
            "emitting the minimum-norm solution",
            file=sys.stderr,
        )
    csv_path = out / "reconstruction.csv"
    result.to_csv(csv_path)
    sidecar = out / "reconstruction.json"
    result.write_sidecar(sidecar)
    script = out / "reconstruction_plot.py"
    _write_plot_script(script, csv_path.name, "reconstructed pupil pattern")
    _update_manifest(
        cfg, out, "reconstruct", [csv_path, sidecar, script], time.perf_counter() - t0
    )
    print(f"wrote {csv_path}")
    return 0


def _load_reconstruction(out: Path) -> IntensityProfile:
    path = out / "reconstruction.csv"
    if not path.exists():
        raise DataError(f"missing reconstruction output: {path}")
    data = np.genfromtxt(path, delimiter=",", names=True)
    x = np.atleast_1d(data["position_mm"]) * 1e-3
    v = np.clip(np.atleast_1d(data["P_hat"]), 0.0, None)
    return IntensityProfile(float(x[0]), float(x[1] - x[0]), v)


def cmd_report(cfg: RunConfig, args) -> int:
    """Duality report: V from the reconstruction, D from the scans."""
    t0 = time.perf_counter()
    out = _out_dir(cfg)
    missing = []
    recon_csv = out / "reconstruction.csv"
    if not recon_csv.exists():
        missing.append(str(recon_csv))
    sidecars = []
    for scan in cfg.scans:
        tag = _scan_tag(scan.aperture_width)
        for name in (f"scan_{tag}.csv", f"scan_{tag}.json"):
            if not (out / name).exists():
                missing.append(str(out / name))
        sidecars.append(out / f"scan_{tag}.json")
    if missing:
        raise DataError("missing report inputs: " + ", ".join(missing))

    profile = _load_reconstruction(out)
    vis = visibility(profile, cfg.peak_selector)

    wrong = total = 0.0
    per_scan_d = {}
    for sidecar_path in sidecars:
        sidecar = json.loads(sidecar_path.read_text())
        t = float(sidecar["total_flux_sum"])
        wrong += float(sidecar["contamination"]) * t
        total += t
        per_scan_d[sidecar_path.stem] = float(sidecar["distinguishability"])
    p = 1.0 - wrong / total
    d = distinguishability(p)

    report = duality_check(
        min(vis.value, 1.0),
        d,
        v_method=f"peaks:{vis.method};prominence:2%",
        d_method=f"guard_px:{cfg.guard_px};pooled-contamination",
    )
    duality_path = out / "duality.json"
    report.write_json(duality_path)

    # left/right-signal reconstructions (which-way split of the pattern)
    paths, widths, exposures, opening, anchor = _discover_scans(cfg, out)
    tables = [load_scan_csv(p) for p in paths]
    lr_files = []
    lr_profiles = {}
    for signal in ("left", "right"):
        res = reconstruct_tables(
            tables,
            widths,
            exposures,
            signal=signal,
            opening=opening,
            anchor=anchor,
            cutoff=cfg.recon_cutoff,
            smoothing_rms=cfg.smoothing_rms,
        )
        path = out / f"reconstruction_{signal}.csv"
        res.to_csv(path)
        lr_files.append(path)
        lr_profiles[signal] = result_profile(res)

    # match the reconstruction against the direct fringe image, scaled
    # from the near plane to the pupil plane
    match = None
    fringes_csv = out / "fringes.csv"
    if fringes_csv.exists():
        reference = IntensityProfile.from_csv(fringes_csv)
        in_pixels = IntensityProfile(
            reference.origin / cfg.detector.pixel_pitch,
            reference.pitch / cfg.detector.pixel_pitch,
            reference.values,
        )
        match = match_profiles(
            profile, in_pixels, cfg.h_scale, half_window=cfg.window_half
        )

    lines = [
        f"whichway run report (config {cfg.config_hash()[:12]})",
        f"V  = {report.v:.4f}   [{report.v_method}]",
        f"D  = {report.d:.4f}   [{report.d_method}]",
        f"V^2 + D^2 = {report.duality:.4f}  -> "
        + ("VIOLATED (> 1)" if report.violated else "within the bound"),
    ]
    for name, value in sorted(per_scan_d.items()):
        lines.append(f"  {name}: D = {value:.4f}")
    if match is not None:
        lines.append(
            f"profile match vs direct fringes: shift = {match.shift * 1e3:+.3f} mm, "
            f"v_scale = {match.v_scale:.4g}, normalized RMS = {match.rms_residual:.4f}"
        )
    left, right = lr_profiles["left"], lr_profiles["right"]
    lp = left.values / max(left.values.max(), 1e-300)
    rp = right.values / max(right.values.max(), 1e-300)
    lines.append(
        "left/right reconstructions (peak-normalized) RMS difference: "
        f"{float(np.sqrt(np.mean((lp - rp) ** 2))):.4f}"
    )
    summary = out / "summary.txt"
    summary.write_text("\n".join(lines) + "\n")
    print("\n".join(lines))
    _update_manifest(
        cfg,
        out,
        "report",
        [duality_path, summary, *lr_files],
        time.perf_counter() - t0,
    )
    return 0


def cmd_rank(cfg: RunConfig, args) -> int:
    """Print the full-rank dimensions of a banded aperture matrix."""
    dims = full_rank_dims(args.width_elems, args.n_max, args.opening)
    print(", ".join(str(d) for d in dims))
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="JSON run configuration")
    common.add_argument("--seed", type=int, help="override the RNG seed")
    common.add_argument("--out", metavar="DIR", help="override the output directory")
    common.add_argument(
        "--no-noise", action="store_true", help="disable the detector noise model"
    )
    parser = argparse.ArgumentParser(
        prog="whichway",
        description="Which-way double-slit bench: simulate, reconstruct, report.",
        parents=[common],
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("fringes", parents=[common], help="direct fringe image at D")
    p_scan = sub.add_parser("scan", parents=[common], help="run the aperture scans")
    p_scan.add_argument(
        "--profiles", action="store_true", help="also export per-step profiles"
    )
    p_rec = sub.add_parser(
        "reconstruct", parents=[common], help="reconstruct the pupil pattern"
    )
    p_rec.add_argument(
        "flux_csv", nargs="*", help="scan CSVs (default: the configured scan outputs)"
    )
    p_rec.add_argument(
        "--widths-mm", help="comma-separated aperture widths matching the CSVs"
    )
    sub.add_parser("report", parents=[common], help="duality report from run artifacts")
    p_rank = sub.add_parser(
        "rank", parents=[common], help="full-rank dimensions of an aperture matrix"
    )
    p_rank.add_argument("-w", "--width-elems", type=int, required=True)
    p_rank.add_argument("--n-max", type=int, required=True)
    p_rank.add_argument("--opening", default="rightward")
    return parser


_COMMANDS = {
    "fringes": cmd_fringes,
    "scan": cmd_scan,
    "reconstruct": cmd_reconstruct,
    "report": cmd_report,
    "rank": cmd_rank,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(
            args.config, seed=args.seed, output_dir=args.out, no_noise=args.no_noise
        )
        return _COMMANDS[args.command](cfg, args)
    except WhichwayError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return getattr(exc, "exit_code", 4)


if __name__ == "__main__":
    sys.exit(main())
