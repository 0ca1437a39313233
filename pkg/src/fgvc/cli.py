"""Command-line interface.

Commands: encode, decode, probe, bench, qctrl-trace, theory, bdrate.

Exit codes:
    0  success
    1  unexpected internal error
    2  usage or configuration error
    3  input file not found
    4  malformed input (Y4M, bitstream, or integer code)
    5  unsupported input format (chroma)
    6  parameter or domain error (schedule, segmentation, metrics, control)
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import tempfile
from pathlib import Path

import numpy as np

from . import analysis, codec, metrics
from .config import CodecConfig, build_config
from .container import PRIOR_SIDECAR, parse_header
from .errors import ConfigError, FgvcError, MalformedBitstream
from .prior import profile_from_bytes, profile_hash, profile_to_bytes
from .schedule import build_schedule
from .svgplot import render_svg_curves
from .video_io import read_video, write_video

_EXIT_CODES_HELP = """exit codes:
  0  success
  1  unexpected internal error
  2  usage or configuration error
  3  input file not found
  4  malformed input (Y4M / bitstream / integer code)
  5  unsupported input format
  6  parameter or domain error
"""


def _atomic_write_bytes(path, data: bytes) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or Path("."), prefix=path.name)
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _atomic_write_text(path, text: str) -> None:
    _atomic_write_bytes(path, text.encode("utf-8"))


def _sidecar_path(bitstream_path) -> Path:
    return Path(str(bitstream_path) + ".profile")


def _config_from_args(args) -> CodecConfig:
    overrides = {}
    for key in ("gop_len", "overlap", "s", "d", "gamma", "T", "beta_start",
                "beta_end", "chunk_size", "kl_cap", "prior", "t_star",
                "target_quality", "eps", "M", "max_iters", "metric_scales"):
        if hasattr(args, key):
            overrides[key] = getattr(args, key)
    seed_given = getattr(args, "seed", None) is not None
    if seed_given:
        overrides["base_seed"] = args.seed
    return build_config(getattr(args, "config", None), overrides, seed_given)


# -- commands ------------------------------------------------------------------

def cmd_encode(args) -> int:
    video = read_video(args.input)
    cfg = _config_from_args(args)
    result = codec.encode_video(video, cfg)
    _atomic_write_bytes(args.output, result.to_bytes())
    if result.profile is not None:
        _atomic_write_bytes(_sidecar_path(args.output),
                            profile_to_bytes(result.profile))
    total_bits = 0
    for st in result.stats:
        total_bits += st.payload_bits
        line = (f"gop {st.index}: t*={st.t_star} bits={st.payload_bits} "
                f"bpp={st.bpp:.6f}")
        if st.quality is not None:
            line += f" P={st.quality:.4f}"
            if not st.converged:
                line += " [warning: quality target not reached]"
        print(line)
    distinct = video.frames * video.height * video.width
    print(f"total: {total_bits} payload bits, {total_bits / distinct:.6f} bpp "
          f"over {video.frames} distinct frames")
    return 0


def cmd_decode(args) -> int:
    blob = Path(args.input).read_bytes()
    header, _ = parse_header(blob)
    profile = None
    if header.prior_id == PRIOR_SIDECAR:
        side = Path(args.profile) if args.profile else _sidecar_path(args.input)
        if not side.exists():
            raise MalformedBitstream(f"profile sidecar not found at {side}")
        raw = side.read_bytes()
        profile = profile_from_bytes(raw)
        if profile_hash(profile) != header.profile_sha256:
            raise MalformedBitstream(f"profile sidecar {side} fails its hash check")
    video = codec.decode_video(blob, profile=profile,
                               fusion=not args.no_fusion,
                               fresh_noise=args.fresh_noise,
                               noise_seed=args.noise_seed)
    write_video(args.output, video)
    print(f"decoded {video.frames} frames of {video.height}x{video.width} "
          f"to {args.output}")
    return 0


def cmd_probe(args) -> int:
    blob = Path(args.input).read_bytes()
    header, offset = parse_header(blob)
    info = {
        "frames": header.frames, "height": header.height, "width": header.width,
        "fps": list(header.fps), "channels": header.channels,
        "gop_len": header.gop_len, "overlap": header.overlap,
        "s": header.s, "d": header.d, "gamma": header.gamma,
        "T": header.T, "beta_start": header.beta_start,
        "beta_end": header.beta_end, "chunk_size": header.chunk_size,
        "kl_cap": header.kl_cap, "base_seed": header.base_seed,
        "prior_id": header.prior_id, "header_bytes": offset,
        "gops": [{"t_star": g.t_star, "coded_frames": g.coded_frames,
                  "payload_len": g.payload_len} for g in header.gops],
    }
    if header.prior_id == PRIOR_SIDECAR:
        info["profile_sha256"] = header.profile_sha256.hex()
        info["profile_len"] = header.profile_len
    else:
        info["prior_amplitude"] = header.prior_amplitude
        info["prior_exponent"] = header.prior_exponent
    print(json.dumps(info, indent=2))
    return 0


def _sweep_sequence(path, cfg: CodecConfig, t_stars, scales):
    """Encode once per operating point, decode, measure (bpp, quality)."""
    video = read_video(path)
    points = []
    for t in sorted(t_stars, reverse=True):
        run_cfg = CodecConfig(**{**cfg.__dict__, "t_star": t, "target_quality": None})
        enc = codec.encode_video(video, run_cfg)
        blob = enc.to_bytes()
        recon = codec.decode_video(blob, profile=enc.profile)
        bits = sum(st.payload_bits for st in enc.stats)
        rate = bits / (video.frames * video.height * video.width)
        quality = metrics.ms_ssim_video(recon.data, video.data,
                                        min(scales, metrics.feasible_scales(
                                            video.height, video.width)))
        points.append((rate, quality))
    return points


def cmd_bench(args) -> int:
    corpus = sorted(Path(args.corpus).glob("*.y4m")) + \
        sorted(Path(args.corpus).glob("*.raw"))
    if not corpus:
        raise FgvcError(f"no .y4m or .raw sequences under {args.corpus}")
    cfg = _config_from_args(args)
    t_stars = [int(t) for t in args.t_star_list.split(",")]

    rows = [("sequence", "t_star", "bpp", "ms_ssim")]
    curves = {}
    agg: dict[int, list] = {t: [] for t in t_stars}
    for seq in corpus:
        pts = _sweep_sequence(seq, cfg, t_stars, cfg.metric_scales)
        curves[seq.stem] = pts
        for t, (r, q) in zip(sorted(t_stars, reverse=True), pts):
            rows.append((seq.stem, t, f"{r:.8f}", f"{q:.6f}"))
            agg[t].append((r, q))
    agg_pts = []
    for t in sorted(t_stars, reverse=True):
        rs = [p[0] for p in agg[t]]
        qs = [p[1] for p in agg[t]]
        rows.append(("aggregate", t, f"{np.mean(rs):.8f}", f"{np.mean(qs):.6f}"))
        agg_pts.append((float(np.mean(rs)), float(np.mean(qs))))

    out = "\n".join(",".join(str(c) for c in row) for row in rows) + "\n"
    _atomic_write_text(args.output, out)
    print(f"wrote {args.output}")

    if args.plot:
        svg = render_svg_curves(curves, "bpp", "MS-SSIM", title="rate vs quality")
        _atomic_write_text(args.plot, svg)
        print(f"wrote {args.plot}")

    if args.bd_against:
        other = metrics.read_curve_csv(args.bd_against)
        mine = metrics.RateQualityCurve(points=agg_pts, metric_id="ms_ssim")
        bd = metrics.bd_rate(other, mine)
        print(f"BD-Rate vs {args.bd_against}: "
              + (f"{bd.value:+.2f}%" if bd.computable else f"N/A ({bd.reason})"))
    return 0


def cmd_qctrl_trace(args) -> int:
    video = read_video(args.input)
    cfg = _config_from_args(args)
    if cfg.target_quality is None:
        raise ConfigError("qctrl-trace requires --target-quality")
    result = codec.encode_video(video, cfg)
    rows = [("gop", "iteration", "t", "R", "P", "alpha", "beta")]
    for st in result.stats:
        for rec in st.trace:
            rows.append((st.index, rec["iteration"], rec["t"],
                         f"{rec['R']:.8f}", f"{rec['P']:.6f}",
                         f"{rec['alpha']:.6g}", f"{rec['beta']:.6g}"))
        rows.append((st.index, "final", st.t_star, f"{st.bpp:.8f}",
                     "" if st.quality is None else f"{st.quality:.6f}", "", ""))
    _atomic_write_text(args.output,
                       "\n".join(",".join(str(c) for c in r) for r in rows) + "\n")
    print(f"wrote {args.output}")
    return 0


def cmd_theory(args) -> int:
    rhos = [float(r) for r in args.rho_list.split(",")]
    sched = build_schedule(args.T, args.beta_start, args.beta_end)
    rows = [("rho", "t", "L_fw", "L_joint", "gap", "mi", "measured_diff")]
    for rho in rhos:
        spec = analysis.GaussianSourceSpec.separable_ar1(
            args.frames, (args.frame_edge, args.frame_edge), rho, args.rho_space)
        for t in range(args.t_star, sched.T):
            lfw = analysis.kl_framewise_step(spec, sched, t)
            lj = analysis.kl_joint_step(spec, sched, t)
            mi = analysis.conditional_mi_gap(spec, sched, t)
            rows.append((rho, t, f"{lfw:.6f}", f"{lj:.6f}", f"{lfw - lj:.6f}",
                         f"{mi:.6f}", ""))
        diff, _ = analysis.measured_gap(spec, sched, args.t_star,
                                        base_seed=args.seed or 0,
                                        n_runs=args.runs)
        gap_total = analysis.accumulate_gap(spec, sched, args.t_star)
        rows.append((rho, "total", "", "", f"{gap_total:.6f}", "", f"{diff:.1f}"))
    _atomic_write_text(args.output,
                       "\n".join(",".join(str(c) for c in r) for r in rows) + "\n")
    print(f"wrote {args.output}")
    return 0


def cmd_bdrate(args) -> int:
    anchor = metrics.read_curve_csv(args.anchor)
    test = metrics.read_curve_csv(args.test)
    rate = metrics.bd_rate(anchor, test)
    met = metrics.bd_metric(anchor, test)
    print("BD-Rate:   " + (f"{rate.value:+.4f}%" if rate.computable
                           else f"N/A ({rate.reason})"))
    print("BD-Metric: " + (f"{met.value:+.6f}" if met.computable
                           else f"N/A ({met.reason})"))
    return 0


# -- parser ---------------------------------------------------------------------

def _add_codec_flags(p, with_control=True):
    p.add_argument("--config", help="key=value config file")
    p.add_argument("--gop-len", dest="gop_len", type=int)
    p.add_argument("--overlap", type=int)
    p.add_argument("--s", type=int)
    p.add_argument("--d", type=int)
    p.add_argument("--gamma", type=float)
    p.add_argument("--T", type=int)
    p.add_argument("--beta-start", dest="beta_start", type=float)
    p.add_argument("--beta-end", dest="beta_end", type=float)
    p.add_argument("--chunk-size", dest="chunk_size", type=int)
    p.add_argument("--kl-cap", dest="kl_cap", type=float)
    p.add_argument("--seed", type=int, help="base seed (FGVC_SEED overrides "
                   "config/defaults but not an explicit --seed)")
    p.add_argument("--prior", choices=("power-law", "fitted"))
    p.add_argument("--metric-scales", dest="metric_scales", type=int)
    if with_control:
        p.add_argument("--t-star", dest="t_star", type=int)
        p.add_argument("--target-quality", dest="target_quality", type=float)
        p.add_argument("--eps", type=float)
        p.add_argument("--M", type=int)
        p.add_argument("--max-iters", dest="max_iters", type=int)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="fgvc", epilog=_EXIT_CODES_HELP,
        formatter_class=argparse.RawDescriptionHelpFormatter,
        description="Progressive lossy video codec over a diffusion trajectory.")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("encode", help="encode a video into a bitstream")
    p.add_argument("input")
    p.add_argument("output")
    _add_codec_flags(p)
    p.set_defaults(fn=cmd_encode)

    p = sub.add_parser("decode", help="decode a bitstream")
    p.add_argument("input")
    p.add_argument("output")
    p.add_argument("--no-fusion", action="store_true",
                   help="skip inter-group latent fusion (ablation)")
    p.add_argument("--fresh-noise", action="store_true",
                   help="use fresh randomness in the denoising pass")
    p.add_argument("--noise-seed", type=int, default=None,
                   help="seed for --fresh-noise")
    p.add_argument("--profile", help="explicit variance-profile sidecar path")
    p.set_defaults(fn=cmd_decode)

    p = sub.add_parser("probe", help="dump a bitstream header as JSON")
    p.add_argument("input")
    p.set_defaults(fn=cmd_probe)

    p = sub.add_parser("bench", help="sweep operating points over a corpus")
    p.add_argument("corpus")
    p.add_argument("--t-stars", dest="t_star_list", required=True,
                   help="comma-separated timesteps to sweep")
    p.add_argument("--output", default="bench.csv")
    p.add_argument("--plot", help="optional SVG output")
    p.add_argument("--bd-against", dest="bd_against",
                   help="curve CSV to compare against")
    _add_codec_flags(p, with_control=False)
    p.set_defaults(fn=cmd_bench)

    p = sub.add_parser("qctrl-trace", help="emit the quality-control trace")
    p.add_argument("input")
    p.add_argument("--output", default="qctrl.csv")
    _add_codec_flags(p)
    p.set_defaults(fn=cmd_qctrl_trace)

    p = sub.add_parser("theory", help="joint vs frame-wise coding-cost table")
    p.add_argument("--rhos", dest="rho_list", default="0,0.5,0.9")
    p.add_argument("--rho-space", dest="rho_space", type=float, default=0.5)
    p.add_argument("--frames", type=int, default=4)
    p.add_argument("--frame-edge", dest="frame_edge", type=int, default=4)
    p.add_argument("--T", type=int, default=16)
    p.add_argument("--beta-start", dest="beta_start", type=float, default=1e-3)
    p.add_argument("--beta-end", dest="beta_end", type=float, default=0.05)
    p.add_argument("--t-star", dest="t_star", type=int, default=1)
    p.add_argument("--runs", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--output", default="theory.csv")
    p.set_defaults(fn=cmd_theory)

    p = sub.add_parser("bdrate", help="BD deltas between two curve CSVs")
    p.add_argument("anchor")
    p.add_argument("test")
    p.set_defaults(fn=cmd_bdrate)

    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        return args.fn(args)
    except FileNotFoundError as exc:
        print(f"error: file not found: {exc.filename or exc}", file=sys.stderr)
        return 3
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except FgvcError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except Exception as exc:  # pragma: no cover
        print(f"internal error: {exc!r}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
