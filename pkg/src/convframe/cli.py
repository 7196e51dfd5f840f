"""Command-line pipeline: simulate -> mask -> recon -> eval (+ gram-check).

Every run writes a JSON manifest next to its outputs echoing the command,
arguments, seeds, package versions, and any metrics, so results can be
reproduced from the manifest alone.  Reconstruction is deterministic for a
fixed seed and --threads 1.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
import tracemalloc
from pathlib import Path

import numpy as np

from . import __version__
from .core import CIRCULAR, VALID, AXIS_NAMES, ConvSpec, Shape5
from .dataset import (
    MaskSpec,
    PhantomSpec,
    generate_mask,
    generate_phantom,
    read_mask,
    read_tensor,
    write_tensor,
)
from .hankel import HankelOperator, explicit_hankel, gram_matrix
from .metrics import EvalReport, error_map_pgm, image_pgm, image_snr_db, kspace_snr_db, ssos_image
from .solver import (
    ObservedData,
    ReconConfig,
    cadzow_baseline,
    cf_reconstruct,
    cf_reconstruct_with_acs,
)


class CliError(ValueError):
    """User-facing CLI failure with a clean one-line message."""


def _parse_ints(text: str, n: int, what: str) -> tuple:
    parts = text.split(",")
    if len(parts) != n:
        raise CliError(f"{what} needs {n} comma-separated integers, got {text!r}")
    try:
        return tuple(int(p) for p in parts)
    except ValueError as exc:
        raise CliError(f"{what}: {exc}") from exc


def _parse_conv(text: str | None, kernel: Shape5, nt: int) -> ConvSpec:
    kinds = [VALID] * 5
    if nt > 1:
        kinds[4] = CIRCULAR
    if text:
        for item in text.split(","):
            if "=" not in item:
                raise CliError(f"--conv entries look like axis=valid|circular, got {item!r}")
            axis, kind = item.split("=", 1)
            if axis not in AXIS_NAMES:
                raise CliError(f"unknown axis {axis!r}; options: {', '.join(AXIS_NAMES)}")
            if kind not in (VALID, CIRCULAR):
                raise CliError(f"unknown convolution kind {kind!r}; use valid or circular")
            kinds[AXIS_NAMES.index(axis)] = kind
    return ConvSpec(kernel, tuple(kinds))


def _parse_acs(text: str | None):
    if not text:
        return None
    pairs = []
    for part in text.split(","):
        bits = part.split(":")
        if len(bits) != 2:
            raise CliError(f"--acs ranges look like start:stop, got {part!r}")
        try:
            pairs.append((int(bits[0]), int(bits[1])))
        except ValueError as exc:
            raise CliError(f"--acs: {exc}") from exc
    if len(pairs) not in (2, 3):
        raise CliError("--acs needs 2 or 3 start:stop ranges")
    return tuple(pairs)


def _write_manifest(out_path: Path, command: str, args: argparse.Namespace, metrics: dict) -> Path:
    manifest = {
        "command": command,
        "args": {k: v for k, v in vars(args).items() if k != "func"},
        "seed": getattr(args, "seed", None),
        "versions": {
            "convframe": __version__,
            "numpy": np.__version__,
        },
        "metrics": metrics,
    }
    path = out_path.with_name(out_path.name + ".manifest.json")
    path.write_text(json.dumps(manifest, indent=1, default=str) + "\n")
    return path


def _cmd_simulate(args) -> int:
    shape = Shape5.of(_parse_ints(args.shape, 5, "--shape"))
    support = _parse_ints(args.coil_support, 3, "--coil-support")
    spec = PhantomSpec(shape=shape, coil_support=support, num_ellipses=args.ellipses, seed=args.seed)
    kernel = None
    if args.kernel:
        kernel = _parse_conv(args.conv, Shape5.of(_parse_ints(args.kernel, 5, "--kernel")), shape.nt)
    d_full, rank = generate_phantom(spec, kernel)
    out = write_tensor(args.out, d_full)
    metrics = {"true_rank": rank, "norm": float(np.linalg.norm(d_full))}
    manifest = _write_manifest(out, "simulate", args, metrics)
    print(f"wrote {out} (rank: {rank if rank is not None else 'not measured'}); manifest {manifest}")
    return 0


def _cmd_mask(args) -> int:
    if args.like:
        shape = Shape5.of(read_tensor(args.like).shape)
    elif args.shape:
        shape = Shape5.of(_parse_ints(args.shape, 5, "--shape"))
    else:
        raise CliError("mask needs --shape or --like")
    acs = _parse_ints(args.acs, 3, "--acs") if args.acs else (0, 0, 0)
    spec = MaskSpec(kind=args.kind, accel=args.accel, acs_extent=acs, seed=args.seed,
                    vardens_sigma_frac=args.vardens_sigma)
    mask = generate_mask(spec, shape)
    out = write_tensor(args.out, mask.astype(np.uint8))
    metrics = {"observed_fraction": float(mask.mean())}
    if args.apply:
        full = read_tensor(args.apply).astype(np.complex128)
        if full.shape != tuple(shape):
            raise CliError(f"--apply tensor shape {full.shape} != mask shape {tuple(shape)}")
        obs_path = args.observed_out or "observed.cfk"
        write_tensor(obs_path, np.where(mask, full, 0))
        metrics["observed_out"] = str(obs_path)
    manifest = _write_manifest(out, "mask", args, metrics)
    print(f"wrote {out} (observed fraction {metrics['observed_fraction']:.4f}); manifest {manifest}")
    return 0


def _limit_threads(n: int):
    from threadpoolctl import threadpool_limits

    return threadpool_limits(limits=n)


def _cmd_recon(args) -> int:
    d_obs = read_tensor(args.observed).astype(np.complex128)
    mask = read_mask(args.mask)
    obs = ObservedData(d_obs=d_obs, mask=mask)
    shape = obs.shape
    kernel = Shape5.of(_parse_ints(args.kernel, 5, "--kernel"))
    spec = _parse_conv(args.conv, kernel, shape.nt)
    cfg = ReconConfig(
        kernel_spec=spec,
        rank=args.rank,
        tol=args.tol,
        max_outer=args.max_iters,
        inner_max=args.inner_max,
        acs_region=_parse_acs(args.acs),
    )
    tracemalloc.start()
    start = time.perf_counter()
    with _limit_threads(args.threads):
        if args.method == "cf":
            result = cf_reconstruct(obs, cfg)
        elif args.method == "cf-acs":
            result = cf_reconstruct_with_acs(obs, cfg)
        else:
            result = cadzow_baseline(obs, cfg)
    wall = time.perf_counter() - start
    _, peak = tracemalloc.get_traced_memory()
    tracemalloc.stop()

    out = write_tensor(args.out, result.d_hat)
    metrics = {
        "method": args.method,
        "outer_iters": result.outer_iters,
        "delta_history": result.delta_history,
        "objective_history": result.objective_history,
        "wall_time_s": wall,
        "peak_bytes": int(peak),
    }
    manifest = _write_manifest(out, "recon", args, metrics)
    print(
        f"wrote {out} ({args.method}, {result.outer_iters} outer iterations, "
        f"{wall:.2f}s, peak {peak} bytes); manifest {manifest}"
    )
    return 0


def _cmd_eval(args) -> int:
    ref = read_tensor(args.ref).astype(np.complex128)
    rec = read_tensor(args.rec).astype(np.complex128)
    report = EvalReport(
        kspace_snr_db=kspace_snr_db(ref, rec),
        image_snr_db=image_snr_db(ref, rec),
    )
    if args.recon_manifest:
        run = json.loads(Path(args.recon_manifest).read_text())["metrics"]
        report.outer_iters = run.get("outer_iters", 0)
        report.wall_time_s = run.get("wall_time_s", 0.0)
        report.peak_bytes = run.get("peak_bytes", 0)
        report.delta_history = run.get("delta_history", [])
    payload = report.as_dict()
    if args.pgm_dir:
        pgm_dir = Path(args.pgm_dir)
        pgm_dir.mkdir(parents=True, exist_ok=True)
        ref_img = ssos_image(ref, args.frame)[:, :, args.slice]
        rec_img = ssos_image(rec, args.frame)[:, :, args.slice]
        image_pgm(ref_img, pgm_dir / "reference.pgm")
        image_pgm(rec_img, pgm_dir / "reconstruction.pgm")
        error_map_pgm(ref_img, rec_img, args.pgm_scale, pgm_dir / "error.pgm")
        payload["pgm_dir"] = str(pgm_dir)
    text = json.dumps(payload, indent=1)
    if args.report:
        Path(args.report).write_text(text + "\n")
    print(text)
    return 0


def _cmd_gram_check(args) -> int:
    shape = Shape5.of(_parse_ints(args.shape, 5, "--shape"))
    kernel = Shape5.of(_parse_ints(args.kernel, 5, "--kernel"))
    spec = _parse_conv(args.conv, kernel, shape.nt)
    rng = np.random.default_rng(args.seed)
    data = rng.standard_normal(tuple(shape)) + 1j * rng.standard_normal(tuple(shape))
    gram = gram_matrix(data, spec)
    h = explicit_hankel(HankelOperator(data, spec))
    ref = h.conj().T @ h
    rel = float(np.linalg.norm(gram - ref) / np.linalg.norm(ref))
    print(f"gram vs explicit H^H H relative error: {rel:.3e}")
    return 0 if rel <= 1e-12 else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="convframe",
        description="Structured low-rank k-space completion with implicit Hankel operators",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate a synthetic multi-coil phantom k-space")
    p.add_argument("--shape", required=True, help="nx,ny,nz,nc,nt")
    p.add_argument("--coil-support", default="2,2,1", help="coil kernel extents cx,cy,cz")
    p.add_argument("--ellipses", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--kernel", help="fx,fy,fz,nc,ft; when given, the measured rank is reported")
    p.add_argument("--conv", help="axis=valid|circular overrides, e.g. t=circular")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("mask", help="generate a sampling mask (optionally apply it)")
    p.add_argument("--shape", help="nx,ny,nz,nc,nt")
    p.add_argument("--like", help="take the shape from this tensor file")
    p.add_argument("--kind", default="uniform2d_acs",
                   choices=["uniform2d", "uniform2d_acs", "lines1d_acs", "vardens_t"])
    p.add_argument("--accel", type=float, required=True, help="acceleration rate R > 1")
    p.add_argument("--acs", help="calibration extents ax,ay,az")
    p.add_argument("--vardens-sigma", type=float, default=0.25,
                   help="center-weighted density width as a fraction of the line count")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--apply", help="full tensor to zero-fill with the mask")
    p.add_argument("--observed-out", help="output path for the zero-filled tensor")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_mask)

    p = sub.add_parser("recon", help="reconstruct unobserved k-space samples")
    p.add_argument("--observed", required=True, help="zero-filled observed tensor (.cfk)")
    p.add_argument("--mask", required=True, help="sampling mask (.cfk, u8)")
    p.add_argument("--method", default="cf", choices=["cf", "cf-acs", "cadzow"])
    p.add_argument("--kernel", required=True, help="fx,fy,fz,nc,ft")
    p.add_argument("--rank", type=int, required=True)
    p.add_argument("--tol", type=float, default=1e-3)
    p.add_argument("--max-iters", type=int, default=200)
    p.add_argument("--inner-max", type=int, default=30)
    p.add_argument("--conv", help="axis=valid|circular overrides, e.g. t=circular")
    p.add_argument("--acs", help="calibration box x0:x1,y0:y1[,z0:z1] (cf-acs method)")
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_recon)

    p = sub.add_parser("eval", help="compare a reconstruction against a reference")
    p.add_argument("--ref", required=True)
    p.add_argument("--rec", required=True)
    p.add_argument("--recon-manifest", help="merge run metrics from this recon manifest")
    p.add_argument("--report", help="also write the JSON report here")
    p.add_argument("--pgm-dir", help="write SSoS and error-map PGM images into this directory")
    p.add_argument("--pgm-scale", type=float, default=10.0)
    p.add_argument("--frame", type=int, default=0)
    p.add_argument("--slice", type=int, default=0)
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("gram-check", help="compare the implicit Gram against the dense oracle")
    p.add_argument("--shape", required=True, help="nx,ny,nz,nc,nt (small)")
    p.add_argument("--kernel", required=True, help="fx,fy,fz,nc,ft")
    p.add_argument("--conv", help="axis=valid|circular overrides")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_gram_check)

    return parser


def run_cli(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except FileNotFoundError as exc:
        print(f"error: file not found: {exc.filename or exc}", file=sys.stderr)
        return 1
    except (CliError, ValueError, IndexError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main():
    sys.exit(run_cli())


if __name__ == "__main__":
    main()
