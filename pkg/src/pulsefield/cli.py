"""Command-line front end.

Usage::

    pulsefield <generate|train|reconstruct|evaluate|ablate> --config PATH
               [--seed N] [--out DIR] [--resample]

Every command writes into the output directory and finishes with a
``manifest.json`` listing the SHA-256 of each deterministic output.  Errors
are reported on stderr as a single ``error: <Class>: <message>`` line and
mapped to exit codes 2 (configuration), 3 (data or I/O) and 4 (numerical).
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from . import __version__
from .checkpoint import dumps_model, load_model, save_model
from .config import ExperimentConfig, load_config
from .errors import ConfigError, NonFiniteLossError, PulsefieldError, ShapeError
from .flowfield import (BOUNDARY, FLUID, FlowField, read_flowfield, sha256_hex,
                        write_flowfield)
from .model import (BranchedModel, Normalization, make_branched, make_model,
                    predict, predict_branched)
from .piv import cross_correlate, piv_to_field, render_particles, write_pgm
from .synthdata import WomersleyParams, corrupt, generate_field, occlude
from .training import BoundaryMask, train, train_branched
from .verify import MetricsReport, Series, evaluate

__all__ = ["main", "cmd_generate", "cmd_train", "cmd_reconstruct", "cmd_evaluate",
           "cmd_ablate", "sample_model"]

COMMANDS = ("generate", "train", "reconstruct", "evaluate", "ablate")
EXIT_IO = 3


class OutputError(PulsefieldError):
    """An output could not be written."""

    exit_code = EXIT_IO


# helpers -------------------------------------------------------------------

def _outdir(cfg: ExperimentConfig) -> Path:
    out = Path(cfg.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".write-test"
        probe.write_bytes(b"")
        probe.unlink()
    except OSError as exc:
        raise OutputError(f"cannot write to {out}: {exc.strerror}") from None
    return out


def _file_hash(path: Path) -> str:
    return sha256_hex(path.read_bytes())


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _manifest(out: Path, command: str, cfg: ExperimentConfig, files: list[str],
              volatile: tuple = (), **extra) -> dict:
    """Write ``manifest.json``; files in ``volatile`` are listed without a hash."""
    entry = {name: _file_hash(out / name) for name in files}
    entry.update({name: None for name in volatile})
    man = {"command": command, "version": __version__, "config_sha256": cfg.digest(),
           "seed": cfg.seed, "files": entry, **extra}
    _write_json(out / "manifest.json", man)
    return man


def _read_field(path) -> FlowField:
    try:
        return read_flowfield(path)
    except OSError as exc:
        raise OutputError(f"cannot read {path}: {exc.strerror}") from None


def _params_from(field: FlowField | None) -> WomersleyParams | None:
    if field is not None and "womersley" in field.meta:
        return WomersleyParams.from_dict(field.meta["womersley"])
    return None


def _mask_from(path) -> BoundaryMask:
    m = _read_field(path)
    return BoundaryMask(m.times, m.xs, m.ys, m.region == BOUNDARY)


def synthesize(cfg: ExperimentConfig):
    """Clean and corrupted fields plus parameters for a synthetic config."""
    p = cfg.womersley()
    clean = generate_field(p, cfg.grid(), cfg.period_count)
    noisy = corrupt(clean, cfg.noise_level, cfg.seed, cfg.dropout_fraction)
    occ = cfg.dataset.get("occlusion")
    if occ is not None:
        bands = occ.get("bands")
        bands = None if bands is None else [tuple(map(tuple, b)) for b in bands]
        noisy = occlude(noisy, bands, occ.get("attenuation", 0.2), cfg.seed + 1,
                        occ.get("coverage", 0.2))
    return clean, noisy, p


def load_dataset(cfg: ExperimentConfig):
    """``(reference, noisy, params, mask)`` from files or synthesis."""
    d = cfg.dataset
    mask = _mask_from(d["mask"]) if "mask" in d else None
    if "input" in d:
        noisy = _read_field(d["input"])
        ref = _read_field(d["reference"]) if "reference" in d else None
        return ref, noisy, _params_from(ref), mask
    clean, noisy, p = synthesize(cfg)
    return clean, noisy, p, mask


def build_model(cfg: ExperimentConfig, field: FlowField):
    m = cfg.model
    if "init_checkpoint" in m:
        try:
            return load_model(m["init_checkpoint"])
        except OSError as exc:
            raise OutputError(f"cannot read {m['init_checkpoint']}: {exc.strerror}") from None
    norm = Normalization.from_points(field.coordinates())
    hidden = tuple(m.get("hidden", (256, 256, 256)))
    if m.get("branched", False):
        return make_branched(cfg.seed, hidden, tuple(m.get("combiner_hidden", (64, 64))), norm)
    kw = {k: m[k] for k in ("sigmas", "dims") if k in m}
    return make_model(m.get("kind", "rff"), cfg.seed, hidden,
                      m.get("activation", "leaky_relu"), norm, **kw)


def sample_model(model, times, xs, ys, meta: dict | None = None) -> FlowField:
    """Evaluate a model on a grid; the first and last ``y`` rows are walls."""
    f = FlowField(np.asarray(times, float), np.asarray(xs, float), np.asarray(ys, float),
                  np.zeros((len(times), len(xs), len(ys))),
                  np.zeros((len(times), len(xs), len(ys))),
                  np.zeros((len(times), len(xs), len(ys)), dtype=np.int8), None,
                  dict(meta or {}))
    pts = f.coordinates()
    uv = predict_branched(model, pts) if isinstance(model, BranchedModel) else predict(model, pts)
    f.u = uv[:, 0].reshape(f.shape)
    f.v = uv[:, 1].reshape(f.shape)
    f.region[:] = FLUID
    if f.ys.size >= 3:
        f.region[:, :, 0] = BOUNDARY
        f.region[:, :, -1] = BOUNDARY
    f.meta["source"] = "model"
    f.validate()
    return f


def _like(model, field: FlowField) -> FlowField:
    out = sample_model(model, field.times, field.xs, field.ys, field.meta)
    out.region = field.region.copy()
    return out


def resample(field: FlowField, like: FlowField) -> FlowField:
    """Linear interpolation of ``field`` onto the grid of ``like``."""
    axes = (field.times, field.xs, field.ys)
    if any(a.size < 2 for a in axes):
        raise ShapeError("resampling needs at least two samples along every axis")
    pts = like.coordinates()
    lo = np.array([a[0] for a in axes])
    hi = np.array([a[-1] for a in axes])
    pts = np.clip(pts, lo, hi)
    u = RegularGridInterpolator(axes, field.u)(pts).reshape(like.shape)
    v = RegularGridInterpolator(axes, field.v)(pts).reshape(like.shape)
    return like.copy(u=u, v=v, lam=None, meta=dict(field.meta))


def _report_outputs(out: Path, report: MetricsReport, series: dict, prefix="") -> list[str]:
    names = [f"{prefix}metrics.json"]
    (out / names[0]).write_text(report.to_json())
    for key, s in series.items():
        name = f"{prefix}{key}.csv"
        s.write(out / name)
        names.append(name)
    return names


# commands ------------------------------------------------------------------

def cmd_generate(cfg: ExperimentConfig) -> dict:
    out = _outdir(cfg)
    clean, noisy, p = synthesize(cfg)
    write_flowfield(clean, out / "clean.flowfield")
    write_flowfield(noisy, out / "corrupted.flowfield")
    files = ["clean.flowfield", "corrupted.flowfield"]
    piv = cfg.dataset.get("piv")
    if piv is not None:
        t = piv.get("t", 0.0)
        dt = piv.get("dt", 1e-3)
        a, b = render_particles(clean, t, dt, piv.get("density", 0.02), cfg.seed + 3,
                                piv.get("scale"), window=piv.get("window", 32))
        write_pgm(a, out / "particles_a.pgm")
        write_pgm(b, out / "particles_b.pgm")
        res = cross_correlate(a, b, piv.get("window", 32), piv.get("overlap", 0.5))
        write_flowfield(piv_to_field(res, dt), out / "piv.flowfield")
        files += ["particles_a.pgm", "particles_b.pgm", "piv.flowfield"]
    return _manifest(out, "generate", cfg, files, params_hash=p.digest(),
                     noise_seed=cfg.seed, occlusion_seed=cfg.seed + 1)


def _train_once(cfg: ExperimentConfig, ref, noisy, p, mask, out: Path, prefix=""):
    model = build_model(cfg, noisy)
    tc, w = cfg.train_config(), cfg.weights()
    try:
        if isinstance(model, BranchedModel):
            trained, log = train_branched(model, noisy, tc, w, mask=mask)
        else:
            trained, log = train(model, noisy, tc, w, mask=mask)
    except NonFiniteLossError as exc:
        if exc.model is not None:
            save_model(exc.model, out / f"{prefix}last_good.ckpt")
            exc.args = (f"{exc.args[0]}; last good weights saved to "
                        f"{out / f'{prefix}last_good.ckpt'}",)
        raise
    save_model(trained, out / f"{prefix}model.ckpt")
    log.write(out / f"{prefix}loss_log.csv")
    pred = _like(trained, noisy)
    write_flowfield(pred, out / f"{prefix}reconstruction.flowfield")
    files = [f"{prefix}model.ckpt", f"{prefix}reconstruction.flowfield"]
    report = None
    if ref is not None:
        report, series = evaluate(pred, noisy, ref, p)
        files += _report_outputs(out, report, series, prefix)
    return trained, report, files


def cmd_train(cfg: ExperimentConfig) -> dict:
    out = _outdir(cfg)
    ref, noisy, p, mask = load_dataset(cfg)
    _, report, files = _train_once(cfg, ref, noisy, p, mask, out)
    return _manifest(out, "train", cfg, files, volatile=("loss_log.csv",),
                     params_hash=None if p is None else p.digest())


def cmd_reconstruct(cfg: ExperimentConfig) -> dict:
    out = _outdir(cfg)
    r = dict(cfg.raw.get("reconstruct", {}))
    if "checkpoint" not in r:
        raise ConfigError("config key reconstruct/checkpoint is required")
    try:
        model = load_model(r["checkpoint"])
    except OSError as exc:
        raise OutputError(f"cannot read {r['checkpoint']}: {exc.strerror}") from None
    factor = int(r.get("factor", 1))
    if "like" in r:
        like = _read_field(r["like"])
        axes = [like.times, like.xs, like.ys]
        meta = dict(like.meta)
    else:
        norm = model.norm
        dims = r.get("grid", {})
        n = [dims.get("nt", 49), dims.get("nx", 64), dims.get("ny", 33)]
        axes = [np.linspace(norm.lo[k], norm.hi[k], n[k]) for k in range(3)]
        meta = {}
    if factor > 1:
        axes = [np.linspace(a[0], a[-1], a.size * factor) if a.size > 1 else a for a in axes]
    elif "grid" in r and "like" in r:
        g = r["grid"]
        axes = [np.linspace(a[0], a[-1], g.get(k, a.size))
                for a, k in zip(axes, ("nt", "nx", "ny"))]
    meta.pop("noise_level", None)
    field = sample_model(model, *axes, meta=meta)
    write_flowfield(field, out / "reconstruction.flowfield")
    return _manifest(out, "reconstruct", cfg, ["reconstruction.flowfield"],
                     checkpoint_sha256=sha256_hex(dumps_model(model)))


def cmd_evaluate(cfg: ExperimentConfig, allow_resample: bool = False) -> dict:
    out = _outdir(cfg)
    e = dict(cfg.raw.get("evaluate", {}))
    if "pred" not in e or "reference" not in e:
        raise ConfigError("config keys evaluate/pred and evaluate/reference are required")
    ref = _read_field(e["reference"])
    pred = _read_field(e["pred"])
    noisy = _read_field(e["noisy"]) if "noisy" in e else pred
    fields = {"pred": pred, "noisy": noisy}
    for name, f in fields.items():
        if not f.same_grid(ref):
            if not allow_resample:
                raise ShapeError(f"{name} grid {f.shape} differs from reference {ref.shape}; "
                                 "pass --resample to interpolate")
            fields[name] = resample(f, ref)
    measured = Series.read(e["measured_flow"]) if "measured_flow" in e else None
    report, series = evaluate(fields["pred"], fields["noisy"], ref, _params_from(ref),
                              measured)
    files = _report_outputs(out, report, series)
    return _manifest(out, "evaluate", cfg, files)


def cmd_ablate(cfg: ExperimentConfig) -> dict:
    out = _outdir(cfg)
    ref, noisy, p, mask = load_dataset(cfg)
    if ref is None:
        raise ConfigError("ablation needs a reference field (dataset/reference)")
    rows, files = [], []
    for lam in cfg.lambdas():
        raw = json.loads(json.dumps(cfg.raw))
        raw.setdefault("weights", {})["lambda_phys"] = lam
        run = ExperimentConfig(raw)
        prefix = f"lambda_{lam:.0e}/"
        (out / prefix).mkdir(exist_ok=True)
        _, report, run_files = _train_once(run, ref, noisy, p, mask, out, prefix)
        files += run_files
        rel = report.rel_decrease_pct
        rows.append((lam, rel["mse_field"], rel["mse_cycle"], rel["mse_profile"]))
    lines = ["lambda_phys,rel_decrease_field,rel_decrease_cycle,rel_decrease_profile"]
    for row in rows:
        lines.append(",".join("" if v is None else repr(float(v)) for v in row))
    (out / "ablation.csv").write_text("\n".join(lines) + "\n")
    return _manifest(out, "ablate", cfg, ["ablation.csv", *files],
                     volatile=tuple(f"lambda_{lam:.0e}/loss_log.csv" for lam in cfg.lambdas()))


# entry point ---------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="pulsefield", description=__doc__.split("\n")[0])
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", required=True, help="JSON experiment configuration")
    ap.add_argument("--seed", type=int, help="override the config seed")
    ap.add_argument("--out", help="override the output directory")
    ap.add_argument("--resample", action="store_true",
                    help="evaluate: interpolate fields onto the reference grid")
    return ap


def run(argv=None) -> dict:
    args = build_parser().parse_args(argv)
    cfg = load_config(args.config).with_overrides(args.seed, args.out)
    if args.command == "generate":
        return cmd_generate(cfg)
    if args.command == "train":
        return cmd_train(cfg)
    if args.command == "reconstruct":
        return cmd_reconstruct(cfg)
    if args.command == "evaluate":
        return cmd_evaluate(cfg, args.resample)
    return cmd_ablate(cfg)


def main(argv=None) -> int:
    try:
        run(argv)
    except PulsefieldError as exc:
        msg = " ".join(str(exc).split())
        print(f"error: {type(exc).__name__}: {msg}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error: OutputError: {exc.filename or ''}: {exc.strerror}", file=sys.stderr)
        return EXIT_IO
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
