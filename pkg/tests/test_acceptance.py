"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

The training criteria (3 to 6) are marked ``slow``; the denoising run uses the
full default grid and takes roughly a quarter of an hour on one CPU core.
"""
from __future__ import annotations

import hashlib
import json
import math
import time

import mpmath
import numpy as np
import pytest

from pulsefield import autodiff as ad
from pulsefield.checkpoint import dumps_model, loads_model
from pulsefield.cli import _like, main
from pulsefield.flowfield import BOUNDARY, FlowField, dumps_flowfield, loads_flowfield
from pulsefield.model import (MLP, BranchedModel, Normalization, Scales, make_branched,
                              make_model)
from pulsefield.piv import (ParticleImage, cross_correlate, dumps_pgm, loads_pgm, piv_to_field,
                            render_particles, render_positions)
from pulsefield.synthdata import (GridSpec, WomersleyParams, corrupt, generate_field, occlude,
                                  preset, random_bands)
from pulsefield.training import (LossLog, LossWeights, TrainConfig, classify_regions, train,
                                 train_branched)
from pulsefield.training.occlusion import OcclusionMap, compute_occlusion_map, loss_occ
from pulsefield.verify import (MetricsReport, Series, evaluate, flow_rate, flowrate_mse,
                               mean_velocity_cycle, peak_phase_index)

from helpers import TapeOps, fd_vorticity_residual, random_program, run_program, well_conditioned


@pytest.fixture
def verdict(capsys):
    """Print one PASS/FAIL line past pytest's capture, then hand back the boolean."""

    def report(n, ok, detail):
        with capsys.disabled():
            print(f"\n[criterion {n}] {'PASS' if ok else 'FAIL'}: {detail}")
        return ok

    return report


# 1. autodiff against high-precision central differences ------------------

class _MpOps:
    sin = staticmethod(mpmath.sin)
    cos = staticmethod(mpmath.cos)
    tanh = staticmethod(mpmath.tanh)
    exp = staticmethod(mpmath.exp)

    @staticmethod
    def leaky(x):
        return x if x >= 0 else 0.01 * x

    @staticmethod
    def div(a, b):
        return a / b


def _graph_cases(n_graphs, seed=2024):
    rng = np.random.default_rng(seed)
    cases = []
    while len(cases) < n_graphs:
        n_in = int(rng.integers(1, 4))
        prog = random_program(rng, n_in, int(rng.integers(4, 16)))
        for _ in range(20):
            x = rng.uniform(-1.5, 1.5, n_in)
            if well_conditioned(prog, x, margin=0.05, limit=1e2):
                cases.append((prog, n_in, x, rng.integers(0, n_in, 3)))
                break
    return cases


def _mp_partial(prog, x, wrt):
    orders = [0] * len(x)
    for k in wrt:
        orders[k] += 1
    f = lambda *v: run_program(prog, list(v), _MpOps)  # noqa: E731
    with mpmath.workdps(40):
        return float(mpmath.diff(f, tuple(mpmath.mpf(float(v)) for v in x), tuple(orders)))


def test_criterion_1_autodiff(verdict):
    cases = _graph_cases(200)
    spent = 0.0
    worst = {1: 0.0, 2: 0.0, 3: 0.0}
    failures = []
    for prog, n_in, x, idx in cases:
        t0 = time.perf_counter()
        g = ad.trace(lambda *v: run_program(prog, list(v), TapeOps), n_in)
        first = ad.grad(g, list(x))
        got = {1: [first.get(k, 0.0) for k in range(n_in)],
               2: ad.derive_n(g, list(x), list(idx[:2])),
               3: ad.derive_n(g, list(x), list(idx))}
        spent += time.perf_counter() - t0
        want = {1: [_mp_partial(prog, x, [k]) for k in range(n_in)],
                2: _mp_partial(prog, x, idx[:2]),
                3: _mp_partial(prog, x, idx)}
        for order, tol in ((1, 1e-4), (2, 1e-4), (3, 1e-3)):
            for a, b in zip(np.atleast_1d(got[order]), np.atleast_1d(want[order])):
                err = abs(a - b) / max(abs(b), 1e-6)
                worst[order] = max(worst[order], err)
                if err > tol:
                    failures.append((order, a, b))
    ok = verdict(1, not failures and spent < 10.0,
                 f"{len(cases)} graphs, worst rel err {worst[1]:.1e}/{worst[2]:.1e}/{worst[3]:.1e}"
                 f" (orders 1/2/3), autodiff time {spent:.2f} s")
    assert not failures, failures[:5]
    assert spent < 10.0 and ok


# 2. Womersley oracle ------------------------------------------------------

def test_criterion_2_womersley(verdict):
    p, _ = preset("exp12")
    ff = generate_field(p, GridSpec(64, 33, 49))
    wall = np.abs(np.abs(ff.ys) - p.R) <= 1e-15 * p.R
    no_slip = bool(np.all(ff.u[:, :, wall] == 0) and np.all(ff.v == 0))

    y = np.linspace(-1, 1, 65)
    t = np.linspace(0, p.period, 97)[:, None]
    from pulsefield.synthdata import womersley_velocity
    drift = float(np.max(np.abs(womersley_velocity(p, y, t + p.period)
                                - womersley_velocity(p, y, t))))

    res = float(np.max(np.abs(fd_vorticity_residual(ff, Scales.from_reynolds(p.R, p.nu, p.Re),
                                                    p.Re))))

    steady = WomersleyParams((p.pressure_modes[0].real,), alpha=p.alpha)
    sf = generate_field(steady, GridSpec(4, 65, 3))
    umax = steady.pressure_modes[0].real * p.R ** 2 / (4 * p.mu)
    q_want = math.pi * p.R ** 2 * umax / 2 * 6e7  # ml/min
    q_err = float(np.max(np.abs(flow_rate(sf).values - q_want)) / q_want)

    ok = verdict(2, no_slip and drift <= 1e-10 and res <= 1e-2 and q_err <= 0.01,
                 f"no-slip {no_slip}, periodicity drift {drift:.1e}, FD residual {res:.2e},"
                 f" steady flow-rate rel err {q_err:.1e}")
    assert ok


# 7. occlusion map calibration --------------------------------------------

def _rows_field(speeds):
    speeds = np.asarray(speeds, dtype=float)
    u = np.broadcast_to(speeds[None, :, None], (2, speeds.size, 5)).copy()
    region = np.zeros(u.shape, dtype=np.int8)
    region[:, :, [0, -1]] = BOUNDARY
    return FlowField(np.arange(2.0), np.arange(float(speeds.size)), np.arange(5.0), u,
                     np.zeros_like(u), region)


def _blend_combiner(c):
    """Combiner computing c * msff + (1 - c) * vanilla exactly."""
    w1 = np.zeros((7, 2))
    w1[3, 0], w1[5, 0] = c, 1 - c
    w1[4, 1], w1[6, 1] = c, 1 - c
    return MLP([w1, np.eye(2)], [np.full(2, 10.0), np.full(2, -10.0)])


def test_criterion_7_occlusion_calibration(verdict):
    rng = np.random.default_rng(7)
    speeds = rng.uniform(0.05, 0.5, 9)
    speeds[4] = 0.0
    speeds[4] = speeds.mean() * 9 / 8  # the row sitting exactly at the streamline mean
    lam = compute_occlusion_map(_rows_field(speeds)).lam
    at_mean = float(np.max(np.abs(lam[:, 4, 1:-1] - 0.5)))

    p, pr = preset("exp12")
    clean = generate_field(p, GridSpec(16, 17, 13))
    field = occlude(corrupt(clean, pr.noise_level, 1), random_bands(clean, 0.2, 1), 0.2)
    big = compute_occlusion_map(field).lam
    extreme = compute_occlusion_map(_rows_field([0.0, 0.0, 0.0, 40.0]), beta=400.0).lam
    open_interval = bool(all(np.all((m > 0) & (m < 1)) for m in (lam, big, extreme)))

    cs = classify_regions(clean)
    bm = make_branched(0, hidden=(8,), combiner_hidden=(2,))
    perfect = BranchedModel(bm.msff_branch, bm.vanilla_branch, _blend_combiner(0.3))
    occ = loss_occ(perfect, cs, OcclusionMap.constant(clean, 0.3))

    ok = verdict(7, at_mean <= 1e-12 and open_interval and occ <= 1e-12,
                 f"|Lambda(mean) - 0.5| = {at_mean:.1e}, strictly inside (0,1): {open_interval},"
                 f" perfect combiner loss_occ = {occ:.1e}")
    assert ok


# 8. PIV surrogate ---------------------------------------------------------

SCALE = 1e-4


def _pair(shift, seed, w=128, h=96, density=0.02):
    rng = np.random.default_rng(seed)
    n = int(density * (w + 20) * (h + 20))
    pos = np.column_stack([rng.uniform(-10, w + 10, n), rng.uniform(-10, h + 10, n)])
    return (ParticleImage(render_positions(pos, (h, w)), SCALE),
            ParticleImage(render_positions(pos + shift, (h, w)), SCALE))


def _uniform_flow(u0, w=128, h=96):
    shape = (2, 2, 2)
    return FlowField([0.0, 1.0], [0.0, (w - 1) * SCALE], [0.0, (h - 1) * SCALE],
                     np.full(shape, u0), np.zeros(shape), np.zeros(shape, dtype=np.int8))


def test_criterion_8_piv(verdict):
    exact = True
    for shift, seed in (((3.0, 0.0), 0), ((-2.0, 4.0), 3), ((0.0, -5.0), 8)):
        r = cross_correlate(*_pair(shift, seed))
        exact &= bool(r.valid.all() and np.all(r.displacements == shift))

    sub = []
    for seed in range(5):
        r = cross_correlate(*_pair((2.5, 0.0), seed))
        sub.append(r.displacements[r.valid, 0].mean())
    sub_err = abs(float(np.mean(sub)) - 2.5)

    U, dt = 0.025, 0.01  # 2.5 px per frame
    rms = []
    for seed in range(3):
        a, b = render_particles(_uniform_flow(U), 0.0, dt, scale=SCALE, seed=seed)
        out = piv_to_field(cross_correlate(a, b), dt)
        rms.append(float(np.sqrt(np.mean((out.u - U) ** 2 + out.v ** 2)) / U))

    ok = verdict(8, exact and sub_err <= 0.2 and max(rms) <= 0.05,
                 f"integer shifts exact: {exact}, 2.5 px mean error {sub_err:.3f} px,"
                 f" uniform-flow RMS velocity error {100 * max(rms):.2f}%")
    assert ok


# 9. determinism and formats -----------------------------------------------

def _write_config(tmp_path, out):
    cfg = {
        "seed": 5,
        "out": str(out),
        "dataset": {"preset": "exp12", "grid": {"nx": 8, "ny": 9, "nt": 7}},
        "model": {"kind": "rff", "hidden": [16, 16], "dims": [8]},
        "train": {"epochs": 2, "lr": 1e-3, "batch": 64, "phys_points": 16},
    }
    path = tmp_path / f"{out.name}.json"
    path.write_text(json.dumps(cfg))
    return path


def _digests(out):
    found = {}
    for path in sorted(out.iterdir()):
        data = path.read_bytes()
        if path.name == "loss_log.csv":
            # wall-clock column differs between runs by design; the losses must not
            log = LossLog.from_csv(data.decode())
            for r in log.rows:
                r.pop("wall_time_s")
            data = json.dumps(log.rows, sort_keys=True).encode()
        found[path.name] = hashlib.sha256(data).hexdigest()
    return found


def test_criterion_9_determinism_and_formats(tmp_path, verdict):
    import shutil

    out = tmp_path / "run"
    cfg = _write_config(tmp_path, out)
    runs = []
    for _ in range(2):
        if out.exists():
            shutil.rmtree(out)
        assert main(["train", "--config", str(cfg)]) == 0
        runs.append(_digests(out))
    same = runs[0] == runs[1] and {"manifest.json", "model.ckpt", "metrics.json"} <= set(runs[0])

    p, pr = preset("exp12")
    clean = generate_field(p, GridSpec(8, 9, 7))
    ff = occlude(corrupt(clean, 0.3, 2), random_bands(clean, 0.2, 2), 0.2)
    ff = ff.copy(lam=compute_occlusion_map(ff).lam)
    text = dumps_flowfield(ff)
    trips = {"flowfield": dumps_flowfield(loads_flowfield(text)) == text}
    for kind in ("none", "rff", "tff", "msff"):
        blob = dumps_model(make_model(kind, 3, hidden=(8, 8)))
        trips[f"checkpoint/{kind}"] = dumps_model(loads_model(blob)) == blob
    blob = dumps_model(make_branched(3, hidden=(8,), combiner_hidden=(4,)))
    trips["checkpoint/branched"] = dumps_model(loads_model(blob)) == blob
    a, _ = render_particles(_uniform_flow(0.01), 0.0, 0.01, scale=SCALE, seed=4)
    pgm = dumps_pgm(a)
    trips["pgm"] = dumps_pgm(loads_pgm(pgm)) == pgm
    series = mean_velocity_cycle(ff).to_csv()
    trips["series"] = Series.from_csv(series).to_csv() == series
    log_text = (out / "loss_log.csv").read_text()
    trips["loss_log"] = LossLog.from_csv(log_text).to_csv() == log_text
    rep_text = (out / "metrics.json").read_text()
    trips["metrics"] = MetricsReport.from_json(rep_text).to_json() == rep_text

    ok = verdict(9, same and all(trips.values()),
                 f"repeated run hash-identical over {len(runs[0])} files: {same},"
                 f" round-trips {sum(trips.values())}/{len(trips)} byte-exact")
    assert ok, (runs, trips)


# 3 to 6: training experiments ----------------------------------------------

REDUCED = GridSpec(32, 17, 25)  # 13.6k points; the full default grid is 8x larger


def _exp12(grid, seed=0):
    p, pr = preset("exp12")
    clean = generate_field(p, grid)
    return p, clean, corrupt(clean, pr.noise_level, seed, pr.dropout_fraction)


def _fit(kind, noisy, epochs=50, seed=0, weights=LossWeights(), **cfg):
    model = make_model(kind, seed, norm=Normalization.from_points(noisy.coordinates()))
    trained, log = train(model, noisy, TrainConfig(lr=1e-3, epochs=epochs, seed=seed, **cfg),
                         weights)
    return trained, log


@pytest.mark.slow
def test_criterion_3_denoising(verdict):
    p, clean, noisy = _exp12(GridSpec())
    t0 = time.perf_counter()
    trained, log = _fit("rff", noisy)
    minutes = (time.perf_counter() - t0) / 60
    report, _ = evaluate(_like(trained, noisy), noisy, clean, p)
    rel = report.rel_decrease_pct
    total = log.column("loss_total")
    smooth = np.convolve(total, np.ones(10) / 10, mode="valid")
    trend = bool(np.all(np.diff(smooth) < 0))
    ok = all(rel[k] > 0 for k in ("mse_field", "mse_cycle", "mse_profile"))
    verdict(3, ok, f"rel_decrease field {rel['mse_field']:.1f}%, cycle {rel['mse_cycle']:.1f}%,"
                   f" profile {rel['mse_profile']:.1f}% after 50 epochs in {minutes:.1f} min"
                   f" (10-epoch moving-average loss decreasing: {trend})")
    assert trend
    assert rel["mse_field"] > 0
    assert rel["mse_cycle"] > 0
    assert rel["mse_profile"] > 0


@pytest.mark.slow
def test_criterion_4_ablation(tmp_path, verdict):
    cfg = {
        "seed": 0, "out": str(tmp_path / "ablate"),
        "dataset": {"preset": "exp12", "grid": {"nx": REDUCED.nx, "ny": REDUCED.ny,
                                                "nt": REDUCED.nt}},
        "model": {"kind": "rff"},
        "train": {"lr": 1e-3, "epochs": 50},
    }
    path = tmp_path / "ablate.json"
    path.write_text(json.dumps(cfg))
    assert main(["ablate", "--config", str(path)]) == 0
    lines = (tmp_path / "ablate" / "ablation.csv").read_text().splitlines()[1:]
    field = {float(r.split(",")[0]): float(r.split(",")[1]) for r in lines}
    worse = [lam for lam, v in field.items() if lam >= 1e-4 and v <= 0]
    ok = field[1.0] < field[1e-6] and bool(worse)
    table = ", ".join(f"{lam:.0e}: {v:.1f}%" for lam, v in sorted(field.items()))
    verdict(4, ok, f"field rel_decrease by lambda_phys [{table}]")
    assert field[1.0] < field[1e-6]
    assert worse


def _peak_variance(model, noisy, p):
    pred = _like(model, noisy)
    k = peak_phase_index(pred, p)
    return float(np.var(pred.u[k][pred.fluid[k]]))


@pytest.mark.slow
def test_criterion_5_spectral_bias(verdict):
    p, clean, noisy = _exp12(REDUCED)
    var_vanilla = _peak_variance(_fit("none", noisy)[0], noisy, p)
    var_rff = _peak_variance(_fit("rff", noisy)[0], noisy, p)
    k = peak_phase_index(clean, p)
    var_true = float(np.var(clean.u[k][clean.fluid[k]]))
    ok = var_vanilla < var_rff
    verdict(5, ok, f"peak-phase spatial variance vanilla {var_vanilla:.2e} < rff {var_rff:.2e}"
                   f" (analytic {var_true:.2e})")
    assert ok


@pytest.mark.slow
def test_criterion_6_inpainting(verdict):
    p, pr = preset("exp12")
    clean = generate_field(p, REDUCED)
    bands = random_bands(clean, 0.2, seed=1)
    noisy = occlude(corrupt(clean, pr.noise_level, 0, pr.dropout_fraction), bands, 0.2)
    inside = np.zeros(clean.shape, dtype=bool)
    for (t0, t1), (x0, x1) in bands:
        inside |= ((clean.times[:, None, None] >= t0) & (clean.times[:, None, None] <= t1)
                   & (clean.xs[None, :, None] >= x0) & (clean.xs[None, :, None] <= x1))
    inside &= clean.fluid
    coverage = inside.sum() / clean.fluid.sum()

    bm = make_branched(0, norm=Normalization.from_points(noisy.coordinates()))
    trained, _ = train_branched(bm, noisy, TrainConfig(lr=1e-3, epochs=50, stage1_epochs=100))
    pred = _like(trained, noisy)

    def band_mse(f):
        return float(np.mean((f.u[inside] - clean.u[inside]) ** 2
                             + (f.v[inside] - clean.v[inside]) ** 2))

    ref = flow_rate(clean)
    q_pred, _ = flowrate_mse(flow_rate(pred), ref)
    q_noisy, _ = flowrate_mse(flow_rate(noisy), ref)
    ok = band_mse(pred) < band_mse(noisy) and q_pred < q_noisy
    verdict(6, ok, f"band coverage {100 * coverage:.0f}%, in-band MSE {band_mse(pred):.2e} vs"
                   f" corrupted {band_mse(noisy):.2e}; flow-rate MSE {q_pred:.1f} vs {q_noisy:.1f}")
    assert band_mse(pred) < band_mse(noisy)
    assert q_pred < q_noisy
