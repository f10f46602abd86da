"""Occlusion bands, the streamline occlusion map, and the branched model.

Run with ``python demos/occlusion_map.py``.  Stage one is shortened here;
the defaults train each branch for 100 epochs.
"""
import numpy as np

from pulsefield.cli import sample_model
from pulsefield.model import Normalization, make_branched
from pulsefield.synthdata import GridSpec, corrupt, generate_field, occlude, preset, random_bands
from pulsefield.training import TrainConfig, compute_occlusion_map, train_branched

p, pr = preset("exp12")
clean = generate_field(p, GridSpec(nx=24, ny=17, nt=21))
bands = random_bands(clean, coverage=0.2, seed=1)
noisy = occlude(corrupt(clean, pr.noise_level, seed=0), bands, attenuation=0.2)
print("bands (t-range, x-range):", bands)

# lambda is the probability of *not* being occluded, per point
lam = compute_occlusion_map(noisy).lam
fluid = noisy.fluid
print("mean lambda inside fluid: %.3f, min %.3f" % (lam[fluid].mean(), lam[fluid].min()))
low = (lam < 0.2) & fluid
print("points flagged (lambda < 0.2): %d of %d" % (low.sum(), fluid.sum()))

bm = make_branched(seed=0, hidden=(64, 64, 64),
                   norm=Normalization.from_points(noisy.coordinates()))
trained, log = train_branched(bm, noisy, TrainConfig(lr=1e-3, epochs=10, stage1_epochs=10,
                                                     batch=1024))
pred = sample_model(trained, noisy.times, noisy.xs, noisy.ys, noisy.meta)
gap = np.abs(noisy.u - clean.u)[low].mean(), np.abs(pred.u - clean.u)[low].mean()
print("mean |u error| on flagged points, corrupted vs branched: %.3f vs %.3f" % gap)
