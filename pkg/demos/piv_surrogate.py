"""Particle images advected by a flow, and velocities recovered by cross-correlation.

Run with ``python demos/piv_surrogate.py``.
"""
import numpy as np

from pulsefield.piv import cross_correlate, piv_to_field, render_particles
from pulsefield.synthdata import GridSpec, WomersleyParams, generate_field
from pulsefield.verify import peak_phase_index

p = WomersleyParams(alpha=2.77)
field = generate_field(p, GridSpec(nx=16, ny=33, nt=25))
k = peak_phase_index(field, p)

# 50 um pixels and a 0.5 ms frame gap give a peak displacement of 3 px
dt, scale = 5e-4, 5e-5
a, b = render_particles(field, field.times[k], dt, scale=scale, seed=0, window=16)
print("image size:", a.pixels.shape)

r = cross_correlate(a, b, window=(16, 16), overlap=0.5)
print(f"{r.valid.sum()} of {r.valid.size} windows valid")
out = piv_to_field(r, dt)

# the recovered profile, averaged along the tube, against the analytic one
rows = out.u[0].mean(axis=0)
print("PIV u(y):     ", np.round(rows, 3))
ys = out.ys - out.ys.mean()
from pulsefield.synthdata import womersley_velocity  # noqa: E402
want = womersley_velocity(p, np.clip(ys / p.R, -1, 1), field.times[k])
print("analytic u(y):", np.round(want, 3))
