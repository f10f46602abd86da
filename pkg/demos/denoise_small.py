"""Denoising a small noisy Womersley field with an RFF neural field.

A reduced grid and 40 epochs keep this to a minute or two on one core;
the acceptance suite runs the full-size experiment.

Run with ``python demos/denoise_small.py``.
"""
from pulsefield.cli import sample_model
from pulsefield.model import Normalization, make_model
from pulsefield.synthdata import GridSpec, corrupt, generate_field, preset
from pulsefield.training import LossWeights, TrainConfig, train
from pulsefield.verify import evaluate

p, pr = preset("exp12")  # alpha 2.77, 30% multiplicative noise
clean = generate_field(p, GridSpec(nx=24, ny=17, nt=21))
noisy = corrupt(clean, pr.noise_level, seed=0, dropout_fraction=pr.dropout_fraction)

model = make_model("rff", seed=0, norm=Normalization.from_points(noisy.coordinates()))
cfg = TrainConfig(lr=1e-3, epochs=40, batch=512)


def show(epoch, row):
    if epoch % 10 == 0:
        print(f"epoch {epoch:3d}  total {row['loss_total']:.5f}  data {row['loss_data']:.5f}")


trained, log = train(model, noisy, cfg, LossWeights(), progress=show)

pred = sample_model(trained, noisy.times, noisy.xs, noisy.ys, noisy.meta)
pred.region = noisy.region.copy()
report, _ = evaluate(pred, noisy, clean, p)
print("field MSE, noisy -> model: %.2e -> %.2e" % (report.noisy["mse_field"], report.mse_field))
for k, v in report.rel_decrease_pct.items():
    print(f"  relative decrease {k}: {v:.1f}%")
