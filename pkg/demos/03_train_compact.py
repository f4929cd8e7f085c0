"""Train the compact late-fusion model for a few steps and score it.

This is the numpy autodiff end to end: synthetic clips, the KL + CC loss,
Adam, then NSS and CC on the training frames. With the default 60
steps it takes about two minutes on one core. Scoring uses eval mode, so
batch norm switches to its running statistics; those lag behind the
weights for the first few dozen steps.

Run with ``python demos/03_train_compact.py [steps]``.
"""
import sys
import tempfile

import numpy as np

from msafnet.data import sample_clip
from msafnet.metrics import extract_fixations, metric_cc, metric_nss
from msafnet.model import ModelConfig, MSAFNetModel, count_parameters
from msafnet.synth import SynthConfig, synth_generate
from msafnet.tensor import no_grad
from msafnet.train import TrainConfig, predict_batch, stack_batch, train

steps = int(sys.argv[1]) if len(sys.argv) > 1 else 60
videos = synth_generate(SynthConfig(num_videos=4, num_frames=24, sigma=8.0), tempfile.mkdtemp())
clips = [sample_clip(videos[i % 4], 12 + 4 * (i // 4)) for i in range(8)]

model = MSAFNetModel(ModelConfig.compact("late", seed=0))
print(f"compact late-fusion model, {count_parameters(model).total} parameters")


def report(row):
    step, loss, kl, cc = row
    if step == 1 or step % 10 == 0:
        print(f"  step {step:3d}  loss {loss:7.3f}  kl {kl:6.3f}  cc {cc:7.3f}")


result = train(model, clips, TrainConfig(batch_clips=8, resolution=64), steps=steps, callback=report)
first, last = result.trace[0][1], result.trace[-1][1]
print(f"loss {first:.3f} -> {last:.3f}")

model.eval()
rgb, sem, labels = stack_batch(clips, model.dtype)
with no_grad():
    preds = predict_batch(model, rgb, sem).data[:, 0]
nss = [metric_nss(extract_fixations(g), p) for g, p in zip(labels[:, 0], preds)]
cc = [metric_cc(g, p) for g, p in zip(labels[:, 0], preds)]
print(f"on the training frames: NSS {np.mean(nss):.2f}, CC {np.mean(cc):.2f}")
