"""Train a small tracker on synthetic clips and follow a moving square.

Run: python3 demos/03_train_and_track.py   (a few minutes on one core)
"""
import numpy as np

from hift import evalbench, tracker
from hift.config import RunConfig
from hift.heads import iou
from hift.synth import SynthConfig, gen_sequence
from hift.training import train

# small crops and 32-bit arithmetic keep this quick
cfg = RunConfig().replace(backbone={"template_size": 48, "search_size": 96},
                          train={"steps": 400, "precision": 32})
res = train(cfg)
losses = np.array([row[1] for row in res.losses])
print(f"loss {losses[0]:.3f} -> {losses[-50:].mean():.3f} over {len(losses)} steps")

# a target drifting right and down on a noisy canvas
seq = gen_sequence(SynthConfig(frames=40, target_size=(26, 20), start=(50, 60),
                               velocity=(1.5, 0.8), noise=0.03, seed=5))
boxes = tracker.track_sequence(seq.frames, seq.boxes[0], res.model, cfg.tracker_config())
for t in range(0, 40, 8):
    b, g = boxes[t], seq.boxes[t]
    print(f"frame {t:2d}  pred ({b.cx:6.1f},{b.cy:6.1f})  truth ({g.cx:6.1f},{g.cy:6.1f})  IoU {iou(b, g):.2f}")

m = evalbench.evaluate(boxes, seq.boxes)
print("precision@20", evalbench.precision_at_20(m["precision"]), "AUC", round(evalbench.auc(m["success"]), 3))
