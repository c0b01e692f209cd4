"""Training targets for one search crop and the loss they feed.

Run: python3 demos/02_labels_and_loss.py
"""
import numpy as np

from hift import tensor as T
from hift.heads import IGNORE, POSITIVE, BBox, LabelConfig, MapGeometry, loss_terms, make_labels

# an 11x11 score map with stride 8 covering a 96 pixel crop
geom = MapGeometry.centered(11, 8, 96)
gt = BBox(50.0, 44.0, 30.0, 22.0)


def show(grid):
    for row in grid.reshape(geom.height, geom.width):
        print(" ".join({1: "+", 0: ".", -1: "o"}.get(int(x), "?") for x in row))


# first classifier: is the location inside the box
lab = make_labels(gt, geom)
print("inside the box:")
show(lab.cls1)

# second classifier: near the center (+), a ring left out of the loss (o), the rest negative
print("\ncircular centre labels:")
show(lab.cls2)
print("positives", int((lab.cls2 == POSITIVE).sum()), "ignored", int((lab.cls2 == IGNORE).sum()),
      "negatives kept", int(lab.neg_keep.sum()))

# the rectangular variant marks the whole box positive instead
rect = make_labels(gt, geom, LabelConfig(mode="rectangle"))
print("\nrectangle labels:")
show(rect.cls2)

# regression targets are distances to the four box edges
i = int(np.argmax(lab.cls2 == POSITIVE))
print("\nltrb target at location", i, "=", np.round(lab.reg[i], 2))

# random head outputs give a loss for each branch
rng = np.random.default_rng(1)
preds = {"cls1": T.Tensor(rng.standard_normal((geom.locations, 2))),
         "cls2": T.Tensor(rng.standard_normal((geom.locations, 1))),
         "reg": T.Tensor(np.exp(rng.standard_normal((geom.locations, 4))) * 10)}
for name, value in loss_terms(preds, lab).items():
    print(f"{name:5s} {float(value.item()):.4f}")
