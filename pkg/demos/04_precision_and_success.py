"""Precision and success curves on a hand-made four-frame result.

Run: python3 demos/04_precision_and_success.py
"""
from hift import evalbench as ev
from hift.heads import BBox

gt = [BBox.from_xywh(0, 0, 10, 10)] * 4
pred = [BBox.from_xywh(0, 0, 10, 10),    # exact
        BBox.from_xywh(5, 0, 10, 10),    # 5 px off, overlap 1/3
        BBox.from_xywh(0, 20, 10, 10),   # 20 px off, no overlap
        BBox.from_xywh(30, 40, 10, 10)]  # 50 px off

print("centre errors:", [ev.cle(p, g) for p, g in zip(pred, gt)])

# precision counts frames whose centre error is within each pixel threshold
prec = ev.precision_plot(pred, gt)
for t in (0, 5, 19, 20, 49, 50):
    print(f"precision at {t:2d} px: {prec.scores[t]:.2f}")

# success counts frames whose overlap is above each threshold; its mean is the AUC
succ = ev.success_plot(pred, gt)
print("success curve:", [round(float(s), 2) for s in succ.scores])
print("AUC:", round(ev.auc(succ), 4))
