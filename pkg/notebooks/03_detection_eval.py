# %% [markdown]
# # Scoring hand-raise detections
#
# Two images, three ground-truth students with raised hands, four predictions.

# %%
from classroom_bra import Box, Detection, average_precision, iou
from classroom_bra.evaluation import confusion, pr_curve, precision_recall

gts = {
    "img1": [Box(10, 10, 50, 60), Box(100, 20, 140, 80)],
    "img2": [Box(30, 30, 70, 90)],
}
preds = {
    "img1": [Detection(Box(12, 12, 50, 58), 0.95), Detection(Box(200, 200, 240, 250), 0.80)],
    "img2": [Detection(Box(28, 35, 72, 88), 0.70), Detection(Box(30, 30, 70, 90), 0.40)],
}
print("IoU of first prediction:", round(iou(preds["img1"][0].box, gts["img1"][0]), 4))

# %%
for thr in (0.5, 0.75, 0.9):
    counts = confusion(preds, gts, thr)
    p, r = precision_recall(counts)
    print(f"IoU {thr}: tp={counts.tp} fp={counts.fp} fn={counts.fn} "
          f"P={p:.3f} R={r:.3f} AP={average_precision(preds, gts, thr):.4f} "
          f"AP101={average_precision(preds, gts, thr, interp='101'):.4f}")

# %%
for rec, prec in pr_curve(preds, gts, 0.5).points:
    print(f"recall {rec:.3f}  precision {prec:.3f}")
