# %% [markdown]
# # Where the multiply-accumulates go
#
# Token-to-token attention shrinks by k / S^2. The projection, pooling,
# adjacency and local-context terms stay fixed as k varies.

# %%
from classroom_bra import BRAConfig, flops
from classroom_bra.harness import bench

h = w = 64
c = 32
print(f"{'S':>3} {'k':>3} {'qkv':>10} {'adj':>8} {'t2t':>12} {'dense t2t':>12} ratio")
for s in (2, 4, 8):
    for k in (1, s, s * s):
        r = flops(BRAConfig(s=s, k=k), h, w, c)
        print(f"{s:>3} {k:>3} {r.qkv:>10} {r.adjacency:>8} {r.token_to_token:>12} "
              f"{r.dense_token_to_token:>12} {r.ratio}")

# %% [markdown]
# Wall time of the numpy forward pass (machine dependent).

# %%
for k in (1, 4, 16):
    rep = bench(h, w, c, s=8, k=k, iters=3, seed=0)
    print(f"k={k:>2}  {rep.timing_line()}")
