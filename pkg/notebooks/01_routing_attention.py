# %% [markdown]
# # Routing attention on a toy feature map
#
# Cut an 8x8 map into a 2x2 grid of regions, let every region keep its single
# best neighbour, and compare against full attention.

# %%
import numpy as np

from classroom_bra import BRAConfig, bra_forward, dense_attention_forward, patchify
from classroom_bra.harness import random_feature_map, random_params

x = random_feature_map(8, 8, 4, seed=0)
params = random_params(4, seed=1)

# %%
out, trace = bra_forward(x, BRAConfig(s=2, k=1), params)
print("output shape", out.shape)
print("region adjacency\n", np.round(trace.a_r, 5))
print("routed regions per region", trace.i_r.ravel())

# %% [markdown]
# Region r of the patchified map holds one 4x4 tile; the tiles are numbered
# row-major over the grid.

# %%
print(patchify(np.arange(16.0).reshape(4, 4, 1), 2)[..., 0])

# %% [markdown]
# Routing to every region turns the layer back into full attention.

# %%
for k in (1, 2, 3, 4):
    sparse, _ = bra_forward(x, BRAConfig(s=2, k=k), params)
    gap = np.abs(sparse - dense_attention_forward(x, params)).max()
    print(f"k={k}: max |routed - dense| = {gap:.2e}")
