# %% [markdown]
# # Merging behaviors with track identities
#
# Two students are tracked. Actions are detected once per second on the
# keyframe (frame = second * 30); hand raises come from the 1 fps branch.

# %%
from classroom_bra import ActionEvent, Box, HandRaiseEvent, TrackEvent, fuse
from classroom_bra.fusion import dumps_records

alice, bob = Box(0, 0, 40, 80), Box(100, 0, 140, 80)
tracks = [TrackEvent(0, 1, alice), TrackEvent(0, 2, bob),
          TrackEvent(30, 1, alice), TrackEvent(30, 2, bob)]
actions = [
    ActionEvent(0, Box(2, 0, 40, 78), {"sit": 0.9, "listen": 0.7}),
    ActionEvent(0, Box(100, 2, 138, 80), {"write": 0.8}),
    ActionEvent(1, Box(0, 0, 40, 76), {"stand": 0.85}),
]
hands = [
    HandRaiseEvent(1, Box(0, 0, 40, 70), 0.92),
    HandRaiseEvent(1, Box(300, 0, 340, 60), 0.55),  # nobody tracked there
]

# %%
for rec in fuse(tracks, actions, hands):
    who = "unassigned" if rec.track_id is None else f"track {rec.track_id}"
    print(f"second {rec.second}: {who:<10} {sorted(rec.behaviors)}")

# %%
print(dumps_records(fuse(tracks, actions, hands)))
