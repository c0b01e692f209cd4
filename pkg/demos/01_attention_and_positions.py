"""Attention weights, and why the learned position table matters.

Run: python3 demos/01_attention_and_positions.py
"""
import numpy as np

from hift import tensor as T
from hift.transformer import HierarchicalTransformer, attention

rng = np.random.default_rng(0)

# scaled dot-product attention: every row of weights is a distribution over keys
q, k, v = rng.standard_normal((4, 8)), rng.standard_normal((6, 8)), rng.standard_normal((6, 2))
out, w = attention(q, k, v, return_weights=True)
print("weights row sums:", np.round(w.data.sum(axis=1), 12))

# with identical keys the weights are uniform, so each output is the mean value
same = np.tile(k[:1], (6, 1))
print("identical keys ->", np.allclose(attention(q, same, v).data, v.mean(axis=0)))

# a 3x3 similarity map flattened into 9 tokens of width 8
tr = HierarchicalTransformer(8, 9, rng, heads=4)
m3, m4, m5 = (rng.standard_normal((9, 8)) for _ in range(3))
perm = rng.permutation(9)

# the decoder has no position input: shuffling the tokens just shuffles the output
out = tr.decode(T.Tensor(m5), T.Tensor(m4)).data
out_p = tr.decode(T.Tensor(m5[perm]), T.Tensor(m4[perm])).data
print("decoder shuffle delta:", np.abs(out_p - out[perm]).max())

# the encoder adds a learned table indexed by location, so a shuffle is visible
enc = tr.encode(T.Tensor(m3), T.Tensor(m4)).data
enc_p = tr.encode(T.Tensor(m3[perm]), T.Tensor(m4[perm])).data
print("encoder shuffle delta:", np.abs(enc_p - enc[perm]).max())
