"""LSTM cells, the bidirectional encoder and scaled dot-product attention."""

import math

import numpy as np

from miniformer import layers as L
from miniformer import tensor as T

rng = np.random.default_rng(1)

# %% One LSTM step on the concatenation [h_prev, x]
cell = L.LstmCellParams.init(rng, d_input=3, d_hidden=4)
x = T.Tensor(rng.uniform(-1, 1, (2, 3)))
state = L.LstmState(T.Tensor(np.zeros((2, 4))), T.Tensor(np.zeros((2, 4))))
state = L.lstm_cell_step(cell, x, state)
print("h after one step:\n", state.h.data.round(4))

# %% With zero weights every gate sits at sigmoid(0) = 0.5 and the candidate at 0,
# so c = 0.5 * c_prev and h = 0.5 * tanh(c)
zero = L.LstmCellParams(*(T.parameter(np.zeros((3, 1))) for _ in range(4)),
                        *(T.parameter(np.zeros(1)) for _ in range(4)))
s = L.lstm_cell_step(zero, T.Tensor([[0.3, -0.2]]), L.LstmState(T.Tensor([[0.7]]), T.Tensor([[2.0]])))
print("zero-weight cell:", s.c.data.item(), s.h.data.item(), "expected", 1.0, round(0.5 * math.tanh(1.0), 4))

# %% A bidirectional pass over a padded batch; padding positions come out as zeros
fwd, bwd = L.LstmCellParams.init(rng, 3, 2), L.LstmCellParams.init(rng, 3, 2)
init = L.LstmState(T.Tensor(np.full((1, 2), 0.005)), T.Tensor(np.full((1, 2), -0.005)))
seq = T.Tensor(rng.uniform(-1, 1, (2, 4, 3)))
states = L.bilstm_forward(fwd, bwd, seq, lengths=[4, 2], init_fwd=init, init_bwd=init)
print("encoder states shape:", states.shape)
print("row 2 (length 2):\n", states.data[1].round(4))

# %% Attention: softmax(Q K^T / sqrt(d)) V, masked keys get exactly zero weight
Q = T.Tensor(rng.uniform(-1, 1, (2, 1, 4)))
out = L.scaled_dot_attention(Q, states, states, mask=np.array([[1, 1, 1, 1], [1, 1, 0, 0]], dtype=bool))
print("attention weights:\n", out.weights.data[:, 0].round(4))

# %% Two keys whose scores differ by ln 3 split the weight 1:3
d = 4
K = T.Tensor([[[0.4, 0, 0, 0], [(0.2 + math.log(3)) * math.sqrt(d), 0, 0, 0]]])
w = L.scaled_dot_attention(T.Tensor([[[1.0, 0, 0, 0]]]), K, T.Tensor(np.zeros((1, 2, 1)))).weights
print("weights:", w.data.ravel().round(6))

# %% Sinusoidal positions for the Transformer baseline
print("positional encoding rows 0-1:\n", L.positional_encoding(2, 6).round(4))
