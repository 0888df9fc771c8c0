"""A tour of the autodiff core: build a graph, backprop, check it numerically."""

import numpy as np

from miniformer import tensor as T
from miniformer.gradcheck import check_gradients, numerical_grad

rng = np.random.default_rng(0)

# %% Tensors record the operations that produced them
x = T.parameter([[1.0, 2.0], [3.0, 4.0]], name="x")
w = T.parameter([[0.5], [-1.0]], name="w")
y = T.tanh(x @ w)           # shape (2, 1)
loss = (y * y).sum()
print("loss:", loss.item())

# %% backward() fills .grad on every leaf that requires it
loss.backward()
print("dloss/dw:\n", w.grad)

# %% the same numbers from central differences (step 1e-5)
w.grad = None
fd = numerical_grad(lambda: (T.tanh(x @ w) ** 2).sum(), w)
print("finite differences:\n", fd)

# %% gradients accumulate; zero them between steps
loss = (T.tanh(x @ w) ** 2).sum()
loss.backward()
loss.backward()
print("after two backward calls:\n", w.grad, "\n(twice the single-call value)")

# %% softmax is max-shifted, so huge logits stay finite
print("softmax([1000, 0]):", T.softmax(T.Tensor([1000.0, 0.0])).data)

# %% only one side of a binary op may broadcast
try:
    T.add(T.Tensor(np.zeros((3, 1))), T.Tensor(np.zeros((1, 4))))
except T.DimensionError as exc:
    print("rejected:", exc)

# %% check_gradients returns the worst relative error per input
a, b = T.parameter(rng.uniform(-1, 1, (3, 4))), T.parameter(rng.uniform(-1, 1, (4, 2)))
errs = check_gradients(lambda: T.log_softmax(a @ b).sum(), [a, b])
print("relative errors:", {k: f"{v:.1e}" for k, v in errs.items()})

# %% no_grad skips graph construction, used for decoding and evaluation
with T.no_grad():
    z = T.tanh(x @ w)
print("requires_grad inside no_grad:", z.requires_grad)
