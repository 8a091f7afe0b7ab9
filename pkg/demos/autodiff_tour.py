"""A short tour of the reverse-mode autodiff core.

Every operation records itself on a module-global tape; backward() walks
the tape in reverse insertion order and accumulates gradients into leaf
tensors. Gradients can be validated against central finite differences
with grad_check.
"""

import numpy as np

from ilmt import tensor as T
from ilmt.layers import AdditiveAttention, LstmCell

print("== scalar chain rule ==")
x = T.tensor([2.0], requires_grad=True)
y = T.tsum(T.mul(T.tanh(x), T.tanh(x)))      # y = tanh(x)^2
T.backward(y)
manual = 2 * np.tanh(2.0) * (1 - np.tanh(2.0) ** 2)
print(f"dy/dx autodiff = {x.grad[0]:.6f}, by hand = {manual:.6f}")

print("\n== a tiny network, checked numerically ==")
rng = np.random.default_rng(0)
w1 = T.tensor(rng.normal(scale=0.3, size=(3, 4)), requires_grad=True)
w2 = T.tensor(rng.normal(scale=0.3, size=(4, 2)), requires_grad=True)
data = T.tensor(rng.normal(size=(5, 3)))


def loss_fn(theta):
    h = T.tanh(T.matmul(data, w1))
    out = T.sigmoid(T.matmul(h, w2))
    return T.tmean(T.mul(out, out))


for name, p in (("w1", w1), ("w2", w2)):
    err = T.grad_check(loss_fn, p)
    print(f"grad_check({name}) relative error = {err:.2e}")

print("\n== recurrent cells tape just fine ==")


def _unroll(cell, seq):
    state = cell.zero_state(1)
    for t in range(6):
        state = cell.step(T.select_step(seq, t), state)
    return T.tsum(state[0])


cell = LstmCell(3, 4, rng)
state = cell.zero_state(1)
seq = T.tensor(rng.normal(size=(1, 6, 3)))
for t in range(6):
    h, c = cell.step(T.select_step(seq, t), state)
    state = (h, c)
T.backward(T.tsum(h))
print(f"|dL/dW| after 6 unrolled steps = {np.abs(cell.w.grad).sum():.4f}")
print(f"grad_check(LstmCell.w) = "
      f"{T.grad_check(lambda p: _unroll(cell, seq), cell.w):.2e}")


print("\n== attention weights are a softmax over positions ==")
att = AdditiveAttention(4, 3, 5, rng)
memory = T.tensor(rng.normal(size=(1, 7, 3)))
query = T.tensor(rng.normal(size=(1, 4)))
ctx, weights = att.attend(query, memory)
print("weights:", np.round(weights.data[0], 3), "sum =",
      float(weights.data.sum()))

print("\n== errors instead of silent NaN ==")
try:
    big = T.tensor(np.full(2, 1e38))
    T.mul(big, big)
except T.NumericOverflowError as e:
    print("overflow raised as expected:", e)
