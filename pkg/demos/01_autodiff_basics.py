#!/usr/bin/env python3
"""Tour of the tensor engine: forward ops, gradients, and an Adam fit.

Run:  python demos/01_autodiff_basics.py
"""

import numpy as np

from diff3m.optim import AdamState, adam_step
from diff3m.tensor import Tensor, conv2d, gradients, matmul, mse, silu, softmax

rng = np.random.default_rng(0)

# forward ops record a graph; backward() fills leaf gradients
x = Tensor(3.0, requires_grad=True)
y = x * x + x * 2.0
y.backward()
print(f"d/dx (x^2 + 2x) at x=3  ->  {x.grad}   (expect 8)")

# a small dense layer chain, gradients via the functional API
w1 = Tensor(rng.standard_normal((4, 8)) * 0.3, requires_grad=True)
w2 = Tensor(rng.standard_normal((8, 1)) * 0.3, requires_grad=True)
inputs = Tensor(rng.standard_normal((16, 4)))
target = Tensor(rng.standard_normal((16, 1)))
loss = mse(matmul(silu(matmul(inputs, w1)), w2), target)
grads = gradients(loss, {"w1": w1, "w2": w2})
print(f"loss {loss.item():.4f}; grad norms w1 {np.linalg.norm(grads['w1']):.4f}, "
      f"w2 {np.linalg.norm(grads['w2']):.4f}")

# convolution keeps spatial shape (stride 1, zero padding)
img = Tensor(rng.standard_normal((1, 8, 8, 1)))
kern = Tensor(rng.standard_normal((3, 3, 1, 4)) * 0.2)
print("conv2d (1,8,8,1) -> ", conv2d(img, kern, Tensor(np.zeros(4))).shape)

# softmax over a chosen axis
print("softmax([0,0]) ->", softmax(Tensor([0.0, 0.0]), axis=0).data)

# ten Adam steps on f(p) = |p|^2 shrink the parameter monotonically
p = Tensor(np.array([1.0, -2.0]), requires_grad=True)
state = AdamState(lr=0.1)
for step in range(10):
    f = (p * p).sum()
    g = gradients(f, {"p": p})
    adam_step({"p": p}, g, state)
    if step % 3 == 0:
        print(f"step {step}: f = {f.item():.4f}")
print("final p:", p.data)
