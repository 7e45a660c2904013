#!/usr/bin/env python3
"""Tour of the recorded-tape tensor engine.

Builds a few graphs, runs reverse-mode backward, and compares analytic
gradients against central finite differences.
"""

import numpy as np

from memefuse import tensorcore as tc

print("== scalars and fan-out ==")
x = tc.Tensor([[3.0]], requires_grad=True, name="x")
with tc.Tape() as tape:
    y = tc.mul(x, x)           # y = x^2
print("y =", y.item())
tc.backward(y, tape)
print("dy/dx at x=3 ->", x.grad[0, 0], "(expect 6)")

x.zero_grad()
with tc.Tape() as tape:
    z = tc.add(x, x)           # fan-out accumulates
tc.backward(z, tape)
print("d(x+x)/dx ->", x.grad[0, 0], "(expect 2)")

print()
print("== matrices through softmax ==")
rng = np.random.default_rng(0)
logits = tc.Tensor(rng.normal(size=(2, 4)), requires_grad=True, name="logits")
with tc.Tape() as tape:
    probs = tc.softmax_rows(logits)
    loss = tc.sum_all(tc.mul(probs, probs))
tc.backward(loss, tape)
print("row sums:", probs.data.sum(axis=1), "(each exactly 1)")
print("grad shape:", logits.grad.shape)

print()
print("== finite-difference checking ==")
w = tc.Tensor(rng.normal(size=(3, 3)), requires_grad=True, name="w")
v = tc.Tensor(rng.normal(size=(1, 3)), requires_grad=True, name="v")

def f():
    return tc.sum_all(tc.tanh(tc.matmul(v, w)))

errs = tc.grad_check(f, {"w": w, "v": v}, step=1e-5)
for name, err in errs.items():
    print(f"max relative error for {name}: {err:.2e}")

print()
print("== a wrong gradient rule is caught ==")
a = tc.Tensor([[1.5]], requires_grad=True, name="a")

def buggy():
    out = tc.Tensor(a.data * a.data, requires_grad=True, _validate=False)
    tape = tc.active_tape()
    if tape is not None:
        # claims d(a^2)/da = 4a instead of 2a
        tape.record("buggy_square", (a,), out, lambda g: (g * 4.0 * a.data,))
    return out

errs = tc.grad_check(buggy, {"a": a}, step=1e-5)
print(f"reported relative error: {errs['a']:.4f} (expect 1/3 = |2g-g|/(2g+g))")
