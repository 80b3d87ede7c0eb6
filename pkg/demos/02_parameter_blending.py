"""Conditioning a network by blending two parameter sets.

The scalar never enters the network as an input. Instead two full parameter
sets are kept and the forward pass runs on their pointwise mix
(1-lambda(s)) * theta0 + lambda(s) * theta1. At the domain ends the mix IS
theta0 / theta1, so the conditioned model degenerates to two ordinary
networks; in between it moves smoothly.

Run:  python demos/02_parameter_blending.py
"""

import numpy as np

from dpilab import ScalarContext, Tape, Tensor, build_model
from dpilab.tensor import tsum
from dpilab.training import RunConfig

cfg = RunConfig(dataset="gauss8", conditioning="dpi", hidden="32,32",
                grid_size=100, timesteps=100, iterations=0)
model = build_model(cfg)
dual = model.dual
rng = np.random.default_rng(3)
for t in model.parameters().values():
    t.data += 0.3 * rng.standard_normal(t.shape)  # the output layer starts at 0
x = Tensor(rng.standard_normal((4, 2)))


def ctx(s):
    return ScalarContext(s=s, map_norm=s / 100, sigma=1.0, embed=s)


# Endpoint identities: the blended forward equals the plain theta0 / theta1
# networks exactly.
out_lo = model.forward(x, ctx(0.0)).data
out_hi = model.forward(x, ctx(99.0)).data
ref_lo = model.net.forward(dual.theta0 | dual.shared, x).data
ref_hi = model.net.forward(dual.theta1 | dual.shared, x).data
print("s_min deviation:", np.max(np.abs(out_lo - ref_lo)))
print("s_max deviation:", np.max(np.abs(out_hi - ref_hi)))

# Outputs vary continuously along the scalar axis.
sweep = np.array([model.forward(x, ctx(s)).data for s in np.linspace(0, 99, 12)])
print("max step-to-step output change:",
      np.max(np.abs(np.diff(sweep, axis=0))))

# One backward pass routes gradients three ways: theta0 gets (1-lambda) of
# the blended gradient, theta1 gets lambda of it, and phi collects the inner
# product <theta1 - theta0, grad> through the lambda Jacobian.
with Tape() as tape:
    tape.backward(tsum(model.forward(x, ctx(37.0))))
w = "l0.w"
g0, g1 = dual.theta0[w].grad, dual.theta1[w].grad
lam = dual.interpolant.lambda_eval(37.0).item()
print(f"\nlambda(37) = {lam:.4f}")
print("grad split ratio (theta1/theta0):", g1.flatten()[0] / g0.flatten()[0],
      " expected", lam / (1 - lam))
print("phi gradient norm:", np.linalg.norm(dual.interpolant.phi.grad))
