"""Central finite-difference gradient verification shared by the test suite."""

import numpy as np

from pvlseg import tensor as T


def numeric_grad(fn, x: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Central-difference gradient of scalar fn(x) wrt every element of x."""
    g = np.zeros_like(x, dtype=np.float64)
    flat = x.reshape(-1)
    gf = g.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = fn(x)
        flat[i] = orig - h
        fm = fn(x)
        flat[i] = orig
        gf[i] = (fp - fm) / (2.0 * h)
    return g


def assert_grad_matches(build, x0: np.ndarray, rtol: float = 1e-4, h: float = 1e-5):
    """Check analytic vs numeric gradients of a scalar-valued graph.

    build(param_tensor) must return a scalar Tensor. x0 is the point at
    which the comparison happens.
    """
    p = T.parameter(x0.copy())
    out = build(p)
    out.backward()
    analytic = p.grad.copy()

    def f(arr):
        q = T.Tensor(arr.copy())
        return float(build(q).data)

    numeric = numeric_grad(f, x0.copy(), h=h)
    denom = np.maximum(np.abs(numeric), np.maximum(np.abs(analytic), 1e-8))
    rel = np.abs(analytic - numeric) / denom
    assert rel.max() < rtol, f"gradient mismatch: max rel err {rel.max():.3e}"
