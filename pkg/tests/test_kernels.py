"""Parity between the compiled kernels and the numpy fallback."""

import numpy as np
import pytest

from advdebias.numkit import _kernels_py as py_k
from advdebias.numkit import layer_rng

cy_k = pytest.importorskip("advdebias.numkit._kernels")

KINDS = (py_k.ACT_IDENTITY, py_k.ACT_TANH, py_k.ACT_RELU)


@pytest.mark.parametrize("kind", KINDS)
@pytest.mark.parametrize("seed", range(5))
def test_act_forward_parity(kind, seed):
    z = layer_rng(seed, 0).normal(size=(4, 6))
    np.testing.assert_allclose(cy_k.act_forward(kind, z),
                               py_k.act_forward(kind, z), rtol=1e-15)


@pytest.mark.parametrize("kind", KINDS)
@pytest.mark.parametrize("seed", range(5))
def test_act_backward_parity(kind, seed):
    rng = layer_rng(seed, 1)
    z = rng.normal(size=(4, 6))
    up = rng.normal(size=(4, 6))
    out_c = cy_k.act_forward(kind, z)
    out_p = py_k.act_forward(kind, z)
    # libc tanh and numpy tanh may differ in the last ulp
    np.testing.assert_allclose(cy_k.act_backward(kind, z, out_c, up),
                               py_k.act_backward(kind, z, out_p, up),
                               rtol=1e-13)


@pytest.mark.parametrize("wd", [0.0, 0.01])
@pytest.mark.parametrize("seed", range(5))
def test_adamw_update_parity(wd, seed):
    rng = layer_rng(seed, 2)
    param_c = rng.normal(size=32)
    param_p = param_c.copy()
    m_c, v_c = np.zeros(32), np.zeros(32)
    m_p, v_p = np.zeros(32), np.zeros(32)
    for step in range(1, 6):
        grad = rng.normal(size=32)
        cy_k.adamw_update(param_c, grad, m_c, v_c, step, 1e-2, 0.9, 0.999,
                          1e-8, wd)
        py_k.adamw_update(param_p, grad.copy(), m_p, v_p, step, 1e-2, 0.9,
                          0.999, 1e-8, wd)
    np.testing.assert_allclose(param_c, param_p, rtol=1e-13)
    np.testing.assert_allclose(m_c, m_p, rtol=1e-13)
    np.testing.assert_allclose(v_c, v_p, rtol=1e-13)
