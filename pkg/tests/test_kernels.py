import numpy as np
import pytest

from spdl import _kernels_py, kernels
from spdl.rl import PolicyParams

try:
    from spdl import _kernels_ext
except ImportError:  # pragma: no cover - only when the extension was not built
    _kernels_ext = None

needs_ext = pytest.mark.skipif(_kernels_ext is None, reason="compiled extension not built")


def test_backend_selection():
    assert kernels.BACKEND in ("python", "cython")
    assert kernels.get_backend("python") is _kernels_py
    with pytest.raises(ValueError):
        kernels.get_backend("fortran")


@needs_ext
def test_compiled_backend_is_default():
    assert kernels.BACKEND == "cython"


@needs_ext
def test_step_parity(rng):
    for _ in range(500):
        s = rng.uniform(-4, 4, 4)
        a = rng.uniform(-15, 15, 2)
        args = (rng.uniform(-4, 4), rng.uniform(0.5, 8), rng.uniform(0, 4), 0.05, 10.0)
        ns_p, r_p, c_p = _kernels_py.pointmass_step(s, a, *args)
        ns_c, r_c, c_c = _kernels_ext.pointmass_step(s, a, *args)
        np.testing.assert_allclose(ns_p, ns_c, rtol=0, atol=1e-14)
        assert r_p == pytest.approx(r_c, abs=1e-15)
        assert c_p == c_c


@needs_ext
@pytest.mark.parametrize("hidden", [(21, 21), (8,), (5, 6, 7)])
def test_rollout_parity(rng, hidden):
    params = PolicyParams.init(rng, 7, 2, hidden, init_log_std=0.5)
    for _ in range(10):
        ctx = np.array([rng.uniform(-4, 4), rng.uniform(0.5, 8), rng.uniform(0, 4)])
        eps = rng.standard_normal((100, 2))
        for det in (False, True):
            a = _kernels_py.pointmass_rollout(params.policy, params.log_std, ctx, ctx[0], ctx[1], ctx[2],
                                              eps, 0.05, 10.0, det)
            b = _kernels_ext.pointmass_rollout(params.policy, params.log_std, ctx, ctx[0], ctx[1], ctx[2],
                                               eps, 0.05, 10.0, det)
            assert a[3] == b[3]
            for x, y in zip(a[:3] + (a[4],), b[:3] + (b[4],)):
                np.testing.assert_allclose(x, y, rtol=1e-12, atol=1e-12)


def test_python_kernel_mlp_matches_network(rng):
    params = PolicyParams.init(rng, 6, 2)
    obs = rng.normal(size=(5, 6))
    np.testing.assert_allclose(_kernels_py.mlp_mean(params.policy, obs[0]), params.mean_action(obs[0]), atol=1e-14)
