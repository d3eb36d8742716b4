import numpy as np
import pytest

from tendonscore import _pykernels, kernels
from tendonscore.errors import DomainError


def test_python_backend_always_available():
    assert "python" in kernels.available_backends()
    assert kernels.get_backend("python") is _pykernels


def test_unknown_backend():
    with pytest.raises((DomainError, ValueError)):
        kernels.get_backend("fortran")


@pytest.mark.skipif(len(kernels.available_backends()) < 2, reason="compiled backend not built")
class TestBackendsAgree:
    def test_conv(self, rng):
        py, cy = kernels.get_backend("python"), kernels.get_backend("cython")
        for stride, pad, groups in ((1, 0, 1), (2, 1, 2), (4, 0, 1), (1, 2, 2)):
            x = rng.standard_normal((4, 13, 11)).astype(np.float32)
            w = rng.standard_normal((6, 4 // groups, 3, 3)).astype(np.float32)
            b = rng.standard_normal(6).astype(np.float32)
            np.testing.assert_array_equal(py.conv2d(x, w, b, stride, pad, groups),
                                          cy.conv2d(x, w, b, stride, pad, groups))

    def test_pool_and_lrn(self, rng):
        py, cy = kernels.get_backend("python"), kernels.get_backend("cython")
        x = rng.standard_normal((7, 15, 15)).astype(np.float32)
        np.testing.assert_array_equal(py.max_pool(x, 3, 2), cy.max_pool(x, 3, 2))
        np.testing.assert_array_equal(py.local_response_norm(x, 5, 1e-4, 0.75, 2.0),
                                      cy.local_response_norm(x, 5, 1e-4, 0.75, 2.0))

    def test_bilinear(self, rng):
        py, cy = kernels.get_backend("python"), kernels.get_backend("cython")
        img = rng.random((9, 12))
        xs = rng.uniform(-2, 13, (20, 20))
        ys = rng.uniform(-2, 10, (20, 20))
        np.testing.assert_array_equal(py.bilinear_sample(img, xs, ys, -3.0),
                                      cy.bilinear_sample(img, xs, ys, -3.0))
