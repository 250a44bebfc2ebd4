import numpy as np
import pytest

from macm import _pykernels

try:
    from macm import _ckernels
except ImportError:  # extension not built
    _ckernels = None

BACKENDS = [pytest.param(_pykernels, id="python")]
if _ckernels is not None:
    BACKENDS.append(pytest.param(_ckernels, id="compiled"))


@pytest.fixture(params=BACKENDS)
def backend(request):
    return request.param


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def grid_dataset(n1=20, n2=25):
    """The 500-point product grid on [-1, 1]^2 used for the decoupling example."""
    g1 = np.linspace(-1, 1, n1)
    g2 = np.linspace(-1, 1, n2)
    return np.array([(a, b) for a in g1 for b in g2])


def rel_close(analytic, numeric, rtol=1e-4, atol=1e-7):
    """Entrywise: relative error <= rtol, or absolute error <= atol near zero."""
    analytic = np.asarray(analytic)
    numeric = np.asarray(numeric)
    err = np.abs(analytic - numeric)
    scale = np.maximum(np.abs(analytic), np.abs(numeric))
    return bool(np.all((err <= rtol * scale) | (err <= atol)))
