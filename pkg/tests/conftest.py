import numpy as np
import pytest

from uae import kernels
from uae.rng import Rng


@pytest.fixture(params=sorted(kernels.BACKENDS))
def backend(request):
    """Kernel table for each available backend (numba and numpy)."""
    return kernels.BACKENDS[request.param]


@pytest.fixture
def rng():
    return Rng(1234)


@pytest.fixture(scope="session")
def digits_idx(tmp_path_factory):
    """sklearn's 8x8 digits written as IDX image/label files."""
    pytest.importorskip("sklearn")
    from sklearn.datasets import load_digits

    from uae.data_io import write_idx_images, write_idx_labels

    d = load_digits()
    out = tmp_path_factory.mktemp("digits")
    images = np.round(d.images * 255.0 / 16.0).astype(np.uint8)
    write_idx_images(out / "images.idx", images)
    write_idx_labels(out / "labels.idx", d.target)
    return out / "images.idx", out / "labels.idx"


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
