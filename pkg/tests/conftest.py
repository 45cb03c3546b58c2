import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from lfcodec.block_codec.common import ViewFormat
from lfcodec.lightfield_io import Picture, chroma_shape
from lfcodec.synthetic import make_lightfield

settings.register_profile(
    "default",
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.data_too_large],
)
settings.load_profile("default")


def textured_view(rng, width, height, bit_depth=8, chroma_format="444", smooth=2.0):
    """Smooth random texture plus a little noise, all three planes."""
    from scipy import ndimage

    maxval = (1 << bit_depth) - 1
    planes = []
    for k, shape in enumerate(
        [(height, width)] + [chroma_shape(height, width, chroma_format)] * 2
    ):
        base = ndimage.gaussian_filter(rng.standard_normal(shape), smooth, mode="wrap")
        base = base / (base.std() + 1e-9)
        mid = maxval / 2 if k == 0 else (1 << (bit_depth - 1))
        amp = maxval / 6 if k == 0 else maxval / 16
        p = mid + amp * base + rng.normal(0, maxval / 200, shape)
        planes.append(np.clip(np.rint(p), 0, maxval).astype(np.int32))
    return Picture(tuple(planes))


def shifted(pic, dy, dx):
    """Circularly shifted copy of every plane (luma shift; chroma follows by its scale)."""
    out = []
    for k, p in enumerate(pic.planes):
        sy = pic.planes[0].shape[0] // p.shape[0]
        sx = pic.planes[0].shape[1] // p.shape[1]
        out.append(np.roll(p, (dy // sy, dx // sx), axis=(0, 1)))
    return Picture(tuple(out))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def small_lf():
    """5x5 grid of 32x24 4:2:2 views."""
    return make_lightfield(rows=5, cols=5, width=32, height=24, seed=7)


def fmt_of(pic, bit_depth=8, chroma_format="444"):
    return ViewFormat(pic.width, pic.height, bit_depth, chroma_format)


# -- acceptance criteria report ---------------------------------------------------

_CRITERIA = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n): acceptance criterion checked by the test")


@pytest.fixture
def measured(request):
    """Dict the acceptance tests fill with the numbers behind their verdict."""
    values = {}
    request.node.measured = values
    return values


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    if rep.when == "call" or (rep.when == "setup" and not rep.passed):
        status = "PASS" if rep.passed else "SKIP" if rep.skipped else "FAIL"
        detail = ", ".join(f"{k}={v}" for k, v in getattr(item, "measured", {}).items())
        if rep.skipped and isinstance(rep.longrepr, tuple):
            detail = (detail + "; " if detail else "") + str(rep.longrepr[2])
        _CRITERIA[str(mark.args[0])] = (status, item.name, detail)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(_CRITERIA, key=lambda k: (int("".join(c for c in k if c.isdigit())), k)):
        status, name, detail = _CRITERIA[key]
        terminalreporter.write_line(f"criterion {key:<3} {status}  {name}  {detail}")
