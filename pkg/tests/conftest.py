import pytest

from orthoaudit import _backend


def available_backends():
    names = ["python"]
    try:
        from orthoaudit import _core  # noqa: F401
        names.append("cython")
    except ImportError:
        pass
    return names


@pytest.fixture(params=available_backends())
def backend(request):
    """Run the test once per available kernel backend."""
    previous = _backend._active
    _backend.use(request.param)
    yield request.param
    _backend._active = previous
