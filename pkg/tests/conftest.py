import pytest

from ccml import gallery


@pytest.fixture(scope="session")
def heisenberg():
    return gallery.builtin("heisenberg").structure


@pytest.fixture(scope="session")
def grushin():
    return gallery.builtin("grushin").structure


@pytest.fixture(scope="session")
def martinet():
    return gallery.builtin("martinet").structure


@pytest.fixture(scope="session")
def euclidean2():
    return gallery.builtin("euclidean2").structure


@pytest.fixture(scope="session")
def heisenberg_linf():
    return gallery.builtin("heisenberg_linf").structure


@pytest.fixture(scope="session")
def overdetermined_line():
    return gallery.builtin("overdetermined_line").structure
