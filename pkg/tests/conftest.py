import pytest

from cirbubble import normalize_params

# reference parameter sets used across the suite
SETS = {
    "initial1": (0.2, 0.1, 0.04, 0.02, 0.02, 0.02, 0.02),
    "initial2": (0.2, 0.1, 0.015, 0.02, 0.02, 0.02, 0.02),
    "initial3": (0.2, 0.1, 0.04, 0.04, 0.02, 0.02, 0.02),
}


@pytest.fixture(params=sorted(SETS))
def reference_params(request):
    return normalize_params(*SETS[request.param])


@pytest.fixture
def initial1():
    return normalize_params(*SETS["initial1"])


@pytest.fixture
def initial2():
    return normalize_params(*SETS["initial2"])


@pytest.fixture
def initial3():
    return normalize_params(*SETS["initial3"])
