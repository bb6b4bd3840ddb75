import os
import sys

import pytest

sys.path.insert(0, os.path.dirname(__file__))

from stokesproj import femspace, mesh, mms


@pytest.fixture(scope="session")
def grid2():
    return mesh.build_grid(2)


@pytest.fixture(scope="session")
def grid4():
    return mesh.build_grid(4)


@pytest.fixture(scope="session")
def case():
    return mms.berrone_case(0.01)


@pytest.fixture(scope="session")
def spaces_p1_grid4(grid4):
    return (
        femspace.build_space(grid4, 1, components=2),
        femspace.build_space(grid4, 1, components=1),
    )
