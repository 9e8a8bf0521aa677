import numpy as np
import pytest

from racestack.track import centerline_raceline, min_curvature_raceline, speed_profile
from racestack.tracks import make_oval, make_road_course


@pytest.fixture(scope="session")
def oval():
    return make_oval()


@pytest.fixture(scope="session")
def road_course():
    return make_road_course()


@pytest.fixture(scope="session")
def oval_centerline(oval):
    return centerline_raceline(oval)


@pytest.fixture(scope="session")
def oval_raceline(oval):
    line = min_curvature_raceline(oval, margin=1.5)
    return speed_profile(line, v_cap=60.0, a_lat_max=9.0, a_acc_max=6.0,
                         a_brk_max=9.0)


@pytest.fixture(scope="session")
def road_raceline(road_course):
    line = min_curvature_raceline(road_course, margin=1.0)
    return speed_profile(line, v_cap=50.0, a_lat_max=8.0, a_acc_max=6.0,
                         a_brk_max=9.0)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
