import numpy as np
import pytest

from panoptrack.core import Taxonomy
from panoptrack.simulator import (
    SIM_TAXONOMY,
    BeamConfig,
    WorldConfig,
    build_world,
    ego_pose,
    simulate_scan,
)


@pytest.fixture(scope="session")
def small_taxonomy():
    return Taxonomy(names=("road", "building", "car", "person"),
                    is_thing=(False, False, True, True))


@pytest.fixture(scope="session")
def sim_sequence():
    """8-frame simulated sequence: (scans, poses, gt labels dict, taxonomy)."""
    wc = WorldConfig(seed=7, duration_frames=8)
    bc = BeamConfig(azimuth_steps=512)
    world = build_world(wc)
    scans, poses, labels = [], [], {}
    for f in range(wc.duration_frames):
        pose = ego_pose(wc, f)
        scan, lab = simulate_scan(world, f, pose, bc)
        scans.append(scan)
        poses.append(pose)
        labels[f] = lab
    return scans, poses, labels, SIM_TAXONOMY


def random_pose(rng):
    from panoptrack.core import RigidPose

    a, b, c = rng.uniform(-np.pi, np.pi, size=3)

    def rot(axis, ang):
        m = np.eye(3)
        i, j = [(1, 2), (0, 2), (0, 1)][axis]
        m[i, i] = np.cos(ang)
        m[j, j] = np.cos(ang)
        m[i, j] = -np.sin(ang)
        m[j, i] = np.sin(ang)
        return m

    r = rot(0, a) @ rot(1, b) @ rot(2, c)
    return RigidPose(r, rng.uniform(-10, 10, size=3))


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import REPORT_LINES
    except ImportError:
        return
    if REPORT_LINES:
        terminalreporter.section("acceptance gate")
        for line in REPORT_LINES:
            terminalreporter.write_line(line)
