import numpy as np
import pytest

from geoclr.ingest import Dataset, Pose, Traversal


def make_pose(log_id="logA", frame_id=0, x=0.0, y=0.0, yaw=0.0, t=None):
    return Pose(log_id, frame_id, float(frame_id) if t is None else t, x, y, yaw)


def make_dataset(log_sizes: dict[str, int], area_id: str = "area0", spread: float = 1000.0) -> Dataset:
    """Dataset with the given pose count per log; logs placed far apart."""
    traversals = []
    for i, (log_id, n) in enumerate(sorted(log_sizes.items())):
        poses = tuple(
            Pose(log_id, k, float(k), k * 2.0, i * spread, 0.0) for k in range(n)
        )
        traversals.append(Traversal(log_id, area_id, poses))
    return Dataset(tuple(traversals))


@pytest.fixture
def rng():
    return np.random.default_rng(42)
