import numpy as np
import pytest

from compcbf.errors import InputError
from compcbf.state import EnsembleState, drift, flow


def test_vector_round_trip():
    s = EnsembleState([[0, 1], [2, 3]], [[4, 5], [6, 7]], t=1.5)
    x = s.as_vector()
    assert x.tolist() == [0, 1, 2, 3, 4, 5, 6, 7]
    back = EnsembleState.from_vector(x, t=1.5)
    assert np.array_equal(back.positions, s.positions)
    assert np.array_equal(back.velocities, s.velocities)


def test_arrays_are_read_only_copies():
    p = np.zeros((2, 2))
    s = EnsembleState.at_rest(p)
    p[0, 0] = 5.0
    assert s.positions[0, 0] == 0.0
    with pytest.raises(ValueError):
        s.positions[0, 0] = 1.0


@pytest.mark.parametrize("pos, vel", [
    ([[0, 0], [np.nan, 0]], [[0, 0], [0, 0]]),
    ([[0, 0], [1, 0]], [[0, np.inf], [0, 0]]),
    ([[0, 0, 0]], [[0, 0, 0]]),
    ([[0, 0], [1, 0]], [[0, 0]]),
])
def test_rejects_bad_input(pos, vel):
    with pytest.raises(InputError):
        EnsembleState(pos, vel)


def test_drift_and_flow():
    s = EnsembleState([[0, 0], [1, 0]], [[1, 2], [3, 4]])
    assert drift(s).tolist() == [1, 2, 3, 4, 0, 0, 0, 0]
    assert flow(s, [9, 8, 7, 6]).tolist() == [1, 2, 3, 4, 9, 8, 7, 6]
