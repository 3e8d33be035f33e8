import math

import numpy as np
import pytest

from uavclust import channel, metrics
from uavclust.channel import Assignment, ChannelParams, DegenerateInputError, Fleet

P = ChannelParams()


def test_single_user_report():
    p = channel.required_power(10.0, P)
    f = Fleet([[4.0, 4.0]], [1.0], [1.0], [p])
    rep = metrics.score(f, Assignment([0], 1), [[4.0, 4.0]], P, thresholds=[1.0, 100.0])
    assert rep.ee == pytest.approx(1e7 * math.log2(1 + 10 ** 1.2) / p, rel=1e-9)
    assert rep.l_rel == {1.0: 1.0, 100.0: 0.0}
    rep.check()


def test_report_is_consistent_and_delegates():
    rng = np.random.default_rng(0)
    users = rng.random((25, 2)) * 300
    f = Fleet(rng.random((3, 2)) * 300, [1, 1, 1], [1 / 3] * 3, [1e-4, 3e-4, 2e-4])
    a = Assignment(rng.integers(0, 3, 25), 3)
    rep = metrics.score(f, a, users, P)
    assert rep.l_rel == {}
    assert rep.ee == channel.energy_efficiency(a, f, users, P)
    assert rep.ee * rep.power == pytest.approx(rep.rate, rel=1e-9)
    assert np.array_equal(rep.sinr, channel.sinr_vector(a, f, users, P))
    rep.check()


def test_zero_power_is_reported():
    with pytest.raises(DegenerateInputError):
        metrics.score(Fleet([[0, 0]], [1], [1], [0.0]), Assignment([0], 1), [[0, 0]], P)


def test_check_catches_bad_report():
    with pytest.raises(AssertionError):
        metrics.ScoreReport(rate=10.0, power=2.0, ee=4.0).check()
    with pytest.raises(AssertionError):
        metrics.ScoreReport(rate=10.0, power=2.0, ee=5.0, l_rel={1.0: 1.5}).check()


def test_constraint_replay():
    users = np.array([[0.0, 0.0], [30.0, 40.0]])
    ok_power = channel.required_power(math.sqrt(2600), P)
    f = Fleet([[0, 0]], [1], [1], [ok_power])
    a = Assignment([0, 0], 1)
    assert metrics.check_constraints(f, a, users, P, u_max=2, p_max=1.0) == []
    assert any("u_max" in p for p in metrics.check_constraints(f, a, users, P, 1, 1.0))
    assert any("p_max" in p for p in metrics.check_constraints(f, a, users, P, 2, ok_power / 2))
    weak = Fleet([[0, 0]], [1], [1], [ok_power * 0.99])
    assert any("SNR" in p for p in metrics.check_constraints(weak, a, users, P, 2, 1.0))
    wrong_shape = Assignment([0, 0, 0], 1)
    assert metrics.check_constraints(f, wrong_shape, users, P, 2, 1.0)
