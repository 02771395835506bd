import csv
import io
import json

import numpy as np
import pytest

from sdfstab.classifier import PreconditionError
from sdfstab.ode import integrate_segments
from sdfstab.simloop import (CONVERGED, HORIZON, Partition, run_closed_loop, stability_sweep)
from sdfstab.systems import corollary2


@pytest.fixture(scope="module")
def c2():
    return corollary2(3)


@pytest.fixture(scope="module")
def run_half(c2):
    return run_closed_loop(c2, [0.5, 0.5, 0.5], Partition.uniform(0.25, 10.0))


class TestPartition:
    def test_uniform(self):
        p = Partition.uniform(0.25, 1.0)
        assert p.times == (0.0, 0.25, 0.5, 0.75, 1.0)

    def test_uniform_uneven_horizon(self):
        p = Partition.uniform(0.3, 1.0)
        assert p.times[-1] == 1.0 and all(b > a for a, b in zip(p.times, p.times[1:]))

    def test_random_is_seeded(self):
        a = Partition.random(0.1, 0.5, 5.0, seed=3)
        b = Partition.random(0.1, 0.5, 5.0, seed=3)
        c = Partition.random(0.1, 0.5, 5.0, seed=4)
        assert a == b and a != c and a.times[0] == 0.0 and a.horizon == 5.0

    @pytest.mark.parametrize("times", [(0.5, 1.0), (0.0, 1.0, 1.0), (0.0, 2.0, 1.0), ()])
    def test_invalid_explicit(self, times):
        with pytest.raises(ValueError):
            Partition.explicit(times)


class TestClosedLoop:
    def test_origin_converges_immediately(self, c2):
        tr = run_closed_loop(c2, [0.0, 0.0, 0.0], Partition.uniform(0.25, 1.0))
        assert tr.termination == CONVERGED and len(tr.sample_times) == 1

    def test_monotone_at_samples(self, run_half):
        assert run_half.termination == HORIZON
        V = run_half.sample_V
        assert all(b < a for a, b in zip(V, V[1:]))
        assert min(run_half.margins) > 0

    def test_continuity_at_samples(self, c2, run_half):
        tr = run_half
        for i, sched in enumerate(tr.schedules):
            traj, _ = integrate_segments(c2.rhs, tr.sample_states[i], sched.segments, 1e-12)
            assert traj.final.tolist() == list(tr.sample_states[i + 1])

    def test_along_interval_bound(self, c2, run_half):
        tr = run_half
        for i in range(len(tr.sample_times) - 1):
            mask = (tr.times >= tr.sample_times[i]) & (tr.times <= tr.sample_times[i + 1])
            eps0 = 1e-9 * (1 + np.linalg.norm(tr.sample_states[i]))
            assert tr.V[mask].max() <= 2 * tr.sample_V[i] + eps0

    def test_schedules_fill_intervals(self, run_half):
        for s in run_half.schedules:
            assert abs(s.total - 0.25) <= 1e-12

    def test_tiny_first_interval(self, c2):
        tr = run_closed_loop(c2, [0.5, 0.5, 0.5], Partition.explicit([0.0, 1e-6, 0.25]))
        assert tr.sample_V[1] < tr.sample_V[0] and tr.sample_V[2] < tr.sample_V[1]

    def test_random_partition(self, c2):
        tr = run_closed_loop(c2, [0.0, 1.0, 0.0], Partition.random(0.05, 0.4, 3.0, seed=1))
        assert all(b < a for a, b in zip(tr.sample_V, tr.sample_V[1:]))

    def test_reproducible(self, c2):
        p = Partition.uniform(0.25, 3.0)
        a = run_closed_loop(c2, [1.0, -0.5, 0.2], p)
        b = run_closed_loop(c2, [1.0, -0.5, 0.2], p)
        assert a.to_csv() == b.to_csv() and a.to_json() == b.to_json()

    def test_outside_operating_ball(self, c2):
        with pytest.raises(PreconditionError):
            run_closed_loop(c2, [2.0, 2.0, 0.0], Partition.uniform(0.25, 1.0), R=2.0)

    def test_small_state_converges(self, c2):
        # a point just outside the radius on the x3 axis is pushed inside quickly
        tr = run_closed_loop(c2, [0.0, 0.0, 0.05], Partition.uniform(0.25, 5.0))
        assert tr.converged and np.linalg.norm(tr.final) <= 1e-2

    def test_degenerate_drift_never_moves_x1(self):
        broken = corollary2(3, a="0")
        tr = run_closed_loop(broken, [0.5, 0.0, 0.0], Partition.uniform(0.25, 5.0))
        assert not tr.converged
        assert np.all(tr.states[:, 0] == 0.5)

    def test_exports(self, run_half):
        rows = list(csv.reader(io.StringIO(run_half.to_csv())))
        assert rows[0] == ["t", "x1", "x2", "x3", "u", "V"]
        assert len(rows) - 1 == len(run_half.times)
        d = json.loads(run_half.to_json())
        assert d["termination"] == HORIZON and len(d["samples"]) == len(run_half.sample_times)


class TestSweep:
    def test_zero_radius(self, c2):
        rep = stability_sweep(c2, [0.0], Partition.uniform(0.25, 1.0), samples=3)
        assert rep.sup_peak[0.0] == 0.0

    def test_small_sweep(self, c2):
        rep = stability_sweep(c2, [0.1, 0.5], Partition.uniform(0.25, 2.0), samples=3, seed=2)
        for d, e in rep.table():
            assert e >= d
        assert json.loads(rep.to_json())["table"][0]["delta"] == 0.1
        again = stability_sweep(c2, [0.1, 0.5], Partition.uniform(0.25, 2.0), samples=3, seed=2)
        assert again.to_json() == rep.to_json()
