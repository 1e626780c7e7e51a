import math

import numpy as np
import pytest

from jitterlab.descent import DescentParams, RngStream, StopReason, descend, run_trajectory, step
from jitterlab.exprfield import BUILTIN_EXPRESSION, ExprField
from jitterlab.landscape import Point2

# deep minimum of the cell (0.5, 1) x (-0.25, 0.25): cos(pi x) = -1/sqrt(3), y = 0
DEEP_MIN = Point2(math.acos(-1 / math.sqrt(3)) / math.pi, 0.0)


def test_deep_minimum_oracle():
    # separable 1-D scan: argmin of g on [0.5, 1], argmax of h on [-0.25, 0.25]
    x = np.linspace(0.5, 1.0, 1_000_001)
    y = np.linspace(-0.25, 0.25, 500_001)
    g = np.sin(np.pi * x) * np.sin(2 * np.pi * x)
    h = np.cos(np.pi * y) * np.cos(2 * np.pi * y)
    assert abs(x[np.argmin(g)] - DEEP_MIN.x) < 1e-6
    assert abs(y[np.argmax(h)] - DEEP_MIN.y) < 1e-6


@pytest.mark.parametrize(
    "kwargs", [dict(tau=0), dict(tau=-1), dict(tau=0.1, eps=-0.1), dict(tau=0.1, max_steps=0), dict(tau=math.nan)]
)
def test_params_validation(kwargs):
    with pytest.raises(ValueError):
        DescentParams(**kwargs)


def test_step_at_critical_point(field):
    assert step(field, Point2(0, 0), DescentParams(tau=0.01)) == Point2(0.0, 0.0)


def test_noiseless_step_decreases_f(field):
    p = Point2(0.3, 0.1)
    q = step(field, p, DescentParams(tau=0.001))
    g = field.grad(p)
    assert q == Point2(p.x - 0.001 * g.x, p.y - 0.001 * g.y)
    assert field.eval(q) < field.eval(p)


def test_zero_noise_step_is_exact(field, region_points):
    x, y = region_points
    params = DescentParams(tau=0.01)
    gx, gy = field.gradient(x, y)
    for k in range(200):
        q = step(field, Point2(x[k], y[k]), params)
        assert q.x == x[k] - 0.01 * gx[k] and q.y == y[k] - 0.01 * gy[k]


def test_zero_noise_consumes_no_draws(field):
    rng = RngStream(5, 0)
    step(field, Point2(0.3, 0.1), DescentParams(tau=0.01), rng)
    assert np.array_equal(rng.normal_pair(), RngStream(5, 0).normal_pair())


def test_descent_property(field):
    rng = np.random.default_rng(3)
    params = DescentParams(tau=0.001)
    n = 0
    while n < 1000:
        p = Point2(*rng.uniform([-1, -1.25], [1, 1.25]))
        g = field.grad(p)
        if math.hypot(g.x, g.y) <= 1e-3:
            continue
        assert field.eval(step(field, p, params)) < field.eval(p)
        n += 1


def test_noisy_step_adds_recorded_pair(field):
    p = Point2(0.3, 0.1)
    params = DescentParams(tau=0.01, eps=0.05)
    q = step(field, p, params, RngStream(42, 7))
    det = step(field, p, DescentParams(tau=0.01))
    nx, ny = RngStream(42, 7).normal_pair()
    assert q.x == det.x - 0.05 * nx and q.y == det.y - 0.05 * ny


def test_noise_statistics(field):
    # 10^6 single-step displacements relative to the deterministic step
    n = 1_000_000
    eps = 0.05
    noise = RngStream(11, 0).normals(n).reshape(n, 1, 2)
    x0 = np.full(n, 0.3)
    y0 = np.full(n, 0.1)
    res = descend(field, x0, y0, DescentParams(tau=0.01, eps=eps, max_steps=1), noise)
    det = step(field, Point2(0.3, 0.1), DescentParams(tau=0.01))
    dx, dy = res.x - det.x, res.y - det.y
    for d in (dx, dy):
        assert abs(d.std() - eps) < 0.01 * eps
        assert abs(d.mean()) < 3 * eps / 1000
        # symmetric about zero: matching tail masses
        assert abs(np.mean(d > eps) - np.mean(d < -eps)) < 0.003
    assert abs(np.corrcoef(dx, dy)[0, 1]) < 0.005


def test_rng_stream_contract():
    a = RngStream(1, 2)
    pairs = [a.normal_pair() for _ in range(5)]
    assert np.array_equal(np.array(pairs), RngStream(1, 2).normals(5))
    assert not np.array_equal(RngStream(1, 2).normals(5), RngStream(1, 3).normals(5))
    assert not np.array_equal(RngStream(1, 2).normals(5), RngStream(2, 2).normals(5))
    # streams keyed by neighbouring indices look independent
    u = RngStream(0, 0).normals(50_000).ravel()
    v = RngStream(0, 1).normals(50_000).ravel()
    assert abs(np.corrcoef(u, v)[0, 1]) < 0.02


def test_start_at_minimum_stops_immediately(field):
    t = run_trajectory(field, DEEP_MIN, DescentParams(tau=0.001, grad_tol=1e-6, max_steps=1000))
    assert t.stop_reason is StopReason.GRAD_TOL
    assert t.steps_taken in (0, 1)
    assert abs(t.end.x - DEEP_MIN.x) < 1e-9 and abs(t.end.y - DEEP_MIN.y) < 1e-9


def test_flow_converges_to_deep_minimum(field):
    t = run_trajectory(field, Point2(0.6, 0.1), DescentParams(tau=0.001, grad_tol=1e-6, max_steps=20_000))
    assert t.stop_reason is StopReason.GRAD_TOL
    assert t.final_grad_norm <= 1e-6
    assert t.steps_taken <= 20_000
    assert math.hypot(t.end.x - DEEP_MIN.x, t.end.y - DEEP_MIN.y) < 1e-3
    assert t.final_value == pytest.approx(-4 / (3 * math.sqrt(3)), abs=1e-9)


def test_noisy_runs_take_all_steps(field):
    t = run_trajectory(field, DEEP_MIN, DescentParams(tau=0.01, eps=0.001, max_steps=500), RngStream(0, 0))
    assert t.stop_reason is StopReason.MAX_STEPS and t.steps_taken == 500


def test_trajectory_is_deterministic(field):
    params = DescentParams(tau=0.01, eps=0.05, max_steps=500)
    a = run_trajectory(field, Point2(0.2, 0.3), params, RngStream(9, 4))
    b = run_trajectory(field, Point2(0.2, 0.3), params, RngStream(9, 4))
    assert a == b


def test_trajectory_matches_repeated_steps(field):
    params = DescentParams(tau=0.01, eps=0.05, max_steps=200)
    t = run_trajectory(field, Point2(0.2, 0.3), params, RngStream(3, 3))
    rng = RngStream(3, 3)
    p = Point2(0.2, 0.3)
    for _ in range(200):
        p = step(field, p, params, rng)
    assert p == t.end


def test_escape(field):
    params = DescentParams(tau=0.01, eps=5.0, max_steps=500, escape_bound=10.0)
    t = run_trajectory(field, Point2(0.0, 0.0), params, RngStream(0, 0))
    assert t.stop_reason is StopReason.ESCAPED
    assert max(abs(t.end.x), abs(t.end.y)) > 10.0
    assert t.steps_taken < 500


def test_batch_results_independent_of_batch(field, region_points):
    x, y = region_points
    params = DescentParams(tau=0.02, eps=0.05, max_steps=300)
    noise = np.stack([RngStream(1, k).normals(300) for k in range(len(x))])
    full = descend(field, x, y, params, noise)
    part = descend(field, x[500:], y[500:], params, noise[500:])
    assert np.array_equal(full.x[500:], part.x) and np.array_equal(full.y[500:], part.y)
    assert np.array_equal(full.steps[500:], part.steps)


def test_expression_field_descends_like_builtin(field):
    e = ExprField(BUILTIN_EXPRESSION)
    params = DescentParams(tau=0.001, grad_tol=1e-6, max_steps=20_000)
    a = run_trajectory(field, Point2(0.6, 0.1), params)
    b = run_trajectory(e, Point2(0.6, 0.1), params)
    assert math.hypot(a.end.x - b.end.x, a.end.y - b.end.y) < 1e-6
