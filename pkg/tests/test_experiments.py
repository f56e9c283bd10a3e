import csv
import json
import math

import numpy as np
import pytest

from invspec import solve_inverse
from invspec.errors import ConfigurationError, GridMismatchError, NoPositiveSolution
from invspec.experiments import (
    MultiEigProblem,
    SweepSpec,
    Table,
    config_hash,
    convergence_study,
    fit_order,
    gap_schedule,
    multi_eigenvalue_solve,
    stability_sweep_lambda,
    stability_sweep_q0,
)
from invspec.mesh import build_grid, constant, lp_norm, max_norm
from invspec.potentials import make_potential
from invspec.spectral import principal_eigenpair

TWO_PI2 = 2 * math.pi**2
GRID = {"dim": 1, "extents": [[0.0, 1.0]], "n": 127}


def test_config_hash_is_canonical():
    assert config_hash({"a": 1, "b": [1, 2]}) == config_hash({"b": [1, 2], "a": 1})
    assert config_hash({"a": 1}) != config_hash({"a": 2})
    assert len(config_hash({})) == 16


def test_table_io(tmp_path):
    t = Table(["x", "y"], [[1.0, 0.1], [2.0, 1 / 3]], {"seed": 4})
    t.write_csv(tmp_path / "t.csv")
    lines = (tmp_path / "t.csv").read_text().splitlines()
    assert lines[0] == "# seed=4"
    rows = list(csv.reader(lines[1:]))
    assert rows[0] == ["x", "y"] and float(rows[2][1]) == 1 / 3
    t.write_json(tmp_path / "t.json")
    assert json.loads((tmp_path / "t.json").read_text())["rows"][1] == [2.0, 1 / 3]
    t.write_xy(tmp_path / "xy.csv", "x", "y")
    assert (tmp_path / "xy.csv").read_text().splitlines()[0] == "x,y"
    assert t.column("y") == [0.1, 1 / 3]


def test_sweep_spec_validates_deltas():
    with pytest.raises(ConfigurationError):
        SweepSpec({"family": "constant"}, {"family": "constant"}, (0.1, 0.2, 0.1), 30.0, 2, GRID)
    with pytest.raises(ConfigurationError):
        SweepSpec({"family": "constant"}, {"family": "constant"}, (-0.1,), 30.0, 2, GRID)


def test_sweep_q0_random_direction():
    base = {"family": "gaussian_well"}
    lam1 = principal_eigenpair(make_potential(build_grid(1, (0, 1), 127), base)).lambda1
    direction = {"family": "fourier_random", "seed": 3, "amplitude": 1.0}
    spec = SweepSpec(base, direction, (0.0, 1e-1, 1e-2, 1e-3, 1e-4), lam1 + 5, 2, GRID, seed=3)
    table = stability_sweep_q0(spec)
    assert table.meta["passed"]
    assert table.rows[0][1] == 0.0 and table.rows[0][2] == 0.0
    assert table.meta["config_hash"] == spec.provenance()["config_hash"]


def test_sweep_q0_constant_direction_is_shift():
    spec = SweepSpec({"family": "constant"}, {"family": "constant", "value": 1.0}, (0.5, 0.05), TWO_PI2, 2, GRID)
    table = stability_sweep_q0(spec)
    # q0 + d with fixed lam equals the unshifted problem at lam - d, plus d
    g = spec.build_grid()
    base = solve_inverse(constant(g, 0.0), TWO_PI2, 2, run_verify=False).q_hat
    for d, dist, _ in table.rows:
        other = solve_inverse(constant(g, 0.0), TWO_PI2 - d, 2, run_verify=False).q_hat + d
        assert dist == pytest.approx(lp_norm(other - base, 2), rel=1e-9)


def test_sweep_q0_rejects_infeasible_lambda():
    spec = SweepSpec({"family": "constant"}, {"family": "constant", "value": 1.0}, (0.0, 5.0), 12.0, 2, GRID)
    with pytest.raises(ConfigurationError):
        stability_sweep_q0(spec)


@pytest.fixture(scope="module")
def lambda_sweep():
    q0 = constant(build_grid(1, (0, 1), 255), 0.0)
    lam1 = principal_eigenpair(q0).lambda1
    sched = gap_schedule(lam1, [10.0**-k for k in range(7)])
    return q0, lam1, stability_sweep_lambda(q0, sched, 2, lambda1=lam1)


def test_sweep_lambda(lambda_sweep):
    q0, lam1, table = lambda_sweep
    assert table.meta["passed"]
    dist = table.column("q_hat_dist_lp")
    assert dist[0] / dist[4] >= 10
    assert dist[-1] <= 1e-3


def test_sweep_lambda_first_row_matches_standalone(lambda_sweep):
    q0, lam1, table = lambda_sweep
    res = solve_inverse(q0, lam1 + 1.0, 2, run_verify=False)
    assert table.rows[0][2] == lp_norm(res.q_hat - q0, 2)


def test_sweep_lambda_validation():
    q0 = constant(build_grid(1, (0, 1), 63), 0.0)
    lam1 = principal_eigenpair(q0).lambda1
    with pytest.raises(ConfigurationError):
        gap_schedule(lam1, [1.0, 1.0])
    with pytest.raises(ConfigurationError):
        stability_sweep_lambda(q0, [lam1 + 1, lam1 + 2], 2)
    with pytest.raises(NoPositiveSolution):
        stability_sweep_lambda(q0, [lam1 + 1, lam1 - 1], 2)


def test_fit_order_exact():
    hs = np.array([0.1, 0.05, 0.025])
    assert fit_order(hs, 3 * hs**2) == pytest.approx(2.0, abs=1e-12)


def test_convergence_study():
    table = convergence_study({"family": "constant"}, TWO_PI2, 2)
    for name, order in table.meta["orders"].items():
        assert abs(order - 2.0) <= 0.3, name


def test_convergence_study_validation():
    with pytest.raises(ConfigurationError):
        convergence_study({"family": "constant"}, TWO_PI2, 2, ns=(127, 255))
    with pytest.raises(GridMismatchError):
        convergence_study({"family": "constant"}, TWO_PI2, 2, ns=(127, 200, 511))


def test_multi_problem_validation():
    q0 = constant(build_grid(1, (0, 1), 63), 0.0)
    with pytest.raises(ConfigurationError):
        MultiEigProblem(q0, [50.0, 20.0], 2)
    with pytest.raises(ConfigurationError):
        MultiEigProblem(q0, [1.0, 2.0, 3.0, 4.0], 2)
    with pytest.raises(ConfigurationError):
        MultiEigProblem(q0, [20.0], 2, exponent_mode="other")
    assert MultiEigProblem(q0, [20.0], 3).exponent == 0.5
    assert MultiEigProblem(q0, [20.0], 3, exponent_mode="literal").exponent == 1.5


@pytest.mark.parametrize("p", [2, 3])
def test_multi_m1_reduces_to_inverse(p):
    q0 = constant(build_grid(1, (0, 1), 255), 0.0)
    report = multi_eigenvalue_solve(MultiEigProblem(q0, [TWO_PI2], p))
    ref = solve_inverse(q0, TWO_PI2, p, tol=1e-11, eig_tol=1e-11)
    assert report["status"] == "converged"
    assert max_norm(report["q_hat"] - ref.q_hat) <= 1e-8


@pytest.mark.parametrize("mode", ["matched", "literal"])
def test_multi_m2_emits_report(mode):
    q0 = constant(build_grid(1, (0, 1), 127), 0.0)
    report = multi_eigenvalue_solve(MultiEigProblem(q0, [TWO_PI2, 5 * math.pi**2], 2, exponent_mode=mode))
    assert report["m"] == 2
    assert report["status"] in ("converged", "no solution found from this start")
    for key in ("lambda_achieved", "lambda_error", "mu", "orthogonality", "newton_iterations"):
        assert key in report
