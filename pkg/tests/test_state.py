import numpy as np
import pytest
from scipy.optimize import brentq

from damctl.control import Control
from damctl.materials import MaterialLaw, eval_xi
from damctl.mesh import build_structured_mesh
from damctl.presets import reference_problem, stationary_problem
from damctl.state import NewtonError, StateProblem, energies, evaluate_cost, lipschitz_probe, solve_state

from cases import one_element_pair


@pytest.mark.parametrize("M", [5, 50])
def test_stationary(M):
    P = stationary_problem(4, M)
    tr = solve_state(P)
    assert np.abs(tr.chi - 0.4).max() <= 1e-9
    assert np.abs(tr.u).max() <= 1e-9


def test_uniform_growth_matches_scalar_root():
    law = MaterialLaw()
    w = -law.f_coeffs[1]
    r_star = brentq(lambda r: r + eval_xi(law, r)[0] - w, 0.0, w)
    mesh = build_structured_mesh(4)
    P = StateProblem(mesh, law, Control.zeros(mesh, 10), 1.0, 10, chi0=0.3)
    tr = solve_state(P)
    expected = 0.3 + r_star * np.arange(11)[:, None] * P.tau
    assert np.abs(tr.chi - expected).max() <= 1e-6
    assert r_star > 0


def test_dense_oracle():
    P, D, _ = one_element_pair()
    tr = solve_state(P)
    _, chi, u = D.solve()
    assert np.abs(tr.chi - chi).max() <= 1e-9
    assert np.abs(tr.u - u).max() <= 1e-9


def test_velocity_consistent(ref4):
    P, tr = ref4
    assert tr.u.shape == (P.M + 1, 2 * P.mesh.n_vertices) and tr.chi.shape == (P.M + 1, P.mesh.n_vertices)
    assert np.array_equal(tr.v[0], P.v0)
    assert np.abs(np.diff(tr.u, axis=0) / P.tau - tr.v[1:]).max() <= 1e-12
    assert tr.chi_t.shape == tr.chi.shape and tr.chi_tt.shape == tr.chi.shape


def test_deterministic(ref4):
    P, tr = ref4
    again = solve_state(P)
    assert np.array_equal(again.u, tr.u) and np.array_equal(again.chi, tr.chi)


def test_cost_trivia():
    mesh = build_structured_mesh(4)
    tr = solve_state(stationary_problem(4, 5))
    zero = Control.zeros(mesh, 5)
    assert evaluate_cost(tr, zero, tr.chi[-1], 1.0, 1.0) == 0.0
    assert evaluate_cost(tr, zero, tr.chi[-1] - 1.0, 2.0, 0.0) == pytest.approx(1.0, abs=1e-12)
    v = np.zeros((6, mesh.n_boundary, 2))
    v[..., 0] = 1.0
    assert evaluate_cost(tr, Control(v), tr.chi[-1], 0.0, 2.0) == pytest.approx(4.0, abs=1e-12)


def test_lipschitz_probe(ref4):
    P, _ = ref4
    b = P.control
    with pytest.raises(ValueError):
        lipschitz_probe(P, b, b)
    tiny = b.with_values(b.values + 1e-6)
    r = lipschitz_probe(P, b, tiny)
    assert np.isfinite(r) and r > 0


def test_edge_perturbation_stable_in_time():
    ratios = []
    for M in (10, 20, 40):
        P = reference_problem(4, M)
        h = np.zeros_like(P.control.values)
        a, c = P.mesh.boundary_index[P.mesh.boundary_edges[0]]
        h[:, [a, c], 0] = 0.2
        ratios.append(lipschitz_probe(P, P.control, P.control.with_values(P.control.values + h)))
    assert max(ratios) / min(ratios) < 1.5, ratios


def test_energies_report(ref4):
    P, tr = ref4
    en = energies(P, tr)
    assert len(en["t"]) == P.M + 1 and en["kinetic"][0] == 0.0


def test_newton_failure_reports_step():
    mesh = build_structured_mesh(2)
    P = StateProblem(mesh, MaterialLaw(), Control.zeros(mesh, 3), 1.0, 3, chi0=0.5, newton_maxiter=0)
    with pytest.raises(NewtonError) as info:
        solve_state(P)
    assert info.value.step == 1 and info.value.residual > 0


def test_control_grid_checked():
    mesh = build_structured_mesh(2)
    with pytest.raises(ValueError, match="control grid"):
        StateProblem(mesh, MaterialLaw(), Control.zeros(mesh, 3), 1.0, 4)


def test_nonfinite_initial_data_rejected():
    mesh = build_structured_mesh(2)
    with pytest.raises(ValueError, match="chi0"):
        StateProblem(mesh, MaterialLaw(), Control.zeros(mesh, 3), 1.0, 3, chi0=np.nan)
