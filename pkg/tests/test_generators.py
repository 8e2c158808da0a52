import hashlib

import numpy as np
import pytest

from lpvred.core import vertices
from lpvred.errors import DimensionError
from lpvred.generators import generate_random_model, generate_thermal_model, thermal_network


def _hash(model):
    h = hashlib.sha256()
    for X in (model.A, model.B, model.C, model.D):
        h.update(np.ascontiguousarray(X).tobytes())
    return h.hexdigest()


def test_random_model_dimensions_and_determinism():
    m = generate_random_model(0)
    assert (m.n_states, m.n_params, m.n_inputs, m.n_outputs) == (45, 5, 2, 2)
    assert _hash(m) == _hash(generate_random_model(0))
    assert _hash(m) != _hash(generate_random_model(1))


def test_random_model_vertices_hurwitz_and_blocks_negative_definite():
    m = generate_random_model(2, n=12, l=4)
    for w in vertices(m.box):
        assert np.linalg.eigvals(m.at(w).A).real.max() < 0
    for i in range(1, 5):
        assert np.allclose(m.A[i], m.A[i].T)
        assert np.linalg.eigvalsh(m.A[i]).max() < 0


def test_thermal_model_structure():
    m = generate_thermal_model(0)
    assert (m.n_states, m.n_params, m.n_inputs, m.n_outputs) == (45, 5, 2, 2)
    assert np.all(m.D == 0)
    assert np.all(m.C[1:] == 0)
    net = thermal_network(0)
    # diffusion part conserves energy: rows of the conductance Laplacian sum to zero
    assert np.allclose(net.laplacian.sum(axis=1), 0.0, atol=1e-12)
    assert m.is_stable()


def test_thermal_steady_state_matches_conductance_solve():
    net = thermal_network(1)
    m = net.to_model()
    u = np.array([50.0, 45.0])
    Bp = np.zeros((45, 2))
    Bp[net.heater_nodes[0], 0] = 1.0
    Bp[net.heater_nodes[1], 1] = 1.0
    x_ref = np.linalg.solve(net.stiffness, Bp @ u)
    for th in ([0.0] * 5, [0.2, 0.9, 0.4, 1.0, 0.0]):
        sys = m.at(th)
        x = np.linalg.solve(sys.A, -sys.B @ u)
        assert np.allclose(x, x_ref, rtol=1e-9)


def test_thermal_dims_checked():
    with pytest.raises(DimensionError):
        generate_thermal_model(0, blocks=0)
