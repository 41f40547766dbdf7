import math

import numpy as np
import pytest

from fracspin import mera as M
from fracspin.itebd import SZ, ConvergenceError, XxzParams, bond_hamiltonian
from fracspin.mera import (
    EigenvalueConditionError,
    ascend,
    ascend2_average,
    ascend3,
    average_rho2,
    average_rho3,
    average_rho3_terms,
    bond_energy,
    chain_rule_probability,
    contraction_cost_estimate,
    descend,
    descend2_average,
    descend3,
    dominant_ascend_c_eigenvalue,
    expectation3,
    identity_op,
    load_mera,
    op_matrix,
    op_tensor,
    optimize_mera,
    partial_trace,
    physical_rho2,
    product_state_mera,
    random_mera,
    sample_mera,
    sample_mera_batch,
    save_mera,
    site_density,
    sz_site_operator,
    trace_op,
    window_distribution,
)
from fracspin.xx_exact import cz_exact


@pytest.fixture(scope="module")
def rand():
    return random_mera(4, 2, seed=3)


def _random_op(rng, dim, sites, hermitian=False):
    m = rng.standard_normal((dim**sites, dim**sites))
    if hermitian:
        m = m + m.T
    return op_tensor(m, sites)


def _random_rho(rng, dim, sites):
    a = rng.standard_normal((dim**sites, dim**sites))
    m = a @ a.T
    return op_tensor(m / np.trace(m), sites)


def _pair(a, b):
    k = a.ndim // 2
    perm = list(range(k, 2 * k)) + list(range(k))
    return float(np.tensordot(a, b.transpose(perm), axes=2 * k))


@pytest.mark.parametrize("kind", ["L", "C", "R"])
def test_trace_duality_three_site(rand, kind):
    rng = np.random.default_rng(0)
    layer = rand.scale_invariant
    op = _random_op(rng, layer.chi_in, 3)
    out_sites = 3 if kind == "C" else 2
    rho = _random_rho(rng, layer.chi_out, out_sites)
    lhs = _pair(ascend3(kind, op, layer), rho)
    rhs = _pair(op, descend3(kind, rho, layer))
    assert lhs == pytest.approx(rhs, abs=1e-12)


@pytest.mark.parametrize("offset", [0, 1, 2])
def test_trace_duality_two_site(rand, offset):
    rng = np.random.default_rng(offset)
    layer = rand.transition_layers[0]  # physical 2 -> 4
    op = _random_op(rng, layer.chi_in, 2)
    rho = _random_rho(rng, layer.chi_out, 2)
    assert _pair(ascend(op, layer, offset), rho) == pytest.approx(_pair(op, descend(rho, layer, offset, 2)), abs=1e-12)


def test_unitality(rand):
    layer = rand.scale_invariant
    chi = layer.chi_in
    for kind, sites in (("L", 2), ("C", 3), ("R", 2)):
        out = ascend3(kind, identity_op(chi, 3), layer)
        np.testing.assert_allclose(out, identity_op(layer.chi_out, sites), atol=1e-12)
    np.testing.assert_allclose(ascend2_average(identity_op(chi, 2), layer), identity_op(chi, 2), atol=1e-12)


def test_descend_preserves_trace(rand):
    rng = np.random.default_rng(1)
    layer = rand.scale_invariant
    rho = _random_rho(rng, 4, 2)
    assert trace_op(descend2_average(rho, layer)) == pytest.approx(1.0, abs=1e-12)
    rho3 = _random_rho(rng, 4, 3)
    assert trace_op(descend3("C", rho3, layer)) == pytest.approx(1.0, abs=1e-12)


def test_random_mera_is_valid(rand):
    for ell in range(rand.T + 1):
        dw, du = rand.layer(ell).defects()
        assert dw < 1e-10 and du < 1e-10


def test_rho2_fixed_point(rand):
    rho = average_rho2(rand)
    m = op_matrix(rho)
    np.testing.assert_allclose(m, m.T, atol=1e-14)
    assert np.trace(m) == pytest.approx(1.0, abs=1e-13)
    assert np.linalg.eigvalsh(m).min() > -1e-12
    residual = np.linalg.norm(descend2_average(rho, rand.scale_invariant) - rho)
    assert residual <= 1e-10


def test_rho3_consistency(rand):
    rho3 = average_rho3(rand)
    assert trace_op(rho3) == pytest.approx(1.0, abs=1e-8)
    m = op_matrix(rho3)
    assert np.linalg.eigvalsh(0.5 * (m + m.T)).min() > -1e-10
    rng = np.random.default_rng(4)
    for keep in ([0, 1], [1, 2]):
        op = _random_op(rng, 4, 2, hermitian=True)
        assert _pair(partial_trace(rho3, keep), op) == pytest.approx(_pair(rand.rho2, op), abs=1e-8)


def test_neumann_self_consistency(rand):
    a = average_rho3_terms(rand, 40)
    b = average_rho3_terms(rand, 50)
    assert np.abs(a - b).max() <= 1e-12


def test_central_eigenvalue_below_three(rand):
    assert dominant_ascend_c_eigenvalue(rand) < 3.0
    average_rho3(rand, check=True)


def test_eigenvalue_condition_error(rand, monkeypatch):
    monkeypatch.setattr(M, "dominant_ascend_c_eigenvalue", lambda mera: 3.0)
    with pytest.raises(EigenvalueConditionError, match="3"):
        average_rho3(rand, check=True)


def test_product_state_mera():
    for T in (0, 1):
        pm = product_state_mera(T)
        up2 = np.zeros(4)
        up2[0] = 1.0
        np.testing.assert_allclose(op_matrix(average_rho2(pm)), np.outer(up2, up2), atol=1e-11)
        up3 = np.zeros(8)
        up3[0] = 1.0
        np.testing.assert_allclose(op_matrix(average_rho3(pm)), np.outer(up3, up3), atol=1e-11)
        traj = sample_mera(pm, 7, seed=1)
        assert np.all(traj.values == 1)


def test_contraction_cost_examples():
    assert contraction_cost_estimate(9, 2) == 1408
    assert contraction_cost_estimate(3, 2) == 128
    assert contraction_cost_estimate(10, 2) == contraction_cost_estimate(27, 2)
    assert contraction_cost_estimate(27, 3, mode="exponent") == pytest.approx(3.0)
    assert contraction_cost_estimate(27, 3, mode="bound") == pytest.approx(27.0**4)
    assert isinstance(contraction_cost_estimate(81, 5), int)


def test_state_file_round_trip(tmp_path, rand):
    path = tmp_path / "m.zip"
    save_mera(path, rand)
    back = load_mera(path)
    assert back.T == rand.T and back.chi == rand.chi
    for ell in range(rand.T + 1):
        assert back.layer(ell).w.tobytes() == rand.layer(ell).w.tobytes()
        assert back.layer(ell).u.tobytes() == rand.layer(ell).u.tobytes()
    assert back.rho2.tobytes() == rand.rho2.tobytes()


def test_optimize_argument_errors():
    with pytest.raises(ValueError):
        optimize_mera(XxzParams(0.0), 9)
    with pytest.raises(ValueError):
        optimize_mera(XxzParams(0.0), 1)
    with pytest.raises(ValueError):
        optimize_mera(XxzParams(0.0), 4, T=0)


def test_optimize_non_convergence_carries_trace():
    with pytest.raises(ConvergenceError) as info:
        optimize_mera(XxzParams(0.0), 2, T=0, max_sweeps=3, tol=1e-15)
    assert len(info.value.energy_trace) == 3


def test_chi2_optimization_isometries():
    # the scale-invariant update moves the fixed point, so small upward steps can occur at chi = 2
    m = optimize_mera(XxzParams(0.0), 2, T=1, max_sweeps=300, require_convergence=False)
    trace = np.array(m.meta["energy_trace"])
    assert trace[-1] < trace[0]
    assert np.diff(trace).max() < 1e-5
    for ell in range(m.T + 1):
        assert max(m.layer(ell).defects()) <= 1e-10


# optimized state ------------------------------------------------------------


def test_optimized_energy(xx_mera):
    assert xx_mera.energy <= -0.30
    assert bond_energy(xx_mera, XxzParams(0.0)) == pytest.approx(-1 / math.pi, abs=1e-2)


def test_optimized_trace_monotone(xx_mera):
    trace = np.array(xx_mera.meta["energy_trace"])
    assert np.all(np.diff(trace) <= 1e-12)


def test_optimized_isometries(xx_mera):
    for ell in range(xx_mera.T + 1):
        dw, du = xx_mera.layer(ell).defects()
        assert dw <= 1e-10 and du <= 1e-10


def test_two_energy_paths_agree(xx_mera):
    h3 = op_tensor(np.kron(bond_hamiltonian(XxzParams(0.0)), np.eye(2)), 3)
    assert expectation3(xx_mera, h3) == pytest.approx(bond_energy(xx_mera, XxzParams(0.0)), abs=1e-8)


def test_optimized_zero_magnetization(xx_mera):
    for pos in range(3):
        assert abs(expectation3(xx_mera, sz_site_operator(pos))) <= 1e-6


def test_optimized_eigenvalue_condition(xx_mera):
    assert dominant_ascend_c_eigenvalue(xx_mera) < 3.0


def test_identity_expectation(xx_mera):
    assert expectation3(xx_mera, identity_op(2, 3)) == pytest.approx(1.0, abs=1e-10)


@pytest.mark.parametrize("n", [1, 3, 6])
@pytest.mark.parametrize("basis", ["z", "x"])
def test_chain_rule_equals_dense(xx_mera, n, basis):
    p = window_distribution(xx_mera, n, basis)
    rng = np.random.default_rng(n)
    for code in rng.choice(p.size, size=min(p.size, 8), replace=False):
        outcomes = [(int(code) >> (n - 1 - q)) & 1 for q in range(n)]
        assert chain_rule_probability(xx_mera, outcomes, basis) == pytest.approx(p[code], rel=1e-8, abs=1e-14)


def test_conditional_density_valid(xx_mera):
    rho = site_density(xx_mera, 5, [0, 1, 1], "x")
    np.testing.assert_allclose(rho, rho.T, atol=1e-14)
    assert np.trace(rho) == pytest.approx(1.0)
    assert np.linalg.eigvalsh(rho).min() > -1e-12


def test_pair_frequencies_match_rho2(xx_mera):
    samples = sample_mera_batch(xx_mera, 2, 100_000, seed=5)
    codes = (samples[:, 0] < 0) * 2 + (samples[:, 1] < 0)
    freq = np.bincount(codes, minlength=4) / len(codes)
    exact = np.diag(op_matrix(physical_rho2(xx_mera)))
    assert 0.5 * np.abs(freq - exact).sum() <= 0.01


def test_empirical_cz1(xx_mera):
    samples = sample_mera_batch(xx_mera, 2, 200_000, seed=6).astype(float) * 0.5
    prod = samples[:, 0] * samples[:, 1]
    se = prod.std() / math.sqrt(prod.size)
    # widened by the energy error of the small-chi state
    slack = abs(xx_mera.energy + 1 / math.pi)
    assert abs(prod.mean() - cz_exact(1)) < 3 * se + slack


def test_sequential_and_dense_routes(xx_mera):
    seq = sample_mera(xx_mera, 4, seed=3, method="sequential")
    dense = sample_mera(xx_mera, 4, seed=3, method="dense")
    assert seq.length == dense.length == 4
    a = sample_mera(xx_mera, 4, seed=3)
    np.testing.assert_array_equal(a.values, dense.values)
    with pytest.raises(ValueError):
        sample_mera(xx_mera, 4, seed=3, method="other")


def test_sequential_route_distribution(xx_mera):
    p = window_distribution(xx_mera, 3)
    counts = np.zeros(8)
    for s in range(3000):
        v = sample_mera(xx_mera, 3, seed=s, method="sequential").values
        counts[int(((v < 0) * np.array([4, 2, 1])).sum())] += 1
    assert 0.5 * np.abs(counts / counts.sum() - p).sum() < 0.04
