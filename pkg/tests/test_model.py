"""Domain types, kernel assembly, embedding, and model-file parsing."""

import json

import numpy as np
import pytest

from mdp_ode import (
    ControlKernel,
    KLModel,
    ModelError,
    ModelFormatError,
    NatureKernel,
    Pmf,
    ReducibilityError,
    StandardMDP,
    StateSpace,
    StochasticMatrix,
    assemble_p0,
    check_irreducible_aperiodic,
    embed_standard_mdp,
    load_model,
    model_to_dict,
    save_model,
    support_equivalence,
    twist,
)
from mdp_ode.fixtures import random_kl_model, symmetric_two_state


def test_pmf_valid():
    p = Pmf(np.array([0.25, 0.75]))
    assert p.size == 2
    assert not p.weights.flags.writeable


def test_pmf_rejects_negative_and_bad_sum():
    with pytest.raises(ModelError):
        Pmf(np.array([-0.1, 1.1]))
    with pytest.raises(ModelError):
        Pmf(np.array([0.5, 0.49]))
    with pytest.raises(ModelError):
        Pmf(np.array([0.5, np.nan]))


def test_stochastic_matrix_requires_square():
    with pytest.raises(ModelError):
        StochasticMatrix(np.array([[0.5, 0.5]]))


def test_state_space_indexing_bijection():
    space = StateSpace(("a", "b", "c"), ("0", "1"))
    seen = set()
    for xu in range(space.d_u):
        for xn in range(space.d_n):
            x = space.flat(xu, xn)
            assert space.split(x) == (xu, xn)
            seen.add(x)
    assert seen == set(range(space.d))
    assert space.index_of("b", "1") == space.flat(1, 1)
    with pytest.raises(ModelError):
        space.index_of("z", "0")


def test_state_space_rejects_duplicate_labels():
    with pytest.raises(ModelError):
        StateSpace(("a", "a"), ("0",))


def test_assemble_p0_singleton():
    p = assemble_p0(NatureKernel(np.array([[1.0]])), ControlKernel(np.array([[1.0]])))
    assert np.array_equal(p.entries, np.array([[1.0]]))


def test_assemble_p0_degenerate_nature():
    q0 = NatureKernel(np.ones((2, 1)))
    r0 = ControlKernel(np.full((2, 2), 0.5))
    p = assemble_p0(q0, r0)
    assert np.allclose(p.entries, 0.5)


def test_assemble_p0_factorizes_back():
    rng = np.random.default_rng(7)
    model = random_kl_model(rng, d_u=2, d_n=2)
    p = assemble_p0(model.q0, model.r0).entries
    d_u, d_n = 2, 2
    for x in range(4):
        block = p[x].reshape(d_u, d_n)
        r_back = block.sum(axis=1)
        q_back = block.sum(axis=0)
        assert np.abs(r_back - model.r0.entries[x]).max() <= 1e-14
        assert np.abs(q_back - model.q0.entries[x]).max() <= 1e-14


@pytest.mark.parametrize("seed", range(20))
def test_assemble_p0_rows_sum_to_one(seed):
    rng = np.random.default_rng(seed)
    d_u = int(rng.integers(1, 4))
    d_n = int(rng.integers(1, 4))
    d = d_u * d_n
    q0 = NatureKernel(rng.dirichlet(np.ones(d_n), size=d))
    r0 = ControlKernel(rng.dirichlet(np.ones(d_u), size=d))
    p = assemble_p0(q0, r0)
    assert np.abs(p.entries.sum(axis=1) - 1.0).max() <= 1e-12


def test_assemble_p0_dimension_mismatch():
    q0 = NatureKernel(np.ones((2, 1)))
    r0 = ControlKernel(np.full((3, 3), 1.0 / 3.0))
    with pytest.raises(ModelError):
        assemble_p0(q0, r0)


def test_mixing_horizon_positive_matrix():
    p = StochasticMatrix(np.full((2, 2), 0.5))
    assert check_irreducible_aperiodic(p) == 1


def test_mixing_horizon_periodic_chain_fails():
    p = StochasticMatrix(np.array([[0.0, 1.0], [1.0, 0.0]]))
    with pytest.raises(ReducibilityError):
        check_irreducible_aperiodic(p)


def test_mixing_horizon_two_step():
    p = StochasticMatrix(np.array([[0.0, 1.0], [0.5, 0.5]]))
    assert check_irreducible_aperiodic(p) == 2


def test_mixing_horizon_reducible_names_pair():
    p = StochasticMatrix(np.array([[1.0, 0.0], [0.5, 0.5]]))
    with pytest.raises(ReducibilityError) as err:
        check_irreducible_aperiodic(p)
    assert err.value.pair == (0, 1)


def _oracle_mixing_horizon(entries, limit):
    support = (entries > 1e-14).astype(float)
    for n in range(1, limit + 1):
        if np.linalg.matrix_power(support, n).min() > 0:
            return n
    return None


@pytest.mark.parametrize("seed", range(12))
def test_mixing_horizon_matches_matrix_power_oracle(seed):
    rng = np.random.default_rng(100 + seed)
    d = int(rng.integers(2, 6))
    rows = rng.dirichlet(np.ones(d), size=d)
    # sparsify while keeping rows stochastic
    mask = rng.uniform(size=(d, d)) < 0.5
    mask[np.arange(d), rng.integers(0, d, size=d)] = True
    rows = np.where(mask, rows, 0.0)
    rows = rows / rows.sum(axis=1, keepdims=True)
    p = StochasticMatrix(rows)
    expected = _oracle_mixing_horizon(rows, d * d)
    if expected is None:
        with pytest.raises(ReducibilityError):
            check_irreducible_aperiodic(p)
        return
    n0 = check_irreducible_aperiodic(p)
    assert n0 == expected
    support = (rows > 1e-14).astype(float)
    assert np.linalg.matrix_power(support, n0).min() > 0
    assert np.linalg.matrix_power(support, n0 + 1).min() > 0
    if n0 > 1:
        assert np.linalg.matrix_power(support, n0 - 1).min() == 0


def test_embed_trivial_mdp():
    mdp = StandardMDP(
        state_labels=("s",),
        action_labels=("a",),
        transitions=np.ones((1, 1, 1)),
        nominal_policy=np.ones((1, 1)),
    )
    space, q0, r0 = embed_standard_mdp(mdp)
    assert space.d == 1
    assert np.array_equal(q0.entries, np.array([[1.0]]))
    assert np.array_equal(r0.entries, np.array([[1.0]]))


def test_embed_single_action():
    rho = np.zeros((2, 1, 2))
    rho[0, 0] = (0.7, 0.3)
    rho[1, 0] = (0.2, 0.8)
    mdp = StandardMDP(("s0", "s1"), ("a",), rho, np.ones((2, 1)))
    space, q0, r0 = embed_standard_mdp(mdp)
    assert space.d == 2
    assert np.array_equal(r0.entries, np.ones((2, 1)))
    assert np.array_equal(q0.entries[space.flat(0, 0)], rho[0, 0])
    assert np.array_equal(q0.entries[space.flat(0, 1)], rho[1, 0])


@pytest.mark.parametrize("n_s,n_a", [(2, 2), (3, 2), (2, 4), (4, 4)])
def test_embed_generic_matches_joint_chain_enumeration(n_s, n_a):
    rng = np.random.default_rng(11 + n_s * 10 + n_a)
    rho = rng.dirichlet(np.ones(n_s), size=(n_s, n_a))
    phi = rng.dirichlet(np.ones(n_a), size=n_s)
    mdp = StandardMDP(
        tuple(f"s{i}" for i in range(n_s)),
        tuple(f"a{i}" for i in range(n_a)),
        rho,
        phi,
    )
    space, q0, r0 = embed_standard_mdp(mdp)
    p = assemble_p0(q0, r0).entries
    # joint pair chain (action component, state component): the next action is
    # drawn from the policy at the current state component, the next state
    # component from the law at the stored action
    for a in range(n_a):
        for s in range(n_s):
            x = space.flat(a, s)
            for a2 in range(n_a):
                for s2 in range(n_s):
                    x2 = space.flat(a2, s2)
                    expected = phi[s, a2] * rho[s, a, s2]
                    assert abs(p[x, x2] - expected) <= 1e-14


def test_support_equivalence_basic():
    p = StochasticMatrix(np.array([[0.5, 0.5], [0.1, 0.9]]))
    assert support_equivalence(p, p)
    q = StochasticMatrix(np.array([[1.0, 0.0], [0.1, 0.9]]))
    assert not support_equivalence(p, q)


def test_support_equivalence_of_twisted_kernel():
    rng = np.random.default_rng(3)
    model = random_kl_model(rng, d_u=2, d_n=3)
    h = rng.normal(size=model.d)
    h[model.reference_state] = 0.0
    tw = twist(h, model)
    assert support_equivalence(tw.p_h, model.p0)


def test_klmodel_validates_reference_and_shapes():
    space = StateSpace(("a", "b"), ("n",))
    q0 = NatureKernel(np.ones((2, 1)))
    r0 = ControlKernel(np.full((2, 2), 0.5))
    with pytest.raises(ModelError):
        KLModel(space, q0, r0, np.array([1.0, 0.0]), reference_state=5)
    with pytest.raises(ModelError):
        KLModel(space, q0, r0, np.array([1.0]), reference_state=0)


def test_klmodel_rejects_periodic_nominal_chain():
    space = StateSpace(("a", "b"), ("n",))
    q0 = NatureKernel(np.ones((2, 1)))
    r0 = ControlKernel(np.array([[0.0, 1.0], [1.0, 0.0]]))
    with pytest.raises(ReducibilityError):
        KLModel(space, q0, r0, np.array([1.0, 0.0]), reference_state=0)


# ---------------------------------------------------------------------------
# model files


def test_model_file_round_trip(tmp_path):
    model = symmetric_two_state()
    path = tmp_path / "model.json"
    save_model(model, path)
    loaded = load_model(path)
    assert loaded.space.xu_labels == model.space.xu_labels
    assert np.array_equal(loaded.q0.entries, model.q0.entries)
    assert np.array_equal(loaded.r0.entries, model.r0.entries)
    assert np.array_equal(loaded.utility, model.utility)
    assert loaded.reference_state == model.reference_state
    assert loaded.n0 == model.n0


def test_model_file_reference_as_integer(tmp_path):
    raw = model_to_dict(symmetric_two_state())
    raw["reference_state"] = 1
    path = tmp_path / "model.json"
    path.write_text(json.dumps(raw))
    assert load_model(path).reference_state == 1


def test_model_file_rejects_bad_row_sum(tmp_path):
    raw = model_to_dict(symmetric_two_state())
    raw["R0"][0] = [0.49, 0.49]
    path = tmp_path / "model.json"
    path.write_text(json.dumps(raw))
    with pytest.raises(ModelFormatError) as err:
        load_model(path)
    assert "R0[0]" in str(err.value)


def test_model_file_rejects_nan(tmp_path):
    raw = model_to_dict(symmetric_two_state())
    text = json.dumps(raw).replace("0.5", "NaN", 1)
    path = tmp_path / "model.json"
    path.write_text(text)
    with pytest.raises(ModelFormatError):
        load_model(path)


def test_model_file_rejects_infinity(tmp_path):
    raw = model_to_dict(symmetric_two_state())
    text = json.dumps(raw).replace("1.0", "Infinity", 1)
    path = tmp_path / "model.json"
    path.write_text(text)
    with pytest.raises(ModelFormatError):
        load_model(path)


def test_model_file_missing_key(tmp_path):
    raw = model_to_dict(symmetric_two_state())
    del raw["utility"]
    path = tmp_path / "model.json"
    path.write_text(json.dumps(raw))
    with pytest.raises(ModelFormatError) as err:
        load_model(path)
    assert "utility" in str(err.value)


def test_model_file_unknown_reference_label(tmp_path):
    raw = model_to_dict(symmetric_two_state())
    raw["reference_state"] = "zz,n"
    path = tmp_path / "model.json"
    path.write_text(json.dumps(raw))
    with pytest.raises(ModelFormatError) as err:
        load_model(path)
    assert "reference_state" in str(err.value)


def test_model_file_syntax_error_reports_line(tmp_path):
    path = tmp_path / "model.json"
    path.write_text('{"xu_labels": ["a",]}')
    with pytest.raises(ModelFormatError) as err:
        load_model(path)
    assert "line" in str(err.value)
