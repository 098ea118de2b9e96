import itertools

import numpy as np
import pytest

from spinconc.coupling import (
    conditional_pair_sample,
    conditional_pair_tree,
    coupled_glauber_disagreement,
    coupling_matrix_exact,
    coupling_rows_all,
    envelope_and_moment_matrices,
    joint_atoms,
    kr_distance,
    kr_optimal_coupling,
    maximal_coupling,
    past_index,
    sequential_coupling_sample,
    sequential_coupling_tree,
    TailProfile,
    transport_cost,
    verify_transport_chain,
)
from spinconc.errors import CapacityError
from spinconc.fields import SPIN, magnetization, single_spin
from spinconc.models import (
    MarkovChainModel,
    exact_joint,
    iid_spins,
    ising_rect,
    ising_segment,
)

from tests.oracles import naive_tv, transport_vertex_oracle


# ---------------------------------------------------------------------------
# single-coordinate maximal coupling
# ---------------------------------------------------------------------------

def test_maximal_coupling_random_pairs():
    rng = np.random.default_rng(0)
    for _ in range(300):
        k = int(rng.integers(2, 6))
        p = rng.random(k) + 1e-3
        q = rng.random(k) + 1e-3
        p, q = p / p.sum(), q / q.sum()
        c = maximal_coupling(p, q)
        ep, eq = c.marginal_errors()
        assert ep <= 1e-12 and eq <= 1e-12
        assert abs(c.disagreement - naive_tv(p, q)) <= 1e-12
        off_diag = c.table.sum() - np.trace(c.table)
        assert abs(off_diag - c.disagreement) <= 1e-12


def test_maximal_coupling_equal_laws():
    p = np.array([0.25, 0.75])
    c = maximal_coupling(p, p.copy())
    assert c.disagreement == 0.0
    assert np.allclose(c.table, np.diag(p))


# ---------------------------------------------------------------------------
# exact canonical rows, against a dictionary oracle
# ---------------------------------------------------------------------------

def _naive_row(joint, i, prefix, a, b):
    """Canonical-coupling disagreement per future coordinate, from dicts."""
    m = joint.n_sites
    fut_a = joint.conditional_future(tuple(prefix) + (a,))
    fut_b = joint.conditional_future(tuple(prefix) + (b,))
    pa = {idx: float(v) for idx, v in np.ndenumerate(fut_a.probs)}
    pb = {idx: float(v) for idx, v in np.ndenumerate(fut_b.probs)}
    mn = {c: min(pa[c], pb[c]) for c in pa}
    resid = 1.0 - sum(mn.values())
    out = {}
    for y in range(m - i - 1):
        j = i + 1 + y
        ra = {}
        rb = {}
        for c in pa:
            ra[c[y]] = ra.get(c[y], 0.0) + pa[c] - mn[c]
            rb[c[y]] = rb.get(c[y], 0.0) + pb[c] - mn[c]
        if resid <= 1e-15:
            out[j] = 0.0
        else:
            agree = sum(ra.get(s, 0.0) * rb.get(s, 0.0) for s in ra) / resid
            out[j] = resid - agree
    return out


def test_rows_match_dictionary_oracle():
    joint = exact_joint(ising_segment(4, beta=0.7, boundary="plus"))
    for i in range(3):
        band = coupling_rows_all(joint, i)
        for prefix in itertools.product((0, 1), repeat=i):
            w = past_index(prefix, i, 2)
            naive = _naive_row(joint, i, prefix, 0, 1)
            for j, v in naive.items():
                assert abs(band.value[w, j] - v) < 1e-12


def test_rows_match_oracle_2d():
    joint = exact_joint(ising_rect(2, 2, beta=0.45, boundary="free"))
    band = coupling_rows_all(joint, 1)
    for prefix in ((0,), (1,)):
        w = past_index(prefix, 1, 2)
        naive = _naive_row(joint, 1, prefix, 0, 1)
        for j, v in naive.items():
            assert abs(band.value[w, j] - v) < 1e-12


def test_markov_first_superdiagonal_is_two_q_minus_one():
    for q in (0.8, 0.3, 0.65):
        t = np.array([[q, 1 - q], [1 - q, q]])
        model = MarkovChainModel(5, np.array([0.5, 0.5]), t)
        joint = exact_joint(model)
        mats = coupling_matrix_exact(joint, (0, 1, 0, 0, 1))
        for i in range(4):
            assert abs(mats.value[i, i + 1] - abs(2 * q - 1)) < 1e-12


def test_matrix_shape_and_bands():
    joint = exact_joint(ising_rect(2, 3, beta=0.5, boundary="plus"))
    mats = coupling_matrix_exact(joint, (1, 0, 1, 1, 0, 1))
    m = joint.n_sites
    assert np.allclose(np.diag(mats.value), 1.0)
    assert np.allclose(np.tril(mats.value, -1), 0.0)
    assert np.all(mats.lower <= mats.value + 1e-12)
    assert np.all(mats.value <= mats.upper + 1e-12)
    assert mats.value.shape == (m, m)


def test_iid_rows_are_identity():
    joint = exact_joint(iid_spins(5, p_plus=0.6))
    data = envelope_and_moment_matrices(joint, p_orders=(1, 2))
    assert np.allclose(data.envelope, np.eye(5), atol=1e-14)
    assert np.allclose(data.moment[2], np.eye(5), atol=1e-14)


def test_envelope_dominates_and_moments_are_monotone():
    joint = exact_joint(ising_rect(2, 3, beta=0.4, boundary="free"))
    data = envelope_and_moment_matrices(joint, p_orders=(1, 2, 3))
    assert np.all(data.moment[1] <= data.moment[2] + 1e-12)
    assert np.all(data.moment[2] <= data.moment[3] + 1e-12)
    assert np.all(data.moment[3] <= data.envelope + 1e-12)
    assert np.all(data.lower_envelope <= data.envelope + 1e-12)
    assert np.all(data.envelope <= data.upper_envelope + 1e-12)
    rng = np.random.default_rng(2)
    for _ in range(5):
        sigma = tuple(rng.integers(0, 2, size=joint.n_sites))
        mats = coupling_matrix_exact(joint, sigma)
        assert np.all(mats.value <= data.envelope + 1e-12)


def test_envelope_decays_with_distance():
    joint = exact_joint(ising_segment(6, beta=0.5, boundary="free"))
    env = envelope_and_moment_matrices(joint, p_orders=(1,)).envelope
    row = env[0]
    assert row[1] > row[3] > row[5]


# ---------------------------------------------------------------------------
# sequential quantile coupling: exact recursion and sampler
# ---------------------------------------------------------------------------

def test_tree_legs_are_exact():
    joint = exact_joint(ising_rect(2, 2, beta=0.5, boundary="plus"))
    tree = conditional_pair_tree(joint, 1, 0)
    ja = joint.conditional_future((1,))
    jb = joint.conditional_future((0,))
    ea, eb = tree.leg_errors(ja, jb)
    assert ea < 1e-12 and eb < 1e-12
    assert tree.disagree[0] == 1.0
    assert np.all(tree.disagree >= -1e-15) and np.all(tree.disagree <= 1.0 + 1e-15)


def test_tree_disagreement_dominates_marginal_tv():
    # any coupling disagrees at y at least as often as the marginals differ
    joint = exact_joint(ising_rect(2, 3, beta=0.45, boundary="free"))
    tree = conditional_pair_tree(joint, 1, 0)
    band = coupling_rows_all(joint, 0)
    assert np.all(tree.disagree >= band.lower[0] - 1e-12)


def test_two_laws_tree_identical_inputs():
    joint = exact_joint(ising_segment(4, beta=0.6, boundary="plus"))
    tree = sequential_coupling_tree(joint, joint)
    assert np.allclose(tree.disagree, 0.0, atol=1e-14)


def test_sampler_matches_tree():
    joint = exact_joint(ising_rect(2, 3, beta=0.3, boundary="plus"))
    tree = conditional_pair_tree(joint, 1, 0)
    stats = conditional_pair_sample(joint, 1, 0, n_samples=40000, seed=9)
    for y in range(1, joint.n_sites):
        gap = abs(stats.disagree[y] - tree.disagree[y])
        assert gap <= 3.0 * max(stats.disagree_se[y], 1e-4) + 5e-4
    # leg means must track the exact conditional means
    ja = joint.conditional_future((1,))
    g0 = ja.function_table(single_spin(ja.sites[0]))
    assert abs(stats.leg_a_mean[1] - ja.expectation(g0)) < 0.02


def test_sampler_first_disagreement_histogram():
    joint = exact_joint(ising_segment(4, beta=0.5, boundary="free"))
    stats = conditional_pair_sample(joint, 1, 0, n_samples=5000, seed=3)
    assert stats.first_disagreement.sum() == 5000
    assert stats.first_disagreement.shape == (4,)


def test_tree_capacity_guard():
    joint = exact_joint(iid_spins(14))
    with pytest.raises(CapacityError):
        sequential_coupling_tree(joint, joint, cap=2 ** 20)


# ---------------------------------------------------------------------------
# monotone pair chains
# ---------------------------------------------------------------------------

def test_pair_glauber_estimates_marginal_tv():
    # the ordered pair's per-site disagreement equals the conditional
    # single-site total variation, which the enumerated band gives exactly
    model = ising_rect(3, 3, beta=0.3, boundary="plus")
    joint = exact_joint(model)
    band = coupling_rows_all(joint, 0)
    res = coupled_glauber_disagreement(model, n_samples=4000, sweeps=60, seed=4)
    assert res.monotone_violations == 0
    assert res.disagree[0] == 1.0
    for y in range(1, 9):
        gap = abs(res.disagree[y] - band.lower[0, y])
        assert gap <= 3.0 * res.disagree_se[y] + 0.02


def test_pair_glauber_legs_are_ordered_and_sensible():
    model = ising_rect(4, 4, beta=0.35, boundary="plus")
    res = coupled_glauber_disagreement(model, n_samples=1500, sweeps=40, seed=11)
    assert res.monotone_violations == 0
    assert np.all(res.upper_leg_mean >= res.lower_leg_mean - 1e-12)
    assert res.upper_leg_mean[0] == 1.0 and res.lower_leg_mean[0] == -1.0


# ---------------------------------------------------------------------------
# transport
# ---------------------------------------------------------------------------

def test_transport_matches_vertex_oracle():
    rng = np.random.default_rng(7)
    for shape in ((3, 4), (4, 4), (2, 8), (5, 3)):
        p = rng.random(shape[0]) + 0.05
        q = rng.random(shape[1]) + 0.05
        p, q = p / p.sum(), q / q.sum()
        cost = rng.random(shape) * 3.0
        plan = kr_optimal_coupling(p, q, cost)
        ref = transport_vertex_oracle(p, q, cost)
        assert abs(plan.cost - ref) <= 1e-9
        assert plan.dual_gap <= 1e-9
        assert plan.marginal_error <= 1e-9


def test_transport_point_masses():
    va = np.array([[1.0, -1.0, 1.0]])
    vb = np.array([[-1.0, -1.0, -1.0]])
    phi = np.array([0.7, 0.2, 1.1])
    cost = transport_cost(va, vb, phi)
    plan = kr_optimal_coupling(np.array([1.0]), np.array([1.0]), cost)
    assert abs(plan.cost - (2 * 0.7 + 0.0 + 2 * 1.1)) < 1e-12


def test_transport_product_measures_single_site_difference():
    # product laws differing only at one site: cost is 2 phi(s) |p - r|
    p_plus, r_plus, s = 0.7, 0.35, 1
    base = exact_joint(iid_spins(3, p_plus=p_plus))
    probs = np.array([1 - r_plus, r_plus])
    other = base.probs.copy()
    # rebuild the joint with the altered marginal at site s
    marg = [np.array([1 - p_plus, p_plus])] * 3
    marg[s] = probs
    grids = np.ones((2, 2, 2))
    for ax, m_ in enumerate(marg):
        shape = [1, 1, 1]
        shape[ax] = 2
        grids = grids * m_.reshape(shape)
    other = base.__class__(sites=base.sites, alphabet=base.alphabet,
                           probs=grids, log_z=0.0)
    phi = np.array([0.5, 1.25, 0.8])
    plan = kr_distance(base, other, phi)
    assert abs(plan.cost - 2.0 * phi[s] * abs(p_plus - r_plus)) < 1e-9


def test_transport_rejects_bad_inputs():
    with pytest.raises(ValueError):
        kr_optimal_coupling([0.5, 0.5], [1.0], np.ones((2, 2)))
    with pytest.raises(ValueError):
        kr_optimal_coupling([0.7, 0.5], [0.5, 0.5], np.ones((2, 2)))
    with pytest.raises(CapacityError):
        kr_optimal_coupling(np.full(100, 0.01), np.full(100, 0.01),
                            np.ones((100, 100)), lp_cap=50)


def test_weak_duality_for_premise_functions():
    jp = exact_joint(ising_rect(2, 2, beta=0.5, boundary="plus"))
    jq = exact_joint(ising_rect(2, 2, beta=0.5, boundary="minus"))
    g = magnetization(jp.sites)
    phi = np.full(4, 0.5)  # flipping one of 4 sites moves g by exactly 2/4
    plan = kr_distance(jp, jq, phi)
    gap = abs(jp.expectation(jp.function_table(g))
              - jq.expectation(jq.function_table(g)))
    assert gap <= plan.cost + 1e-9


def test_verify_transport_chain_two_by_two():
    jp = exact_joint(ising_rect(2, 2, beta=0.5, boundary="plus"))
    jq = exact_joint(ising_rect(2, 2, beta=0.5, boundary="minus"))
    fns = [magnetization(jp.sites), single_spin(jp.sites[0])]
    phi = np.full(4, 2.0)  # a spin flip moves single_spin by 2
    report = verify_transport_chain(jp, jq, fns, phi)
    assert report.all_ok
    assert report.plan_weighted_disagreement <= report.tree_weighted_disagreement + 1e-9
    assert len(report.rows) == 2
    assert all(r.premise_ok for r in report.rows)


def test_transport_chain_flags_premise_violation():
    jp = exact_joint(ising_rect(2, 2, beta=0.4, boundary="plus"))
    jq = exact_joint(ising_rect(2, 2, beta=0.4, boundary="minus"))
    g = single_spin(jp.sites[0])  # oscillation 2 at the first site
    phi = np.full(4, 0.1)
    report = verify_transport_chain(jp, jq, [g], phi)
    assert not report.rows[0].premise_ok


def test_joint_atoms_roundtrip():
    joint = exact_joint(ising_rect(2, 2, beta=0.3, boundary="plus"))
    vals, probs = joint_atoms(joint)
    assert vals.shape == (16, 4)
    assert abs(probs.sum() - 1.0) < 1e-12


def test_tail_profile_norm_bound():
    prof = TailProfile(ell0_tail=np.array([0.5, 0.25]), psi=np.array([0.1]),
                       ell0_rest=0.05, psi_rest=0.01)
    expect = 0.5 ** 0.5 + 0.25 ** 0.5 + 0.05 + 0.1 + 0.01
    assert abs(prof.norm_bound(1) - expect) < 1e-12
