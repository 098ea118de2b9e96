import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spinconc.bounds import martingale_decomposition
from spinconc.coupling import coupling_matrix_exact
from spinconc.errors import ConfigError
from spinconc.fields import delta_vector, magnetization, total_spin
from spinconc.models import exact_joint, iid_spins, ising_rect, ising_segment
from spinconc.verify import (
    HightempConfig,
    LowtempConfig,
    backbone_check,
    battery_functions,
    battery_models,
    binomial_ci99,
    config_digest,
    ell_statistic,
    empirical_tail,
    exact_battery,
    fit_decay_constant,
    hightemp_config_from_dict,
    hightemp_experiment,
    load_config,
    lowtemp_config_from_dict,
    lowtemp_experiment,
    tails_to_csv,
    write_artifacts,
)


# ---------------------------------------------------------------------------
# exact battery
# ---------------------------------------------------------------------------

def test_battery_models_distinct_and_enumerable():
    ms = battery_models()
    assert len(ms) == 11
    assert len({m.name for m in ms}) == 11
    for m in ms:
        assert m.alphabet.size ** m.n_sites <= 2 ** 10
        assert len(battery_functions(m)) == 4


def test_battery_all_exact_checks_pass():
    report = exact_battery()
    assert report.n_failures == 0
    assert report.n_unresolved == 0
    assert len(report.rows) >= 400
    # every row is an exact verdict, not an unchecked annotation
    assert all(r.verdict == "pass" for r in report.rows)
    assert all(r.observed_kind == "exact" for r in report.rows)
    names = {r.bound for r in report.rows}
    assert {"decomposition_telescoping", "backbone_rowsum",
            "tail_exponential_grid", "variance", "moment_p3"} <= names


def test_battery_thread_count_does_not_change_output():
    small = battery_models()[:3]
    serial = exact_battery(model_list=small, threads=1)
    pooled = exact_battery(model_list=small, threads=4)
    assert serial.to_json() == pooled.to_json()


def test_backbone_corruption_is_detected():
    # iid coins leave no slack: the coupling matrix is the identity, so
    # zeroing one diagonal entry must surface as a violation of exactly 1
    joint = exact_joint(iid_spins(6, 0.5))
    g = total_spin(joint.sites)
    clean, _ = backbone_check(joint, g)
    assert clean <= 1e-12
    bad, witness = backbone_check(joint, g, corrupt_entry=(3, 3))
    assert bad == pytest.approx(1.0, abs=1e-12)
    assert witness[0] == 3


def test_backbone_witness_reproduces_the_gap():
    model = ising_segment(4, 0.4, "free")
    joint = exact_joint(model)
    g = magnetization(joint.sites)
    worst, (i, conf) = backbone_check(joint, g)
    dec = martingale_decomposition(joint, g)
    dv = delta_vector(g, joint.sites, joint.alphabet)
    k, m = joint.k, joint.n_sites
    digits = [(conf // k ** (m - 1 - j)) % k for j in range(m)]
    row = coupling_matrix_exact(joint, digits).value[i]
    gap = abs(dec.increments[i].reshape(-1)[conf]) - float(row @ dv.per_site)
    assert gap == pytest.approx(worst, abs=1e-12)


# ---------------------------------------------------------------------------
# Monte Carlo tail machinery
# ---------------------------------------------------------------------------

def test_binomial_ci99_zero_count_floor():
    n = 1000
    lo, hi = binomial_ci99(0, n)
    assert lo == 0.0
    # Clopper-Pearson at k=0: n*hi -> -log(0.005) ~ 5.3
    assert 5.0 <= n * hi <= 5.5
    lo, hi = binomial_ci99(n, n)
    assert hi == 1.0 and 1.0 - lo <= 5.5 / n


def test_binomial_ci99_normal_regime():
    lo, hi = binomial_ci99(500, 1000)
    hw = 2.5758293035489004 * math.sqrt(0.25 / 1000)
    assert hi - 0.5 == pytest.approx(hw, rel=1e-12)
    assert 0.5 - lo == pytest.approx(hw, rel=1e-12)
    with pytest.raises(ValueError):
        binomial_ci99(5, 4)


def test_binomial_ci99_contains_point_estimate():
    for k, n in [(0, 50), (1, 50), (7, 200), (60, 100), (199, 200)]:
        lo, hi = binomial_ci99(k, n)
        assert lo <= k / n <= hi


def test_empirical_tail_matches_exact_binomial():
    # independent fair coins: |sum| tail has a closed form to compare against
    model = iid_spins(16, 0.5)
    g = total_spin(model.sites)
    ests = empirical_tail(model, g, [0.0, 0.5, 3.5, 7.5], 10000, 6, seed=42)
    assert ests[0].estimate == 1.0  # t=0 events are certain
    counts = np.array([math.comb(16, b) for b in range(17)], dtype=float)
    pmf = counts / counts.sum()
    spins = 2.0 * np.arange(17) - 16.0
    for est in ests[1:]:
        exact = float(pmf[np.abs(spins) >= est.t_effective].sum())
        assert abs(est.estimate - exact) <= 2.5 * est.half_width


def test_empirical_tail_interval_narrows_with_n():
    model = iid_spins(16, 0.5)
    g = total_spin(model.sites)
    small = empirical_tail(model, g, [0.5], 4000, 6, seed=3)[0]
    large = empirical_tail(model, g, [0.5], 16000, 6, seed=3)[0]
    assert 1.6 <= small.half_width / large.half_width <= 2.5


def test_empirical_tail_gibbs_mean_agrees_with_enumeration():
    model = ising_rect(3, 3, 0.5, "plus")
    joint = exact_joint(model)
    g = magnetization(model.sites)
    table = joint.function_table(g)
    mean = joint.expectation(table)
    ests = empirical_tail(model, g, [0.05], 30000, 30, seed=8)
    # P(|g - Eg| >= t) from enumeration, at the effective threshold
    exact = joint.exact_tail(table, ests[0].t_effective)
    assert abs(ests[0].estimate - exact) <= 2.5 * ests[0].half_width


def test_empirical_tail_rejects_tiny_runs():
    model = iid_spins(4, 0.5)
    with pytest.raises(ConfigError):
        empirical_tail(model, total_spin(model.sites), [1.0], 500, 5, seed=1)


def test_empirical_tail_is_deterministic():
    model = iid_spins(8, 0.7)
    g = total_spin(model.sites)
    a = empirical_tail(model, g, [1.0, 2.0], 2000, 5, seed=77)
    b = empirical_tail(model, g, [1.0, 2.0], 2000, 5, seed=77)
    assert a == b
    assert tails_to_csv(a) == tails_to_csv(b)


# ---------------------------------------------------------------------------
# high-temperature experiment
# ---------------------------------------------------------------------------

def test_fit_decay_constant_independent_limit():
    c, used = fit_decay_constant(0.0, "free", 3, 3)
    assert math.isinf(c) and used == 0


def test_fit_decay_constant_bounds_the_envelope():
    from spinconc.coupling import envelope_and_moment_matrices
    from spinconc.lattice import l1_distance

    c, used = fit_decay_constant(0.3, "plus", 3, 3)
    assert used > 0 and 0.0 < c < math.inf
    model = ising_rect(3, 3, 0.3, "plus")
    env = envelope_and_moment_matrices(exact_joint(model), p_orders=(2,)).envelope
    sites = model.sites
    for i in range(len(sites)):
        for j in range(len(sites)):
            if i == j or env[i, j] <= 1e-14:
                continue
            d = l1_distance(sites[i], sites[j])
            assert env[i, j] <= math.exp(-c * d) * (1 + 1e-12)


def test_hightemp_small_volume_run():
    rep = hightemp_experiment(HightempConfig(seed=7, rows=6, cols=6,
                                             n_samples=4000, sweeps=20))
    assert rep.meta["experiment"] == "high_temperature_tail"
    assert rep.n_failures == 0
    p_row = rep.rows[0]
    assert p_row.bound == "percolation_condition"
    assert p_row.verdict == "pass"
    assert p_row.observed < 0.5927
    tail_rows = [r for r in rep.rows if r.bound == "tail_exponential"]
    assert len(tail_rows) == 5
    for r in tail_rows:
        if r.params["resolvable"]:
            assert r.verdict == "pass"
        else:
            assert r.verdict == "unresolved"
            assert r.theoretical < rep.meta["mc_floor"]
            assert "floor" in r.note


def test_hightemp_refuses_when_condition_fails():
    rep = hightemp_experiment(HightempConfig(seed=5, rows=4, cols=4, beta=1.0,
                                             n_samples=1000, sweeps=5))
    p_row = rep.rows[0]
    assert p_row.verdict == "fail"
    assert rep.n_failures == 1  # the condition itself, nothing else claimed
    tail_rows = [r for r in rep.rows if r.bound == "tail_exponential"]
    assert tail_rows and all(r.verdict == "info" for r in tail_rows)
    assert all("condition failed" in r.note for r in tail_rows)


# ---------------------------------------------------------------------------
# path-magnetization statistic
# ---------------------------------------------------------------------------

def _ell_oracle(spins: np.ndarray, theta: float) -> int:
    """Longest staircase path with mean below theta, by explicit search."""
    rows, cols = spins.shape
    best = 0
    for steps in (((1, 0), (0, 1)), ((1, 0), (0, -1))):
        stack = [((r, c), 1, float(spins[r, c]))
                 for r in range(rows) for c in range(cols)]
        while stack:
            (r, c), length, tot = stack.pop()
            if tot / length < theta:
                best = max(best, length)
            for dr, dc in steps:
                nr, nc = r + dr, c + dc
                if 0 <= nr < rows and 0 <= nc < cols:
                    stack.append(((nr, nc), length + 1, tot + float(spins[nr, nc])))
    return best + 1 if best else 0


def test_ell_statistic_matches_search_oracle():
    rng = np.random.default_rng(2024)
    for _ in range(150):
        rows = int(rng.integers(1, 4))
        cols = int(rng.integers(1, 4))
        spins = rng.choice([-1.0, 1.0], size=(rows, cols), p=[0.3, 0.7])
        theta = float(rng.choice([0.5, 0.8, 0.9]))
        assert ell_statistic(spins, theta) == _ell_oracle(spins, theta)
    for _ in range(40):
        spins = rng.choice([-1.0, 1.0], size=(4, 4), p=[0.2, 0.8])
        assert ell_statistic(spins, 0.9) == _ell_oracle(spins, 0.9)


def test_ell_statistic_known_values():
    plus = np.ones((16, 16))
    assert ell_statistic(plus, 0.9) == 0
    one = plus.copy()
    one[8, 8] = -1.0
    # one minus: longest path with mean < 0.9 has 19 sites
    assert ell_statistic(one, 0.9) == 20
    two = plus.copy()
    two[3, 3] = -1.0
    two[5, 7] = -1.0
    # two comparable minuses saturate the box diagonal
    assert ell_statistic(two, 0.9) == 32
    assert ell_statistic(one, 1.0) == 32  # any minus poisons every path
    with pytest.raises(ConfigError):
        ell_statistic(plus, 0.0)
    with pytest.raises(ConfigError):
        ell_statistic(plus, 1.5)


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 4), st.integers(1, 4), st.integers(0, 2 ** 16 - 1),
       st.sampled_from([0.5, 0.9]))
def test_ell_statistic_invariants(rows, cols, mask, theta):
    bits = [(mask >> i) & 1 for i in range(rows * cols)]
    spins = (2.0 * np.array(bits, dtype=float) - 1.0).reshape(rows, cols)
    ell = ell_statistic(spins, theta)
    l_box = rows + cols - 1
    assert 0 <= ell <= l_box + 1
    assert (ell == 0) == bool((spins > 0).all())
    # raising theta can only lengthen the worst path
    assert ell <= ell_statistic(spins, min(theta + 0.09, 1.0))


# ---------------------------------------------------------------------------
# low-temperature experiment
# ---------------------------------------------------------------------------

@pytest.fixture(scope="module")
def lowtemp_small():
    cfg = LowtempConfig(seed=11, rows=8, cols=8, n_pair=4000, n_tail=6000,
                        n_ell=2000, sweeps=30)
    return lowtemp_experiment(cfg)


def test_lowtemp_no_refutations(lowtemp_small):
    profile, rep = lowtemp_small
    assert rep.meta["experiment"] == "low_temperature_tail"
    assert rep.n_failures == 0
    rank = next(r for r in rep.rows if r.bound == "decay_rank_test")
    assert rank.verdict == "pass"        # disagreement decays with distance
    assert rank.observed <= 0.01
    held = [r for r in rep.rows if r.bound == "tail_stretched_heldout"]
    assert held
    for r in held:
        assert r.verdict in ("pass", "unresolved")
        if r.params["resolvable"]:
            assert r.verdict == "pass"


def test_lowtemp_profile_shape(lowtemp_small):
    profile, rep = lowtemp_small
    assert len(profile.ell0_tail) == 16
    tail = np.asarray(profile.ell0_tail)
    assert ((0.0 <= tail) & (tail <= 1.0)).all()
    assert (np.diff(tail) <= 1e-12).all()  # survival function
    assert (np.asarray(profile.psi) >= 0.0).all()
    # profile norm assemblies are reported for each p
    for p in (1, 2, 3):
        assert any(r.bound == f"profile_norm_p{p}" for r in rep.rows)
        assert any(r.bound == f"profile_moment_p{p}" for r in rep.rows)


def test_lowtemp_fit_rows_are_annotated(lowtemp_small):
    _, rep = lowtemp_small
    for name in ("psi_exponential_fit", "ell_stretched_fit", "stretched_fit"):
        row = next(r for r in rep.rows if r.bound == name)
        assert row.verdict == "info"
        assert row.note


def test_lowtemp_rejects_tiny_splits():
    with pytest.raises(ConfigError):
        lowtemp_experiment(LowtempConfig(seed=1, rows=4, cols=4, n_pair=1000,
                                         n_tail=1500, n_ell=1000, sweeps=5))


# ---------------------------------------------------------------------------
# config plumbing
# ---------------------------------------------------------------------------

def test_config_from_dict_defaults_and_validation():
    cfg = hightemp_config_from_dict({"seed": 3})
    assert (cfg.rows, cfg.cols, cfg.beta) == (8, 8, 0.1)
    cfg = lowtemp_config_from_dict({"seed": 3, "rows": 4})
    assert cfg.rows == 4 and cfg.cols == 16
    with pytest.raises(ConfigError):
        hightemp_config_from_dict({"seed": 3, "bogus": 1})
    with pytest.raises(ConfigError):
        lowtemp_config_from_dict({})  # seed is required


def test_load_config_errors(tmp_path):
    with pytest.raises(ConfigError):
        load_config(str(tmp_path / "absent.json"))
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ConfigError):
        load_config(str(bad))
    good = tmp_path / "good.json"
    good.write_text(json.dumps({"seed": 9}))
    assert load_config(str(good)) == {"seed": 9}


def test_config_digest_is_canonical():
    a = config_digest({"a": 1, "b": [2, 3]}, 5)
    b = config_digest({"b": [2, 3], "a": 1}, 5)
    assert a == b and len(a) == 8
    assert config_digest({"a": 1, "b": [2, 3]}, 6) != a


def test_write_artifacts_round_trip(tmp_path):
    report = exact_battery(model_list=battery_models()[:1], threads=1)
    paths = write_artifacts(str(tmp_path), "run", report=report,
                            tables={"extra.csv": "x,y\n1,2\n"})
    assert len(paths) == 3
    from spinconc.bounds import report_from_json
    with open(paths[0], "r", encoding="utf-8") as fh:
        back = report_from_json(fh.read())
    assert back.to_json() == report.to_json()
    with open(paths[1], "r", encoding="utf-8") as fh:
        assert fh.readline().startswith("model,")
