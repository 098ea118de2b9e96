"""Couplings of conditional laws: exact rows, envelopes, samplers, transport.

Three layers, by volume:

* exact canonical coupling rows and their envelope / moment matrices, fully
  enumerated (vectorized over all pasts at once);
* the sequential quantile coupling of two laws on the same volume, either as
  an exact pair-state recursion (small volumes) or as a shared-uniform
  sampler (any volume whose prefix tables fit in memory);
* a synchronized monotone pair of heat-bath chains for nearest-neighbor
  ferromagnets at scales where nothing can be enumerated.

Transport problems are solved as explicit linear programs; the duality gap
reported by the solver is part of the result so callers can assert on it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.optimize import linprog

from spinconc.bounds import profile_norm_bound
from spinconc.errors import CapacityError, ConfigError, ConvergenceError
from spinconc.fields import LocalFunction, delta_vector
from spinconc.lattice import Site
from spinconc.models import ExactJoint, GibbsModel, grid_layout

_RESID_TOL = 1e-15


# ---------------------------------------------------------------------------
# single-coordinate maximal coupling
# ---------------------------------------------------------------------------

@dataclass
class DiscreteCoupling:
    """Joint table over symbol pairs with prescribed marginals."""

    p: np.ndarray
    q: np.ndarray
    table: np.ndarray
    disagreement: float

    def marginal_errors(self) -> tuple[float, float]:
        return (
            float(np.abs(self.table.sum(axis=1) - self.p).max()),
            float(np.abs(self.table.sum(axis=0) - self.q).max()),
        )


def maximal_coupling(p, q) -> DiscreteCoupling:
    """Min-overlap diagonal plus independent residuals.

    For a single coordinate the residuals have disjoint support, so the
    disagreement probability equals the total-variation distance exactly.
    """
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    mn = np.minimum(p, q)
    resid = 1.0 - float(mn.sum())
    if resid < 1e-14:
        table = np.diag(mn)
        return DiscreteCoupling(p, q, table, 0.0)
    r1 = p - mn
    r2 = q - mn
    table = np.diag(mn) + np.outer(r1, r2) / resid
    return DiscreteCoupling(p, q, table, resid)


# ---------------------------------------------------------------------------
# exact canonical coupling rows
# ---------------------------------------------------------------------------

@dataclass
class CouplingRowBand:
    """Row statistics at one row index, for every past prefix at once.

    Each array has shape (k^i, n_sites); column j < i is zero, column i is 1.
    `value` is the disagreement probability of the canonical coupling
    (shared minimum, independent residuals); `lower` is the total-variation
    distance of the coordinate-j marginals (no coupling does better);
    `upper` is the total-variation distance of the full conditional futures.
    All three take the worst case over symbol pairs at coordinate i.
    """

    i: int
    value: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    past_mass: np.ndarray


def _past_mass(joint: ExactJoint, i: int) -> np.ndarray:
    if i == 0:
        return np.array([1.0])
    return joint.prefix_marginal(i - 1).reshape(-1)


def coupling_rows_all(joint: ExactJoint, i: int) -> CouplingRowBand:
    m, k = joint.n_sites, joint.k
    n_past = k ** i
    value = np.zeros((n_past, m))
    lower = np.zeros((n_past, m))
    upper = np.zeros((n_past, m))
    value[:, i] = lower[:, i] = upper[:, i] = 1.0
    band = CouplingRowBand(i, value, lower, upper, _past_mass(joint, i))
    if i == m - 1:
        return band
    t = joint.probs.reshape(n_past, k, -1)
    n_future = t.shape[2]
    sym_mass = t.sum(axis=2)
    cond = t / np.where(sym_mass > 0.0, sym_mass, 1.0)[:, :, None]
    for a in range(k):
        for b in range(a + 1, k):
            ok = (sym_mass[:, a] > 0.0) & (sym_mass[:, b] > 0.0)
            if not ok.any():
                continue
            p1, p2 = cond[:, a, :], cond[:, b, :]
            mn = np.minimum(p1, p2)
            r1, r2 = p1 - mn, p2 - mn
            resid = r1.sum(axis=1)  # = TV of the full futures
            safe = np.where(resid > _RESID_TOL, resid, 1.0)
            for y in range(m - i - 1):
                j = i + 1 + y
                shape = (n_past, k ** y, k, n_future // k ** (y + 1))
                ax = (1, 3)
                m1 = p1.reshape(shape).sum(axis=ax)
                m2 = p2.reshape(shape).sum(axis=ax)
                tv_j = 0.5 * np.abs(m1 - m2).sum(axis=1)
                g1 = r1.reshape(shape).sum(axis=ax)
                g2 = r2.reshape(shape).sum(axis=ax)
                val = resid - (g1 * g2).sum(axis=1) / safe
                val = np.clip(np.where(resid > _RESID_TOL, val, 0.0), 0.0, None)
                value[:, j] = np.maximum(value[:, j], np.where(ok, val, 0.0))
                lower[:, j] = np.maximum(lower[:, j], np.where(ok, tv_j, 0.0))
                upper[:, j] = np.maximum(upper[:, j], np.where(ok, resid, 0.0))
    return band


def past_index(sigma, i: int, k: int) -> int:
    """Row-major flat index of the first i coordinates of sigma."""
    w = 0
    for t in range(i):
        w = w * k + int(sigma[t])
    return w


@dataclass
class CouplingMatrices:
    """Canonical coupling matrix of one configuration, with its two envelopes."""

    sigma: tuple[int, ...]
    value: np.ndarray
    lower: np.ndarray
    upper: np.ndarray


def coupling_matrix_exact(joint: ExactJoint, sigma) -> CouplingMatrices:
    sigma = tuple(int(c) for c in sigma)
    m, k = joint.n_sites, joint.k
    value = np.zeros((m, m))
    lower = np.zeros((m, m))
    upper = np.zeros((m, m))
    for i in range(m):
        band = coupling_rows_all(joint, i)
        w = past_index(sigma, i, k)
        value[i] = band.value[w]
        lower[i] = band.lower[w]
        upper[i] = band.upper[w]
    return CouplingMatrices(sigma, value, lower, upper)


@dataclass
class EnvelopeData:
    """Worst-case and probability-weighted power means of the coupling rows."""

    sites: tuple[Site, ...]
    envelope: np.ndarray
    lower_envelope: np.ndarray
    upper_envelope: np.ndarray
    moment: dict[int, np.ndarray] = field(default_factory=dict)


def envelope_and_moment_matrices(joint: ExactJoint,
                                 p_orders=(1, 2)) -> EnvelopeData:
    """Enumerate every positive-probability past at every row.

    The moment matrix of order p holds (sum_w P(w) value(w)^p)^(1/p); the
    envelope is the plain maximum over pasts.
    """
    m = joint.n_sites
    env = np.zeros((m, m))
    lo_env = np.zeros((m, m))
    hi_env = np.zeros((m, m))
    mom = {p: np.zeros((m, m)) for p in p_orders}
    for i in range(m):
        band = coupling_rows_all(joint, i)
        mask = band.past_mass > 0.0
        env[i] = band.value[mask].max(axis=0)
        lo_env[i] = band.lower[mask].max(axis=0)
        hi_env[i] = band.upper[mask].max(axis=0)
        for p in p_orders:
            mom[p][i] = (band.past_mass @ band.value ** p) ** (1.0 / p)
    return EnvelopeData(joint.sites, env, lo_env, hi_env, mom)


# ---------------------------------------------------------------------------
# sequential quantile coupling of two laws on the same volume
# ---------------------------------------------------------------------------

def _step_conditionals(joint: ExactJoint, k_coord: int) -> np.ndarray:
    """P(coordinate k = symbol 1 | each prefix), flat over k-bit prefixes."""
    num = joint.prefix_marginal(k_coord).reshape(-1)
    if k_coord == 0:
        return np.array([num[1]])
    den = joint.prefix_marginal(k_coord - 1).reshape(-1)
    return num[1::2] / np.where(den > 0.0, den, 1.0)


def _require_binary_pair(ja: ExactJoint, jb: ExactJoint):
    if ja.k != 2 or jb.k != 2:
        raise CapacityError("sequential couplings are implemented for binary alphabets")
    if ja.n_sites != jb.n_sites:
        raise ValueError("the two laws must live on the same number of sites")


@dataclass
class SequentialCouplingTree:
    """Exact per-site disagreement of the shared-uniform sequential coupling."""

    sites: tuple[Site, ...]
    disagree: np.ndarray
    leg_a: np.ndarray
    leg_b: np.ndarray

    def leg_errors(self, ja: ExactJoint, jb: ExactJoint) -> tuple[float, float]:
        return (
            float(np.abs(self.leg_a - ja.probs.reshape(-1)).max()),
            float(np.abs(self.leg_b - jb.probs.reshape(-1)).max()),
        )


def sequential_coupling_tree(ja: ExactJoint, jb: ExactJoint,
                             cap: int = 2 ** 22) -> SequentialCouplingTree:
    """Propagate the exact pair-state mass matrix through every coordinate.

    Both coordinates draw from their true conditional law given their own
    past, sharing one uniform per step (the quantile coupling), so each leg's
    marginal is exact by construction; the recursion just tracks the joint.
    """
    _require_binary_pair(ja, jb)
    m = ja.n_sites
    if 4 ** m > cap:
        raise CapacityError(f"pair-state recursion needs 4^{m} states")
    disagree = np.zeros(m)
    s = np.array([[1.0]])
    for k_coord in range(m):
        p1 = _step_conditionals(ja, k_coord)
        p2 = _step_conditionals(jb, k_coord)
        n = s.shape[0]
        a = p1[:, None]
        b = p2[None, :]
        disagree[k_coord] = float((s * np.abs(a - b)).sum())
        grown = np.empty((n, 2, n, 2))
        grown[:, 1, :, 1] = s * np.minimum(a, b)
        grown[:, 0, :, 0] = s * (1.0 - np.maximum(a, b))
        grown[:, 1, :, 0] = s * np.clip(a - b, 0.0, None)
        grown[:, 0, :, 1] = s * np.clip(b - a, 0.0, None)
        s = grown.reshape(2 * n, 2 * n)
    return SequentialCouplingTree(ja.sites, disagree, s.sum(axis=1), s.sum(axis=0))


@dataclass
class CoupledSampleStats:
    """Monte Carlo disagreement data from the shared-uniform coupling."""

    sites: tuple[Site, ...]
    n_samples: int
    disagree: np.ndarray
    disagree_se: np.ndarray
    first_disagreement: np.ndarray  # counts; index n_sites means "never"
    leg_a_mean: np.ndarray
    leg_b_mean: np.ndarray


def sequential_coupling_sample(ja: ExactJoint, jb: ExactJoint, n_samples: int,
                               seed: int) -> CoupledSampleStats:
    _require_binary_pair(ja, jb)
    m = ja.n_sites
    rng = np.random.default_rng(seed)
    cond_a = [_step_conditionals(ja, k) for k in range(m)]
    cond_b = [_step_conditionals(jb, k) for k in range(m)]
    ixa = np.zeros(n_samples, dtype=np.int64)
    ixb = np.zeros(n_samples, dtype=np.int64)
    vals = np.asarray(ja.alphabet.values)
    counts = np.zeros(m)
    first = np.full(n_samples, m, dtype=np.int64)
    mean_a = np.zeros(m)
    mean_b = np.zeros(m)
    for k_coord in range(m):
        u = rng.random(n_samples)
        bit_a = (u < cond_a[k_coord][ixa]).astype(np.int64)
        bit_b = (u < cond_b[k_coord][ixb]).astype(np.int64)
        neq = bit_a != bit_b
        counts[k_coord] = neq.sum()
        first[(first == m) & neq] = k_coord
        mean_a[k_coord] = vals[bit_a].mean()
        mean_b[k_coord] = vals[bit_b].mean()
        ixa = 2 * ixa + bit_a
        ixb = 2 * ixb + bit_b
    p_hat = counts / n_samples
    se = np.sqrt(p_hat * (1.0 - p_hat) / n_samples)
    hist = np.bincount(first, minlength=m + 1).astype(float)
    return CoupledSampleStats(ja.sites, n_samples, p_hat, se, hist, mean_a, mean_b)


def conditional_pair_tree(joint: ExactJoint, a: int, b: int,
                          cap: int = 2 ** 22) -> SequentialCouplingTree:
    """Couple the conditional laws given symbols a vs b at the first site."""
    tree = sequential_coupling_tree(joint.conditional_future((a,)),
                                    joint.conditional_future((b,)), cap=cap)
    disagree = np.concatenate([[1.0 if a != b else 0.0], tree.disagree])
    return SequentialCouplingTree(joint.sites, disagree, tree.leg_a, tree.leg_b)


def conditional_pair_sample(joint: ExactJoint, a: int, b: int, n_samples: int,
                            seed: int) -> CoupledSampleStats:
    stats = sequential_coupling_sample(joint.conditional_future((a,)),
                                       joint.conditional_future((b,)),
                                       n_samples, seed)
    pad = 1.0 if a != b else 0.0
    vals = np.asarray(joint.alphabet.values)
    # first_disagreement[y - 1] counts runs whose first differing coordinate
    # beyond the forced one is site y; the last bin counts "never"
    return CoupledSampleStats(
        sites=joint.sites,
        n_samples=n_samples,
        disagree=np.concatenate([[pad], stats.disagree]),
        disagree_se=np.concatenate([[0.0], stats.disagree_se]),
        first_disagreement=stats.first_disagreement,
        leg_a_mean=np.concatenate([[vals[a]], stats.leg_a_mean]),
        leg_b_mean=np.concatenate([[vals[b]], stats.leg_b_mean]),
    )


# ---------------------------------------------------------------------------
# synchronized monotone heat-bath pair for large ferromagnets
# ---------------------------------------------------------------------------

@dataclass
class PairGlauberResult:
    sites: tuple[Site, ...]
    frozen_index: int
    n_samples: int
    sweeps: int
    disagree: np.ndarray
    disagree_se: np.ndarray
    upper_leg_mean: np.ndarray
    lower_leg_mean: np.ndarray
    monotone_violations: int


def coupled_glauber_disagreement(model: GibbsModel, n_samples: int, sweeps: int,
                                 seed: int, frozen: int = 0) -> PairGlauberResult:
    """Two synchronized heat-bath chains whose frozen site is + vs -.

    Requires a ferromagnetic binary nearest-neighbor model on a full
    rectangle: the shared-uniform update then preserves the pointwise order
    of the two legs, so per-site disagreement is (upper - lower) / 2.  Block
    updates alternate over the two sublattices of the bipartite volume; each
    block draw is an exact product of single-site conditionals.
    """
    if model.alphabet.size != 2 or getattr(model, "nn_index", None) is None:
        raise ConfigError("pair chains need a binary nearest-neighbor model")
    if model.beta < 0:
        raise ConfigError("monotone coupling needs a ferromagnetic interaction")
    rows, cols, to_grid, parity = grid_layout(model)
    m = model.n_sites
    rng = np.random.default_rng(seed)
    bf_grid = np.zeros(rows * cols, dtype=np.float32)
    bf_grid[to_grid] = model.boundary_field
    bf_grid = bf_grid.reshape(rows, cols)
    frozen_cell = int(to_grid[frozen])

    block_masks = []
    par_grid = np.zeros(rows * cols, dtype=bool)
    par_grid[to_grid] = parity.astype(bool)
    par_grid = par_grid.reshape(rows, cols)
    for want in (False, True):
        mask = (par_grid == want)
        mask.reshape(-1)[frozen_cell] = False
        block_masks.append(mask)

    up = np.ones((n_samples, rows, cols), dtype=np.int8)
    dn = np.ones((n_samples, rows, cols), dtype=np.int8)
    dn.reshape(n_samples, -1)[:, frozen_cell] = -1
    beta = model.beta

    def neighbor_sum(spins):
        s = np.zeros((n_samples, rows, cols), dtype=np.float32)
        s[:, 1:, :] += spins[:, :-1, :]
        s[:, :-1, :] += spins[:, 1:, :]
        s[:, :, 1:] += spins[:, :, :-1]
        s[:, :, :-1] += spins[:, :, 1:]
        return s + bf_grid

    for _ in range(sweeps):
        for mask in block_masks:
            u = rng.random((n_samples, int(mask.sum())))
            for spins in (up, dn):
                s = neighbor_sum(spins)[:, mask]
                p_plus = 1.0 / (1.0 + np.exp(-2.0 * beta * s))
                spins[:, mask] = np.where(u < p_plus, 1, -1).astype(np.int8)

    up_flat = up.reshape(n_samples, -1)[:, to_grid]
    dn_flat = dn.reshape(n_samples, -1)[:, to_grid]
    violations = int((up_flat < dn_flat).sum())
    diff = (up_flat.astype(np.float64) - dn_flat.astype(np.float64)) / 2.0
    p_hat = diff.mean(axis=0)
    se = np.sqrt(np.clip(p_hat * (1.0 - p_hat), 0.0, None) / n_samples)
    return PairGlauberResult(model.sites, frozen, n_samples, sweeps, p_hat, se,
                             up_flat.mean(axis=0), dn_flat.mean(axis=0),
                             violations)


# ---------------------------------------------------------------------------
# transport problems
# ---------------------------------------------------------------------------

def transport_cost(values_p: np.ndarray, values_q: np.ndarray,
                   phi: np.ndarray) -> np.ndarray:
    """Cost matrix sum_x |v_x - v'_x| phi(x) between two atom lists."""
    values_p = np.asarray(values_p, dtype=float)
    values_q = np.asarray(values_q, dtype=float)
    phi = np.asarray(phi, dtype=float)
    return np.abs(values_p[:, None, :] - values_q[None, :, :]) @ phi


@dataclass
class TransportPlan:
    plan: np.ndarray
    cost: float
    dual_gap: float
    marginal_error: float


def kr_optimal_coupling(p, q, cost, lp_cap: int = 2 ** 22) -> TransportPlan:
    """Minimum-cost coupling of two finite distributions, as an explicit LP."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    cost = np.asarray(cost, dtype=float)
    n_p, n_q = cost.shape
    if p.shape != (n_p,) or q.shape != (n_q,):
        raise ValueError("marginal lengths must match the cost matrix")
    if abs(p.sum() - q.sum()) > 1e-9:
        raise ValueError("marginals must carry equal total mass")
    if n_p * n_q > lp_cap:
        raise CapacityError(f"transport LP needs {n_p * n_q} variables")
    a_eq = sparse.vstack([
        sparse.kron(sparse.eye(n_p), np.ones((1, n_q))),
        sparse.kron(np.ones((1, n_p)), sparse.eye(n_q)),
    ]).tocsr()
    b_eq = np.concatenate([p, q])
    res = linprog(cost.reshape(-1), A_eq=a_eq, b_eq=b_eq,
                  bounds=(0.0, None), method="highs")
    if res.status != 0:
        raise ConvergenceError(f"transport solver failed: {res.message}")
    plan = res.x.reshape(n_p, n_q)
    dual = float(b_eq @ res.eqlin.marginals)
    marg_err = max(float(np.abs(plan.sum(axis=1) - p).max()),
                   float(np.abs(plan.sum(axis=0) - q).max()))
    return TransportPlan(plan, float(res.fun), abs(float(res.fun) - dual),
                         marg_err)


def joint_atoms(joint: ExactJoint, tol: float = 0.0):
    """Positive-probability configurations as (value matrix, probabilities)."""
    flat = joint.probs.reshape(-1)
    keep = np.nonzero(flat > tol)[0]
    digits = np.array(np.unravel_index(keep, joint.probs.shape)).T
    vals = np.asarray(joint.alphabet.values)[digits]
    return vals, flat[keep]


def kr_distance(joint_p: ExactJoint, joint_q: ExactJoint, phi,
                lp_cap: int = 2 ** 22) -> TransportPlan:
    phi = np.asarray(phi, dtype=float)
    vp, pp = joint_atoms(joint_p)
    vq, qq = joint_atoms(joint_q)
    return kr_optimal_coupling(pp, qq, transport_cost(vp, vq, phi), lp_cap=lp_cap)


# ---------------------------------------------------------------------------
# the transport-against-disagreement consistency check
# ---------------------------------------------------------------------------

@dataclass
class TransportChainRow:
    function: str
    premise_ok: bool
    mean_gap: float
    disagreement_budget: float
    ok: bool


@dataclass
class TransportChainReport:
    rho: np.ndarray
    phi: np.ndarray
    transport_cost: float
    dual_gap: float
    plan_weighted_disagreement: float
    tree_weighted_disagreement: float
    transport_ok: bool
    rows: list[TransportChainRow]

    @property
    def all_ok(self) -> bool:
        return self.transport_ok and all(r.ok for r in self.rows)


def verify_transport_chain(joint_p: ExactJoint, joint_q: ExactJoint,
                   functions: list[LocalFunction], phi,
                   tol: float = 1e-9) -> TransportChainReport:
    """Check the mean-difference / disagreement chain on an exact pair.

    rho comes from the sequential coupling of the two laws, so every claim
    below is a theorem about these finite objects: premise functions change
    their mean by at most sum_x delta_x g rho(x); the optimal transport cost
    never exceeds the sequential coupling's cost; and the optimal plan's
    phi-weighted disagreement never exceeds the sequential coupling's.
    """
    phi = np.asarray(phi, dtype=float)
    tree = sequential_coupling_tree(joint_p, joint_q)
    rho = tree.disagree
    plan = kr_distance(joint_p, joint_q, phi)
    vp, _ = joint_atoms(joint_p)
    vq, _ = joint_atoms(joint_q)
    # per-site disagreement of the optimal plan, phi-weighted
    plan_dis = 0.0
    for x in range(len(phi)):
        ne = np.abs(vp[:, None, x] - vq[None, :, x]) > 1e-12
        plan_dis += phi[x] * float(plan.plan[ne].sum())
    tree_dis = float((phi * rho).sum())
    rows = []
    for g in functions:
        dv = delta_vector(g, joint_p.sites, joint_p.alphabet)
        premise_ok = bool(np.all(dv.per_site <= phi + tol))
        gp = joint_p.expectation(joint_p.function_table(g))
        gq = joint_q.expectation(joint_q.function_table(g))
        gap = abs(gp - gq)
        budget = float((dv.per_site * rho).sum())
        rows.append(TransportChainRow(g.name, premise_ok, gap, budget,
                               premise_ok and gap <= budget + tol))
    vals = np.asarray(joint_p.alphabet.values)
    span = float(vals.max() - vals.min())
    transport_ok = (plan.dual_gap <= tol
                    and plan_dis <= tree_dis + tol
                    and plan.cost <= span * tree_dis + tol)
    return TransportChainReport(rho, phi, plan.cost, plan.dual_gap, plan_dis,
                         tree_dis, transport_ok, rows)


# ---------------------------------------------------------------------------
# tail profiles feeding the norm bounds
# ---------------------------------------------------------------------------

@dataclass
class TailProfile:
    """Row-tail data: P(ell0 >= j) and the long-range profile psi(j).

    Truncation remainders are certified upper bounds on what the arrays drop;
    `norm_bound` adds them, so growing the arrays can only tighten the result.
    """

    ell0_tail: np.ndarray
    psi: np.ndarray
    ell0_rest: float = 0.0
    psi_rest: float = 0.0

    def norm_bound(self, p: int) -> float:
        return profile_norm_bound(p, self.ell0_tail, self.psi,
                                ell0_tail_rest=self.ell0_rest,
                                psi_rest=self.psi_rest)


def tail_from_samples(ell0_samples: np.ndarray, j_max: int) -> np.ndarray:
    """Empirical P(ell0 >= j) for j = 1..j_max."""
    ell0_samples = np.asarray(ell0_samples)
    return np.array([(ell0_samples >= j).mean() for j in range(1, j_max + 1)])
