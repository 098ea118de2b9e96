"""Martingale decomposition, matrix norms, Orlicz machinery, and tail bounds.

The bound evaluators are pure formulas; everything they consume (envelope and
moment matrices, oscillation vectors, Luxembourg norms) is computed elsewhere
and passed in, so each piece can be tested in isolation.  Non-constructive
constants enter as explicit parameters; fitting helpers in `verify` extract
the smallest constants an instance family tolerates.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field

import numpy as np

from spinconc.errors import ConvergenceError
from spinconc.fields import LocalFunction
from spinconc.models import ExactJoint

# ---------------------------------------------------------------------------
# martingale decomposition along the enumeration order
# ---------------------------------------------------------------------------

@dataclass
class MartingaleDecomposition:
    """Increments V_i = E[g|first i+1 coordinates] - E[g|first i coordinates].

    Arrays are broadcast to the joint's shape; entries over zero-probability
    prefixes are set to zero and excluded from all identities.
    """

    joint: ExactJoint
    g: LocalFunction
    g_table: np.ndarray
    mean: float
    increments: list[np.ndarray]
    support: np.ndarray

    def telescoping_error(self) -> float:
        """max |sum_i V_i - (g - Eg)| over the support."""
        total = sum(self.increments)
        err = np.abs(total - (self.g_table - self.mean))
        return float(err[self.support].max())

    def conditional_mean_error(self) -> float:
        """max over i and positive-mass prefixes of |E[V_i | F_{i-1}]|."""
        p = self.joint.probs
        worst = 0.0
        for i, v in enumerate(self.increments):
            axes = tuple(range(i, self.joint.n_sites))
            num = (p * v).sum(axis=axes)
            den = p.sum(axis=axes)
            mask = den > 0
            if np.any(mask):
                worst = max(worst, float(np.abs(np.atleast_1d(num)[np.atleast_1d(mask)]
                                                / np.atleast_1d(den)[np.atleast_1d(mask)]).max()))
        return worst

    def orthogonality_error(self) -> float:
        """max over pairs i < j of |E[V_i V_j]|."""
        p = self.joint.probs
        worst = 0.0
        for i in range(len(self.increments)):
            for j in range(i + 1, len(self.increments)):
                worst = max(worst, abs(float((p * self.increments[i] * self.increments[j]).sum())))
        return worst

    def increment_of(self, i: int, config: tuple[int, ...]) -> float:
        return float(self.increments[i][config])


def martingale_decomposition(joint: ExactJoint, g: LocalFunction) -> MartingaleDecomposition:
    p = joint.probs
    m = joint.n_sites
    g_table = joint.function_table(g)
    mean = joint.expectation(g_table)
    support = p > 0
    prev = np.full(p.shape, mean)
    increments = []
    for i in range(m):
        axes = tuple(range(i + 1, m))
        num = (p * g_table).sum(axis=axes, keepdims=True)
        den = p.sum(axis=axes, keepdims=True)
        with np.errstate(invalid="ignore", divide="ignore"):
            cond = np.where(den > 0, num / np.where(den > 0, den, 1.0), 0.0)
        cond = np.broadcast_to(cond, p.shape)
        v = np.where(support, cond - prev, 0.0)
        increments.append(v)
        prev = np.where(den > 0, cond, prev)
    return MartingaleDecomposition(joint, g, g_table, mean, increments, support)


# ---------------------------------------------------------------------------
# operator norm by power iteration
# ---------------------------------------------------------------------------

def operator_norm_l2(matrix: np.ndarray, rtol: float = 1e-10,
                     max_iter: int = 20000) -> float:
    """Largest singular value via power iteration on M^T M.

    Deterministic start vector; the final estimate is ||Mv|| / ||v||, which is
    exact (bitwise 1.0) for the identity matrix.
    """
    a = np.asarray(matrix, dtype=float)
    if a.ndim != 2:
        raise ValueError("operator_norm_l2 expects a matrix")
    if a.size == 0 or not np.any(a):
        return 0.0
    n = a.shape[1]
    v = np.full(n, 1.0 / math.sqrt(n))
    sigma_old = -1.0
    for _ in range(max_iter):
        w = a.T @ (a @ v)
        nw = float(np.linalg.norm(w))
        if nw == 0.0:
            # v landed in the kernel; restart from a shifted deterministic vector
            v = np.arange(1.0, n + 1.0)
            v /= np.linalg.norm(v)
            continue
        v = w / nw
        av = a @ v
        sigma = float(np.linalg.norm(av) / np.linalg.norm(v))
        if abs(sigma - sigma_old) <= rtol * max(abs(sigma), 1e-300):
            return sigma
        sigma_old = sigma
    raise ConvergenceError(
        f"power iteration did not stabilize within {max_iter} iterations "
        f"(last estimate {sigma_old})"
    )


# ---------------------------------------------------------------------------
# zeta via Euler-Maclaurin
# ---------------------------------------------------------------------------

_BERNOULLI = ((1 / 6, 2), (-1 / 30, 4), (1 / 42, 6), (-1 / 30, 8),
              (5 / 66, 10), (-691 / 2730, 12), (7 / 6, 14), (-3617 / 510, 16))


def riemann_zeta(s: float, n_direct: int = 50) -> float:
    """zeta(s) for real s > 1: direct sum plus Euler-Maclaurin tail.

    With 50 direct terms and Bernoulli corrections through order 16 the
    absolute error is far below 1e-12 for every s > 1.
    """
    if s <= 1.0:
        raise ValueError("zeta(s) diverges for s <= 1")
    n = n_direct
    acc = sum(k ** (-s) for k in range(1, n))
    acc += n ** (1.0 - s) / (s - 1.0) + 0.5 * n ** (-s)
    rising = s
    for b, two_j in _BERNOULLI:
        acc += b / math.factorial(two_j) * rising * n ** (-(s + two_j - 1.0))
        rising *= (s + two_j - 1.0) * (s + two_j)
    return acc


# ---------------------------------------------------------------------------
# Orlicz functions and the Luxembourg norm
# ---------------------------------------------------------------------------

_EXP_CAP = 700.0  # exp argument cap; beyond this the moment test fails anyway


@dataclass(frozen=True)
class OrliczSpec:
    """Young function x -> exp((|x| + h)^rho) - exp(h^rho).

    The shift h = ((1-rho)/rho)^(1/rho) is exactly the smallest one making
    the function convex on [0, inf) for rho < 1; it vanishes at rho = 1.
    Note (h)^rho = (1-rho)/rho, which keeps the constant term tame.
    """

    rho: float

    def __post_init__(self):
        if not 0.0 < self.rho:
            raise ValueError("rho must be positive")

    @property
    def shift(self) -> float:
        if self.rho >= 1.0:
            return 0.0
        return ((1.0 - self.rho) / self.rho) ** (1.0 / self.rho)

    def phi(self, x) -> np.ndarray:
        x = np.abs(np.asarray(x, dtype=float))
        h = self.shift
        expo = np.minimum((x + h) ** self.rho, _EXP_CAP)
        return np.exp(expo) - math.exp(min(h ** self.rho, _EXP_CAP))


def luxembourg_norm(values, probs=None, rho: float = 1.0,
                    rtol: float = 1e-9, max_expand: int = 600) -> float:
    """Smallest lambda with E[phi(|Z|/lambda)] <= 1, by bracketed bisection.

    `values`/`probs` describe a finite distribution; omit `probs` for equally
    weighted samples.  Returns the feasible (upper) end of the bracket, so the
    moment condition holds at the result.
    """
    z = np.abs(np.asarray(values, dtype=float))
    if probs is None:
        probs = np.full(z.shape, 1.0 / z.size)
    else:
        probs = np.asarray(probs, dtype=float)
        probs = probs / probs.sum()
    if z[probs > 0].size == 0 or float(z[probs > 0].max()) == 0.0:
        return 0.0
    spec = OrliczSpec(rho)

    def moment(lam: float) -> float:
        return float((probs * spec.phi(z / lam)).sum())

    hi = float(z[probs > 0].max())
    expansions = 0
    while moment(hi) > 1.0:
        hi *= 2.0
        expansions += 1
        if expansions > max_expand:
            raise ConvergenceError("no finite Luxembourg norm below the expansion cap")
    lo = hi / 2.0
    while moment(lo) <= 1.0:
        lo /= 2.0
        if lo < 1e-300:
            return hi if moment(hi) <= 1.0 else 0.0
    while hi - lo > rtol * hi:
        mid = 0.5 * (lo + hi)
        if moment(mid) <= 1.0:
            hi = mid
        else:
            lo = mid
    return hi


# ---------------------------------------------------------------------------
# tail and moment bound formulas
# ---------------------------------------------------------------------------

def exponential_bound(t: float, envelope_norm: float, delta_l2: float) -> float:
    """Two-sided exponential tail bound 2 exp(-2 t^2 / (||D||^2 ||dg||^2))."""
    denom = (envelope_norm ** 2) * (delta_l2 ** 2)
    if denom == 0.0:
        # degenerate instance: a constant function never deviates
        return 2.0 if t <= 0.0 else 0.0
    return 2.0 * math.exp(-2.0 * t * t / denom)


def variance_bound(moment2_norm: float, delta_l2: float) -> float:
    """Upper bound on Var(g)."""
    return (moment2_norm ** 2) * (delta_l2 ** 2)


def moment_bound(p: int, moment_norm_2p: float, delta_l2: float) -> float:
    """Upper bound on E[(g - Eg)^(2p)], with the (20 p)^(2p) prefactor.

    The prefactor is kept in its conservative form for every dimension.
    """
    if p < 1:
        raise ValueError("p must be a positive integer")
    return (20.0 * p) ** (2 * p) * moment_norm_2p ** (2 * p) * delta_l2 ** (2 * p)


def profile_norm_bound(p: int, ell0_tail, psi, ell0_tail_rest: float = 0.0,
                     psi_rest: float = 0.0) -> float:
    """Norm bound sum_j P(ell0 >= j)^(1/2p) + ||psi||_1 for tail-profiled rows.

    `ell0_tail[j-1]` holds P(ell0 >= j); the `_rest` arguments carry certified
    bounds on the truncated remainders (they are added, never dropped).
    """
    if p < 1:
        raise ValueError("p must be a positive integer")
    if ell0_tail_rest < 0 or psi_rest < 0:
        raise ValueError("remainder bounds must be nonnegative")
    tail = np.asarray(ell0_tail, dtype=float)
    psi = np.asarray(psi, dtype=float)
    if np.any(tail < 0) or np.any(psi < 0):
        raise ValueError("tail and psi entries must be nonnegative")
    return float((tail ** (1.0 / (2 * p))).sum() + ell0_tail_rest
                 + psi.sum() + psi_rest)


def profile_moment_bound(p: int, eps: float, ell0_moment: float, psi_l1: float,
                         delta_l2: float) -> float:
    """Moment bound with the zeta-interpolated tail profile.

    `ell0_moment` is E[ell0^(2p + eps)] in one dimension and
    E[ell0^(2pd + eps)] in d dimensions; the caller supplies whichever the
    geometry requires.
    """
    if p < 1:
        raise ValueError("p must be a positive integer")
    if eps <= 0:
        raise ValueError("eps must be positive, otherwise the zeta factor diverges")
    if ell0_moment < 0 or psi_l1 < 0:
        raise ValueError("moment and psi inputs must be nonnegative")
    z = riemann_zeta(1.0 + eps / (2 * p - 1))
    bracket = z ** ((2 * p - 1.0) / (2 * p)) * ell0_moment ** (1.0 / (2 * p)) + psi_l1
    return (20.0 * p) ** (2 * p) * bracket ** (2 * p) * delta_l2 ** (2 * p)


def polynomial_bound(t: float, p: int, c_p: float, delta_l2: float) -> float:
    """Tail bound C_p ||dg||^(2p) / t^(2p); C_p is a supplied constant."""
    if t <= 0:
        raise ValueError("t must be positive")
    return c_p * (delta_l2 / t) ** (2 * p)


def stretched_bound(t: float, rho: float, c: float, delta_l2: float) -> float:
    """Tail bound 4 exp(-c t^rho / ||dg||^rho); c is a supplied constant."""
    if delta_l2 <= 0:
        return 0.0 if t > 0 else 4.0
    return 4.0 * math.exp(-c * (t / delta_l2) ** rho)


def orlicz_chebyshev_bound(t: float, rho: float, lux_norm: float) -> float:
    """Tail bound 2 / phi(t / ||g - Eg||_phi) from the Orlicz moment condition."""
    if t <= 0:
        raise ValueError("t must be positive")
    if lux_norm == 0.0:
        return 0.0
    spec = OrliczSpec(rho)
    denom = float(spec.phi(t / lux_norm))
    if denom == 0.0:
        return float("inf")
    return min(2.0 / denom, float("inf"))


# ---------------------------------------------------------------------------
# report container
# ---------------------------------------------------------------------------

_CSV_COLUMNS = ("model", "function", "bound", "params", "theoretical",
                "observed", "observed_lo", "observed_hi", "observed_kind",
                "verdict", "slack", "note")


@dataclass
class BoundRow:
    model: str
    function: str
    bound: str
    params: dict
    theoretical: float
    observed: float | None = None
    observed_lo: float | None = None
    observed_hi: float | None = None
    observed_kind: str = "exact"
    verdict: str = "info"
    slack: float | None = None
    note: str = ""

    def as_record(self) -> dict:
        rec = {}
        for col in _CSV_COLUMNS:
            val = getattr(self, col)
            if col == "params":
                val = json.dumps(val, sort_keys=True)
            rec[col] = val
        return rec


def classify_tail_row(row: BoundRow, tol: float = 1e-9) -> BoundRow:
    """Assign pass/fail/unresolved from the observed interval.

    Exact observations compare directly.  Monte Carlo observations pass when
    even the upper confidence end sits below the bound, fail when the lower
    end exceeds it (the sample statistically refutes the bound), and stay
    unresolved when the sample cannot distinguish the two.
    """
    theo = row.theoretical
    if row.observed_kind == "exact":
        ok = row.observed <= theo + tol
        row.verdict = "pass" if ok else "fail"
        row.slack = theo - row.observed
        return row
    lo = row.observed_lo if row.observed_lo is not None else row.observed
    hi = row.observed_hi if row.observed_hi is not None else row.observed
    if hi <= theo + tol:
        row.verdict = "pass"
    elif lo > theo + tol:
        row.verdict = "fail"
    else:
        row.verdict = "unresolved"
    row.slack = theo - hi
    return row


@dataclass
class BoundReport:
    meta: dict
    rows: list[BoundRow] = field(default_factory=list)

    def add(self, row: BoundRow) -> BoundRow:
        self.rows.append(row)
        return row

    @property
    def n_failures(self) -> int:
        return sum(1 for r in self.rows if r.verdict == "fail")

    @property
    def n_unresolved(self) -> int:
        return sum(1 for r in self.rows if r.verdict == "unresolved")

    def to_json(self) -> str:
        payload = {
            "meta": self.meta,
            "rows": [r.as_record() for r in self.rows],
        }
        return json.dumps(payload, sort_keys=True, separators=(",", ":"),
                          default=_json_float)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=_CSV_COLUMNS, lineterminator="\n")
        writer.writeheader()
        for r in self.rows:
            rec = r.as_record()
            writer.writerow({k: _csv_cell(v) for k, v in rec.items()})
        return buf.getvalue()

    def summary(self) -> str:
        total = len(self.rows)
        passes = sum(1 for r in self.rows if r.verdict == "pass")
        info = sum(1 for r in self.rows if r.verdict == "info")
        return (f"{total} rows: {passes} pass, {self.n_failures} fail, "
                f"{self.n_unresolved} unresolved, {info} informational")


def _json_float(x):
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    raise TypeError(f"not JSON serializable: {type(x)}")


def _csv_cell(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return v


def report_from_json(text: str) -> BoundReport:
    payload = json.loads(text)
    rows = []
    for rec in payload["rows"]:
        rec = dict(rec)
        rec["params"] = json.loads(rec["params"])
        rows.append(BoundRow(**rec))
    return BoundReport(meta=payload["meta"], rows=rows)
