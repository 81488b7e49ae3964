"""Calibration of the filter density to observed prices.

The coefficients psi of the density in the B-spline basis minimize the
curvature energy psi' Xi psi, Xi_ij = (e_i'', e_j''), subject to unit mass,
exact repricing of the input instruments and psi >= 0.  Nonnegative
coefficients give a nonnegative density because the basis functions are
nonnegative.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import linprog

from .fullinfo import ClaimSpec, FullInfoGrid, solve_fullinfo
from .galerkin import Basis, FilterState, GalerkinMatrices
from .model import DividendLaw, ModelParams


class CalibrationError(ValueError):
    """Inconsistent calibration input."""


@dataclass(frozen=True, eq=False)
class CalibrationProblem:
    """min psi' Xi psi  s.t.  A_eq psi = b_eq,  psi >= 0.

    Row 0 of A_eq is the mass vector (e_i, 1); row j >= 1 is the load
    vector of instrument j (a price row (e_i, h_j) or a CDS row).
    """

    Xi: np.ndarray
    A_eq: np.ndarray
    b_eq: np.ndarray
    labels: tuple

    @property
    def m(self) -> int:
        return self.Xi.shape[0]

    @property
    def ell(self) -> int:
        return self.A_eq.shape[0] - 1


def _basis_data(basis: Basis):
    x, w = basis.nodes, basis.weights
    E = basis.design(x)
    D2 = basis.design(x, 2)
    return E, D2.T @ (w[:, None] * D2)


def claim_row(grid: FullInfoGrid, basis: Basis, t: float) -> np.ndarray:
    """Load vector (e_i, h(t, .)) of a claim at time t."""
    E, _ = _basis_data(basis)
    h = np.interp(basis.nodes, grid.v_nodes, grid.at(t))
    return E.T @ (basis.weights * h)


def _check_rank(A: np.ndarray, labels: Sequence[str]) -> None:
    if A.shape[0] > A.shape[1]:
        raise CalibrationError(f"{A.shape[0] - 1} instruments exceed what {A.shape[1]} basis functions can fit")
    R = A / np.linalg.norm(A, axis=1, keepdims=True)
    for j in range(1, R.shape[0] + 1):
        s = np.linalg.svd(R[:j], compute_uv=False)
        if s[-1] < 1e-10 * s[0]:
            raise CalibrationError(f"instrument {labels[j - 1]!r} is linearly dependent on the earlier constraints")


def problem_from_rows(rows: Sequence[np.ndarray], targets: Sequence[float], labels: Sequence[str],
                      basis: Basis) -> CalibrationProblem:
    """Problem with the mass row followed by the given instrument rows."""
    E, Xi = _basis_data(basis)
    mass = E.T @ basis.weights
    A = np.vstack([mass, *rows]) if len(rows) else mass[None, :]
    b = np.concatenate([[1.0], np.asarray(targets, dtype=float)])
    labs = ("mass", *labels)
    if not np.all(np.isfinite(b)) or not np.all(np.isfinite(A)):
        raise CalibrationError("non-finite price or constraint")
    _check_rank(A, labs)
    return CalibrationProblem(Xi, A, b, labs)


def assemble_calibration(prices: Sequence[float], grids: Sequence[FullInfoGrid], basis: Basis,
                         t: float) -> CalibrationProblem:
    if len(prices) != len(grids):
        raise ValueError("one price per grid is required")
    rows = [claim_row(g, basis, t) for g in grids]
    labels = [g.claim.label for g in grids]
    return problem_from_rows(rows, prices, labels, basis)


# ---------------------------------------------------------------------------
# Quadratic program
# ---------------------------------------------------------------------------

@dataclass(eq=False)
class QPResult:
    psi: np.ndarray
    multipliers: np.ndarray  # for the equality rows
    bound_multipliers: np.ndarray  # z >= 0, zero off the active set
    active: np.ndarray  # boolean mask of psi_i held at 0
    objective: float
    kkt_residual: float
    primal_residual: float
    complementarity: float
    iterations: int


def _null_space(AF: np.ndarray):
    """Orthonormal basis of the null space of AF and the numerical rank."""
    if AF.shape[1] == 0:
        return np.zeros((0, 0)), 0
    _, sv, Vt = np.linalg.svd(AF, full_matrices=True)
    r = int(np.sum(sv > 1e-13 * max(sv[0], 1e-300)))
    return Vt[r:].T, r


def _eqp_step(G, A, F, psi):
    """Minimizer step p of the objective on {A p = 0, p_i = 0 off F}."""
    Z, _ = _null_space(A[:, F])
    p = np.zeros(psi.size)
    if Z.shape[1]:
        g = (G @ psi)[F]
        w = np.linalg.solve(Z.T @ G[np.ix_(F, F)] @ Z, -(Z.T @ g))
        p[F] = Z @ w
    return p


def _multipliers(G, A, F, psi):
    g = G @ psi
    mu, *_ = np.linalg.lstsq(A[:, F].T, g[F], rcond=None)
    return mu, g - A.T @ mu


def _phase_one(A: np.ndarray, b: np.ndarray) -> np.ndarray:
    res = linprog(np.zeros(A.shape[1]), A_eq=A, b_eq=b, bounds=(0, None), method="highs")
    if res.status != 0:
        raise CalibrationError("no nonnegative density reprices inputs")
    return np.maximum(res.x, 0.0)


def solve_qp_nonneg(problem: CalibrationProblem, max_iter: int | None = None,
                    tol: float = 1e-12) -> QPResult:
    """Primal active-set method for min psi' Xi psi, A psi = b, psi >= 0.

    A feasible start comes from a linear program.  Each iteration solves
    the equality-constrained subproblem on the free variables; blocking
    bounds are added, bounds with negative multipliers are released.
    The final free set is re-solved exactly.
    """
    G = 2.0 * problem.Xi
    # equilibrate rows; the quotes of similar claims give nearly parallel rows
    d = 1.0 / np.linalg.norm(problem.A_eq, axis=1)
    A, b = problem.A_eq * d[:, None], problem.b_eq * d
    m = problem.m
    max_iter = 50 * m if max_iter is None else max_iter
    gscale = max(float(np.abs(G).max()), 1e-300)
    psi = _phase_one(A, b)
    active = psi <= 0.0
    psi[active] = 0.0
    it = 0
    while True:
        it += 1
        if it > max_iter:
            raise CalibrationError(f"active-set method did not converge in {max_iter} iterations")
        F = ~active
        p = _eqp_step(G, A, F, psi)
        if np.max(np.abs(p)) <= tol * max(1.0, float(np.abs(psi).max())):
            _, z = _multipliers(G, A, F, psi)
            if not active.any() or z[active].min() >= -tol * gscale * max(1.0, float(psi.max())):
                break
            # release the bound with the most negative multiplier
            active[int(np.argmin(np.where(active, z, np.inf)))] = False
            continue
        neg = F & (p < 0)
        alpha, block = 1.0, -1
        if neg.any():
            ratios = np.where(neg, -psi / np.where(neg, p, -1.0), np.inf)
            j = int(np.argmin(ratios))
            if ratios[j] < 1.0:
                alpha, block = float(ratios[j]), j
        psi = psi + alpha * p
        if block >= 0:
            active[block] = True
        psi[active] = 0.0
    # polish: exact minimizer on the final free set
    F = ~active
    AF = A[:, F]
    xp, *_ = np.linalg.lstsq(AF, b, rcond=None)
    Z, _ = _null_space(AF)
    if Z.shape[1]:
        GF = G[np.ix_(F, F)]
        xp = xp + Z @ np.linalg.solve(Z.T @ GF @ Z, -(Z.T @ (GF @ xp)))
    psi = np.zeros(m)
    psi[F] = xp
    mu, z = _multipliers(G, A, F, psi)
    stat = float(np.max(np.abs(z[F]), initial=0.0))
    z[F] = 0.0
    return QPResult(
        psi=psi, multipliers=mu * d, bound_multipliers=z, active=active,
        objective=float(psi @ problem.Xi @ psi),
        kkt_residual=max(stat, float(max(0.0, -z.min())), float(max(0.0, -psi.min()))),
        primal_residual=float(np.max(np.abs(problem.A_eq @ psi - problem.b_eq))),
        complementarity=float(np.max(np.abs(z * psi))), iterations=it,
    )


def calibrate_density(prices: Sequence[float], grids: Sequence[FullInfoGrid], basis: Basis,
                      mats: GalerkinMatrices | None, t: float) -> FilterState:
    """Maximally smooth nonnegative filter state at time t that reprices the inputs."""
    if mats is not None and mats.basis is not basis:
        raise ValueError("basis does not match the Galerkin matrices")
    res = solve_qp_nonneg(assemble_calibration(prices, grids, basis, t))
    return FilterState(float(t), res.psi, 0.0, 0.0, 0.0)


# ---------------------------------------------------------------------------
# CDS quotes and file interfaces
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Quote:
    instrument_id: str
    kind: str  # survival, default or cds
    maturity: float
    value: float  # price, or running spread for a CDS


def premium_dates(t: float, maturity: float, freq: int = 4) -> np.ndarray:
    """Premium dates t + k / freq up to maturity; the last equals maturity."""
    n = max(1, int(math.ceil((maturity - t) * freq - 1e-9)))
    d = t + np.arange(1, n + 1) / freq
    d[-1] = maturity
    return d


@dataclass
class GridCache:
    """Solves and caches full-information grids by (kind, maturity)."""

    params: ModelParams
    law: DividendLaw
    nt: int = 200
    nv: int = 400
    grids: dict = field(default_factory=dict)

    def get(self, kind: str, maturity: float) -> FullInfoGrid:
        key = (kind, round(float(maturity), 12))
        if key not in self.grids:
            claim = ClaimSpec.survival(maturity) if kind == "survival" else ClaimSpec.default(maturity)
            nt = max(16, int(math.ceil(self.nt * max(maturity, 1.0) / 5.0)))
            self.grids[key] = solve_fullinfo(claim, self.params, nt, self.nv, self.law)
        return self.grids[key]


def cds_row(spread: float, maturity: float, basis: Basis, t: float, cache: GridCache,
            recovery: float = 0.4, freq: int = 4) -> np.ndarray:
    """Constraint row of a CDS at its par spread: protection minus premium leg.

    Protection pays 1 - recovery at default before maturity; the premium
    leg pays spread / freq at every premium date while the firm survives
    (accrued premium at default is ignored).
    """
    dates = premium_dates(t, maturity, freq)
    accr = np.diff(np.concatenate([[t], dates]))
    row = (1.0 - recovery) * claim_row(cache.get("default", maturity), basis, t)
    for d, a in zip(dates, accr):
        row = row - spread * a * claim_row(cache.get("survival", float(d)), basis, t)
    return row


def problem_from_quotes(quotes: Sequence[Quote], basis: Basis, t: float, cache: GridCache,
                        recovery: float = 0.4) -> CalibrationProblem:
    rows, targets, labels = [], [], []
    for q in quotes:
        if q.maturity <= t:
            raise CalibrationError(f"instrument {q.instrument_id!r} matures at or before t={t}")
        if q.kind in ("survival", "default"):
            rows.append(claim_row(cache.get(q.kind, q.maturity), basis, t))
            targets.append(q.value)
        elif q.kind == "cds":
            rows.append(cds_row(q.value, q.maturity, basis, t, cache, recovery))
            targets.append(0.0)
        else:
            raise CalibrationError(f"unknown instrument kind {q.kind!r} for {q.instrument_id!r}")
        labels.append(q.instrument_id)
    return problem_from_rows(rows, targets, labels, basis)


def quote_residuals(psi: np.ndarray, problem: CalibrationProblem) -> np.ndarray:
    """A_eq psi - b_eq for every row (mass first)."""
    return problem.A_eq @ psi - problem.b_eq


def read_quotes(path) -> list:
    quotes = []
    with open(path, newline="") as fh:
        rows = [(i, r) for i, r in enumerate(csv.reader(fh), start=1)
                if r and not r[0].lstrip().startswith("#")]
    if not rows:
        raise CalibrationError(f"{path}: no quotes")
    head = [c.strip() for c in rows[0][1]]
    want = ["instrument_id", "kind", "maturity", "value"]
    if head != want:
        raise CalibrationError(f"{path}: line {rows[0][0]}: header must be {','.join(want)}, got {','.join(head)}")
    for lineno, r in rows[1:]:
        if len(r) != 4:
            raise CalibrationError(f"{path}: line {lineno}: expected 4 fields, got {len(r)}")
        try:
            quotes.append(Quote(r[0].strip(), r[1].strip().lower(), float(r[2]), float(r[3])))
        except ValueError as exc:
            raise CalibrationError(f"{path}: line {lineno}: {exc}") from exc
    return quotes


def write_quotes(path, quotes: Sequence[Quote], header: str | None = None) -> None:
    with open(path, "w", newline="") as fh:
        if header:
            for line in header.splitlines():
                fh.write(f"# {line}\n")
        w = csv.writer(fh)
        w.writerow(["instrument_id", "kind", "maturity", "value"])
        for q in quotes:
            w.writerow([q.instrument_id, q.kind, f"{q.maturity:.17g}", f"{q.value:.17g}"])
