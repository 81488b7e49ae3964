"""Galerkin approximation of the Zakai equation for the unnormalized filter.

The unnormalized conditional density u(t) of the asset value on [K, N] is
expanded in quadratic B-splines that vanish at both ends,
u(t, x) = sum_i psi_i(t) e_i(x).  Point masses nuK and nuN collect the
probability absorbed at the barrier K and at the truncation level N.

All state-level functions accept psi of shape (m,) for one path or (m, P)
for P paths processed together; nuK, nuN then have shape () or (P,).
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy import linalg
from scipy.interpolate import BSpline

from .model import (
    DividendLaw,
    ModelParams,
    ReferenceDensity,
    default_reference,
    dividend_density,
    initial_density,
    observation_drift,
)


class FilterError(ArithmeticError):
    """Numerical failure of the filter."""


# ---------------------------------------------------------------------------
# Basis
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Basis:
    """Quadratic B-splines e_1..e_m on [K, N] with e_i(K) = e_i(N) = 0.

    knots is the full open knot vector (end knots repeated three times).
    Quadrature uses `qorder` Gauss-Legendre points on every knot interval.
    """

    K: float
    N: float
    m: int
    knots: np.ndarray
    spacing: str
    nodes: np.ndarray
    weights: np.ndarray

    degree = 2

    @property
    def breaks(self) -> np.ndarray:
        return self.knots[2:-2]

    def design(self, x, deriv: int = 0) -> np.ndarray:
        """Dense matrix of e_j^(deriv)(x_i), shape (len(x), m)."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        full = BSpline(self.knots, np.eye(self.m + 2), 2, extrapolate=False)
        vals = full(np.clip(x, self.K, self.N), nu=deriv)
        vals = np.nan_to_num(vals)
        vals[(x < self.K) | (x > self.N)] = 0.0
        return vals[:, 1:-1]

    def combine(self, psi: np.ndarray, x: np.ndarray) -> np.ndarray:
        """Evaluate u = sum_i psi_i e_i at points x.

        psi has shape (m,) or (m, P); for batched psi, x has shape (n, P)
        and column p of x is evaluated with column p of psi.
        """
        psi = np.asarray(psi, dtype=float)
        if psi.ndim == 1:
            return self.design(np.ravel(x)) @ psi
        x = np.asarray(x, dtype=float)
        n, P = x.shape
        flat = x.ravel()
        inside = (flat >= self.K) & (flat <= self.N)
        out = np.zeros(flat.size)
        if inside.any():
            dm = BSpline.design_matrix(flat[inside], self.knots, 2)
            cols = dm.indices.reshape(-1, 3)
            data = dm.data.reshape(-1, 3)
            padded = np.zeros((self.m + 2, P))
            padded[1:-1] = psi
            path = np.broadcast_to(np.arange(P), (n, P)).ravel()[inside]
            out[inside] = np.einsum("ij,ij->i", data, padded[cols, path[:, None]])
        return out.reshape(n, P)


def make_knots(K: float, N: float, m: int, spacing: str = "log") -> np.ndarray:
    if spacing == "log":
        inner = np.exp(np.linspace(np.log(K), np.log(N), m + 1))
        inner[0], inner[-1] = K, N
    elif spacing == "uniform":
        inner = np.linspace(K, N, m + 1)
    else:
        raise ValueError(f"unknown knot spacing {spacing!r}")
    return np.concatenate([[K, K], inner, [N, N]])


def build_basis(K: float, N: float, m: int, spacing: str = "log", qorder: int = 5) -> Basis:
    """Quadratic B-spline basis vanishing at both ends of [K, N].

    The open knot vector has m knot intervals; of its m + 2 B-splines the two
    that are nonzero at K and N are dropped, leaving m functions.
    spacing="log" places knots uniformly in ln x, "uniform" uniformly in x.
    """
    if m < 8:
        raise ValueError(f"basis needs m >= 8 functions, got {m}")
    if not N > K > 0:
        raise ValueError(f"need 0 < K < N, got K={K}, N={N}")
    knots = make_knots(K, N, m, spacing)
    g, gw = np.polynomial.legendre.leggauss(qorder)
    br = knots[2:-2]
    lo, hi = br[:-1], br[1:]
    half = 0.5 * (hi - lo)
    nodes = (0.5 * (hi + lo))[:, None] + half[:, None] * g[None, :]
    weights = half[:, None] * gw[None, :]
    return Basis(float(K), float(N), int(m), knots, spacing, nodes.ravel(), weights.ravel())


# ---------------------------------------------------------------------------
# Matrices
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class GalerkinMatrices:
    """Precomputed Galerkin matrices and quadrature data.

    A_ij = (e_i, e_j), Bmat_ij = (L* e_i, e_j), C[k]_ij = (a_k e_i, e_j),
    Xi_ij = (e_i'', e_j'').  drift = A^{-1} Bmat^T and noise[k] = A^{-1} C[k]
    are the coefficient matrices of the SDE for psi.
    """

    basis: Basis
    params: ModelParams
    A: np.ndarray
    Bmat: np.ndarray
    C: list
    Xi: np.ndarray
    A_chol: tuple
    dK: np.ndarray
    dN: np.ndarray
    mass: np.ndarray
    E: np.ndarray  # basis values at quadrature nodes
    drift: np.ndarray
    noise: list
    aN: np.ndarray
    active: tuple  # observation channels with nonzero drift

    @property
    def m(self) -> int:
        return self.basis.m

    def solve_A(self, rhs):
        return linalg.cho_solve(self.A_chol, rhs)

    def project(self, values: np.ndarray) -> np.ndarray:
        """L2 projection onto the basis of a function given at the quadrature nodes."""
        w = self.basis.weights
        if values.ndim == 1:
            return self.solve_A(self.E.T @ (w * values))
        return self.solve_A(self.E.T @ (w[:, None] * values))


def assemble_matrices(basis: Basis, params: ModelParams) -> GalerkinMatrices:
    x, w = basis.nodes, basis.weights
    E = basis.design(x)
    D1 = basis.design(x, 1)
    D2 = basis.design(x, 2)
    s2, r = params.sigma**2, params.r
    A = E.T @ (w[:, None] * E)
    # weak form: b_ij = -[ 1/2 (s2 x^2 e_i', e_j') + ((s2 - r) x e_i, e_j') ]
    Bmat = -(D1.T @ ((0.5 * s2 * x**2 * w)[:, None] * D1) + E.T @ (((s2 - r) * x * w)[:, None] * D1))
    a = observation_drift(x, params)
    C = [E.T @ ((ak * w)[:, None] * E) for ak in a]
    Xi = D2.T @ (w[:, None] * D2)
    try:
        A_chol = linalg.cho_factor(A)
    except linalg.LinAlgError as exc:
        raise FilterError("Gram matrix of the basis is singular") from exc
    ends = basis.design(np.array([basis.K, basis.N]), 1)
    drift = linalg.cho_solve(A_chol, Bmat.T)
    noise = [linalg.cho_solve(A_chol, Ck) for Ck in C]
    active = tuple(k for k, Ck in enumerate(C) if np.any(Ck != 0.0))
    aN = observation_drift(np.array(basis.N), params)
    return GalerkinMatrices(
        basis=basis, params=params, A=A, Bmat=Bmat, C=C, Xi=Xi, A_chol=A_chol,
        dK=ends[0], dN=ends[1], mass=E.T @ w, E=E, drift=drift, noise=noise,
        aN=np.asarray(aN, dtype=float), active=active,
    )


# ---------------------------------------------------------------------------
# Filter state
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class FilterState:
    """Unnormalized filter at time t: coefficients psi plus boundary masses."""

    t: float
    psi: np.ndarray
    nuK: np.ndarray | float = 0.0
    nuN: np.ndarray | float = 0.0
    neg_part: np.ndarray | float = 0.0  # running max of (u^-, 1) / (|u|, 1) over time steps

    def replace(self, **kw) -> "FilterState":
        return replace(self, **kw)

    @property
    def batched(self) -> bool:
        return np.ndim(self.psi) == 2

    def select(self, idx) -> "FilterState":
        """Sub-batch (or single path when idx is an int)."""
        return FilterState(
            self.t, self.psi[:, idx], np.asarray(self.nuK)[idx], np.asarray(self.nuN)[idx],
            np.broadcast_to(self.neg_part, np.shape(self.nuK))[idx],
        )


def initial_state(mats: GalerkinMatrices, t: float = 0.0, density=None) -> FilterState:
    """Project the initial density (default: the model's pi0) onto the basis."""
    x = mats.basis.nodes
    vals = initial_density(x, mats.params) if density is None else np.asarray(density(x), dtype=float)
    psi = mats.project(vals)
    return FilterState(t, psi, 0.0, 0.0, negative_part(psi, mats))


def negative_part(psi: np.ndarray, mats: GalerkinMatrices):
    """Fraction of the mass of |u| carried by the negative part of u."""
    u = mats.E @ psi
    w = mats.basis.weights if u.ndim == 1 else mats.basis.weights[:, None]
    tot = np.sum(w * np.abs(u), axis=0)
    neg = np.sum(w * np.maximum(-u, 0.0), axis=0)
    return np.where(tot > 0, neg / np.where(tot > 0, tot, 1.0), 0.0)


def propagate_filter(state: FilterState, dZ, dt: float, mats: GalerkinMatrices,
                     params: ModelParams | None = None, diagnostics: bool = True,
                     scheme: str = "milstein") -> FilterState:
    """One step of the Galerkin SDE for psi and of the boundary masses.

    scheme="euler" is the Euler-Maruyama step.  scheme="milstein" adds the
    second-order Ito correction 1/2 M_k M_l psi (dZ_k dZ_l - delta_kl dt),
    which removes the O(sqrt(dt)) pathwise error of the likelihood factor.
    """
    params = mats.params if params is None else params
    dZ = np.asarray(dZ, dtype=float)
    if not (np.isfinite(dt) and dt > 0):
        raise FilterError(f"time step must be positive and finite, got {dt}")
    if not np.all(np.isfinite(dZ)):
        raise FilterError("non-finite observation increment")
    psi = state.psi
    new = psi + dt * (mats.drift @ psi)
    first = {k: mats.noise[k] @ psi for k in mats.active}
    for k, g in first.items():
        new = new + g * dZ[k]
    if scheme == "milstein":
        # iterated-integral correction for commuting noise fields
        for k in mats.active:
            for l in mats.active:
                if l < k:
                    continue
                w = dZ[k] * dZ[l] - (dt if k == l else 0.0)
                corr = mats.noise[k] @ first[l]
                if l != k:
                    corr = corr + mats.noise[l] @ first[k]
                new = new + 0.5 * corr * w
    elif scheme != "euler":
        raise ValueError(f"unknown time scheme {scheme!r}")
    s2 = params.sigma**2
    fluxK = np.maximum(0.5 * s2 * params.K**2 * (mats.dK @ psi), 0.0)
    fluxN = np.maximum(-0.5 * s2 * params.N**2 * (mats.dN @ psi), 0.0)
    nuK = state.nuK + fluxK * dt
    aZ = mats.aN @ dZ
    growth = aZ
    if scheme == "milstein":
        growth = aZ + 0.5 * (aZ * aZ - float(mats.aN @ mats.aN) * dt)
    nuN = state.nuN + fluxN * dt + growth * state.nuN
    neg = state.neg_part
    if diagnostics:
        neg = np.maximum(neg, negative_part(new, mats))
    return FilterState(state.t + dt, new, nuK, nuN, neg)


def dividend_update(state: FilterState, d, mats: GalerkinMatrices, basis: Basis | None = None,
                    params: ModelParams | None = None, law: DividendLaw | None = None,
                    ref: ReferenceDensity | None = None) -> FilterState:
    """Bayes update on an observed dividend d followed by the kappa*d shift.

    u_new(x) = u(x + kappa d) phi(d, x + kappa d) / phi*(d), projected onto
    the basis; nuN is reweighted by phi(d, N) / phi*(d).

    The projection of the steep updated density may undershoot near K; this
    transient is not added to neg_part (see negative_part for measuring it).
    """
    basis = mats.basis if basis is None else basis
    params = mats.params if params is None else params
    if law is None:
        raise ValueError("dividend_update needs the dividend law")
    ref = default_reference(params) if ref is None else ref
    d = np.asarray(d, dtype=float)
    if np.any(~np.isfinite(d)) or np.any(d <= 0.0):
        raise FilterError("dividend must be positive")
    x = basis.nodes
    psi = state.psi
    if psi.ndim == 1:
        src = x + params.kappa * float(d)
        u = np.where(src < basis.N, basis.combine(psi, src), 0.0)
        lik = dividend_density(float(d), src, params, law) / ref.pdf(float(d))
        new = mats.project(u * lik)
        ratioN = float(dividend_density(float(d), basis.N, params, law) / ref.pdf(float(d)))
    else:
        d = np.broadcast_to(d, psi.shape[1:])
        src = x[:, None] + params.kappa * d[None, :]
        u = np.where(src < basis.N, basis.combine(psi, src), 0.0)
        lik = dividend_density(d[None, :], src, params, law) / ref.pdf(d)[None, :]
        new = mats.project(u * lik)
        ratioN = dividend_density(d, basis.N, params, law) / ref.pdf(d)
    return FilterState(state.t, new, state.nuK, state.nuN * ratioN, state.neg_part)


def normalized_density(state: FilterState, mats: GalerkinMatrices):
    """(pi_coeffs, C, pi_N) with C = (u, 1) + nuN."""
    C = mats.mass @ state.psi + state.nuN
    if np.any(~np.isfinite(C)) or np.any(C <= 0.0):
        raise FilterError("filter degenerate: nonpositive total mass")
    return state.psi / C, C, state.nuN / C


def default_intensity(state: FilterState, mats: GalerkinMatrices, params: ModelParams | None = None):
    """lambda = 1/2 sigma^2 K^2 d pi / dx (K), clipped at zero."""
    params = mats.params if params is None else params
    pi, _, _ = normalized_density(state, mats)
    return np.maximum(0.5 * params.sigma**2 * params.K**2 * (mats.dK @ pi), 0.0)


def filter_expectation(state: FilterState, mats: GalerkinMatrices, f_values, f_at_N):
    """pi_t f = (pi(t), f) + pi_N f(N), f given at the quadrature nodes."""
    pi, _, piN = normalized_density(state, mats)
    load = mats.E.T @ (mats.basis.weights * np.asarray(f_values, dtype=float))
    return load @ pi + piN * f_at_N


def survival_probability(state: FilterState, mats: GalerkinMatrices):
    """Conditional probability of no default: ((u,1)+nuN) / ((u,1)+nuK+nuN)."""
    C = mats.mass @ state.psi + state.nuN
    return C / (C + state.nuK)


def density_on_grid(state: FilterState, mats: GalerkinMatrices, grid) -> np.ndarray:
    pi, _, _ = normalized_density(state, mats)
    return mats.basis.design(grid) @ pi
