"""Second-order vol-of-vol expansion of the log-price moment function.

With the forward-variance curve written as a mixture of exponentials (one
term per generator eigenmode), the cumulant generating function of the
terminal log-price admits the classic second-order expansion

    psi(a) ~ 1/2 a(a-1) V + 1/2 Cxf a^2 (a-1)
           + 1/8 Cff a^2 (a-1)^2 + 1/2 Cmu a^3 (a-1)

where V is the variance-swap price and the three coefficients are spot /
forward-variance covariance functionals.  Each coefficient is a contraction
of premia-dependent loadings with model-independent time integrals, so a
calibration can precompute the integrals once and reuse them for every
premia candidate.

All integrals are stored in a form divided by the eigenmode rates, which
stays finite when the generator has a (near-)zero eigenvalue - a situation
that genuinely occurs, e.g. at a zero variance premium.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .filters import FilterState
from .measure import (
    EigenSystem,
    ModelError,
    PricingParams,
    RiskPremia,
    decay_integral,
    pca_loadings,
)

__all__ = [
    "ForwardVarianceCurve",
    "ExpansionIntegrals",
    "ExpansionCoefficients",
    "ImpliedMomentTriple",
    "expansion_integrals",
    "expansion_coefficients",
    "coefficients_from_loadings",
    "psi",
    "model_moments",
    "atm_skew",
]

_GL_NODES = 32


@dataclass(frozen=True, eq=False)
class ForwardVarianceCurve:
    """Forward variance as a mixture of exponentials: sum_i w_i exp(-k_i t)."""

    weights: np.ndarray
    rates: np.ndarray

    def __post_init__(self) -> None:
        w = np.asarray(self.weights, dtype=float)
        k = np.asarray(self.rates, dtype=float)
        if w.shape != k.shape or w.ndim != 1 or w.size == 0:
            raise ValueError("weights and rates must be equal-length 1-d arrays")
        w.flags.writeable = False
        k.flags.writeable = False
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "rates", k)

    @classmethod
    def from_state(
        cls, state: FilterState, eig: EigenSystem, premia: RiskPremia
    ) -> "ForwardVarianceCurve":
        w = (1.0 + premia.lambda2) * eig.weights_tilde * eig.state_coords(state.x)
        return cls(weights=w, rates=eig.rates.copy())

    def __call__(self, t) -> np.ndarray | float:
        t = np.asarray(t, dtype=float)
        vals = np.exp(-np.multiply.outer(t, self.rates)) @ self.weights
        return float(vals) if vals.ndim == 0 else vals

    def integral(self, maturity: float) -> float:
        """Total variance out to ``maturity`` (the variance-swap price)."""
        return float(self.weights @ decay_integral(self.rates, maturity))


@dataclass(frozen=True, eq=False)
class ExpansionIntegrals:
    """Time integrals entering the expansion coefficients for one maturity.

    The stored arrays are the rate-normalized versions (superscript ~):
    ``jxf_i = Ixf_i / k_i``, ``jff_ij = Iff_ij / (k_i k_j)`` and
    ``jmu_ij = Imu_ij / k_j``, where

        Ixf_i  = int_0^T F(t)^{3/2} (1 - e^{-k_i (T-t)}) dt
        Iff_ij = int_0^T F(t)^2 (1 - e^{-k_i (T-t)}) (1 - e^{-k_j (T-t)}) dt
        Imu_ij = 3/2 int_0^T dt F(t)^{3/2}
                     int_t^T du F(u)^{1/2} e^{-k_i (u-t)} (1 - e^{-k_j (T-u)})

    Rate-normalized forms are what the coefficient contractions consume and
    they remain finite at zero rates.
    """

    maturity: float
    rates: np.ndarray
    total_variance: float
    jxf: np.ndarray
    jff: np.ndarray
    jmu: np.ndarray

    @property
    def ixf(self) -> np.ndarray:
        return self.jxf * self.rates

    @property
    def iff(self) -> np.ndarray:
        return self.jff * np.outer(self.rates, self.rates)

    @property
    def imu(self) -> np.ndarray:
        return self.jmu * self.rates[None, :]


def _panel_nodes(a: float, b: float, max_rate: float) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes/weights on [a, b], panelized on the fastest scale."""
    span = b - a
    panel = min(1.0 / max_rate, span / 8.0) if max_rate > 0 else span / 8.0
    n_panels = max(int(math.ceil(span / panel)), 1)
    z, w = np.polynomial.legendre.leggauss(_GL_NODES)
    edges = np.linspace(a, b, n_panels + 1)
    half = 0.5 * (edges[1:] - edges[:-1])
    mid = 0.5 * (edges[1:] + edges[:-1])
    nodes = (mid[:, None] + half[:, None] * z[None, :]).ravel()
    weights = (half[:, None] * w[None, :]).ravel()
    return nodes, weights


def expansion_integrals(
    curve: ForwardVarianceCurve, maturity: float, _panel_scale: float = 1.0
) -> ExpansionIntegrals:
    """Evaluate the expansion integrals by panelized Gauss-Legendre quadrature.

    Panels are no longer than the fastest eigenmode's decay time, giving
    relative accuracy far beyond 1e-8 for these smooth exponential mixtures.
    Raises if the forward-variance curve is not strictly positive on the
    quadrature grid (fractional powers would be undefined).
    """
    if not (maturity > 0.0 and math.isfinite(maturity)):
        raise ValueError(f"maturity must be positive, got {maturity}")
    rates = curve.rates
    max_rate = float(np.max(np.abs(rates))) * _panel_scale
    t, wt = _panel_nodes(0.0, maturity, max_rate)
    f = curve(t)
    if (f <= 0.0).any():
        raise ModelError(
            "forward-variance curve is not positive on [0, T]; "
            "the expansion integrals are undefined"
        )
    f12 = np.sqrt(f)
    f32 = f * f12

    # phi_i(T - t) per node: shape (n_nodes, k)
    phi = decay_integral(rates[None, :], (maturity - t)[:, None])
    jxf = (wt * f32) @ phi
    jff = np.einsum("n,ni,nj->ij", wt * f * f, phi, phi)

    k = rates.size
    jmu = np.zeros((k, k))
    for n, (tn, wn) in enumerate(zip(t, wt)):
        if maturity - tn <= 0.0:
            continue
        u, wu = _panel_nodes(tn, maturity, max_rate)
        fu = curve(u)
        if (fu <= 0.0).any():
            raise ModelError("forward-variance curve is not positive on [0, T]")
        g = np.sqrt(fu)
        decay_i = np.exp(-np.multiply.outer(u - tn, rates))
        phi_j = decay_integral(rates[None, :], (maturity - u)[:, None])
        inner = np.einsum("m,mi,mj->ij", wu * g, decay_i, phi_j)
        jmu += wn * f32[n] * inner
    jmu *= 1.5

    return ExpansionIntegrals(
        maturity=maturity,
        rates=rates.copy(),
        total_variance=curve.integral(maturity),
        jxf=jxf,
        jff=jff,
        jmu=jmu,
    )


@dataclass(frozen=True, eq=False)
class ExpansionCoefficients:
    """Expansion coefficients at one maturity.

    ``a`` and ``b`` are the per-eigenmode loading vector/matrix (the rate
    -normalized spot and variance covariance loadings); ``cxf``, ``cff`` and
    ``cmu`` the contracted coefficients; ``v`` the variance-swap price.
    """

    a: np.ndarray
    b: np.ndarray
    cxf: float
    cff: float
    cmu: float
    v: float
    maturity: float


def coefficients_from_loadings(
    spot_loads: np.ndarray,
    cov_loads: np.ndarray,
    integrals: ExpansionIntegrals,
) -> ExpansionCoefficients:
    """Contract eigenmode loadings with precomputed integrals.

    ``spot_loads`` is the vector ``a_i = wt_i * (U^-1 (xi o rho))_i`` and
    ``cov_loads`` the matrix ``b_ij = wt_i wt_j (U^-1 C U^-T)_ij`` with C the
    filter-factor covariance; both are in the rate-normalized convention
    matching :class:`ExpansionIntegrals`.
    """
    a = np.asarray(spot_loads, dtype=float)
    b = np.asarray(cov_loads, dtype=float)
    cxf = float(a @ integrals.jxf)
    cff = float(np.sum(b * integrals.jff))
    cmu = float(a @ integrals.jmu @ a)
    return ExpansionCoefficients(
        a=a,
        b=b,
        cxf=cxf,
        cff=cff,
        cmu=cmu,
        v=integrals.total_variance,
        maturity=integrals.maturity,
    )


def expansion_coefficients(
    eig: EigenSystem, params: PricingParams, integrals: ExpansionIntegrals
) -> ExpansionCoefficients:
    """Coefficients for a full set of pricing parameters."""
    xi_rho = params.xi * params.rho_spot
    spot_loads = eig.weights_tilde * (eig.u_inv @ xi_rho)
    loads = pca_loadings(params)
    cov = (params.xi[:, None] * loads) @ (params.xi[:, None] * loads).T
    m = eig.u_inv @ cov @ eig.u_inv.T
    cov_loads = np.outer(eig.weights_tilde, eig.weights_tilde) * m
    return coefficients_from_loadings(spot_loads, cov_loads, integrals)


def psi(alpha, coeffs: ExpansionCoefficients) -> np.ndarray | float:
    """The expanded cumulant generating function of the terminal log-price.

    Exactly zero at ``alpha = 0`` and ``alpha = 1`` (normalization and
    martingale conditions) for any coefficient values.
    """
    a = np.asarray(alpha, dtype=float)
    out = (
        0.5 * a * (a - 1.0) * coeffs.v
        + 0.5 * coeffs.cxf * a**2 * (a - 1.0)
        + 0.125 * coeffs.cff * a**2 * (a - 1.0) ** 2
        + 0.5 * coeffs.cmu * a**3 * (a - 1.0)
    )
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class ImpliedMomentTriple:
    """Normalized log-price moments: varswap volatility, skew and kurtosis
    combinations.  The same three numbers can be computed model-side from
    expansion coefficients or market-side from an option strip, making them
    the natural calibration targets."""

    vswap_vol: float
    skew_m: float
    kurt_m: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.vswap_vol) and self.vswap_vol >= 0.0):
            raise ValueError(f"vswap_vol must be >= 0, got {self.vswap_vol}")
        if not (math.isfinite(self.skew_m) and math.isfinite(self.kurt_m)):
            raise ValueError("moment combinations must be finite")


def model_moments(coeffs: ExpansionCoefficients) -> ImpliedMomentTriple:
    """Moment triple implied by the expansion at its maturity."""
    v, t = coeffs.v, coeffs.maturity
    if v <= 0.0:
        raise ModelError(f"variance-swap price must be positive, got {v}")
    sqrt_t = math.sqrt(t)
    return ImpliedMomentTriple(
        vswap_vol=math.sqrt(v / t),
        skew_m=(coeffs.cxf + coeffs.cmu) / (sqrt_t * v**1.5),
        kurt_m=(coeffs.cmu + 0.25 * coeffs.cff) / (sqrt_t * v**2.5),
    )


def atm_skew(coeffs: ExpansionCoefficients) -> float:
    """At-the-money implied-volatility skew d(sigma)/d(log K) at the maturity."""
    v, t = coeffs.v, coeffs.maturity
    if v <= 0.0:
        raise ModelError(f"variance-swap price must be positive, got {v}")
    return coeffs.cxf / (2.0 * math.sqrt(t) * v**1.5)
