"""Mechanism-model fits to coherent-state click statistics.

The composite detector model assigns each breakdown order n an efficiency
``P_n``; a Fock state of m photons survives unclicked with probability
``prod_n (1 - P_n)^C(m, n)``. In terms of ``h[n] = ln(1 - P_n)`` the
predicted click probabilities for a probe set are::

    model = F (E - exp(G h)),    G[m, n] = C(m, n),  h <= 0

with F the Poisson probe matrix and E the all-ones vector. The fit
minimizes the squared norm of the click-weighted residual
``(C - model) / C`` over the cone h <= 0, which is a convex program: the
map h -> exp(Gh) is convex (nonnegative combination inside exp) so each
residual C_i - model_i is convex, nonnegative combinations under the norm
stay convex, and the constraint set is a half-space product.

``prune_mechanisms`` then discards orders whose removal barely moves the
optimum, and ``loss_scaling_analysis`` checks the fitted efficiencies
against the loss law P_n -> eta^n P_n.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ._pgd import PgdResult, minimize_projected
from .exceptions import ConvergenceError, DataFormatError, DegenerateDataError
from .numerics import binomial_exponents
from .povm import DEFAULT_TAIL_MASS, NonlinearSpdParams, truncation_for
from .tomography import ClickRecord, ProbeSet, build_probe_matrix, check_paired

__all__ = [
    "FitReport",
    "MechanismLogVector",
    "ScalingLawFit",
    "design_matrix",
    "fit_objective",
    "fit_objective_gradient",
    "fit_params",
    "loss_scaling_analysis",
    "prune_mechanisms",
]

_H_FUZZ = 1e-12
_FIT_TOL = 1e-9
_FIT_MAX_ITERATIONS = 100_000
_MAX_EQUILIBRATIONS = 4

# Warm-start value for mechanisms with no dedicated estimate: barely inside
# the feasible cone, so the first projected step can move either way.
_NEAR_ZERO_H = -1e-6

# Lower edge of the solver's search box. A saturated mechanism (p = 1)
# corresponds to h = -inf, which no finite iterate reaches; without a
# floor the solver can descend a flat ray forever. At h = -60 the
# efficiency -expm1(-60) rounds to exactly 1.0 in double precision, so
# the floor is invisible in the reported parameters while keeping the
# box compact enough that stationarity is attainable on its boundary.
_H_FLOOR = -60.0


def design_matrix(truncation: int, order: int) -> np.ndarray:
    """Binomial-coefficient design matrix G with G[m, n] = C(m, n).

    Rows index photon number m = 0..truncation-1, columns mechanism order
    n = 0..order-1. Column 0 is all ones (the dark-count mechanism sees
    every Fock state once).
    """
    if truncation < 1:
        raise ValueError(f"truncation must be >= 1, got {truncation}")
    if order < 1:
        raise ValueError(f"order count must be >= 1, got {order}")
    m_values = np.arange(truncation)
    return np.column_stack([binomial_exponents(m_values, n) for n in range(order)])


@dataclass(frozen=True)
class MechanismLogVector:
    """Log-survival parameters h[n] = ln(1 - P_n) with their design matrix.

    Feasibility (h <= 0) is validated on construction; -inf entries encode
    saturated mechanisms with P_n = 1.
    """

    h: np.ndarray
    binomial_design: np.ndarray

    def __post_init__(self):
        h = np.asarray(self.h, dtype=float)
        if h.ndim != 1 or h.size < 1:
            raise ValueError("h must be a nonempty vector")
        if np.any(np.isnan(h)) or np.any(h > _H_FUZZ):
            raise ValueError("h must satisfy h[n] <= 0 for every mechanism")
        h = np.minimum(h, 0.0)
        design = np.asarray(self.binomial_design, dtype=float)
        if design.ndim != 2 or design.shape[1] != h.size:
            raise ValueError(
                f"design matrix shape {design.shape} does not match {h.size} mechanisms"
            )
        if not np.all(design[:, 0] == 1.0):
            raise ValueError("design matrix column 0 must be all ones (C(m, 0) = 1)")
        h.setflags(write=False)
        design.setflags(write=False)
        object.__setattr__(self, "h", h)
        object.__setattr__(self, "binomial_design", design)

    @classmethod
    def at_truncation(cls, h: np.ndarray, truncation: int) -> "MechanismLogVector":
        """Build the design matrix for the given truncation automatically."""
        h = np.asarray(h, dtype=float)
        return cls(h=h, binomial_design=design_matrix(truncation, h.size))

    @property
    def params(self) -> NonlinearSpdParams:
        # + 0.0 turns the -0.0 produced at h = 0 into a plain zero.
        return NonlinearSpdParams(p=-np.expm1(self.h) + 0.0)


@dataclass(frozen=True)
class FitReport:
    """Result of a mechanism-model fit.

    ``objective`` is the squared norm of the normalized residual over the
    included probes; ``per_probe_residuals`` holds each probe's squared
    contribution, with excluded (zero-click) probes reported as 0. ``h``
    carries the raw log-survival vector for warm starts and refits.
    """

    params: NonlinearSpdParams
    kept_orders: tuple
    objective: float
    per_probe_residuals: np.ndarray
    h: np.ndarray = field(repr=False)
    degenerate_pruning: bool = False

    def __post_init__(self):
        residuals = np.asarray(self.per_probe_residuals, dtype=float)
        h = np.asarray(self.h, dtype=float)
        if h.size != self.params.order:
            raise ValueError("h length does not match the number of mechanisms")
        kept = tuple(sorted(int(n) for n in self.kept_orders))
        if any(n < 0 or n >= self.params.order for n in kept):
            raise ValueError(f"kept orders {kept} outside 0..{self.params.order - 1}")
        if self.objective < 0 or residuals.size < 1 or residuals.min() < 0:
            raise ValueError("objective and residuals must be nonnegative")
        residuals.setflags(write=False)
        h.setflags(write=False)
        object.__setattr__(self, "per_probe_residuals", residuals)
        object.__setattr__(self, "h", h)
        object.__setattr__(self, "kept_orders", kept)
        object.__setattr__(self, "objective", float(self.objective))

    def to_dict(self) -> dict:
        """JSON-ready document with keys p, kept_orders, objective, per_probe_residuals."""
        return {
            "p": [float(v) for v in self.params.p],
            "kept_orders": [int(n) for n in self.kept_orders],
            "objective": float(self.objective),
            "per_probe_residuals": [float(r) for r in self.per_probe_residuals],
        }

    @classmethod
    def from_dict(cls, document: dict) -> "FitReport":
        try:
            params = NonlinearSpdParams(p=np.asarray(document["p"], dtype=float))
            kept = tuple(int(n) for n in document["kept_orders"])
            objective = float(document["objective"])
            residuals = np.asarray(document["per_probe_residuals"], dtype=float)
        except (KeyError, TypeError) as err:
            raise DataFormatError(f"malformed fit report: {err}") from err
        with np.errstate(divide="ignore"):
            h = np.log1p(-params.p)
        return cls(
            params=params,
            kept_orders=kept,
            objective=objective,
            per_probe_residuals=residuals,
            h=h,
        )


def _log_survival_from_design(design: np.ndarray, h: np.ndarray) -> np.ndarray:
    """exp-safe G @ h: treats 0 * (-inf) contributions as 0."""
    if np.all(np.isfinite(h)):
        return design @ h
    out = np.zeros(design.shape[0])
    dead = np.zeros(design.shape[0], dtype=bool)
    for n, hn in enumerate(h):
        if hn == 0.0:
            continue
        if np.isfinite(hn):
            out += design[:, n] * hn
        else:
            dead |= design[:, n] > 0
    out[dead] = -np.inf
    return out


@dataclass(frozen=True)
class _FitData:
    """Probe matrix and frequencies restricted to the included rows."""

    probe_matrix: np.ndarray
    frequencies: np.ndarray
    design: np.ndarray
    included: np.ndarray


def _fit_data(
    probes: ProbeSet,
    record: ClickRecord,
    design: np.ndarray,
    tail_mass: float,
) -> _FitData:
    check_paired(probes, record)
    frequencies = record.frequencies
    included = frequencies > 0
    if not np.any(included):
        raise DegenerateDataError(
            "every probe recorded zero clicks; the normalized objective is undefined"
        )
    F = build_probe_matrix(probes, design.shape[0], tail_mass).entries
    return _FitData(
        probe_matrix=F[included],
        frequencies=frequencies[included],
        design=design,
        included=included,
    )


def _objective_value(data: _FitData, h: np.ndarray) -> float:
    survival = np.exp(_log_survival_from_design(data.design, h))
    model = data.probe_matrix @ (1.0 - survival)
    r = (data.frequencies - model) / data.frequencies
    return float(r @ r)


def _objective_gradient(data: _FitData, h: np.ndarray) -> np.ndarray:
    survival = np.exp(_log_survival_from_design(data.design, h))
    model = data.probe_matrix @ (1.0 - survival)
    weights = (data.frequencies - model) / data.frequencies**2
    return 2.0 * data.design.T @ (survival * (data.probe_matrix.T @ weights))


def fit_objective(
    h: MechanismLogVector,
    probes: ProbeSet,
    record: ClickRecord,
    *,
    tail_mass: float = DEFAULT_TAIL_MASS,
) -> float:
    """Squared norm of the normalized residual at the given parameters.

    Probes with zero recorded clicks are excluded (their normalized
    residual is undefined); if every probe is excluded the data cannot
    score any parameter vector and ``DegenerateDataError`` is raised.
    """
    data = _fit_data(probes, record, h.binomial_design, tail_mass)
    return _objective_value(data, h.h)


def fit_objective_gradient(
    h: MechanismLogVector,
    probes: ProbeSet,
    record: ClickRecord,
    *,
    tail_mass: float = DEFAULT_TAIL_MASS,
) -> np.ndarray:
    """Analytic gradient of ``fit_objective`` with respect to h."""
    data = _fit_data(probes, record, h.binomial_design, tail_mass)
    return _objective_gradient(data, h.h)


def _initial_h(data: _FitData, intensities: np.ndarray, order: int) -> np.ndarray:
    """Warm start: single-point estimate of P_1, near-zero elsewhere.

    For a purely linear detector the click probability is
    1 - exp(-P_1 mu), so the probe whose frequency lies nearest 0.1 gives
    P_1 ~ -ln(1 - C)/mu. Starting near the dominant linear response keeps
    the early iterates where the model underpredicts the data, the region
    where the norm objective is provably convex.
    """
    h0 = np.full(order, _NEAR_ZERO_H)
    if order < 2:
        return h0
    mu = intensities[data.included]
    C = data.frequencies
    usable = (mu > 0) & (C < 1)
    if not np.any(usable):
        return h0
    idx = np.flatnonzero(usable)[np.argmin(np.abs(C[usable] - 0.1))]
    p1 = min(-np.log1p(-C[idx]) / mu[idx], 1.0 - 1e-9)
    h0[1] = np.log1p(-p1)
    return h0


def _equilibration_scales(data: _FitData, h: np.ndarray) -> np.ndarray:
    """Jacobian column norms of the normalized residual at h (zeros -> 1)."""
    survival = np.exp(_log_survival_from_design(data.design, h))
    scales = np.empty(h.size)
    for n in range(h.size):
        column = data.probe_matrix @ (survival * data.design[:, n]) / data.frequencies
        norm = float(np.linalg.norm(column))
        scales[n] = norm if np.isfinite(norm) and norm > 0 else 1.0
    return scales


def _solve_round(
    data: _FitData,
    h0: np.ndarray,
    pinned: np.ndarray,
    scales: np.ndarray,
    tol: float,
    max_iterations: int,
):
    def fun(z: np.ndarray) -> float:
        return _objective_value(data, z / scales)

    def grad(z: np.ndarray) -> np.ndarray:
        g = _objective_gradient(data, z / scales) / scales
        g[pinned] = 0.0
        return g

    floor = _H_FLOOR * scales

    def project(z: np.ndarray) -> np.ndarray:
        out = np.clip(z, floor, 0.0)
        out[pinned] = 0.0
        return out

    return minimize_projected(
        fun, grad, project, scales * h0, tol=tol, max_iterations=max_iterations
    )


def _solve(
    data: _FitData,
    h0: np.ndarray,
    pinned: np.ndarray,
    tol: float,
    max_iterations: int,
):
    """Projected-gradient solve in column-equilibrated variables.

    The Jacobian columns of the normalized residual span many orders of
    magnitude (column n scales like the C(m, n) moments), so each h[n] is
    rescaled by its Jacobian column norm; the stationarity tolerance
    applies to the equilibrated problem. A column collapses further when
    its mechanism saturates (survival factors vanish as h[n] falls), so a
    round that stalls triggers a re-equilibration at the current iterate
    and a warm restart within the same iteration budget. Coordinates
    flagged in ``pinned`` are held at h[n] = 0 exactly; the rest live in
    the box [_H_FLOOR, 0].
    """
    h = np.where(pinned, 0.0, np.maximum(h0, _H_FLOOR))
    remaining = int(max_iterations)
    spent = 0
    result = None
    for round_index in range(_MAX_EQUILIBRATIONS):
        scales = _equilibration_scales(data, h)
        if round_index == _MAX_EQUILIBRATIONS - 1:
            budget = remaining
        else:
            budget = max(remaining // 2, 1)
        result = _solve_round(data, h, pinned, scales, tol, budget)
        spent += result.iterations
        remaining -= result.iterations
        h = result.x / scales
        h[pinned] = 0.0
        if result.converged or remaining <= 0:
            break
    result = PgdResult(result.x, result.objective, result.pg_norm, spent, result.converged)
    return h, result


def _build_report(
    data: _FitData, h: np.ndarray, kept_orders, degenerate: bool = False
) -> FitReport:
    survival = np.exp(_log_survival_from_design(data.design, h))
    model = data.probe_matrix @ (1.0 - survival)
    r = (data.frequencies - model) / data.frequencies
    per_probe = np.zeros(data.included.size)
    per_probe[data.included] = r * r
    return FitReport(
        params=NonlinearSpdParams(p=-np.expm1(h) + 0.0),
        kept_orders=tuple(kept_orders),
        objective=float(r @ r),
        per_probe_residuals=per_probe,
        h=h,
        degenerate_pruning=degenerate,
    )


def fit_params(
    probes: ProbeSet,
    record: ClickRecord,
    max_order: int = 6,
    *,
    zero_orders=(),
    tol: float = _FIT_TOL,
    max_iterations: int = _FIT_MAX_ITERATIONS,
    tail_mass: float = DEFAULT_TAIL_MASS,
) -> FitReport:
    """Fit mechanism efficiencies P_0..P_{max_order-1} to click data.

    Minimizes ``fit_objective`` over h <= 0 by projected-gradient descent
    with a Barzilai-Borwein step and nonmonotone backtracking, run to
    stationarity tolerance ``tol``. Each residual is convex in h and the
    residual norm is convex wherever the model underpredicts the data;
    the warm start is deterministic, so repeated fits agree bitwise.

    Parameters
    ----------
    max_order:
        Number of mechanisms M; orders n = 0..M-1 are fitted.
    zero_orders:
        Orders constrained to P_n = 0 throughout (used by pruning).

    Raises
    ------
    DegenerateDataError
        If no probe recorded any click.
    ConvergenceError
        If the iteration cap is hit first; the error carries the
        best-so-far ``FitReport`` as its ``result``.
    """
    if max_order < 1:
        raise ValueError(f"max_order must be >= 1, got {max_order}")
    pinned = np.zeros(max_order, dtype=bool)
    for n in zero_orders:
        if not 0 <= n < max_order:
            raise ValueError(f"zero order {n} outside 0..{max_order - 1}")
        pinned[n] = True

    truncation = truncation_for(float(probes.intensities.max()), tail_mass)
    data = _fit_data(probes, record, design_matrix(truncation, max_order), tail_mass)
    h0 = _initial_h(data, probes.intensities, max_order)
    h, result = _solve(data, h0, pinned, tol, max_iterations)
    kept = [n for n in range(max_order) if not pinned[n]]
    report = _build_report(data, h, kept)
    if not result.converged:
        raise ConvergenceError(
            f"mechanism fit stopped at projected-gradient norm {result.pg_norm:.3g} "
            f"after {result.iterations} iterations (tolerance {tol:g})",
            result=report,
        )
    return report


def prune_mechanisms(
    report: FitReport,
    probes: ProbeSet,
    record: ClickRecord,
    threshold: float = 0.01,
    *,
    tol: float = _FIT_TOL,
    max_iterations: int = _FIT_MAX_ITERATIONS,
    tail_mass: float = DEFAULT_TAIL_MASS,
) -> FitReport:
    """Drop mechanisms whose removal barely changes the fit optimum.

    For each kept order n (ascending), the model is refitted with P_n
    pinned to 0; if the minimized residual norm (the square root of the
    objective) grows by a relative factor of at most ``threshold``, the
    order is marked droppable. Decisions all compare against the full
    report's optimum; a single final refit over the surviving orders
    produces the returned report.

    If every order is droppable (e.g. ``threshold = inf``), the single
    order whose sole-mechanism fit scores best is retained and the report
    is flagged ``degenerate_pruning``.
    """
    if not threshold >= 0:
        raise ValueError(f"threshold must be >= 0, got {threshold}")
    order = report.params.order
    truncation = truncation_for(float(probes.intensities.max()), tail_mass)
    data = _fit_data(probes, record, design_matrix(truncation, order), tail_mass)

    always_pinned = np.ones(order, dtype=bool)
    for n in report.kept_orders:
        always_pinned[n] = False
    base_norm = np.sqrt(report.objective)

    def refit(pinned: np.ndarray):
        h, result = _solve(data, report.h.copy(), pinned, tol, max_iterations)
        if not result.converged:
            raise ConvergenceError(
                f"pruning refit stopped at projected-gradient norm "
                f"{result.pg_norm:.3g} after {result.iterations} iterations",
                result=_build_report(data, h, np.flatnonzero(~pinned)),
            )
        return h, _objective_value(data, h)

    dropped = set()
    for n in report.kept_orders:
        pinned = always_pinned.copy()
        pinned[n] = True
        _, objective = refit(pinned)
        trial_norm = np.sqrt(objective)
        if base_norm > 0:
            droppable = (trial_norm - base_norm) / base_norm <= threshold
        else:
            droppable = trial_norm <= 1e-12
        if droppable:
            dropped.add(n)

    kept = [n for n in report.kept_orders if n not in dropped]
    degenerate = False
    if not kept:
        # Nothing survives the criterion; keep the best single mechanism so
        # the report still describes a detector.
        best_n, best_objective = None, np.inf
        for n in report.kept_orders:
            pinned = np.ones(order, dtype=bool)
            pinned[n] = False
            _, objective = refit(pinned)
            if objective < best_objective:
                best_n, best_objective = n, objective
        kept = [best_n]
        degenerate = True

    final_pinned = np.ones(order, dtype=bool)
    final_pinned[kept] = False
    h, _ = refit(final_pinned)
    return _build_report(data, h, kept, degenerate=degenerate)


@dataclass(frozen=True)
class ScalingLawFit:
    """Per-order power-law estimates of efficiencies versus transmissivity.

    ``slopes[n]`` is the least-squares slope of ln P_n against ln eta and
    ``residuals[n]`` the RMS deviation of ln P_n from that line. Orders
    with P_n = 0 at any transmissivity have no logarithm and are listed in
    ``excluded_orders`` instead.
    """

    slopes: dict
    residuals: dict
    excluded_orders: tuple


def loss_scaling_analysis(params_by_eta) -> ScalingLawFit:
    """Estimate how each mechanism efficiency scales with optical loss.

    A transmissivity-eta loss channel sends P_n to eta^n P_n, so on log
    axes each order should trace a line of slope n. Input is a sequence of
    ``(eta, NonlinearSpdParams)`` pairs with a common mechanism count; at
    least three distinct transmissivities are required for a meaningful
    slope.
    """
    pairs = [(float(eta), params) for eta, params in params_by_eta]
    if len({eta for eta, _ in pairs}) < 3:
        raise ValueError("at least three distinct transmissivities are required")
    for eta, _ in pairs:
        if not 0 < eta <= 1:
            raise ValueError(f"transmissivity must lie in (0, 1], got {eta}")
    orders = {params.order for _, params in pairs}
    if len(orders) != 1:
        raise ValueError(f"parameter sets disagree on mechanism count: {sorted(orders)}")
    (order,) = orders

    log_eta = np.log([eta for eta, _ in pairs])
    slopes, residuals, excluded = {}, {}, []
    for n in range(order):
        p_n = np.array([params.p[n] for _, params in pairs])
        if np.any(p_n == 0):
            excluded.append(n)
            continue
        log_p = np.log(p_n)
        slope, intercept = np.polyfit(log_eta, log_p, 1)
        misfit = log_p - (slope * log_eta + intercept)
        slopes[n] = float(slope)
        residuals[n] = float(np.sqrt(np.mean(misfit**2)))
    return ScalingLawFit(
        slopes=slopes, residuals=residuals, excluded_orders=tuple(excluded)
    )
