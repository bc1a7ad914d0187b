"""Detector tomography from coherent-state click statistics.

A set of coherent probes with known mean photon numbers drives the
detector; the measured click frequencies ``C_i`` relate to the diagonal
POVM through the Poisson probe matrix ``F``::

    C = F @ click,   F[i, m] = e^-mu_i mu_i^m / m!

``reconstruct_povm`` inverts this linear model as a box-constrained
quadratic program with an optional smoothing penalty on neighboring POVM
elements. ``scaled_fit_workflow`` implements the intensity-rescaling
technique for very inefficient detectors: the probe intensities are
multiplied by a factor k chosen so the effective detector reaches a target
click probability at mean photon number 30, collapsing the reconstruction
onto a small photon-number range.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.interpolate import PchipInterpolator
from scipy.linalg import lstsq
from scipy.optimize import brentq

from ._pgd import minimize_projected
from .exceptions import (
    ConvergenceError,
    DataFormatError,
    TargetUnreachableError,
    TruncationError,
    UndefinedFidelityError,
)
from .povm import DEFAULT_TAIL_MASS, DiagonalPovm, truncation_for
from .numerics import poisson_log_weights

__all__ = [
    "CSV_HEADER",
    "ClickRecord",
    "ProbeMatrix",
    "ProbeSet",
    "SCALED_TARGET_MEAN",
    "build_probe_matrix",
    "fidelity",
    "read_click_data",
    "reconstruct_povm",
    "scaled_fit_workflow",
    "write_click_data",
]

CSV_HEADER = ("mean_photons", "trials", "clicks")

# Mean photon number at which the rescaled detector hits its target click
# probability.
SCALED_TARGET_MEAN = 30.0

# Default smoothing weight is this constant times the number of probes.
_SMOOTHING_PER_PROBE = 1e-3

_RECONSTRUCT_TOL = 1e-10
_RECONSTRUCT_MAX_ITERATIONS = 50_000


@dataclass(frozen=True)
class ProbeSet:
    """Coherent probe intensities and the trial count per probe.

    The intensities are strictly increasing and start with the mandatory
    vacuum probe, which anchors the dark-count component.
    """

    intensities: np.ndarray
    trials: int

    def __post_init__(self):
        intensities = np.asarray(self.intensities, dtype=float)
        if intensities.ndim != 1 or intensities.size < 2:
            raise ValueError("at least two probe intensities are required")
        if not np.all(np.isfinite(intensities)):
            raise ValueError("probe intensities must be finite")
        if intensities[0] != 0.0:
            raise ValueError("the first probe must be the vacuum (intensity 0)")
        if np.any(np.diff(intensities) <= 0):
            raise ValueError("probe intensities must be strictly increasing")
        if self.trials < 1:
            raise ValueError(f"trials per probe must be >= 1, got {self.trials}")
        intensities.setflags(write=False)
        object.__setattr__(self, "intensities", intensities)
        object.__setattr__(self, "trials", int(self.trials))

    def __len__(self) -> int:
        return int(self.intensities.size)

    def scaled_by(self, k: float) -> "ProbeSet":
        """Probe set with every intensity multiplied by k > 0."""
        if k <= 0:
            raise ValueError(f"scale factor must be > 0, got {k}")
        return ProbeSet(intensities=self.intensities * k, trials=self.trials)


@dataclass(frozen=True)
class ClickRecord:
    """Observed click counts, one per probe, out of a fixed trial count."""

    clicks: np.ndarray
    trials: int

    def __post_init__(self):
        clicks = np.asarray(self.clicks)
        if clicks.ndim != 1 or clicks.size < 1:
            raise ValueError("click counts must form a nonempty vector")
        if not np.issubdtype(clicks.dtype, np.integer):
            rounded = np.asarray(np.rint(clicks), dtype=np.int64)
            if not np.array_equal(rounded, clicks):
                raise ValueError("click counts must be integers")
            clicks = rounded
        clicks = clicks.astype(np.int64)
        if self.trials < 1:
            raise ValueError(f"trials must be >= 1, got {self.trials}")
        if clicks.min() < 0 or clicks.max() > self.trials:
            raise ValueError("click counts must lie in [0, trials]")
        clicks.setflags(write=False)
        object.__setattr__(self, "clicks", clicks)
        object.__setattr__(self, "trials", int(self.trials))

    @property
    def frequencies(self) -> np.ndarray:
        return self.clicks / self.trials


@dataclass(frozen=True)
class ProbeMatrix:
    """Poisson weight matrix mapping a click vector to probe click probabilities."""

    entries: np.ndarray

    def __post_init__(self):
        entries = np.asarray(self.entries, dtype=float)
        if entries.ndim != 2:
            raise ValueError("probe matrix must be two-dimensional")
        if entries.size and entries.min() < 0:
            raise ValueError("probe matrix entries must be nonnegative")
        entries.setflags(write=False)
        object.__setattr__(self, "entries", entries)


def check_paired(probes: ProbeSet, record: ClickRecord) -> None:
    """Validate that a click record belongs to a probe set."""
    if len(probes) != record.clicks.size:
        raise ValueError(
            f"probe count {len(probes)} does not match record length {record.clicks.size}"
        )
    if probes.trials != record.trials:
        raise ValueError(
            f"probe trials {probes.trials} do not match record trials {record.trials}"
        )


def build_probe_matrix(
    probes: ProbeSet, truncation: int, tail_mass: float = DEFAULT_TAIL_MASS
) -> ProbeMatrix:
    """Poisson probe matrix for the given intensities at a fixed truncation.

    Raises ``TruncationError`` when the truncation cannot carry the largest
    probe's Poisson mass to within ``tail_mass``, since rows would then sum
    to visibly less than one and bias any fit against them.
    """
    needed = truncation_for(float(probes.intensities.max()), tail_mass)
    if truncation < needed:
        raise TruncationError(
            f"truncation {truncation} too small for max intensity "
            f"{probes.intensities.max():g} (needs >= {needed})"
        )
    rows = [np.exp(poisson_log_weights(mu, truncation)) for mu in probes.intensities]
    return ProbeMatrix(entries=np.vstack(rows))


def _first_difference(n: int) -> np.ndarray:
    out = np.zeros((n - 1, n))
    idx = np.arange(n - 1)
    out[idx, idx] = -1.0
    out[idx, idx + 1] = 1.0
    return out


def reconstruct_povm(
    probes: ProbeSet,
    record: ClickRecord,
    truncation: int,
    smoothing_weight: float | None = None,
    *,
    tail_mass: float = DEFAULT_TAIL_MASS,
    tol: float = _RECONSTRUCT_TOL,
    max_iterations: int = _RECONSTRUCT_MAX_ITERATIONS,
) -> DiagonalPovm:
    """Reconstruct a diagonal POVM from coherent-probe click frequencies.

    Minimizes::

        || F x - C ||_2^2 + w * sum_m (x[m+1] - x[m])^2,   0 <= x <= 1

    by projected-gradient descent with spectral steps and backtracking,
    run to a natural-residual tolerance of ``tol``. The quadratic is
    convex, so the solve is exact up to that tolerance and deterministic.

    Parameters
    ----------
    probes, record:
        Matched probe set and click record.
    truncation:
        Photon-number cutoff of the reconstruction; must satisfy the probe
        matrix adequacy check.
    smoothing_weight:
        Weight w of the neighboring-element penalty. Defaults to
        ``1e-3`` per probe, i.e. ``1e-3 * len(probes)``.

    Raises
    ------
    ConvergenceError
        If the iteration cap is reached before the tolerance; the error
        carries the final iterate for inspection.
    """
    check_paired(probes, record)
    if smoothing_weight is None:
        smoothing_weight = _SMOOTHING_PER_PROBE * len(probes)
    if smoothing_weight < 0:
        raise ValueError(f"smoothing weight must be >= 0, got {smoothing_weight}")

    frequency = record.frequencies
    F = build_probe_matrix(probes, truncation, tail_mass).entries
    D = _first_difference(truncation)

    FtF = F.T @ F
    DtD = D.T @ D
    Ftc = F.T @ frequency

    def objective(x: np.ndarray) -> float:
        data = F @ x - frequency
        return float(data @ data + smoothing_weight * np.sum(np.diff(x) ** 2))

    def gradient(x: np.ndarray) -> np.ndarray:
        return 2.0 * (FtF @ x - Ftc + smoothing_weight * (DtD @ x))

    def project(x: np.ndarray) -> np.ndarray:
        return np.clip(x, 0.0, 1.0)

    # A smoothness-tilted least-squares point both speeds up the solve and
    # pins down the smooth representative when the data leave flat
    # directions (more unknowns than probes at zero smoothing).
    init_weight = max(smoothing_weight, 1e-6)
    stacked = np.vstack([F, np.sqrt(init_weight) * D])
    rhs = np.concatenate([frequency, np.zeros(truncation - 1)])
    x0, *_ = lstsq(stacked, rhs)

    result = minimize_projected(
        objective, gradient, project, np.clip(x0, 0.0, 1.0),
        tol=tol, max_iterations=max_iterations,
    )
    if not result.converged:
        raise ConvergenceError(
            f"POVM reconstruction stopped at projected-gradient norm "
            f"{result.pg_norm:.3g} after {result.iterations} iterations "
            f"(tolerance {tol:g})",
            result=result,
        )
    return DiagonalPovm(click=result.x, truncation=truncation)


def _crossing_intensity(
    intensities: np.ndarray, frequencies: np.ndarray, target: float
) -> float:
    """Intensity at which the measured click curve first reaches target.

    Interpolates the positive-intensity points with a monotone piecewise
    cubic on the log-intensity axis and root-finds inside the first
    bracketing interval.
    """
    positive = intensities > 0
    x = intensities[positive]
    y = frequencies[positive]
    if x.size < 2:
        raise TargetUnreachableError("too few nonvacuum probes to interpolate")
    above = np.nonzero(y >= target)[0]
    if above.size == 0:
        raise TargetUnreachableError(
            f"measured click probability never reaches {target:g} "
            f"(max {y.max():g})"
        )
    j = int(above[0])
    if j == 0:
        raise TargetUnreachableError(
            f"click probability already exceeds {target:g} at the smallest "
            "nonvacuum probe; no crossing can be bracketed"
        )
    interpolant = PchipInterpolator(np.log(x), y)
    log_root = brentq(
        lambda lx: float(interpolant(lx)) - target,
        np.log(x[j - 1]),
        np.log(x[j]),
        xtol=1e-14,
    )
    return float(np.exp(log_root))


def scaled_fit_workflow(
    probes: ProbeSet,
    record: ClickRecord,
    target_click_at_30: float = 0.95,
    *,
    smoothing_weight: float | None = None,
    tail_mass: float = DEFAULT_TAIL_MASS,
) -> tuple[float, DiagonalPovm]:
    """Rescale the probe intensities and reconstruct the effective POVM.

    For very inefficient detectors the click curve saturates only at
    enormous mean photon numbers, making a direct reconstruction
    intractable. Multiplying every intensity by a factor k < 1 describes
    the same data as a more efficient detector on a small photon-number
    range. k is fixed by the saturation condition: if ``mu*`` is the
    intensity where the measured click probability reaches
    ``target_click_at_30``, then ``k = 30 / mu*``, so the rescaled
    detector clicks with that probability at mean photon number 30.

    Returns
    -------
    (k, povm):
        The scale factor and the POVM reconstructed against the rescaled
        intensities, truncated just past the rescaled range.

    Raises
    ------
    TargetUnreachableError
        If the measured click probabilities never bracket the target.
    """
    check_paired(probes, record)
    if not 0 < target_click_at_30 < 1:
        raise ValueError(
            f"target click probability must lie in (0, 1), got {target_click_at_30}"
        )
    mu_star = _crossing_intensity(
        probes.intensities, record.frequencies, target_click_at_30
    )
    k = SCALED_TARGET_MEAN / mu_star
    scaled_probes = probes.scaled_by(k)
    truncation = truncation_for(float(scaled_probes.intensities.max()), tail_mass)
    povm = reconstruct_povm(
        scaled_probes, record, truncation, smoothing_weight, tail_mass=tail_mass
    )
    return k, povm


def fidelity(a: DiagonalPovm, b: DiagonalPovm) -> float:
    """Bhattacharyya overlap of two click vectors normalized to unit sum.

    The shorter vector is padded with its trailing value so both cover the
    same photon-number range; each is then normalized to unit sum and the
    squared Bhattacharyya coefficient ``(sum_m sqrt(a~ b~))^2`` returned.
    Identical vectors (up to overall scale) give 1; disjoint supports give
    0. An identically zero operand has no normalization, so it raises
    ``UndefinedFidelityError``.
    """
    length = max(a.truncation, b.truncation)

    def padded(p: DiagonalPovm) -> np.ndarray:
        out = np.empty(length)
        out[: p.truncation] = p.click
        out[p.truncation :] = p.click[-1]
        return out

    va, vb = padded(a), padded(b)
    sa, sb = va.sum(), vb.sum()
    if sa == 0.0 or sb == 0.0:
        raise UndefinedFidelityError("fidelity is undefined for an all-zero click vector")
    overlap = float(np.sum(np.sqrt((va / sa) * (vb / sb))))
    return overlap * overlap


def write_click_data(path: str | Path, probes: ProbeSet, record: ClickRecord) -> None:
    """Write probe data as CSV with the ``mean_photons,trials,clicks`` layout."""
    check_paired(probes, record)
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(CSV_HEADER)
        for mu, clicks in zip(probes.intensities, record.clicks):
            writer.writerow([repr(float(mu)), probes.trials, int(clicks)])


def read_click_data(path: str | Path) -> tuple[ProbeSet, ClickRecord]:
    """Read probe data written by ``write_click_data``.

    The header must match ``mean_photons,trials,clicks`` exactly and the
    trial count must be constant across rows.
    """
    with open(path, newline="") as handle:
        reader = csv.reader(handle)
        try:
            header = next(reader)
        except StopIteration:
            raise DataFormatError(f"{path}: empty click-data file") from None
        if tuple(h.strip() for h in header) != CSV_HEADER:
            raise DataFormatError(
                f"{path}: expected header {','.join(CSV_HEADER)!r}, got {','.join(header)!r}"
            )
        intensities, trials, clicks = [], [], []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 3:
                raise DataFormatError(f"{path}:{lineno}: expected 3 columns, got {len(row)}")
            try:
                intensities.append(float(row[0]))
                trials.append(int(row[1]))
                clicks.append(int(row[2]))
            except ValueError as err:
                raise DataFormatError(f"{path}:{lineno}: {err}") from err
    if not trials:
        raise DataFormatError(f"{path}: no data rows")
    if len(set(trials)) != 1:
        raise DataFormatError(f"{path}: trials must be constant across rows")
    probes = ProbeSet(intensities=np.array(intensities), trials=trials[0])
    record = ClickRecord(clicks=np.array(clicks), trials=trials[0])
    return probes, record
