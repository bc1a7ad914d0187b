"""Published mechanism efficiencies for an NbN nanowire click detector.

The detector was characterized at three bias currents; lower bias
suppresses the single-photon mechanism and brings multiphoton breakdown
orders forward. Each parameter list reads ``[P_0, P_1, ...]`` with P_0 the
dark-count mechanism.

``UNSCALED_PARAMS`` describe the physical detector against the raw probe
intensities. ``SCALED_PARAMS`` describe the effective detector after the
probe intensities were rescaled so its click probability reaches 95% at
mean photon number 30; these are the natural fixtures for reconstruction
tests because they saturate within a small photon-number range.

``TRIALS_PER_PROBE`` is the number of repeated preparations behind each
measured click frequency.
"""

import numpy as np

from .povm import NonlinearSpdParams

__all__ = [
    "BIAS_CURRENTS_UA",
    "SCALED_PARAMS",
    "TRIALS_PER_PROBE",
    "UNSCALED_PARAMS",
]

BIAS_CURRENTS_UA = (25, 20, 16)

TRIALS_PER_PROBE = 100_000

UNSCALED_PARAMS = {
    25: NonlinearSpdParams(p=np.array([7.30e-4, 2.49e-3])),
    20: NonlinearSpdParams(p=np.array([9.72e-6, 7.15e-5, 8.14e-9])),
    16: NonlinearSpdParams(p=np.array([0.0, 7.33e-8, 2.87e-10, 2.81e-14])),
}

SCALED_PARAMS = {
    25: NonlinearSpdParams(p=np.array([7.29e-4, 9.95e-2])),
    20: NonlinearSpdParams(p=np.array([1.08e-5, 4.76e-2, 3.74e-3, 1.13e-4])),
    16: NonlinearSpdParams(p=np.array([0.0, 1.97e-4, 2.01e-3, 4.87e-4, 5.07e-5])),
}
