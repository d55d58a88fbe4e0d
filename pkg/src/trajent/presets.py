"""Named states, channels and unravelings used by the studies and the CLI."""

from __future__ import annotations

import numpy as np

from . import channels
from .linalg2q import PHI_PLUS, PSI_PLUS

BELL_PHI_PLUS = PHI_PLUS
BELL_PSI_PLUS = PSI_PLUS


def uneven_state() -> np.ndarray:
    """``(|00> - |01> + i|10> + i sqrt5 |11>) / sqrt8``, concurrence ``(1+sqrt5)/4``."""
    return np.array([1, -1, 1j, 1j * np.sqrt(5)]) / np.sqrt(8)


def dephasing_and_hot_bath(gamma: float = 1.0) -> channels.LindbladChannel:
    """Dephasing on qubit 1 and an infinite-temperature bath (sx, sy form) on qubit 2.

    Operator order: ``P0 (x) I, I (x) sx, I (x) sy``, all with rate ``gamma``.
    """
    return channels.compose(
        channels.dephasing(gamma, qubits=(1,)),
        channels.infinite_temperature(gamma, "hermitian_xy", qubits=(2,)),
    )


def half_protection_u() -> np.ndarray:
    """Protect the dephasing qubit and measure ``sy`` homodyne-like on the hot qubit."""
    return np.diag([-1.0, -1.0, 1.0]).astype(complex)
