"""Quarter-half-quarter waveplate synthesis of polarization unitaries.

Jones matrices use the fast axis at angle ``theta`` from horizontal:
``R(theta) diag(1, e^{i retardance}) R(-theta)`` with
``R(theta) = [[cos, -sin], [sin, cos]]``.

On the Poincare sphere every linear retarder rotates about an axis in the
linear-polarization plane. Writing the target rotation as ``R``, pick an
equatorial point ``p`` that ``R`` keeps on the equator. The first QWP sends
the circular pole to ``p``, ``R`` carries it to ``R p``, and the last QWP is
chosen so its inverse brings ``R p`` back to a pole; the middle factor then
swaps the poles and is therefore a half-wave plate. The angles come out in
closed form and a short simplex polish runs only if the closed form misses.
"""

from __future__ import annotations

import math
from typing import NamedTuple

import numpy as np
from scipy.optimize import minimize

from .core import Unitary2

_PAULI = {
    "z": np.array([[1, 0], [0, -1]], dtype=complex),
    "x": np.array([[0, 1], [1, 0]], dtype=complex),
    "y": np.array([[0, -1j], [1j, 0]], dtype=complex),
}
_AXES = ("z", "x", "y")


def retarder(retardance: float, theta: float) -> np.ndarray:
    c, s = math.cos(theta), math.sin(theta)
    rot = np.array([[c, -s], [s, c]])
    return rot @ np.diag([1.0, np.exp(1j * retardance)]) @ rot.T


def qwp(theta: float) -> np.ndarray:
    return retarder(math.pi / 2, theta)


def hwp(theta: float) -> np.ndarray:
    return retarder(math.pi, theta)


def qhq(qwp1: float, hwp_angle: float, qwp2: float) -> np.ndarray:
    """``QWP(qwp2) @ HWP(hwp_angle) @ QWP(qwp1)``; light meets ``qwp1`` first."""
    return qwp(qwp2) @ hwp(hwp_angle) @ qwp(qwp1)


class WaveplateSettings(NamedTuple):
    qwp1: float
    hwp: float
    qwp2: float
    global_phase: float


def _su2(u: np.ndarray) -> np.ndarray:
    return u / np.sqrt(np.linalg.det(u))


def _rotation(u: np.ndarray) -> np.ndarray:
    """SO(3) action of ``u`` on (z, x, y) Pauli components."""
    s = _su2(u)
    return np.array(
        [[0.5 * np.trace(_PAULI[i] @ s @ _PAULI[j] @ s.conj().T).real for j in _AXES] for i in _AXES]
    )


def _longitude(v: np.ndarray) -> float:
    return math.atan2(v[1], v[0])


def _hwp_defect(m: np.ndarray) -> tuple[float, float]:
    """How far ``m`` is from a HWP (up to phase), and the HWP angle it implies."""
    s = _su2(m)
    # s = c0 I - i (cz Z + cx X + cy Y); a HWP has c0 = cy = 0
    c0 = np.trace(s) / 2
    cz = 1j * np.trace(_PAULI["z"] @ s) / 2
    cx = 1j * np.trace(_PAULI["x"] @ s) / 2
    cy = 1j * np.trace(_PAULI["y"] @ s) / 2
    return abs(c0) + abs(cy), 0.5 * math.atan2(cx.real, cz.real)


def reconstruction_error(u, settings: WaveplateSettings) -> float:
    """Operator-norm distance between ``e^{i phase} u`` and the waveplate product."""
    m = u.matrix if isinstance(u, Unitary2) else np.asarray(u, dtype=complex)
    w = qhq(settings.qwp1, settings.hwp, settings.qwp2)
    return float(np.linalg.norm(w - np.exp(1j * settings.global_phase) * m, 2))


def _finish(m: np.ndarray, a: float, b: float, c: float) -> WaveplateSettings:
    w = qhq(a, b, c)
    t = np.trace(m.conj().T @ w)
    return WaveplateSettings(a % math.pi, b % math.pi, c % math.pi, float(np.angle(t)))


def waveplate_decomposition(u) -> WaveplateSettings:
    """Fast-axis angles in ``[0, pi)`` with ``QWP(qwp2) HWP(hwp) QWP(qwp1) = e^{i phase} u``."""
    m = u.matrix if isinstance(u, Unitary2) else np.asarray(u, dtype=complex)
    rot = _rotation(m)
    pole = np.array([0.0, 0.0, 1.0])
    p = np.cross(pole, rot.T @ pole)
    if np.linalg.norm(p) < 1e-9:
        p = np.array([1.0, 0.0, 0.0])
    q = rot @ p
    lp, lq = _longitude(p), _longitude(q)
    best = None
    for sc in (1, -1):
        for sa in (1, -1):
            first = (lp + sc * math.pi / 2) / 2
            last = (lq + sa * math.pi / 2) / 2
            middle = qwp(last).conj().T @ m @ qwp(first).conj().T
            defect, half = _hwp_defect(middle)
            if best is None or defect < best[0]:
                best = (defect, first, half, last)
    settings = _finish(m, best[1], best[2], best[3])
    if reconstruction_error(m, settings) > 1e-12:
        settings = _polish(m, settings)
    return settings


def _polish(m: np.ndarray, start: WaveplateSettings) -> WaveplateSettings:
    def loss(x):
        return 1.0 - abs(np.trace(m.conj().T @ qhq(*x))) / 2

    res = minimize(
        loss,
        np.array([start.qwp1, start.hwp, start.qwp2]),
        method="Nelder-Mead",
        options={"xatol": 1e-14, "fatol": 1e-16, "maxiter": 4000},
    )
    cand = _finish(m, *res.x)
    return cand if reconstruction_error(m, cand) < reconstruction_error(m, start) else start
