"""Two-level dynamics of a single quenched momentum sector.

The closed forms in this module are what the rest of the package consumes.
The matrix routines (eigenvectors, Pauli-rotation propagator) are an
independent route kept deliberately free of the trigonometric shortcuts, so
the two can be checked against each other.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass

import numpy as np

from .model import QuenchProtocol, delta_theta, dispersion

__all__ = [
    "ModeCoefficients",
    "mode_coefficients",
    "mode_amplitude",
    "mode_eigenvectors",
    "evolution_operator",
    "mode_amplitude_oracle",
    "boundary_partition",
    "null_work_decomposition",
]


@dataclass(frozen=True, eq=False)
class ModeCoefficients:
    """Per-momentum derived quantities; scalars or parallel arrays.

    weight_plus and weight_minus are the populations of the upper and lower
    post-quench eigenstates; together with the imbalance they satisfy
    weight_plus + weight_minus = 1 and weight_plus - weight_minus =
    -imbalance.
    """

    k: float | np.ndarray
    eps_pre: float | np.ndarray
    eps_post: float | np.ndarray
    delta_theta: float | np.ndarray
    imbalance: float | np.ndarray
    weight_plus: float | np.ndarray
    weight_minus: float | np.ndarray


def mode_coefficients(protocol: QuenchProtocol, k) -> ModeCoefficients:
    """Energies, angle difference, imbalance and eigenbasis weights at k.

    The Boltzmann factors are normalized by the dominant one before any
    exponential is taken, so every beta up to and including math.inf stays
    in range and the ground-state limit is exact.
    """
    eps_pre = np.asarray(dispersion(k, protocol.lambda_pre, protocol.coupling))
    eps_post = np.asarray(dispersion(k, protocol.lambda_post, protocol.coupling))
    dth = np.asarray(delta_theta(k, protocol))

    x = protocol.beta * eps_pre
    em = np.exp(-x)  # exp(-inf) == 0 exactly
    em2 = em * em
    denom = 1.0 + em2
    sphi = math.sin(protocol.phi)

    c2 = np.cos(2.0 * dth)
    s2 = np.sin(2.0 * dth)
    imbalance = c2 * np.tanh(x) + sphi * s2 * (2.0 * em / denom)

    ch = np.cos(dth)
    sh = np.sin(dth)
    w_plus = (em2 * ch * ch + sh * sh - sphi * s2 * em) / denom
    w_minus = (em2 * sh * sh + ch * ch + sphi * s2 * em) / denom
    # exact values are squares, but roundoff can graze below zero at phi = +-pi/2
    w_plus = np.maximum(w_plus, 0.0)
    w_minus = np.maximum(w_minus, 0.0)

    if np.ndim(k) == 0:
        return ModeCoefficients(
            k=float(k),
            eps_pre=float(eps_pre),
            eps_post=float(eps_post),
            delta_theta=float(dth),
            imbalance=float(imbalance),
            weight_plus=float(w_plus),
            weight_minus=float(w_minus),
        )
    return ModeCoefficients(
        k=np.asarray(k, dtype=float),
        eps_pre=eps_pre,
        eps_post=eps_post,
        delta_theta=dth,
        imbalance=imbalance,
        weight_plus=w_plus,
        weight_minus=w_minus,
    )


def mode_amplitude(coeffs: ModeCoefficients, t):
    """Return amplitude cos(eps_post t) + i A sin(eps_post t).

    Broadcasts over whichever of coeffs and t is array-valued.
    """
    phase = np.asarray(coeffs.eps_post) * np.asarray(t, dtype=float)
    out = np.cos(phase) + 1j * np.asarray(coeffs.imbalance) * np.sin(phase)
    return complex(out) if np.ndim(out) == 0 else out


def mode_eigenvectors(k: float, lam: float):
    """Eigenvectors of the mode Hamiltonian in the {c+c+|0>, |0>} basis.

    Returns (upper, lower) with eigenvalues +eps and -eps.  Components are
    (i sin theta, cos theta) and (cos theta, i sin theta) with theta the
    principal-branch mixing angle.
    """
    # inline principal-arg angle; shares only the defining formula
    d = lam - math.cos(k)
    eps = math.hypot(d, math.sin(k))
    s_k = math.sin(k)
    # conjugate form of d - eps avoids cancellation near k = 0 for d > 0
    re = -(s_k * s_k) / (d + eps) if d > 0.0 else d - eps
    theta = math.atan2(s_k, re)
    c = math.cos(theta)
    s = math.sin(theta)
    upper = np.array([1j * s, c], dtype=complex)
    lower = np.array([c, 1j * s], dtype=complex)
    return upper, lower


def evolution_operator(k: float, lam: float, t: float, coupling: float = 1.0) -> np.ndarray:
    """Pauli-rotation form of the mode propagator exp(-i H_k t).

    Exact at machine precision; no series truncation.
    """
    eps = dispersion(k, lam, coupling)
    ny = coupling * math.sin(k)
    nz = coupling * (lam - math.cos(k))
    norm = math.hypot(ny, nz)
    if norm == 0.0:  # gapless point: H vanishes identically
        return np.eye(2, dtype=complex)
    ny /= norm
    nz /= norm
    c = math.cos(eps * t)
    s = math.sin(eps * t)
    return np.array(
        [[c - 1j * s * nz, -s * ny], [s * ny, c + 1j * s * nz]], dtype=complex
    )


def mode_amplitude_oracle(protocol: QuenchProtocol, k: float, t: float) -> complex:
    """Matrix-route return amplitude: build the state, rotate it, project.

    Constructs the coherent Gibbs state of the sector explicitly from the
    pre-quench eigenvectors and applies the post-quench propagator.  Ground
    truth for mode_amplitude.
    """
    upper, lower = mode_eigenvectors(k, protocol.lambda_pre)
    x = protocol.beta * dispersion(k, protocol.lambda_pre, protocol.coupling)
    em = math.exp(-x)
    psi = (em * upper + cmath.exp(1j * protocol.phi) * lower) / math.sqrt(1.0 + em * em)
    u = evolution_operator(k, protocol.lambda_post, t, protocol.coupling)
    return complex(np.vdot(psi, u @ psi))


def boundary_partition(coeffs: ModeCoefficients, z) -> complex:
    """Per-mode boundary partition factor at complex time z.

    exp(-z*eps_post)*weight_plus + exp(+z*eps_post)*weight_minus for scalar
    coefficients.  At z = i t this reproduces mode_amplitude.  Raises
    OverflowError once |Re z| * eps_post exceeds 700, the double exp range.
    """
    z = complex(z)
    eps = float(coeffs.eps_post)
    if abs(z.real) * eps > 700.0:
        raise OverflowError(
            f"boundary partition out of range: |Re z|*eps = {abs(z.real) * eps:.3g} > 700"
        )
    ze = z * eps
    return cmath.exp(-ze) * float(coeffs.weight_plus) + cmath.exp(ze) * float(
        coeffs.weight_minus
    )


def null_work_decomposition(protocol: QuenchProtocol, k: float, t: float):
    """Split the mode echo into zero-work probability and coherence part.

    Returns (null_work_prob, interference).  The probability is the
    population-weighted sum of squared diagonal propagator elements,
    computed through the matrix route; the interference is the echo minus
    that, so echo = null_work_prob + interference by construction and the
    content of the decomposition is in the matrix-vs-closed-form agreement.
    """
    upper, lower = mode_eigenvectors(k, protocol.lambda_pre)
    u = evolution_operator(k, protocol.lambda_post, t, protocol.coupling)
    x = protocol.beta * dispersion(k, protocol.lambda_pre, protocol.coupling)
    em2 = math.exp(-2.0 * x)
    p_upper = em2 / (1.0 + em2)
    p_lower = 1.0 / (1.0 + em2)
    a_uu = complex(np.vdot(upper, u @ upper))
    a_ll = complex(np.vdot(lower, u @ lower))
    null_work = p_upper * abs(a_uu) ** 2 + p_lower * abs(a_ll) ** 2
    echo = abs(mode_amplitude(mode_coefficients(protocol, k), t)) ** 2
    return null_work, echo - null_work
