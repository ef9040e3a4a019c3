"""Fisher-zero lines, critical momenta, critical times and winding jumps.

Two inequivalent critical-mode conditions circulate for the coherent Gibbs
initial state; they differ in whether the imbalance equation carries a
sinh or a tanh of beta*eps.  Only the sinh form is consistent with the
weights and the Fisher-zero line, so it is the default, but both are
implemented so the disagreement can be inspected (see variant_report).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import QuenchProtocol, dispersion
from .mode_dynamics import boundary_partition, mode_coefficients

__all__ = [
    "CriticalSet",
    "FisherLine",
    "VariantRow",
    "VariantReport",
    "critical_modes",
    "critical_times",
    "imbalance_roots",
    "fisher_zero_line",
    "variant_report",
]

VARIANTS = ("sinh", "tanh")

_K_EDGE = 1e-9  # momenta are sampled strictly inside (0, pi)
_BISECT_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class CriticalSet:
    """Critical momenta with their time ladders and winding-jump signs.

    modes is ascending; times[i] is the ladder for modes[i]; jump_signs[i]
    is +1 or -1 (None when jump measurement was skipped); residuals[i] is
    the variant equation's value at the returned root.
    """

    modes: np.ndarray
    times: list
    jump_signs: list
    residuals: np.ndarray
    condition_variant: str
    protocol: QuenchProtocol


@dataclass(frozen=True, eq=False)
class FisherLine:
    """One branch of the zero line of the boundary partition function."""

    branch: int
    momenta: np.ndarray
    zeros: np.ndarray
    skipped: np.ndarray
    protocol: QuenchProtocol


@dataclass(frozen=True, eq=False)
class VariantRow:
    variant: str
    k_star: float
    residual: float
    residual_other: float
    fisher_confirmed: bool


@dataclass(frozen=True, eq=False)
class VariantReport:
    rows: list
    protocol: QuenchProtocol


def _check_variant(variant: str) -> str:
    if variant not in VARIANTS:
        raise ValueError(f"variant must be one of {VARIANTS}, got {variant!r}")
    return variant


def _variant_residual(protocol: QuenchProtocol, k, variant: str):
    """Bounded residual whose zeros are the variant's critical momenta.

    sinh: the population imbalance itself (the sinh equation divided by
    cosh(beta*eps), same zeros, bounded by 1 for any beta).
    tanh: tanh(beta*eps)*cos(2 dtheta) + sin(phi)*sin(2 dtheta), the
    multiplied-through form of the cotangent equation.
    """
    coeffs = mode_coefficients(protocol, k)
    if variant == "sinh":
        return coeffs.imbalance
    x = protocol.beta * np.asarray(coeffs.eps_pre)
    dth = np.asarray(coeffs.delta_theta)
    out = np.tanh(x) * np.cos(2.0 * dth) + math.sin(protocol.phi) * np.sin(2.0 * dth)
    return float(out) if np.ndim(k) == 0 else out


def _scan_nodes(n_panels: int, shift: float = 0.0) -> np.ndarray:
    # uniform interior nodes, optionally shifted, plus geometric
    # densification toward both endpoints so roots within ~1e-3 of the
    # edges are still bracketed
    interior = np.linspace(0.0, math.pi, n_panels + 1)[1:-1]
    if shift:
        interior = interior + shift * (math.pi / n_panels)
    lead = np.geomspace(_K_EDGE, interior[0], 48, endpoint=False)
    tail = math.pi - np.geomspace(_K_EDGE, math.pi - interior[-1], 48, endpoint=False)
    return np.concatenate([lead, interior, np.sort(tail)])


def _bisect(fn, a: float, b: float, fa: float) -> float:
    # plain bisection on a sign-change bracket, to _BISECT_TOL in k
    while b - a > _BISECT_TOL:
        mid = 0.5 * (a + b)
        if mid <= a or mid >= b:  # interval at float resolution
            break
        fm = fn(mid)
        if fm == 0.0:
            return mid
        if (fa < 0.0) == (fm < 0.0):
            a, fa = mid, fm
        else:
            b = mid
    return 0.5 * (a + b)


def _scan_for_roots(fn, n_panels: int) -> np.ndarray:
    """Dense sign scan over (0, pi) followed by bisection.

    fn must accept momentum arrays.  An exact zero on a grid node triggers
    one re-scan on a shifted grid so every root is found through a genuine
    sign change.
    """
    nodes = _scan_nodes(n_panels)
    vals = np.asarray(fn(nodes))
    if np.any(vals == 0.0):
        nodes = _scan_nodes(n_panels, shift=0.37)
        vals = np.asarray(fn(nodes))
        if np.any(vals == 0.0):  # twice in a row is not coincidence
            return np.sort(nodes[vals == 0.0])
    idx = np.nonzero(np.signbit(vals[:-1]) != np.signbit(vals[1:]))[0]
    scalar = lambda k: float(fn(k))
    roots = [_bisect(scalar, nodes[i], nodes[i + 1], float(vals[i])) for i in idx]
    return np.asarray(roots, dtype=float)


def imbalance_roots(protocol: QuenchProtocol, n_panels: int = 4096) -> np.ndarray:
    """Momenta in (0, pi) where the population imbalance vanishes."""
    return _scan_for_roots(lambda k: _variant_residual(protocol, k, "sinh"), n_panels)


def critical_times(protocol: QuenchProtocol, k_star: float, n_max: int) -> np.ndarray:
    """Ladder (2n+1)*pi/(2*eps_post(k_star)) for n = 0..n_max."""
    if not 0.0 < k_star < math.pi:
        raise ValueError(f"k_star must lie in (0, pi), got {k_star!r}")
    if n_max < 0:
        raise ValueError(f"n_max must be >= 0, got {n_max!r}")
    eps = dispersion(k_star, protocol.lambda_post, protocol.coupling)
    n = np.arange(n_max + 1)
    return (2.0 * n + 1.0) * math.pi / (2.0 * eps)


def _measure_jump_sign(protocol: QuenchProtocol, t_star: float) -> int:
    # winding number just after minus just before, at 0.1% relative offset
    from . import observables  # deferred: observables imports this module

    before = observables.winding_number(protocol, t_star * (1.0 - 1e-3))
    after = observables.winding_number(protocol, t_star * (1.0 + 1e-3))
    return 1 if after - before > 0.0 else -1


def critical_modes(
    protocol: QuenchProtocol,
    variant: str = "sinh",
    n_max: int = 3,
    with_jump_signs: bool = True,
    n_panels: int = 4096,
) -> CriticalSet:
    """Find the critical momenta of the chosen condition variant.

    An empty mode list is a valid outcome (no sign change anywhere means no
    dynamical transition).  Jump signs are measured empirically from the
    winding number across each mode's first critical time; pass
    with_jump_signs=False to skip that (much cheaper).
    """
    _check_variant(variant)
    roots = _scan_for_roots(
        lambda k: _variant_residual(protocol, k, variant), n_panels
    )
    residuals = np.asarray(
        [float(_variant_residual(protocol, r, variant)) for r in roots]
    )
    ladders = [critical_times(protocol, r, n_max) for r in roots]
    signs: list = [None] * len(roots)
    if with_jump_signs:
        signs = [_measure_jump_sign(protocol, ladder[0]) for ladder in ladders]
    return CriticalSet(
        modes=roots,
        times=ladders,
        jump_signs=signs,
        residuals=residuals,
        condition_variant=variant,
        protocol=protocol,
    )


def fisher_zero_line(protocol: QuenchProtocol, branch_n: int, k_samples) -> FisherLine:
    """Branch branch_n of the zero line z_n(k) in the complex-time plane.

    Re z = ln(weight_plus/weight_minus)/(2 eps_post) and Im z =
    (2n+1)pi/(2 eps_post).  Samples where either weight vanishes (possible
    only in degenerate ground-state limits) are skipped and reported in
    ``skipped``.
    """
    k_samples = np.atleast_1d(np.asarray(k_samples, dtype=float))
    if k_samples.size == 0:
        raise ValueError("k_samples must be nonempty")
    if np.any((k_samples <= 0.0) | (k_samples >= math.pi)):
        raise ValueError("k_samples must lie strictly inside (0, pi)")
    coeffs = mode_coefficients(protocol, k_samples)
    ok = (coeffs.weight_plus > 0.0) & (coeffs.weight_minus > 0.0)
    wp = coeffs.weight_plus[ok]
    wm = coeffs.weight_minus[ok]
    eps = coeffs.eps_post[ok]
    re = (np.log(wp) - np.log(wm)) / (2.0 * eps)
    im = (2.0 * branch_n + 1.0) * math.pi / (2.0 * eps)
    return FisherLine(
        branch=int(branch_n),
        momenta=k_samples[ok],
        zeros=re + 1j * im,
        skipped=k_samples[~ok],
        protocol=protocol,
    )


def _sign_change_at(protocol: QuenchProtocol, k_star: float) -> bool:
    # the line's Re z changes sign across k_star iff the imbalance does
    h = min(1e-6, 0.5 * k_star, 0.5 * (math.pi - k_star))
    left = float(_variant_residual(protocol, k_star - h, "sinh"))
    right = float(_variant_residual(protocol, k_star + h, "sinh"))
    return (left < 0.0) != (right < 0.0)


def variant_report(protocol: QuenchProtocol, n_panels: int = 4096) -> VariantReport:
    """Roots of both condition variants side by side.

    Each row carries the root's residual in its own equation, its residual
    in the other variant's equation, and whether the Fisher line actually
    changes sign there.
    """
    rows = []
    for variant in VARIANTS:
        other = "tanh" if variant == "sinh" else "sinh"
        roots = _scan_for_roots(
            lambda k: _variant_residual(protocol, k, variant), n_panels
        )
        for r in roots:
            rows.append(
                VariantRow(
                    variant=variant,
                    k_star=float(r),
                    residual=float(_variant_residual(protocol, r, variant)),
                    residual_other=float(_variant_residual(protocol, r, other)),
                    fisher_confirmed=_sign_change_at(protocol, float(r)),
                )
            )
    return VariantReport(rows=rows, protocol=protocol)
