"""Spectral stability of the alternating dual-bilinear momentum update.

The alternating update with heavy-ball momentum is affine in the stacked
state ``z_t = [theta_t, phi_t, psi_t, theta_{t-1}, phi_{t-1}, psi_{t-1}]``::

    z_{t+1} = F z_t + g c

:func:`build_operator` assembles ``F`` and ``g``; :func:`char_poly` computes
the characteristic polynomial with the Faddeev-LeVerrier recurrence and
:func:`roots` finds its complex roots with Aberth-Ehrlich iteration.
"""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .games import GameKind, PlayerState, jacobian

MAX_ABERTH_ITERS = 500
# Irrational angular offset for the initial Aberth circle.
_ANGLE_OFFSET = np.sqrt(2.0) - 1.0


class RootFindingError(RuntimeError):
    """Aberth iteration hit its cap; carries the best iterate and residuals."""

    def __init__(self, message, roots, residuals):
        super().__init__(message)
        self.roots = roots
        self.residuals = residuals


@dataclass(frozen=True)
class UpdateOperator:
    F: np.ndarray
    g: np.ndarray
    eta: float
    beta: tuple
    dims: tuple


def build_operator(spec, eta, beta, minimizer_history_sign=-1):
    """Assemble ``F`` (size 2(d+p+q)) and ``g`` (2(d+p+q) x d).

    ``minimizer_history_sign`` multiplies ``beta_phi I`` and ``beta_psi I`` in
    the previous-iterate columns of the minimizer rows. ``-1`` matches the
    momentum update of :mod:`trigame.dynamics`; ``+1`` is the alternative
    sign convention for which :func:`scalar_char_poly` with
    ``minimizer_history_sign=+1`` is the closed form.
    """
    if spec.kind is not GameKind.DUAL_BILINEAR:
        raise ValueError("the update operator is only defined for dual_bilinear games")
    if minimizer_history_sign not in (-1, 1):
        raise ValueError("minimizer_history_sign must be -1 or +1")
    bt, bp, bq = (float(x) for x in beta)
    d, p, q = spec.dims
    A, B = spec.A, spec.B
    n = d + p + q
    Id, Ip, Iq = np.eye(d), np.eye(p), np.eye(q)
    s = float(minimizer_history_sign)

    F = np.zeros((2 * n, 2 * n))
    r0, r1, r2 = slice(0, d), slice(d, d + p), slice(d + p, n)
    h0, h1, h2 = slice(n, n + d), slice(n + d, n + d + p), slice(n + d + p, 2 * n)

    F[r0, r0] = (1 + bt) * Id
    F[r0, r1] = eta * A
    F[r0, r2] = eta * B
    F[r0, h0] = -bt * Id

    F[r1, r0] = -(1 + bt) * eta * A.T
    F[r1, r1] = (1 + bp) * Ip - eta**2 * A.T @ A
    F[r1, r2] = -eta**2 * A.T @ B
    F[r1, h0] = eta * bt * A.T
    F[r1, h1] = s * bp * Ip

    F[r2, r0] = -(1 + bt) * eta * B.T
    F[r2, r1] = -eta**2 * B.T @ A
    F[r2, r2] = (1 + bq) * Iq - eta**2 * B.T @ B
    F[r2, h0] = eta * bt * B.T
    F[r2, h2] = s * bq * Iq

    F[n:, :n] = np.eye(n)

    g = np.zeros((2 * n, d))
    g[r0] = eta * Id
    g[r1] = -eta**2 * A.T
    g[r2] = -eta**2 * B.T
    return UpdateOperator(F, g, float(eta), (bt, bp, bq), spec.dims)


def char_poly(op):
    """Monic coefficients of det(lambda I - F), highest degree first.

    Faddeev-LeVerrier: ``M_k = F M_{k-1} + c_{n-k+1} I`` and
    ``c_{n-k} = -tr(F M_k) / k``.
    """
    F = op.F if isinstance(op, UpdateOperator) else np.asarray(op, dtype=float)
    n = F.shape[0]
    if F.shape != (n, n):
        raise ValueError("char_poly needs a square matrix")
    coeffs = np.zeros(n + 1)
    coeffs[0] = 1.0
    M = np.zeros_like(F)
    eye = np.eye(n)
    for k in range(1, n + 1):
        M = F @ M + coeffs[k - 1] * eye
        coeffs[k] = -np.trace(F @ M) / k
    return coeffs


def scalar_char_poly(eta, beta, minimizer_history_sign=-1):
    """Closed-form characteristic coefficients for d = p = q = 1, A = B = 1."""
    bt, bp, bq = beta
    n2 = eta * eta
    if minimizer_history_sign == 1:
        return np.array([
            1.0,
            -(bt + bp + bq - 2 * n2 + 3),
            bt * bp + bt * bq + bp * bq + 3 * bt - (n2 - 1) * (bp + bq) - 2 * n2 + 3,
            -(bt * bp * bq + bt * bp + bt * bq - bp * bq + 3 * bt + (n2 - 1) * (bp + bq) + 1),
            -(bt * bp * bq + bt * bp + bt * bq + bp * bq - bt + bp + bq),
            bt * bp * bq + bt * bp + bt * bq - bp * bq,
            bt * bp * bq,
        ])
    if minimizer_history_sign == -1:
        return np.array([
            1.0,
            2 * n2 - bt - bp - bq - 3,
            -n2 * (bp + bq) - 2 * n2 + bt * bp + bt * bq + 3 * bt + bp * bq + 3 * bp + 3 * bq + 3,
            n2 * (bp + bq) - bt * bp * bq - 3 * bt * bp - 3 * bt * bq - 3 * bt - 3 * bp * bq
            - 3 * bp - 3 * bq - 1,
            3 * bt * bp * bq + 3 * bt * bp + 3 * bt * bq + bt + 3 * bp * bq + bp + bq,
            -3 * bt * bp * bq - bt * bp - bt * bq - bp * bq,
            bt * bp * bq,
        ])
    raise ValueError("minimizer_history_sign must be -1 or +1")


def _horner(coeffs, z):
    p = np.zeros_like(z, dtype=complex) + coeffs[0]
    dp = np.zeros_like(z, dtype=complex)
    for c in coeffs[1:]:
        dp = dp * z + p
        p = p * z + c
    return p, dp


def _merge_clusters(z, coeffs, radius):
    """Collapse clusters that resolve one m-fold root as m nearby simple roots.

    The centroid is polished by Newton steps on the (m-1)-th derivative,
    which has a simple root there, and accepted when it is at least as good
    a root as the cluster members.
    """
    z = z.copy()
    n = z.size
    noise = 64 * np.finfo(float).eps * np.max(np.abs(coeffs))
    used = np.zeros(n, dtype=bool)
    for i in range(n):
        if used[i]:
            continue
        members = [i]
        for j in members:
            members += [k for k in range(n) if k not in members and not used[k]
                        and abs(z[k] - z[j]) <= radius * (1 + abs(z[j]))]
        m = len(members)
        if m < 2:
            continue
        deriv = np.polyder(coeffs, m - 1)
        centre = np.array([z[members].mean()])
        for _ in range(8):
            f, df = _horner(deriv, centre)
            if df[0] == 0:
                break
            centre = centre - f / df
        res_centre = abs(_horner(coeffs, centre)[0][0])
        res_members = np.abs(_horner(coeffs, z[members])[0]).max()
        if abs(centre[0] - z[members].mean()) <= radius * (1 + abs(z[i])) and \
                res_centre <= max(res_members, noise):
            z[members] = centre[0]
            used[members] = True
    return z


def roots(coeffs, tol=1e-15, cluster_radius=1e-4, max_iters=MAX_ABERTH_ITERS):
    """All complex roots of a monic polynomial, with multiplicity.

    Trailing coefficients that vanish up to rounding are removed first so
    zero roots are exact; the rest are found by Aberth-Ehrlich iteration
    seeded on a circle of radius ``(1 + max|c|)^(1/deg)``.
    """
    coeffs = np.asarray(coeffs, dtype=float)
    if coeffs.ndim != 1 or coeffs.size < 2:
        raise ValueError("need a polynomial of degree >= 1")
    if not np.all(np.isfinite(coeffs)):
        raise ValueError("coefficients must be finite")
    if coeffs[0] != 1.0:
        raise ValueError("polynomial must be monic")

    scale = np.max(np.abs(coeffs))
    work = coeffs.copy()
    n_zero = 0
    while work.size > 1 and abs(work[-1]) <= 64 * np.finfo(float).eps * scale:
        work = work[:-1]
        n_zero += 1
    zeros = np.zeros(n_zero, dtype=complex)
    deg = work.size - 1
    if deg == 0:
        return zeros

    radius = (1 + np.max(np.abs(work))) ** (1.0 / deg)
    angles = 2 * np.pi * np.arange(deg) / deg + _ANGLE_OFFSET
    z = radius * np.exp(1j * angles)
    converged = False
    for _ in range(max_iters):
        p, dp = _horner(work, z)
        with np.errstate(divide="ignore", invalid="ignore"):
            w = p / dp
            diff = z[:, None] - z[None, :]
            np.fill_diagonal(diff, 1.0)
            inv = 1.0 / diff
            np.fill_diagonal(inv, 0.0)
            denom = 1.0 - w * inv.sum(axis=1)
            delta = np.where(p == 0, 0, w / denom)
        delta = np.where(np.isfinite(delta), delta, 0)
        z = z - delta
        if np.all(np.abs(delta) <= tol * (1 + np.abs(z))):
            converged = True
            break

    residuals = np.abs(_horner(work, z)[0])
    limit = 1e-10 * scale
    if not converged and np.any(residuals > limit):
        raise RootFindingError(
            f"Aberth iteration did not converge in {max_iters} steps "
            f"(max residual {residuals.max():.3e})", z, residuals)
    z = _merge_clusters(z, work, cluster_radius)
    return np.concatenate([z, zeros])


@dataclass
class SpectrumReport:
    """Characteristic polynomial, roots and stability of an update operator.

    ``transverse_radius`` ignores one unit root per direction of the game's
    equilibrium set (the Jacobian null space); those roots are present for
    every step size and momentum.
    """

    coefficients: np.ndarray
    roots: np.ndarray
    spectral_radius: float
    stable: bool
    purely_adversarial: bool
    transverse_radius: float
    eta: float = 0.0
    beta: tuple = (0.0, 0.0, 0.0)

    def to_dict(self):
        return {
            "coeffs": [float(c) for c in self.coefficients],
            "roots": [[float(r.real), float(r.imag)] for r in self.roots],
            "spectral_radius": float(self.spectral_radius),
            "stable": bool(self.stable),
            "purely_adversarial": bool(self.purely_adversarial),
            "transverse_radius": float(self.transverse_radius),
            "eta": float(self.eta),
            "beta": list(self.beta),
        }

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2)


def _loss_jacobian(spec):
    """Jacobian of the players' loss gradients: the maximizer's loss is -f."""
    zero = PlayerState(np.zeros(spec.dims[0]), np.zeros(spec.dims[1]), np.zeros(spec.dims[2]))
    J = jacobian(spec, zero)
    J[: spec.dims[0]] *= -1
    return J


def is_purely_adversarial(spec, tol=1e-9):
    """All nonzero Jacobian eigenvalues lie on the imaginary axis."""
    J = _loss_jacobian(spec)
    lam = roots(char_poly(J))
    nonzero = lam[np.abs(lam) > tol]
    return bool(np.all(np.abs(nonzero.real) <= tol * (1 + np.abs(nonzero))))


def analyze(spec, eta, beta, minimizer_history_sign=-1):
    op = build_operator(spec, eta, beta, minimizer_history_sign)
    coeffs = char_poly(op)
    lam = roots(coeffs)
    lam = lam[np.argsort(-np.abs(lam), kind="stable")]
    radius = float(np.max(np.abs(lam)))

    null_dim = spec.size - np.linalg.matrix_rank(_loss_jacobian(spec))
    rest = lam
    for _ in range(null_dim):
        k = int(np.argmin(np.abs(rest - 1.0)))
        rest = np.delete(rest, k)
    transverse = float(np.max(np.abs(rest))) if rest.size else 0.0

    return SpectrumReport(
        coefficients=coeffs,
        roots=lam,
        spectral_radius=radius,
        stable=radius < 1 - 1e-12,
        purely_adversarial=is_purely_adversarial(spec),
        transverse_radius=transverse,
        eta=float(eta),
        beta=tuple(float(b) for b in beta),
    )
