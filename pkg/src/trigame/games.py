"""Simplified three-player smooth games.

Two games are supported, both with a single maximizer ``theta`` and two
minimizers ``phi`` and ``psi``:

* dual bilinear:  ``theta.c + theta.A.phi + theta.B.psi``
* trilinear:      ``(theta.A.phi) * (b.psi)``

Gradient fields are returned *unsigned*; the ascent/descent signs are applied
by :mod:`trigame.dynamics`.
"""
from __future__ import annotations

import enum
import json
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

PLAYERS = ("theta", "phi", "psi")


class DimensionError(ValueError):
    """Raised when arrays do not match the game's (d, p, q) dimensions."""


class GameKind(str, enum.Enum):
    DUAL_BILINEAR = "dual_bilinear"
    TRILINEAR = "trilinear"


def _as_vector(x, name):
    arr = np.atleast_1d(np.asarray(x, dtype=float))
    if arr.ndim != 1:
        raise DimensionError(f"{name} must be a vector, got shape {arr.shape}")
    return arr


@dataclass(frozen=True)
class PlayerState:
    """Parameters of the three players.

    Non-finite entries are allowed so that divergent runs stay observable.
    """

    theta: np.ndarray
    phi: np.ndarray
    psi: np.ndarray

    def __post_init__(self):
        for name in PLAYERS:
            arr = _as_vector(getattr(self, name), name)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @classmethod
    def scalar(cls, theta, phi, psi):
        return cls(np.array([theta]), np.array([phi]), np.array([psi]))

    @classmethod
    def from_vector(cls, vec, dims):
        vec = np.asarray(vec, dtype=float)
        d, p, q = dims
        if vec.shape != (d + p + q,):
            raise DimensionError(f"expected {d + p + q} entries, got {vec.shape}")
        return cls(vec[:d], vec[d:d + p], vec[d + p:])

    @property
    def dims(self):
        return (self.theta.size, self.phi.size, self.psi.size)

    def as_vector(self):
        return np.concatenate([self.theta, self.phi, self.psi])

    def is_finite(self):
        return bool(np.all(np.isfinite(self.as_vector())))

    def __eq__(self, other):
        if not isinstance(other, PlayerState):
            return NotImplemented
        return all(np.array_equal(getattr(self, n), getattr(other, n)) for n in PLAYERS)

    def __hash__(self):
        return hash(self.as_vector().tobytes())


class GradientField(NamedTuple):
    v_theta: np.ndarray
    v_phi: np.ndarray
    v_psi: np.ndarray

    def as_vector(self):
        return np.concatenate([np.asarray(v).ravel() for v in self])


@dataclass(frozen=True)
class GameSpec:
    """Coefficients of a dual-bilinear or trilinear game.

    Use :meth:`dual_bilinear` / :meth:`trilinear` to build one; shapes are
    checked on construction.
    """

    kind: GameKind
    dims: tuple
    A: np.ndarray
    B: np.ndarray | None = None
    b: np.ndarray | None = None
    c: np.ndarray | None = None

    def __post_init__(self):
        kind = GameKind(self.kind)
        object.__setattr__(self, "kind", kind)
        d, p, q = (int(n) for n in self.dims)
        if min(d, p, q) < 1:
            raise DimensionError(f"dimensions must be positive, got {self.dims}")
        object.__setattr__(self, "dims", (d, p, q))

        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        if A.shape != (d, p):
            raise DimensionError(f"A must be {d}x{p}, got {A.shape}")
        A.setflags(write=False)
        object.__setattr__(self, "A", A)

        if kind is GameKind.DUAL_BILINEAR:
            if self.B is None or self.c is None or self.b is not None:
                raise ValueError("dual_bilinear game takes A, B and c (and no b)")
            B = np.atleast_2d(np.asarray(self.B, dtype=float))
            if B.shape != (d, q):
                raise DimensionError(f"B must be {d}x{q}, got {B.shape}")
            c = _as_vector(self.c, "c")
            if c.shape != (d,):
                raise DimensionError(f"c must have length {d}, got {c.shape}")
            B.setflags(write=False)
            c.setflags(write=False)
            object.__setattr__(self, "B", B)
            object.__setattr__(self, "c", c)
        else:
            if self.b is None or self.B is not None or self.c is not None:
                raise ValueError("trilinear game takes A and b (and no B, c)")
            b = _as_vector(self.b, "b")
            if b.shape != (q,):
                raise DimensionError(f"b must have length {q}, got {b.shape}")
            b.setflags(write=False)
            object.__setattr__(self, "b", b)

    @classmethod
    def dual_bilinear(cls, A=1.0, B=1.0, c=0.0, dims=None):
        A = np.atleast_2d(np.asarray(A, dtype=float))
        B = np.atleast_2d(np.asarray(B, dtype=float))
        if dims is None:
            dims = (A.shape[0], A.shape[1], B.shape[1])
        c = np.broadcast_to(np.asarray(c, dtype=float), (dims[0],)).copy()
        return cls(GameKind.DUAL_BILINEAR, dims, A, B=B, c=c)

    @classmethod
    def trilinear(cls, A=1.0, b=1.0, dims=None):
        A = np.atleast_2d(np.asarray(A, dtype=float))
        b = _as_vector(b, "b")
        if dims is None:
            dims = (A.shape[0], A.shape[1], b.shape[0])
        return cls(GameKind.TRILINEAR, dims, A, b=b)

    @classmethod
    def from_dict(cls, doc):
        """Build a game from its JSON document form.

        ``{"kind": "trilinear", "scalar": true}`` is shorthand for
        d = p = q = 1 with unit coefficients and c = 0.
        """
        kind = GameKind(doc["kind"])
        if doc.get("scalar"):
            if kind is GameKind.DUAL_BILINEAR:
                return cls.dual_bilinear()
            return cls.trilinear()
        dims = tuple(doc["dims"])
        if kind is GameKind.DUAL_BILINEAR:
            return cls(kind, dims, doc["A"], B=doc["B"], c=doc.get("c", [0.0] * dims[0]))
        return cls(kind, dims, doc["A"], b=doc["b"])

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))

    def to_dict(self):
        doc = {"kind": self.kind.value, "dims": list(self.dims), "A": self.A.tolist()}
        if self.kind is GameKind.DUAL_BILINEAR:
            doc["B"] = self.B.tolist()
            doc["c"] = self.c.tolist()
        else:
            doc["b"] = self.b.tolist()
        return doc

    @property
    def is_scalar(self):
        return self.dims == (1, 1, 1)

    @property
    def size(self):
        return sum(self.dims)

    def check_state(self, s):
        if not isinstance(s, PlayerState):
            raise TypeError(f"expected PlayerState, got {type(s).__name__}")
        if s.dims != self.dims:
            raise DimensionError(f"state dims {s.dims} do not match game dims {self.dims}")

    def __eq__(self, other):
        if not isinstance(other, GameSpec):
            return NotImplemented
        return self.to_dict() == other.to_dict()

    def __hash__(self):
        return hash(json.dumps(self.to_dict(), sort_keys=True))


# Batched partial gradients. Arguments are arrays of shape (..., d), (..., p),
# (..., q); the same code serves single runs and vectorized sweeps so that
# both produce bit-identical results. Scalar games use elementwise products
# written so that swapping phi and psi yields exactly swapped outputs.

def partial_gradient(spec, player, theta, phi, psi):
    """Unsigned gradient of ``player``'s block, batched over leading axes."""
    if spec.kind is GameKind.DUAL_BILINEAR:
        if player == "theta":
            if spec.is_scalar:
                return spec.c[0] + spec.A[0, 0] * phi + spec.B[0, 0] * psi
            return spec.c + phi @ spec.A.T + psi @ spec.B.T
        if player == "phi":
            return theta * spec.A[0, 0] if spec.is_scalar else theta @ spec.A
        if player == "psi":
            return theta * spec.B[0, 0] if spec.is_scalar else theta @ spec.B
    else:
        if spec.is_scalar:
            a, b = spec.A[0, 0], spec.b[0]
            if player == "theta":
                return (a * phi) * (b * psi)
            if player == "phi":
                return (a * theta) * (b * psi)
            if player == "psi":
                return (a * theta) * (b * phi)
        else:
            if player == "theta":
                return (phi @ spec.A.T) * (psi @ spec.b)[..., None]
            if player == "phi":
                return (theta @ spec.A) * (psi @ spec.b)[..., None]
            if player == "psi":
                coupling = np.sum((theta @ spec.A) * phi, axis=-1)
                return spec.b * coupling[..., None]
    raise ValueError(f"unknown player {player!r}")


def eval_dual_bilinear(spec, s):
    """Gradient field ``(c + A phi + B psi, A^T theta, B^T theta)``."""
    if spec.kind is not GameKind.DUAL_BILINEAR:
        raise ValueError("eval_dual_bilinear needs a dual_bilinear game")
    spec.check_state(s)
    return GradientField(*(partial_gradient(spec, n, s.theta, s.phi, s.psi) for n in PLAYERS))


def eval_trilinear(spec, s):
    """Gradient field ``(A phi b^T psi, A^T theta psi^T b, b phi^T A^T theta)``."""
    if spec.kind is not GameKind.TRILINEAR:
        raise ValueError("eval_trilinear needs a trilinear game")
    spec.check_state(s)
    return GradientField(*(partial_gradient(spec, n, s.theta, s.phi, s.psi) for n in PLAYERS))


def gradient_field(spec, s):
    if spec.kind is GameKind.DUAL_BILINEAR:
        return eval_dual_bilinear(spec, s)
    return eval_trilinear(spec, s)


def jacobian(spec, s):
    """Jacobian of the unsigned gradient field, blocks ordered (theta, phi, psi)."""
    spec.check_state(s)
    d, p, q = spec.dims
    J = np.zeros((d + p + q, d + p + q))
    th, ph, ps = slice(0, d), slice(d, d + p), slice(d + p, d + p + q)
    A = spec.A
    if spec.kind is GameKind.DUAL_BILINEAR:
        J[th, ph] = A
        J[th, ps] = spec.B
        J[ph, th] = A.T
        J[ps, th] = spec.B.T
        return J
    b = spec.b
    Aphi = A @ s.phi
    ATtheta = A.T @ s.theta
    bpsi = b @ s.psi
    J[th, ph] = A * bpsi
    J[th, ps] = np.outer(Aphi, b)
    J[ph, th] = A.T * bpsi
    J[ph, ps] = np.outer(ATtheta, b)
    J[ps, th] = np.outer(b, Aphi)
    J[ps, ph] = np.outer(b, ATtheta)
    return J


def fixed_point_set_membership(spec, s, tol=1e-9):
    """True when the max-norm of the gradient field at ``s`` is at most ``tol``."""
    if not tol > 0:
        raise ValueError("tol must be positive")
    v = gradient_field(spec, s).as_vector()
    return bool(np.max(np.abs(v)) <= tol)
