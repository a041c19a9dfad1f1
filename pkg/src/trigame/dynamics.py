"""Momentum update rules and trajectory runner for the three-player games.

The maximizer ``theta`` ascends its gradient and the minimizers ``phi`` and
``psi`` descend theirs; each player adds a heavy-ball term
``beta * (x_t - x_{t-1})``. Update orders:

simultaneous
    every right-hand side uses the time-t values.
alternating
    players update one after the other (default theta -> phi -> psi) and each
    uses the freshest values available.
maximizer_first
    theta updates first, then phi and psi simultaneously using the new theta
    and each other's time-t value.
"""
from __future__ import annotations

import csv
import enum
import json
from dataclasses import dataclass, field

import numpy as np

from .games import PLAYERS, GameKind, PlayerState, partial_gradient

DIVERGENCE_THRESHOLD = 1e12
SIGNS = {"theta": 1.0, "phi": -1.0, "psi": -1.0}


class Order(str, enum.Enum):
    SIMULTANEOUS = "simultaneous"
    ALTERNATING = "alternating"
    MAXIMIZER_FIRST = "maximizer_first"


def parse_permutation(perm):
    if isinstance(perm, str):
        perm = [p.strip() for p in perm.split(",")]
    perm = tuple(perm)
    if sorted(perm) != sorted(PLAYERS):
        raise ValueError(f"permutation must order theta, phi, psi exactly once, got {perm}")
    return perm


@dataclass(frozen=True)
class ScheduleConfig:
    order: Order = Order.ALTERNATING
    eta: float = 2e-2
    beta: tuple = (0.0, 0.0, 0.0)
    max_iters: int = 1
    record_stride: int = 1
    permutation: tuple = PLAYERS

    def __post_init__(self):
        object.__setattr__(self, "order", Order(self.order))
        object.__setattr__(self, "beta", tuple(float(b) for b in self.beta))
        object.__setattr__(self, "permutation", parse_permutation(self.permutation))
        if len(self.beta) != 3:
            raise ValueError("beta must be a triad (beta_theta, beta_phi, beta_psi)")
        if not self.eta > 0:
            raise ValueError("eta must be positive")
        if int(self.max_iters) < 1 or int(self.record_stride) < 1:
            raise ValueError("max_iters and record_stride must be >= 1")

    def stages(self):
        if self.order is Order.SIMULTANEOUS:
            return (PLAYERS,)
        if self.order is Order.ALTERNATING:
            return tuple((p,) for p in self.permutation)
        return (("theta",), ("phi", "psi"))


def _advance(spec, cur, prev, eta, betas, stages):
    """One update of all players; ``cur``/``prev`` map player -> array."""
    fresh = dict(cur)
    new = {}
    for stage in stages:
        grads = {n: partial_gradient(spec, n, fresh["theta"], fresh["phi"], fresh["psi"]) for n in stage}
        for n in stage:
            x = cur[n]
            if SIGNS[n] > 0:
                new[n] = x + eta * grads[n] + betas[n] * (x - prev[n])
            else:
                new[n] = x - eta * grads[n] + betas[n] * (x - prev[n])
        for n in stage:
            fresh[n] = new[n]
    return new


def _step(spec, state_t, state_prev, cfg, stages):
    spec.check_state(state_t)
    spec.check_state(state_prev)
    cur = {n: getattr(state_t, n) for n in PLAYERS}
    prev = {n: getattr(state_prev, n) for n in PLAYERS}
    betas = dict(zip(PLAYERS, cfg.beta))
    with np.errstate(over="ignore", invalid="ignore"):
        new = _advance(spec, cur, prev, cfg.eta, betas, stages)
    return PlayerState(new["theta"], new["phi"], new["psi"])


def step_dual_alternating(spec, state_t, state_prev, cfg):
    if spec.kind is not GameKind.DUAL_BILINEAR:
        raise ValueError("step_dual_alternating needs a dual_bilinear game")
    return _step(spec, state_t, state_prev, cfg, tuple((p,) for p in cfg.permutation))


def step_dual_simultaneous(spec, state_t, state_prev, cfg):
    if spec.kind is not GameKind.DUAL_BILINEAR:
        raise ValueError("step_dual_simultaneous needs a dual_bilinear game")
    return _step(spec, state_t, state_prev, cfg, (PLAYERS,))


def step_trilinear(spec, state_t, state_prev, cfg):
    if spec.kind is not GameKind.TRILINEAR:
        raise ValueError("step_trilinear needs a trilinear game")
    return _step(spec, state_t, state_prev, cfg, cfg.stages())


def step(spec, state_t, state_prev, cfg):
    """One update of ``spec`` under ``cfg.order`` (any game kind)."""
    return _step(spec, state_t, state_prev, cfg, cfg.stages())


def _bad_rows(arrays):
    bad = None
    for x in arrays:
        row_bad = ~np.all(np.abs(x) <= DIVERGENCE_THRESHOLD, axis=-1)
        bad = row_bad if bad is None else bad | row_bad
    return bad


@dataclass
class Trajectory:
    """Sampled states of one run.

    ``terminal`` is ``"completed"`` or ``"diverged"``; for diverged runs
    ``diverged_at`` is the iteration that produced the offending state, which
    is also the endpoint.
    """

    points: list
    terminal: str
    endpoint: PlayerState
    initial: PlayerState
    diverged_at: int | None = None

    @property
    def iterations(self):
        return [i for i, _ in self.points]

    def as_array(self):
        return np.array([s.as_vector() for _, s in self.points])


def run(spec, initial, cfg):
    """Iterate the update rule ``cfg.max_iters`` times from ``initial``.

    The first velocity is zero (the previous state equals ``initial``). The
    run stops early, flagged as diverged, once any entry exceeds 1e12 in
    magnitude or is non-finite.
    """
    spec.check_state(initial)
    stages = cfg.stages()
    betas = dict(zip(PLAYERS, cfg.beta))
    cur = {n: getattr(initial, n)[None, :] for n in PLAYERS}
    prev = cur
    points = [(0, initial)]
    terminal, diverged_at = "completed", None
    t = 0
    with np.errstate(over="ignore", invalid="ignore"):
        for t in range(1, cfg.max_iters + 1):
            new = _advance(spec, cur, prev, cfg.eta, betas, stages)
            prev, cur = cur, new
            if _bad_rows(cur.values())[0]:
                terminal, diverged_at = "diverged", t
                break
            if t % cfg.record_stride == 0:
                points.append((t, PlayerState(*(cur[n][0] for n in PLAYERS))))
    endpoint = PlayerState(*(cur[n][0] for n in PLAYERS))
    if points[-1][0] != t:
        points.append((t, endpoint))
    return Trajectory(points, terminal, endpoint, initial, diverged_at)


def run_batch(spec, initial, betas, order, eta, iters, permutation=PLAYERS):
    """Run many momentum configurations at once from a common start.

    ``betas`` has shape (n, 3); ``eta`` is a scalar or a length-n array.
    Rows are independent, so each row is bit-identical to :func:`run` with
    the same settings. Diverged rows are frozen at their offending state.

    Returns ``(endpoints, diverged_at)`` with endpoints of shape
    (n, d + p + q) and ``diverged_at`` = -1 for completed rows.
    """
    spec.check_state(initial)
    betas = np.asarray(betas, dtype=float).reshape(-1, 3)
    n = betas.shape[0]
    cfg = ScheduleConfig(order=order, eta=1.0, beta=(0, 0, 0), permutation=permutation)
    stages = cfg.stages()
    eta_arr = np.broadcast_to(np.asarray(eta, dtype=float), (n,)).copy()[:, None]

    cur = {p: np.repeat(getattr(initial, p)[None, :], n, axis=0) for p in PLAYERS}
    prev = cur
    beta_cols = {p: betas[:, i:i + 1].copy() for i, p in enumerate(PLAYERS)}
    active = np.arange(n)
    endpoints = np.empty((n, spec.size))
    diverged_at = np.full(n, -1, dtype=np.int64)
    eta_scalar = eta_arr[0, 0] if np.all(eta_arr == eta_arr[0, 0]) else None

    with np.errstate(over="ignore", invalid="ignore"):
        for t in range(1, int(iters) + 1):
            if active.size == 0:
                break
            step_eta = eta_scalar if eta_scalar is not None else eta_arr
            new = _advance(spec, cur, prev, step_eta, beta_cols, stages)
            prev, cur = cur, new
            bad = _bad_rows(cur.values())
            if bad.any():
                rows = active[bad]
                endpoints[rows] = np.hstack([cur[p][bad] for p in PLAYERS])
                diverged_at[rows] = t
                keep = ~bad
                active = active[keep]
                cur = {p: cur[p][keep] for p in PLAYERS}
                prev = {p: prev[p][keep] for p in PLAYERS}
                beta_cols = {p: beta_cols[p][keep] for p in PLAYERS}
                eta_arr = eta_arr[keep]
    if active.size:
        endpoints[active] = np.hstack([cur[p] for p in PLAYERS])
    return endpoints, diverged_at


@dataclass
class EquilibriumReport:
    distance_to_nash: float
    capped_distance: float
    per_player_abs: tuple
    suboptimal_player: str | None
    terminal: str = "completed"
    diverged_at: int | None = None
    endpoint: list = field(default_factory=list)

    def to_dict(self):
        return {
            "distance_to_nash": self.distance_to_nash,
            "capped_distance": self.capped_distance,
            "per_player_abs": list(self.per_player_abs),
            "suboptimal_player": self.suboptimal_player,
            "terminal": self.terminal,
            "diverged_at": self.diverged_at,
            "endpoint": list(self.endpoint),
        }

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def default_tolerance(initial):
    norm = float(np.linalg.norm(initial.as_vector()))
    return 1e-3 * norm if norm > 0 else 1e-3


def classify_endpoint(endpoint, tol, diverged=False):
    """Distance-to-Nash report for an endpoint ``PlayerState``.

    The suboptimal player is the unique block whose max-norm exceeds ``tol``
    while the other two are within it; it is never set for diverged runs.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    vec = endpoint.as_vector()
    with np.errstate(over="ignore", invalid="ignore"):
        dist = float(np.linalg.norm(vec))
    if not np.isfinite(dist):
        dist = float("inf")
    blocks = tuple(float(np.max(np.abs(getattr(endpoint, n)))) for n in PLAYERS)
    suboptimal = None
    if not diverged:
        above = [n for n, m in zip(PLAYERS, blocks) if m > tol]
        if len(above) == 1:
            suboptimal = above[0]
    capped = 1.0 if diverged else min(dist, 1.0)
    return EquilibriumReport(dist, capped, blocks, suboptimal,
                             "diverged" if diverged else "completed", None,
                             [float(x) for x in vec])


def classify_equilibrium(traj, tol=None):
    """Report the endpoint's distance to the Nash point 0.

    ``tol`` defaults to 1e-3 times the norm of the initial state.
    """
    if tol is None:
        tol = default_tolerance(traj.initial)
    report = classify_endpoint(traj.endpoint, tol, diverged=traj.terminal == "diverged")
    report.diverged_at = traj.diverged_at
    return report


def _column_names(dims):
    names = ["iter"]
    for player, n in zip(PLAYERS, dims):
        names += [player] if n == 1 else [f"{player}_{i}" for i in range(n)]
    return names


def write_trajectory_csv(traj, path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(_column_names(traj.initial.dims))
        for it, s in traj.points:
            writer.writerow([it] + [repr(float(x)) for x in s.as_vector()])


def read_trajectory_csv(path, dims):
    """Read back ``(iteration, PlayerState)`` rows written by :func:`write_trajectory_csv`."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != _column_names(dims):
            raise ValueError(f"unexpected header {header}")
        return [(int(row[0]), PlayerState.from_vector([float(x) for x in row[1:]], dims))
                for row in reader]
