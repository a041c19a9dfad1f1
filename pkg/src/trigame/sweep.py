"""Grid search over per-player momentum triads.

Every (schedule, beta_theta, beta_phi, beta_psi) vertex is one run scored by
the capped Euclidean distance of its endpoint to the Nash point 0. Cells of
a schedule are simulated together with :func:`trigame.dynamics.run_batch`.
"""
from __future__ import annotations

import csv
import itertools
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .dynamics import Order, PLAYERS, classify_endpoint, default_tolerance, run_batch
from .games import GameSpec, PlayerState

CSV_HEADER = ["schedule", "beta_theta", "beta_phi", "beta_psi", "distance",
              "capped_distance", "terminal", "suboptimal_player"]


def default_grid(n=20):
    return tuple(float(x) for x in np.linspace(-1.0, 1.0, n))


@dataclass(frozen=True)
class SweepConfig:
    grid: tuple = field(default_factory=lambda: (default_grid(),) * 3)
    schedules: tuple = tuple(Order)
    eta: float = 2e-2
    iters: int = 100_000
    initial: PlayerState = field(default_factory=lambda: PlayerState.scalar(1.0, 1.0, 1.0))
    game: GameSpec = field(default_factory=GameSpec.trilinear)
    permutation: tuple = PLAYERS

    def __post_init__(self):
        grid = tuple(tuple(float(x) for x in axis) for axis in self.grid)
        if len(grid) != 3:
            raise ValueError("grid needs one value sequence per player")
        if not all(np.all(np.isfinite(axis)) and len(axis) > 0 for axis in grid):
            raise ValueError("grid values must be finite and non-empty")
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "schedules", tuple(Order(s) for s in self.schedules))
        if not self.eta > 0 or int(self.iters) < 1:
            raise ValueError("eta must be positive and iters >= 1")
        self.game.check_state(self.initial)

    @classmethod
    def with_grid_size(cls, n, **kwargs):
        return cls(grid=(default_grid(n),) * 3, **kwargs)

    @property
    def n_cells(self):
        return len(self.schedules) * int(np.prod([len(axis) for axis in self.grid]))

    def triads(self):
        """Momentum triads in lexicographic order (beta_theta slowest)."""
        return np.array(list(itertools.product(*self.grid)), dtype=float).reshape(-1, 3)

    @classmethod
    def from_dict(cls, doc):
        kwargs = {}
        if "grid" in doc:
            grid = doc["grid"]
            kwargs["grid"] = (default_grid(grid),) * 3 if isinstance(grid, int) else grid
        if "schedules" in doc:
            kwargs["schedules"] = doc["schedules"]
        for key in ("eta", "iters"):
            if key in doc:
                kwargs[key] = doc[key]
        if "game" in doc:
            kwargs["game"] = GameSpec.from_dict(doc["game"])
        if "initial" in doc:
            game = kwargs.get("game", GameSpec.trilinear())
            kwargs["initial"] = PlayerState.from_vector(doc["initial"], game.dims)
        if "permutation" in doc:
            kwargs["permutation"] = tuple(doc["permutation"])
        return cls(**kwargs)


@dataclass(frozen=True)
class SweepCell:
    schedule: Order
    beta: tuple
    distance: float
    capped_distance: float
    terminal: str
    suboptimal_player: str | None = None
    diverged_at: int | None = None

    def to_row(self):
        terminal = self.terminal if self.diverged_at is None else f"{self.terminal}:{self.diverged_at}"
        return [self.schedule.value, *(repr(float(b)) for b in self.beta),
                repr(float(self.distance)), repr(float(self.capped_distance)),
                terminal, self.suboptimal_player or ""]

    @classmethod
    def from_row(cls, row):
        terminal, _, at = row[6].partition(":")
        return cls(Order(row[0]), tuple(float(x) for x in row[1:4]), float(row[4]),
                   float(row[5]), terminal, row[7] or None, int(at) if at else None)


def _run_chunk(args):
    game, initial, betas, order, eta, iters, permutation = args
    return run_batch(game, initial, betas, order, eta, iters, permutation)


def run_sweep(cfg=None, n_jobs=1, chunk_size=2000):
    """Simulate every grid vertex; cells come back schedule-major, then
    lexicographic in (beta_theta, beta_phi, beta_psi).

    ``n_jobs > 1`` spreads chunks over worker processes. Rows never interact,
    so the output does not depend on how cells are chunked or scheduled.
    """
    cfg = cfg or SweepConfig()
    triads = cfg.triads()
    tol = default_tolerance(cfg.initial)
    tasks = []
    for order in cfg.schedules:
        for start in range(0, len(triads), chunk_size):
            tasks.append((cfg.game, cfg.initial, triads[start:start + chunk_size],
                          order, cfg.eta, cfg.iters, cfg.permutation))
    if n_jobs and n_jobs > 1:
        with ProcessPoolExecutor(max_workers=n_jobs) as pool:
            results = list(pool.map(_run_chunk, tasks))
    else:
        results = [_run_chunk(t) for t in tasks]

    cells = []
    for task, (endpoints, diverged_at) in zip(tasks, results):
        order, betas = task[3], task[2]
        for beta, vec, at in zip(betas, endpoints, diverged_at):
            state = PlayerState.from_vector(vec, cfg.game.dims)
            diverged = at >= 0
            report = classify_endpoint(state, tol, diverged=diverged)
            cells.append(SweepCell(order, tuple(float(b) for b in beta), report.distance_to_nash,
                                   report.capped_distance, report.terminal,
                                   report.suboptimal_player, int(at) if diverged else None))
    return cells


def summarize(cells, epsilon=0.05):
    """Per-schedule counts partitioning the cells.

    Buckets are checked in order: diverged, near Nash (distance < epsilon),
    axis equilibrium (a unique suboptimal player), other.
    """
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    summary = {}
    for cell in cells:
        s = summary.setdefault(cell.schedule.value, {
            "near_nash_count": 0, "axis_equilibrium_count": 0,
            "diverged_count": 0, "other_count": 0, "total": 0})
        s["total"] += 1
        if cell.terminal == "diverged":
            s["diverged_count"] += 1
        elif cell.distance < epsilon:
            s["near_nash_count"] += 1
        elif cell.suboptimal_player is not None:
            s["axis_equilibrium_count"] += 1
        else:
            s["other_count"] += 1
    return summary


def near_nash_count(summary, schedule):
    return summary.get(Order(schedule).value, {}).get("near_nash_count", 0)


def write_sweep_csv(cells, path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_HEADER)
        for cell in cells:
            writer.writerow(cell.to_row())


def read_sweep_csv(path):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != CSV_HEADER:
            raise ValueError(f"unexpected header {header}")
        return [SweepCell.from_row(row) for row in reader]


def write_summary_json(summary, path, **extra):
    doc = {"summary": summary, **extra}
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
