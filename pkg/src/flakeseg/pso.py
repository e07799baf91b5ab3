"""Particle swarm optimization over box bounds.

Velocity update with linearly decaying inertia, per-dimension random
coefficients, and clamp-to-bounds with the offending velocity component
zeroed.  Each agent draws from its own RNG stream seeded by
``(seed, run, agent)`` so serial and threaded evaluation agree bit for bit.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np


@dataclass
class SwarmConfig:
    bounds: list = field(default_factory=lambda: [(0.0, 1.0)])
    n_agents: int = 20
    n_iters: int = 30
    n_runs: int = 5
    c1: float = 2.0
    c2: float = 2.0
    omega_max: float = 0.9
    omega_min: float = 0.4
    seed: int = 0
    maximize: bool = True
    n_jobs: int = 1

    def __post_init__(self):
        self.bounds = [tuple(map(float, b)) for b in self.bounds]
        if self.n_agents < 2:
            raise ValueError("n_agents must be >= 2")
        if self.n_iters < 1 or self.n_runs < 1:
            raise ValueError("n_iters and n_runs must be >= 1")
        for lo, hi in self.bounds:
            if not lo < hi:
                raise ValueError(f"malformed bound [{lo}, {hi}]")
        if self.omega_min > self.omega_max:
            raise ValueError("omega_min must not exceed omega_max")

    @property
    def lower(self):
        return np.array([b[0] for b in self.bounds])

    @property
    def upper(self):
        return np.array([b[1] for b in self.bounds])


@dataclass
class SwarmState:
    positions: np.ndarray
    velocities: np.ndarray
    values: np.ndarray
    pbest: np.ndarray
    pbest_values: np.ndarray
    gbest: np.ndarray
    gbest_value: float
    iteration: int
    rngs: list


@dataclass
class SwarmResult:
    best_position: np.ndarray
    best_value: float
    run_histories: list
    run_bests: list


def inertia_weight(iteration, itermax, omega_max=0.9, omega_min=0.4):
    """Linearly decaying inertia: ``omega_max`` at iteration 1, ``omega_min`` at ``itermax``."""
    if itermax <= 1:
        return omega_min
    return (itermax - iteration) / (itermax - 1) * (omega_max - omega_min) + omega_min


def _score(values, maximize):
    # internal convention: larger is better, non-finite is worst
    v = np.asarray(values, dtype=np.float64)
    v = v if maximize else -v
    return np.where(np.isfinite(v), v, -np.inf)


def _evaluate(objective, positions, n_jobs):
    if n_jobs > 1:
        with ThreadPoolExecutor(n_jobs) as pool:
            vals = list(pool.map(objective, positions))
    else:
        vals = [objective(p) for p in positions]
    out = np.empty(len(vals))
    for i, v in enumerate(vals):
        try:
            out[i] = float(v)
        except (TypeError, ValueError):
            out[i] = np.nan
    return out


def init_swarm(objective, cfg: SwarmConfig, run=0):
    lo, hi = cfg.lower, cfg.upper
    rngs = [np.random.default_rng([cfg.seed, run, a]) for a in range(cfg.n_agents)]
    pos = np.stack([r.uniform(lo, hi) for r in rngs])
    vel = np.zeros_like(pos)
    values = _evaluate(objective, pos, cfg.n_jobs)
    scores = _score(values, cfg.maximize)
    best = int(np.argmax(scores))
    return SwarmState(positions=pos, velocities=vel, values=values,
                      pbest=pos.copy(), pbest_values=values.copy(),
                      gbest=pos[best].copy(), gbest_value=float(values[best]),
                      iteration=0, rngs=rngs)


def step(state: SwarmState, cfg: SwarmConfig, objective, omega=None):
    """Advance the swarm by one iteration and return the new state."""
    it = state.iteration + 1
    if omega is None:
        omega = inertia_weight(it, cfg.n_iters, cfg.omega_max, cfg.omega_min)
    lo, hi = cfg.lower, cfg.upper
    dim = state.positions.shape[1]
    r1 = np.stack([r.random(dim) for r in state.rngs])
    r2 = np.stack([r.random(dim) for r in state.rngs])
    vel = (omega * state.velocities
           + cfg.c1 * r1 * (state.pbest - state.positions)
           + cfg.c2 * r2 * (state.gbest - state.positions))
    pos = state.positions + vel
    clamped = (pos < lo) | (pos > hi)
    pos = np.clip(pos, lo, hi)
    vel = np.where(clamped, 0.0, vel)

    values = _evaluate(objective, pos, cfg.n_jobs)
    scores = _score(values, cfg.maximize)
    improved = scores > _score(state.pbest_values, cfg.maximize)
    pbest = np.where(improved[:, None], pos, state.pbest)
    pbest_values = np.where(improved, values, state.pbest_values)

    gbest, gbest_value = state.gbest, state.gbest_value
    pscores = _score(pbest_values, cfg.maximize)
    best = int(np.argmax(pscores))
    if pscores[best] > _score([gbest_value], cfg.maximize)[0]:
        gbest, gbest_value = pbest[best].copy(), float(pbest_values[best])
    return SwarmState(positions=pos, velocities=vel, values=values, pbest=pbest,
                      pbest_values=pbest_values, gbest=gbest, gbest_value=gbest_value,
                      iteration=it, rngs=state.rngs)


def run_swarm(objective, cfg: SwarmConfig, run=0, callback=None):
    """One independent run; returns the final state and the gbest value per iteration."""
    state = init_swarm(objective, cfg, run)
    history = []
    for _ in range(cfg.n_iters):
        state = step(state, cfg, objective)
        history.append(state.gbest_value)
        if callback is not None:
            callback(state)
    return state, history


def optimize(objective, cfg: SwarmConfig | None = None, callback=None) -> SwarmResult:
    """Best result over ``cfg.n_runs`` independent runs.

    ``objective`` maps a 1-D position array to a float.
    """
    cfg = cfg or SwarmConfig()
    histories, bests = [], []
    best_pos, best_val = None, None
    for run in range(cfg.n_runs):
        state, hist = run_swarm(objective, cfg, run, callback)
        histories.append(hist)
        bests.append((state.gbest.copy(), state.gbest_value))
        if best_val is None or _score([state.gbest_value], cfg.maximize)[0] > _score([best_val], cfg.maximize)[0]:
            best_pos, best_val = state.gbest.copy(), state.gbest_value
    return SwarmResult(best_position=best_pos, best_value=float(best_val),
                       run_histories=histories, run_bests=bests)
