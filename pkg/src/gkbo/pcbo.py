"""Clustered consensus-based baseline solver.

Plain consensus dynamics extended with a fixed number of cluster centres:
every particle is hard-assigned to its nearest centre, each centre is the
softmax consensus of its particles, and every particle drifts toward its
centre with multiplicative noise. Unlike the leader-follower solver there are
no labels, no per-step time scale on the drift, and noise is applied to every
particle.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NumericError
from .objectives import ObjectiveSpec
from .solver import (
    DiffusionMode,
    RunReport,
    StallTracker,
    _diffusion_scale,
    _distinct_rows,
    _update_stall,
)

__all__ = ["PcboConfig", "pcbo_assign", "pcbo_step", "run_pcbo"]


@dataclass
class PcboConfig:
    """Hyperparameters of the clustered baseline solver."""

    nu: float = 1.0
    sigma: float = 0.5
    alpha: float = 5e6
    n_clusters: int = 4
    n_steps: int = 10_000
    delta_stall: float = 1e-4
    j_stall: int = 1000
    diffusion: DiffusionMode = DiffusionMode.ANISOTROPIC
    seed: int = 0
    init_lo: float = -10.0
    init_hi: float = 10.0

    def __post_init__(self) -> None:
        self.diffusion = DiffusionMode(self.diffusion)

    def validate(self) -> None:
        """Raise ValueError on any out-of-range hyperparameter."""
        if not np.isfinite(float(self.nu)) or float(self.nu) <= 0.0:
            raise ValueError(f"nu must be finite and positive, got {self.nu}")
        for name in ("sigma", "delta_stall"):
            value = float(getattr(self, name))
            if not np.isfinite(value) or value < 0.0:
                raise ValueError(f"{name} must be finite and non-negative, got {value}")
        if not np.isfinite(float(self.alpha)) or float(self.alpha) <= 0.0:
            raise ValueError(f"alpha must be finite and positive, got {self.alpha}")
        if int(self.n_clusters) < 1:
            raise ValueError(f"n_clusters must be at least 1, got {self.n_clusters}")
        if int(self.n_steps) < 0:
            raise ValueError(f"n_steps must be non-negative, got {self.n_steps}")
        if int(self.j_stall) < 1:
            raise ValueError(f"j_stall must be at least 1, got {self.j_stall}")
        if int(self.seed) < 0:
            raise ValueError(f"seed must be non-negative, got {self.seed}")
        lo, hi = float(self.init_lo), float(self.init_hi)
        if not (np.isfinite(lo) and np.isfinite(hi)) or not lo < hi:
            raise ValueError(f"invalid initialization box [{lo}, {hi}]")


def pcbo_assign(positions: np.ndarray, centres: np.ndarray) -> np.ndarray:
    """Index of the nearest centre for every particle, ties to the lowest index."""
    positions = np.asarray(positions, dtype=np.float64)
    centres = np.asarray(centres, dtype=np.float64)
    if positions.ndim != 2 or centres.ndim != 2 or centres.shape[0] < 1:
        raise ValueError("positions and centres must be 2-d with at least one centre")
    if positions.shape[1] != centres.shape[1]:
        raise ValueError(
            f"dimension mismatch: particles are {positions.shape[1]}-d, "
            f"centres are {centres.shape[1]}-d"
        )
    diff = positions[:, np.newaxis, :] - centres[np.newaxis, :, :]
    sq_dist = np.einsum("njd,njd->nj", diff, diff)
    return np.argmin(sq_dist, axis=1)


def _finite_energies(energies: np.ndarray) -> None:
    if not np.isfinite(energies).all():
        bad = int(np.flatnonzero(~np.isfinite(energies))[0])
        raise NumericError(f"particle {bad} has a non-finite objective value")


def _soft_centres(
    positions: np.ndarray,
    energies: np.ndarray,
    memberships: np.ndarray,
    alpha: float,
) -> np.ndarray:
    """Softmax centres under fractional memberships (rows of ``memberships`` sum to 1).

    The objective weights are shifted by the global minimum before
    exponentiation; the shift cancels in the ratio and keeps every exponent
    non-positive.
    """
    weights = np.exp(-alpha * (energies - energies.min()))
    weighted = memberships * weights[:, np.newaxis]
    denom = weighted.sum(axis=0)
    return (weighted.T @ positions) / denom[:, np.newaxis]


def _hard_centres(
    positions: np.ndarray,
    energies: np.ndarray,
    assignment: np.ndarray,
    n_clusters: int,
    alpha: float,
    prev_centres: np.ndarray,
) -> np.ndarray:
    """Per-cluster softmax centres under a hard assignment.

    Weights are shifted by each cluster's own minimum. A cluster with no
    particles keeps its previous centre.
    """
    cluster_min = np.full(n_clusters, np.inf)
    np.minimum.at(cluster_min, assignment, energies)
    occupied = np.isfinite(cluster_min)
    shift = np.where(occupied, cluster_min, 0.0)
    weights = np.exp(-alpha * (energies - shift[assignment]))
    denom = np.bincount(assignment, weights=weights, minlength=n_clusters)
    centres = np.empty((n_clusters, positions.shape[1]))
    for axis in range(positions.shape[1]):
        centres[:, axis] = np.bincount(
            assignment, weights=weights * positions[:, axis], minlength=n_clusters
        )
    centres[occupied] /= denom[occupied, np.newaxis]
    centres[~occupied] = prev_centres[~occupied]
    return centres


def pcbo_step(
    positions: np.ndarray,
    assignment: np.ndarray,
    centres: np.ndarray,
    spec: ObjectiveSpec,
    cfg: PcboConfig,
    rng: np.random.Generator,
    energies: np.ndarray | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """One synchronous baseline step: refresh centres, then move every particle.

    Centres are recomputed from the pre-move positions under the given
    assignment (clusters left empty keep their previous centre from
    ``centres``). Every particle then moves by ``nu`` times its gap to its
    cluster's new centre plus ``sigma * D(x) xi`` with a fresh standard normal
    draw per particle in particle order. Returns the new positions and the new
    centres.
    """
    positions = np.asarray(positions, dtype=np.float64)
    if energies is None:
        energies = spec.evaluate_batch(positions)
    else:
        energies = np.asarray(energies, dtype=np.float64)
        if energies.shape != (positions.shape[0],):
            raise ValueError(
                f"energies must have shape ({positions.shape[0]},), got {energies.shape}"
            )
    _finite_energies(energies)

    new_centres = _hard_centres(
        positions, energies, assignment, centres.shape[0], cfg.alpha, centres
    )
    gap = new_centres[assignment] - positions
    noise = rng.standard_normal(positions.shape)
    scale = _diffusion_scale(gap, cfg.diffusion)
    # an overflow here is reported as NumericError below, not as a warning
    with np.errstate(over="ignore", invalid="ignore"):
        new_positions = positions + cfg.nu * gap + cfg.sigma * scale * noise

    finite_rows = np.isfinite(new_positions).all(axis=1)
    if not finite_rows.all():
        bad = int(np.flatnonzero(~finite_rows)[0])
        raise NumericError(f"particle {bad} reached a non-finite position")
    return new_positions, new_centres


def run_pcbo(spec: ObjectiveSpec, cfg: PcboConfig, n_particles: int = 600) -> RunReport:
    """Run the clustered baseline to stall or the step budget.

    Initialization draws positions uniformly from the configured box, then
    fractional memberships uniformly from [0, 1] (rows normalized); those only
    seed the first centres, after which assignment is always hard nearest
    centre. Stall detection watches each particle's own centre, same rule as
    the leader-follower solver. Equal configurations produce identical
    reports.
    """
    n_particles = int(n_particles)
    if n_particles < 1:
        raise ValueError(f"need at least one particle, got {n_particles}")
    cfg.validate()
    rng = np.random.default_rng(cfg.seed)
    n_clusters = int(cfg.n_clusters)

    positions = rng.uniform(cfg.init_lo, cfg.init_hi, size=(n_particles, spec.dim))
    energies = spec.evaluate_batch(positions)
    evaluations = n_particles
    _finite_energies(energies)

    memberships = rng.random((n_particles, n_clusters))
    memberships /= memberships.sum(axis=1, keepdims=True)
    centres = _soft_centres(positions, energies, memberships, float(cfg.alpha))
    assignment = pcbo_assign(positions, centres)
    tracker = StallTracker(
        counters=np.zeros(n_particles, dtype=np.int64),
        estimates=centres[assignment].copy(),
    )

    steps = 0
    stall = 0
    while steps < cfg.n_steps and stall < cfg.j_stall:
        positions, centres = pcbo_step(
            positions, assignment, centres, spec, cfg, rng, energies=energies
        )
        tracker, stall = _update_stall(tracker, centres[assignment], float(cfg.delta_stall))
        energies = spec.evaluate_batch(positions)
        evaluations += n_particles
        assignment = pcbo_assign(positions, centres)
        steps += 1

    return RunReport(
        iterations=steps,
        stalled=stall >= cfg.j_stall,
        final_consensus=_distinct_rows(centres),
        leader_count=n_clusters,
        best_value=float(energies.min()),
        evaluations=evaluations,
        seed=int(cfg.seed),
    )
