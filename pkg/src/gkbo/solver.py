"""Leader-follower kinetic particle solver.

A population of agents minimizes a black-box objective. Agents carry a binary
leadership label. Each step, every agent is grouped with its nearest leader;
each group computes a softmax consensus point concentrated on its best agent;
leaders drift toward their group's consensus point while followers drift
toward their leader's position with multiplicative noise. Leadership itself is
re-negotiated each step from rank-based weights, so exploration and
exploitation are balanced by the population, not by a schedule.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace

import numpy as np

from .ensemble import (
    Ensemble,
    WeightVector,
    apply_label_transitions,
    compute_weights,
    deterministic_label_pass,
    init_uniform,
)
from .errors import EmptyLeaderSetError, NumericError
from .objectives import ObjectiveSpec

__all__ = [
    "DiffusionMode",
    "SolverConfig",
    "ClusterState",
    "StallTracker",
    "RunReport",
    "assign_clusters",
    "cluster_consensus",
    "cluster_weights",
    "diffusion_matrix",
    "interaction_step",
    "check_stall",
    "run_gkbo",
]


class DiffusionMode(enum.Enum):
    """Shape of the multiplicative noise applied to followers.

    ISOTROPIC scales an independent Gaussian identically in every direction by
    the distance to the agent's consensus estimate; ANISOTROPIC scales each
    coordinate by that coordinate of the gap, so directions already agreed on
    receive no noise.
    """

    ISOTROPIC = "isotropic"
    ANISOTROPIC = "anisotropic"


@dataclass
class SolverConfig:
    """Hyperparameters of the leader-follower solver.

    Defaults follow the reference operating point used by the benchmark
    experiments: time step ``eps`` 0.1, softmax sharpness ``alpha`` 5e6,
    follower/leader drift strengths 1 and 2, anisotropic noise with strength
    2.5, 12 leaders, at most 10000 steps with a stall window of 1000 steps at
    tolerance 1e-4, and initialization in the box [-10, 10]^d.
    """

    nu_f: float = 1.0
    nu_l: float = 2.0
    sigma_f: float = 2.5
    eps: float = 0.1
    alpha: float = 5e6
    n_leaders: int = 12
    n_steps: int = 10_000
    delta_stall: float = 1e-4
    j_stall: int = 1000
    diffusion: DiffusionMode = DiffusionMode.ANISOTROPIC
    seed: int = 0
    init_lo: float = -10.0
    init_hi: float = 10.0

    def __post_init__(self) -> None:
        self.diffusion = DiffusionMode(self.diffusion)

    def validate(self, n_agents: int | None = None) -> None:
        """Raise ValueError on any out-of-range hyperparameter."""
        for name in ("nu_f", "nu_l"):
            value = float(getattr(self, name))
            if not np.isfinite(value) or value <= 0.0:
                raise ValueError(f"{name} must be finite and positive, got {value}")
        for name in ("sigma_f", "delta_stall"):
            value = float(getattr(self, name))
            if not np.isfinite(value) or value < 0.0:
                raise ValueError(f"{name} must be finite and non-negative, got {value}")
        if not 0.0 < float(self.eps) <= 1.0:
            raise ValueError(f"eps must be in (0, 1], got {self.eps}")
        if not np.isfinite(float(self.alpha)) or float(self.alpha) <= 0.0:
            raise ValueError(f"alpha must be finite and positive, got {self.alpha}")
        if int(self.n_leaders) < 1:
            raise ValueError(f"n_leaders must be at least 1, got {self.n_leaders}")
        if int(self.n_steps) < 0:
            raise ValueError(f"n_steps must be non-negative, got {self.n_steps}")
        if int(self.j_stall) < 1:
            raise ValueError(f"j_stall must be at least 1, got {self.j_stall}")
        if int(self.seed) < 0:
            raise ValueError(f"seed must be non-negative, got {self.seed}")
        lo, hi = float(self.init_lo), float(self.init_hi)
        if not (np.isfinite(lo) and np.isfinite(hi)) or not lo < hi:
            raise ValueError(f"invalid initialization box [{lo}, {hi}]")
        if n_agents is not None and int(self.n_leaders) > int(n_agents):
            raise ValueError(
                f"n_leaders ({self.n_leaders}) cannot exceed the population size ({n_agents})"
            )

    def omega_bar(self, n_agents: int) -> float:
        """Weight threshold for label transitions: leaders over population."""
        return int(self.n_leaders) / int(n_agents)


@dataclass
class ClusterState:
    """Leader clusters of a population.

    ``leaders`` holds the leader agent indices in ascending order; cluster
    slot ``k`` belongs to ``leaders[k]``. ``leader_of[i]`` is the agent index
    of agent i's leader and ``cluster_of[i]`` the corresponding slot. After
    :func:`cluster_consensus`, ``consensus`` holds one point per cluster and
    ``agent_estimate[i]`` the consensus point of agent i's cluster.
    """

    leaders: np.ndarray
    leader_of: np.ndarray
    cluster_of: np.ndarray
    consensus: np.ndarray | None = None
    agent_estimate: np.ndarray | None = None

    @property
    def n_clusters(self) -> int:
        return int(self.leaders.shape[0])


@dataclass
class StallTracker:
    """Per-agent consecutive counts of small consensus-estimate moves."""

    counters: np.ndarray
    estimates: np.ndarray


@dataclass
class RunReport:
    """Outcome of one solver run.

    ``final_consensus`` holds the distinct consensus points at termination,
    one row per point, in first-occurrence order over the clusters. For the
    leader-follower solver ``leader_count`` is the number of leaders at
    termination; for the clustered-baseline solver it is the number of cluster
    centres. ``best_value`` is the lowest objective value in the final
    population and ``evaluations`` the total number of single-point objective
    evaluations consumed.
    """

    iterations: int
    stalled: bool
    final_consensus: np.ndarray
    leader_count: int
    best_value: float
    evaluations: int
    seed: int


def assign_clusters(ensemble: Ensemble) -> ClusterState:
    """Group every agent with its nearest leader.

    Followers join the leader at the smallest Euclidean distance, ties going
    to the leader with the lowest agent index. Every leader anchors its own
    cluster, so there are exactly as many clusters as leaders and none is
    empty. Raises EmptyLeaderSetError when the population has no leader.
    """
    leaders = ensemble.leader_indices()
    if leaders.size == 0:
        raise EmptyLeaderSetError("population has no leaders to cluster around")

    positions = ensemble.positions
    leader_pos = positions[leaders]
    # Accumulate squared distances one axis at a time; this avoids the
    # (n, leaders, dim) intermediate while adding terms in the same order as a
    # contraction over the trailing axis would.
    sq_dist = np.square(positions[:, 0, np.newaxis] - leader_pos[np.newaxis, :, 0])
    for axis in range(1, ensemble.dim):
        sq_dist += np.square(positions[:, axis, np.newaxis] - leader_pos[np.newaxis, :, axis])
    # argmin returns the first minimum, which is the lowest leader index since
    # leaders are listed in ascending order.
    cluster_of = np.argmin(sq_dist, axis=1)
    cluster_of[leaders] = np.arange(leaders.size)
    leader_of = leaders[cluster_of]
    return ClusterState(leaders=leaders, leader_of=leader_of, cluster_of=cluster_of)


def cluster_consensus(
    ensemble: Ensemble,
    spec: ObjectiveSpec | None,
    clusters: ClusterState,
    alpha: float,
    energies: np.ndarray | None = None,
) -> ClusterState:
    """Softmax consensus point of every cluster.

    Within each cluster the agents are combined with weights
    ``exp(-alpha * (E_i - E_min))`` where ``E_min`` is the cluster's lowest
    objective value; subtracting the per-cluster minimum keeps the exponent in
    [0, -inf) so the weights never overflow and the denominator is at least 1.
    Returns a new ClusterState carrying ``consensus`` and ``agent_estimate``.
    """
    alpha = float(alpha)
    if not np.isfinite(alpha) or alpha <= 0.0:
        raise ValueError(f"alpha must be finite and positive, got {alpha}")
    if energies is None:
        if spec is None:
            raise ValueError("either an objective or precomputed energies is required")
        energies = spec.evaluate_batch(ensemble.positions)
    else:
        energies = np.asarray(energies, dtype=np.float64)
        if energies.shape != (ensemble.n_agents,):
            raise ValueError(
                f"energies must have shape ({ensemble.n_agents},), got {energies.shape}"
            )
    if not np.isfinite(energies).all():
        bad = int(np.flatnonzero(~np.isfinite(energies))[0])
        raise NumericError(f"agent {bad} has a non-finite objective value")

    slots = clusters.cluster_of
    n_clusters = clusters.n_clusters
    cluster_min = np.full(n_clusters, np.inf)
    np.minimum.at(cluster_min, slots, energies)
    weights = np.exp(-alpha * (energies - cluster_min[slots]))
    denom = np.bincount(slots, weights=weights, minlength=n_clusters)
    positions = ensemble.positions
    consensus = np.empty((n_clusters, ensemble.dim))
    for axis in range(ensemble.dim):
        consensus[:, axis] = np.bincount(
            slots, weights=weights * positions[:, axis], minlength=n_clusters
        )
    consensus /= denom[:, np.newaxis]
    return replace(clusters, consensus=consensus, agent_estimate=consensus[slots])


def cluster_weights(
    ensemble: Ensemble,
    clusters: ClusterState,
    spec: ObjectiveSpec | None = None,
    energies: np.ndarray | None = None,
) -> WeightVector:
    """Rank every agent against its own cluster instead of the population.

    Within each cluster the weight of an agent is the fraction of cluster
    members whose value lies strictly closer to the cluster's best value, so
    the cluster's best agent always gets weight zero and exact ties share a
    rank. ``best_index`` still reports the population-wide best agent.

    This is the standing used for label transitions inside :func:`run_gkbo`:
    comparing agents only to their own cluster keeps leader turnover local, so
    one well-converged cluster cannot demote the leaders of every other one.
    :func:`gkbo.ensemble.compute_weights` is the population-wide counterpart.
    """
    if energies is None:
        if spec is None:
            raise ValueError("either spec or energies is required")
        energies = spec.evaluate_batch(ensemble.positions)
    energies = np.asarray(energies, dtype=np.float64)
    if energies.shape != (ensemble.n_agents,):
        raise ValueError("energies must hold one value per agent")
    if not np.isfinite(energies).all():
        agent = int(np.flatnonzero(~np.isfinite(energies))[0])
        raise NumericError(f"objective produced a non-finite value for agent {agent}")
    if clusters.cluster_of.shape != (ensemble.n_agents,):
        raise ValueError("cluster state does not match the population")

    slots = clusters.cluster_of
    n_clusters = clusters.n_clusters
    cluster_min = np.full(n_clusters, np.inf)
    np.minimum.at(cluster_min, slots, energies)
    gaps = np.abs(energies - cluster_min[slots])
    sizes = np.bincount(slots, minlength=n_clusters)

    # Strict rank within each cluster, ties sharing the lowest rank: sort by
    # (cluster, gap), then the rank of an agent is the offset of its tie run's
    # first element from the start of its cluster block.
    order = np.lexsort((gaps, slots))
    sorted_slots = slots[order]
    sorted_gaps = gaps[order]
    position = np.arange(ensemble.n_agents)
    new_block = np.ones(ensemble.n_agents, dtype=bool)
    new_block[1:] = sorted_slots[1:] != sorted_slots[:-1]
    new_run = new_block.copy()
    new_run[1:] |= sorted_gaps[1:] != sorted_gaps[:-1]
    block_first = np.maximum.accumulate(np.where(new_block, position, -1))
    run_first = np.maximum.accumulate(np.where(new_run, position, -1))
    omega = np.empty(ensemble.n_agents, dtype=np.float64)
    omega[order] = (run_first - block_first) / sizes[sorted_slots]
    return WeightVector(omega=omega, best_index=int(np.argmin(energies)))


def diffusion_matrix(x, x_hat, mode: DiffusionMode) -> np.ndarray:
    """Noise-shaping matrix D for one agent, as a (d, d) array.

    Isotropic: the identity scaled by the Euclidean distance between the agent
    and its consensus estimate. Anisotropic: the diagonal matrix of the
    coordinate gaps.
    """
    x = np.asarray(x, dtype=np.float64)
    x_hat = np.asarray(x_hat, dtype=np.float64)
    if x.ndim != 1 or x_hat.shape != x.shape:
        raise ValueError(
            f"expected two 1-d points of equal shape, got {x.shape} and {x_hat.shape}"
        )
    delta = x_hat - x
    if DiffusionMode(mode) is DiffusionMode.ISOTROPIC:
        return float(np.linalg.norm(delta)) * np.eye(x.size)
    return np.diag(delta)


def _diffusion_scale(delta: np.ndarray, mode: DiffusionMode) -> np.ndarray:
    """Per-agent elementwise noise scale equivalent to applying D to a draw."""
    if mode is DiffusionMode.ISOTROPIC:
        return np.linalg.norm(delta, axis=1, keepdims=True)
    return delta


def interaction_step(
    ensemble: Ensemble,
    clusters: ClusterState,
    cfg: SolverConfig,
    rng: np.random.Generator,
    step: int | None = None,
) -> Ensemble:
    """Move every agent once, synchronously.

    All reads (leader positions, consensus estimates) refer to the pre-step
    state. A leader moves by ``eps * nu_l`` of its gap to its cluster's
    consensus point and draws no randomness. A follower moves by
    ``eps * nu_f`` of its gap to its leader's position plus
    ``sqrt(eps) * sigma_f * D(x) xi`` with a fresh standard normal draw per
    follower, taken in agent order; D is shaped by the follower's consensus
    estimate according to ``cfg.diffusion``. Labels are unchanged. Raises
    NumericError naming the first offending agent (and the step, when given)
    if any new position is non-finite.
    """
    if clusters.agent_estimate is None:
        raise ValueError("cluster state lacks consensus estimates; run cluster_consensus first")

    positions = ensemble.positions
    estimates = clusters.agent_estimate
    is_leader = ensemble.labels == 1
    new_positions = positions.copy()

    if is_leader.any():
        gap = estimates[is_leader] - positions[is_leader]
        new_positions[is_leader] += cfg.eps * cfg.nu_l * gap

    follower_idx = np.flatnonzero(~is_leader)
    if follower_idx.size:
        pos_f = positions[follower_idx]
        drift = cfg.eps * cfg.nu_f * (positions[clusters.leader_of[follower_idx]] - pos_f)
        noise = rng.standard_normal((follower_idx.size, ensemble.dim))
        scale = _diffusion_scale(estimates[follower_idx] - pos_f, cfg.diffusion)
        # an overflow here is reported as NumericError below, not as a warning
        with np.errstate(over="ignore", invalid="ignore"):
            new_positions[follower_idx] = (
                pos_f + drift + math.sqrt(cfg.eps) * cfg.sigma_f * scale * noise
            )

    finite_rows = np.isfinite(new_positions).all(axis=1)
    if not finite_rows.all():
        agent = int(np.flatnonzero(~finite_rows)[0])
        suffix = "" if step is None else f" at step {step}"
        raise NumericError(f"agent {agent} reached a non-finite position{suffix}")
    return Ensemble(positions=new_positions, labels=ensemble.labels.copy())


def _update_stall(
    tracker: StallTracker, new_estimates: np.ndarray, delta_stall: float
) -> tuple[StallTracker, int]:
    small = np.abs(new_estimates - tracker.estimates).max(axis=1) <= delta_stall
    counters = np.where(small, tracker.counters + 1, 0)
    return StallTracker(counters=counters, estimates=new_estimates.copy()), int(counters.min())


def check_stall(
    tracker: StallTracker, clusters: ClusterState, delta_stall: float
) -> tuple[StallTracker, int]:
    """Advance the stall tracker with the latest per-agent consensus estimates.

    An agent's counter increments when its estimate moved by at most
    ``delta_stall`` in the max norm since the previous check and resets to
    zero otherwise, so it counts consecutive quiet steps. Returns the new
    tracker and the population-wide stall indicator: the minimum counter.
    """
    if clusters.agent_estimate is None:
        raise ValueError("cluster state lacks consensus estimates; run cluster_consensus first")
    delta_stall = float(delta_stall)
    if not np.isfinite(delta_stall) or delta_stall < 0.0:
        raise ValueError(f"delta_stall must be finite and non-negative, got {delta_stall}")
    if tracker.estimates.shape != clusters.agent_estimate.shape:
        raise ValueError("stall tracker does not match the population")
    return _update_stall(tracker, clusters.agent_estimate, delta_stall)


def _distinct_rows(points: np.ndarray) -> np.ndarray:
    """Distinct rows of a 2-d array in first-occurrence order."""
    _, first = np.unique(points, axis=0, return_index=True)
    return points[np.sort(first)]


def run_gkbo(spec: ObjectiveSpec, cfg: SolverConfig, n_agents: int = 600) -> RunReport:
    """Run the leader-follower solver to stall or the step budget.

    The population starts uniformly in the configured box, all followers, and
    one deterministic transition pass immediately promotes the agents whose
    population-wide rank weight is below ``n_leaders / n_agents``; the same
    pass is reapplied as a safety net if stochastic transitions ever leave the
    population leaderless. Each step then moves all agents, re-evaluates the
    objective once, applies stochastic label transitions driven by
    within-cluster standing (see :func:`cluster_weights`), reclusters, and
    recomputes the consensus points; the run stops after ``n_steps`` steps or
    once every agent's consensus estimate has stayed within ``delta_stall``
    (max norm) for ``j_stall`` consecutive steps.

    All randomness comes from one generator seeded with ``cfg.seed``, so equal
    configurations produce identical reports.
    """
    n_agents = int(n_agents)
    cfg.validate(n_agents)
    rng = np.random.default_rng(cfg.seed)
    omega_bar = cfg.omega_bar(n_agents)

    ens = init_uniform(n_agents, spec.dim, cfg.init_lo, cfg.init_hi, rng)
    energies = spec.evaluate_batch(ens.positions)
    evaluations = n_agents

    weights = compute_weights(ens, energies=energies)
    ens = deterministic_label_pass(ens, weights, omega_bar)
    clusters = cluster_consensus(ens, spec, assign_clusters(ens), cfg.alpha, energies=energies)
    tracker = StallTracker(
        counters=np.zeros(n_agents, dtype=np.int64),
        estimates=clusters.agent_estimate.copy(),
    )

    steps = 0
    stall = 0
    while steps < cfg.n_steps and stall < cfg.j_stall:
        ens = interaction_step(ens, clusters, cfg, rng, step=steps)
        energies = spec.evaluate_batch(ens.positions)
        evaluations += n_agents
        weights = cluster_weights(ens, clusters, energies=energies)
        ens = apply_label_transitions(ens, weights, omega_bar, cfg.eps, rng)
        if ens.leader_count == 0:
            ens = deterministic_label_pass(ens, weights, omega_bar)
        clusters = cluster_consensus(ens, spec, assign_clusters(ens), cfg.alpha, energies=energies)
        tracker, stall = check_stall(tracker, clusters, cfg.delta_stall)
        steps += 1

    return RunReport(
        iterations=steps,
        stalled=stall >= cfg.j_stall,
        final_consensus=_distinct_rows(clusters.consensus),
        leader_count=ens.leader_count,
        best_value=float(energies.min()),
        evaluations=evaluations,
        seed=int(cfg.seed),
    )
