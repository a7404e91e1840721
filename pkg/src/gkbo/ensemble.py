"""Particle population state, rank-based weights and leader/follower moves.

The population carries a binary label per agent: 1 marks a leader, 0 a
follower. Leadership changes over time through stochastic label transitions
driven by each agent's rank-based weight.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NumericError
from .objectives import ObjectiveSpec

__all__ = [
    "Ensemble",
    "WeightVector",
    "init_uniform",
    "compute_weights",
    "apply_label_transitions",
    "deterministic_label_pass",
]


@dataclass
class Ensemble:
    """Population state: positions ``(n, d)`` and leadership labels ``(n,)``."""

    positions: np.ndarray
    labels: np.ndarray

    def __post_init__(self) -> None:
        positions = np.asarray(self.positions, dtype=np.float64)
        labels = np.asarray(self.labels, dtype=np.int64)
        if positions.ndim != 2 or positions.shape[0] < 1:
            raise ValueError(
                f"positions must have shape (n, d) with n >= 1, got {positions.shape}"
            )
        if labels.shape != (positions.shape[0],):
            raise ValueError(
                f"labels must have shape ({positions.shape[0]},), got {labels.shape}"
            )
        if not np.isfinite(positions).all():
            raise ValueError("positions contain non-finite coordinates")
        if np.any((labels != 0) & (labels != 1)):
            raise ValueError("labels must be 0 (follower) or 1 (leader)")
        self.positions = positions
        self.labels = labels

    @property
    def n_agents(self) -> int:
        return int(self.positions.shape[0])

    @property
    def dim(self) -> int:
        return int(self.positions.shape[1])

    @property
    def leader_count(self) -> int:
        return int(self.labels.sum())

    def leader_indices(self) -> np.ndarray:
        """Indices of the current leaders, ascending."""
        return np.flatnonzero(self.labels == 1)


@dataclass(frozen=True)
class WeightVector:
    """Rank-based weights of a population at fixed positions.

    ``omega[i]`` is the fraction of agents strictly closer in objective value
    to the current best agent than agent ``i`` is, so the best agent always has
    weight 0 and every weight is a multiple of ``1/n``.
    """

    omega: np.ndarray
    best_index: int


def init_uniform(n_agents: int, dim: int, lo: float, hi: float, rng: np.random.Generator) -> Ensemble:
    """Draw an all-follower population uniformly from the box ``[lo, hi]^dim``."""
    if int(n_agents) < 1:
        raise ValueError(f"need at least one agent, got {n_agents}")
    if int(dim) < 1:
        raise ValueError(f"dimension must be at least 1, got {dim}")
    lo = float(lo)
    hi = float(hi)
    if not (np.isfinite(lo) and np.isfinite(hi)) or not lo < hi:
        raise ValueError(f"invalid initialization box [{lo}, {hi}]")
    positions = rng.uniform(lo, hi, size=(int(n_agents), int(dim)))
    labels = np.zeros(int(n_agents), dtype=np.int64)
    return Ensemble(positions=positions, labels=labels)


def compute_weights(
    ensemble: Ensemble,
    spec: ObjectiveSpec | None = None,
    energies: np.ndarray | None = None,
) -> WeightVector:
    """Rank-based weight of every agent.

    With ``E`` the objective values and ``b`` the best agent (lowest value,
    ties broken by lowest index), agent ``i`` gets

        omega[i] = #{j : |E[b] - E[j]| < |E[b] - E[i]|} / n.

    Pass precomputed ``energies`` to skip re-evaluating the objective.
    """
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

    best = int(np.argmin(energies))
    gaps = np.abs(energies - energies[best])
    # Counting strictly smaller gaps for all agents at once: position of each
    # gap in the sorted gap array, left insertion point.
    omega = np.searchsorted(np.sort(gaps), gaps, side="left") / ensemble.n_agents
    return WeightVector(omega=omega, best_index=best)


def apply_label_transitions(
    ensemble: Ensemble,
    weights: WeightVector,
    omega_bar: float,
    eps: float,
    rng: np.random.Generator,
) -> Ensemble:
    """One synchronous round of stochastic leadership transitions.

    A follower with weight strictly below ``omega_bar`` becomes a leader with
    probability ``eps``; a leader with weight strictly above ``omega_bar``
    becomes a follower with probability ``eps``. Agents whose weight equals
    ``omega_bar`` keep their label. All decisions read the pre-round labels;
    positions are untouched. One uniform variate is drawn per agent, in agent
    order.
    """
    omega_bar = float(omega_bar)
    eps = float(eps)
    if not 0.0 < eps <= 1.0:
        raise ValueError(f"transition probability must be in (0, 1], got {eps}")
    if not 0.0 < omega_bar <= 1.0:
        raise ValueError(f"weight threshold must be in (0, 1], got {omega_bar}")
    omega = np.asarray(weights.omega, dtype=np.float64)
    if omega.shape != (ensemble.n_agents,):
        raise ValueError("weight vector does not match the population size")

    draws = rng.random(ensemble.n_agents)
    fire = draws < eps
    labels = ensemble.labels
    promote = (labels == 0) & (omega < omega_bar) & fire
    demote = (labels == 1) & (omega > omega_bar) & fire
    new_labels = labels.copy()
    new_labels[promote] = 1
    new_labels[demote] = 0
    return Ensemble(positions=ensemble.positions, labels=new_labels)


def deterministic_label_pass(
    ensemble: Ensemble,
    weights: WeightVector,
    omega_bar: float,
) -> Ensemble:
    """Leadership transitions with every eligible transition taken.

    Same eligibility rules as :func:`apply_label_transitions` but with
    certainty instead of probability ``eps``, and no randomness consumed. Used
    to seed leadership at startup and to recover if the leader set ever
    empties: applied to an all-follower population it promotes exactly the
    agents with weight below ``omega_bar``.
    """
    omega_bar = float(omega_bar)
    if not 0.0 < omega_bar <= 1.0:
        raise ValueError(f"weight threshold must be in (0, 1], got {omega_bar}")
    omega = np.asarray(weights.omega, dtype=np.float64)
    if omega.shape != (ensemble.n_agents,):
        raise ValueError("weight vector does not match the population size")

    labels = ensemble.labels
    promote = (labels == 0) & (omega < omega_bar)
    demote = (labels == 1) & (omega > omega_bar)
    new_labels = labels.copy()
    new_labels[promote] = 1
    new_labels[demote] = 0
    return Ensemble(positions=ensemble.positions, labels=new_labels)
