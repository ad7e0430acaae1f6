"""
Progressive-disclosure controller.
A finite POMDP whose actions are either paid reveals (acquire more skill
context, observe a signal) or terminal executes (commit to a workflow and
collect R[s, a]). Provides the Bayes filter, one-step value of information
and exact finite-horizon value iteration over alpha vectors.
"""

import json
import logging
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Dict, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import ImpossibleObservation, InvalidModel, StateSpaceTooLarge

logger = logging.getLogger(__name__)

STOCHASTIC_TOL = 1e-12
MAX_GENERATED_VECTORS = 10 ** 6


class ActionKind(str, Enum):
    REVEAL = "reveal"
    EXECUTE = "execute"


def _check_stochastic(array: np.ndarray, what: str) -> None:
    if not np.all(np.isfinite(array)):
        raise InvalidModel(f"{what} has non-finite entries")
    if np.any(array < 0):
        raise InvalidModel(f"{what} has negative entries")
    sums = array.sum(axis=-1)
    if np.any(np.abs(sums - 1.0) > STOCHASTIC_TOL):
        raise InvalidModel(f"rows of {what} must sum to 1")


@dataclass(frozen=True, eq=False)
class PomdpModel:
    """Finite POMDP with reveal/execute actions.

    transition[a, s, s'] = T(s' | s, a)
    observation[a, s', o] = Omega(o | s', a)
    reward[s, a] is read for execute actions only.
    reveal_cost[a] is read for reveal actions only.
    """
    transition: np.ndarray
    observation: np.ndarray
    reward: np.ndarray
    kinds: Tuple[ActionKind, ...]
    reveal_cost: np.ndarray
    horizon: int = 1
    action_names: Tuple[str, ...] = ()
    observation_names: Tuple[str, ...] = ()

    def __post_init__(self):
        T = np.asarray(self.transition, dtype=float)
        O = np.asarray(self.observation, dtype=float)
        R = np.asarray(self.reward, dtype=float)
        kinds = tuple(ActionKind(k) for k in self.kinds)

        if T.ndim != 3 or T.shape[1] != T.shape[2]:
            raise InvalidModel(f"transition must have shape (A, S, S), got {T.shape}")
        n_actions, n_states = T.shape[0], T.shape[1]
        if n_states == 0 or n_actions == 0:
            raise InvalidModel("model needs at least one state and one action")
        if O.ndim != 3 or O.shape[:2] != (n_actions, n_states) or O.shape[2] == 0:
            raise InvalidModel(f"observation must have shape (A, S, O), got {O.shape}")
        if R.shape != (n_states, n_actions):
            raise InvalidModel(f"reward must have shape (S, A) = {(n_states, n_actions)}, got {R.shape}")
        if not np.all(np.isfinite(R)):
            raise InvalidModel("reward has non-finite entries")
        if len(kinds) != n_actions:
            raise InvalidModel(f"{len(kinds)} action kinds for {n_actions} actions")
        if ActionKind.EXECUTE not in kinds:
            raise InvalidModel("model needs at least one execute action")
        _check_stochastic(T, "transition")
        _check_stochastic(O, "observation")

        cost = np.asarray(self.reveal_cost, dtype=float)
        if cost.ndim == 0:
            cost = np.full(n_actions, float(cost))
        if cost.shape != (n_actions,):
            raise InvalidModel("reveal_cost must be a scalar or one value per action")
        if not np.all(np.isfinite(cost)) or np.any(cost < 0):
            raise InvalidModel("reveal_cost must be >= 0")
        if self.horizon < 0:
            raise InvalidModel("horizon must be >= 0")

        names = tuple(self.action_names) or tuple(f"{k.value}-{i}" for i, k in enumerate(kinds))
        if len(names) != n_actions:
            raise InvalidModel("one name per action is required")

        for attr, value in (("transition", T), ("observation", O), ("reward", R), ("reveal_cost", cost)):
            value.setflags(write=False)
            object.__setattr__(self, attr, value)
        object.__setattr__(self, "kinds", kinds)
        object.__setattr__(self, "action_names", names)
        object.__setattr__(self, "observation_names", tuple(self.observation_names))

    @property
    def n_states(self) -> int:
        return self.transition.shape[1]

    @property
    def n_actions(self) -> int:
        return self.transition.shape[0]

    @property
    def n_observations(self) -> int:
        return self.observation.shape[2]

    @property
    def execute_actions(self) -> List[int]:
        return [a for a, k in enumerate(self.kinds) if k == ActionKind.EXECUTE]

    @property
    def reveal_actions(self) -> List[int]:
        return [a for a, k in enumerate(self.kinds) if k == ActionKind.REVEAL]

    def with_horizon(self, horizon: int) -> "PomdpModel":
        return PomdpModel(
            transition=self.transition,
            observation=self.observation,
            reward=self.reward,
            kinds=self.kinds,
            reveal_cost=self.reveal_cost,
            horizon=horizon,
            action_names=self.action_names,
            observation_names=self.observation_names,
        )


@dataclass(frozen=True, eq=False)
class BeliefState:
    """Probability vector over the model's states."""
    probs: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=float)
        if p.ndim != 1 or p.size == 0:
            raise ValueError("belief must be a non-empty vector")
        if np.any(p < 0) or not np.all(np.isfinite(p)):
            raise ValueError("belief entries must be finite and >= 0")
        if abs(p.sum() - 1.0) > STOCHASTIC_TOL:
            raise ValueError(f"belief must sum to 1, got {p.sum()!r}")
        p.setflags(write=False)
        object.__setattr__(self, "probs", p)

    def __len__(self) -> int:
        return self.probs.size

    @classmethod
    def uniform(cls, n_states: int) -> "BeliefState":
        return cls(np.full(n_states, 1.0 / n_states))

    @classmethod
    def from_weights(cls, weights: Sequence[float]) -> "BeliefState":
        w = np.asarray(weights, dtype=float)
        total = w.sum()
        if total <= 0:
            raise ValueError("weights must have a positive sum")
        return cls(w / total)


@dataclass(frozen=True, eq=False)
class AlphaVector:
    values: np.ndarray
    action: int

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if not np.all(np.isfinite(v)):
            raise ValueError("alpha vector entries must be finite")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)


BeliefLike = Union[BeliefState, Sequence[float], np.ndarray]


def _probs(m: PomdpModel, b: BeliefLike) -> np.ndarray:
    p = b.probs if isinstance(b, BeliefState) else BeliefState(np.asarray(b, dtype=float)).probs
    if p.size != m.n_states:
        raise ValueError(f"belief has {p.size} entries, model has {m.n_states} states")
    return p


def _require_kind(m: PomdpModel, a: int, kind: ActionKind) -> None:
    if not 0 <= a < m.n_actions:
        raise ValueError(f"unknown action {a}")
    if m.kinds[a] != kind:
        raise ValueError(f"action {a} ({m.action_names[a]}) is not a {kind.value} action")


# ---
# Filtering and one-step decisions
# ---


def update_belief(m: PomdpModel, b: BeliefLike, a: int, o: int) -> BeliefState:
    """Bayes filter: b'(s') proportional to Omega(o | s', a) * sum_s T(s' | s, a) b(s)."""
    p = _probs(m, b)
    if not 0 <= o < m.n_observations:
        raise ValueError(f"unknown observation {o}")
    predicted = p @ m.transition[a]
    joint = m.observation[a][:, o] * predicted
    normalizer = joint.sum()
    if normalizer <= 0:
        raise ImpossibleObservation(a, o)
    return BeliefState(joint / normalizer)


def value_execute_now(m: PomdpModel, b: BeliefLike) -> Tuple[float, int]:
    """Best expected payoff of executing immediately, with the action achieving it."""
    p = _probs(m, b)
    actions = m.execute_actions
    values = p @ m.reward[:, actions]
    best = int(np.argmax(values))
    return float(values[best]), actions[best]


def _expected_value_after_reveal(m: PomdpModel, p: np.ndarray, a: int) -> float:
    # sum_o P(o) * V0(b_o) == sum_o max_e sum_s' P(s', o) R[s', e]
    predicted = p @ m.transition[a]
    joint = predicted[:, None] * m.observation[a]
    payoffs = joint.T @ m.reward[:, m.execute_actions]
    return float(payoffs.max(axis=1).sum())


def value_of_information(m: PomdpModel, b: BeliefLike, a: int) -> float:
    """Expected gain of revealing with action `a` and then executing, net of its cost."""
    _require_kind(m, a, ActionKind.REVEAL)
    p = _probs(m, b)
    now, _ = value_execute_now(m, p)
    return _expected_value_after_reveal(m, p, a) - now - float(m.reveal_cost[a])


def decide(m: PomdpModel, b: BeliefLike) -> int:
    """Reveal when the best reveal has strictly positive VOI, else execute."""
    p = _probs(m, b)
    best_reveal, best_voi = None, 0.0
    for a in m.reveal_actions:
        voi = value_of_information(m, p, a)
        if best_reveal is None or voi > best_voi:
            best_reveal, best_voi = a, voi
    if best_reveal is not None and best_voi > 0:
        return best_reveal
    return value_execute_now(m, p)[1]


# ---
# Value iteration
# ---


def _prune(vectors: List[AlphaVector]) -> List[AlphaVector]:
    """Pointwise-dominance pruning; earlier vectors win exact ties."""
    kept: List[AlphaVector] = []
    for candidate in vectors:
        if any(np.all(k.values >= candidate.values) for k in kept):
            continue
        kept = [k for k in kept if not np.all(candidate.values >= k.values)]
        kept.append(candidate)
    return kept


def _reveal_backup(
        m: PomdpModel,
        a: int,
        previous: List[AlphaVector],
        budget: List[int]) -> List[AlphaVector]:
    n_states = m.n_states
    prev = np.stack([alpha.values for alpha in previous])
    # projected[o][i](s) = sum_s' T(s'|s,a) Omega(o|s',a) alpha_i(s')
    projected = [
        prev @ (m.transition[a] * m.observation[a][:, o][None, :]).T
        for o in range(m.n_observations)
    ]

    sums = [np.full(n_states, -float(m.reveal_cost[a]))]
    for o, g in enumerate(projected):
        unique = _prune([AlphaVector(row, a) for row in g])
        generated = len(sums) * len(unique)
        budget[0] += generated
        if budget[0] > MAX_GENERATED_VECTORS:
            raise StateSpaceTooLarge(budget[0], MAX_GENERATED_VECTORS)
        crossed = [AlphaVector(s + u.values, a) for s in sums for u in unique]
        sums = [alpha.values for alpha in _prune(crossed)]
    return [AlphaVector(s, a) for s in sums]


@dataclass
class ValueFunction:
    """Alpha-vector sets for horizons 0..H; V_h(b) = max over alpha of alpha . b."""
    model: PomdpModel
    alpha_vectors: List[List[AlphaVector]] = field(default_factory=list)

    @property
    def horizon(self) -> int:
        return len(self.alpha_vectors) - 1

    def _resolve(self, h: Optional[int]) -> List[AlphaVector]:
        h = self.horizon if h is None else h
        if not 0 <= h <= self.horizon:
            raise ValueError(f"horizon {h} outside 0..{self.horizon}")
        return self.alpha_vectors[h]

    def value(self, b: BeliefLike, h: Optional[int] = None) -> float:
        p = _probs(self.model, b)
        return float(max(alpha.values @ p for alpha in self._resolve(h)))

    def best_action(self, b: BeliefLike, h: Optional[int] = None) -> int:
        p = _probs(self.model, b)
        vectors = self._resolve(h)
        scores = [alpha.values @ p for alpha in vectors]
        return vectors[int(np.argmax(scores))].action


def value_iteration(m: PomdpModel, horizon: Optional[int] = None) -> ValueFunction:
    """Exact finite-horizon backup.

    V_0 executes immediately. V_{h+1} is the better of executing now and
    any reveal followed by V_h on the updated belief.
    """
    horizon = m.horizon if horizon is None else horizon
    if horizon < 0:
        raise ValueError("horizon must be >= 0")

    execute_now = _prune([AlphaVector(m.reward[:, a], a) for a in m.execute_actions])
    layers = [execute_now]
    budget = [0]
    for h in range(horizon):
        candidates = list(execute_now)
        for a in m.reveal_actions:
            candidates.extend(_reveal_backup(m, a, layers[-1], budget))
        layers.append(_prune(candidates))
        logger.debug(f"Horizon {h + 1}: {len(layers[-1])} alpha vectors")
    logger.info(f"Value iteration to horizon {horizon}: {budget[0]} vectors generated")
    return ValueFunction(model=m, alpha_vectors=layers)


# ---
# Models
# ---


def symmetric_toy(accuracy: float = 0.9, reveal_cost: float = 0.2, horizon: int = 1) -> PomdpModel:
    """Two latent states, two executes paying 1 on a match and a noisy reveal.

    Actions are execute-0, execute-1, reveal. The reveal reports the true
    state with probability `accuracy` and leaves the state unchanged.
    """
    if not 0.0 <= accuracy <= 1.0:
        raise InvalidModel("accuracy must be in [0, 1]")
    identity = np.eye(2)
    uninformative = np.full((2, 2), 0.5)
    signal = np.array([[accuracy, 1.0 - accuracy], [1.0 - accuracy, accuracy]])
    return PomdpModel(
        transition=np.stack([identity, identity, identity]),
        observation=np.stack([uninformative, uninformative, signal]),
        reward=np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]),
        kinds=(ActionKind.EXECUTE, ActionKind.EXECUTE, ActionKind.REVEAL),
        reveal_cost=np.array([0.0, 0.0, reveal_cost]),
        horizon=horizon,
        action_names=("execute-0", "execute-1", "reveal"),
        observation_names=("signal-0", "signal-1"),
    )


def model_from_dict(data: Dict[str, Any]) -> PomdpModel:
    """Build a model from its JSON form.

    Keys: actions ([{"name", "kind"}]), T, O, R, reveal_cost (scalar or per
    action), horizon, optional observations (names).
    """
    if not isinstance(data, dict):
        raise InvalidModel("model definition must be a JSON object")
    try:
        actions = data["actions"]
        kinds = tuple(ActionKind(item["kind"]) for item in actions)
        names = tuple(str(item.get("name") or f"{item['kind']}-{i}") for i, item in enumerate(actions))
        return PomdpModel(
            transition=np.asarray(data["T"], dtype=float),
            observation=np.asarray(data["O"], dtype=float),
            reward=np.asarray(data["R"], dtype=float),
            kinds=kinds,
            reveal_cost=np.asarray(data.get("reveal_cost", 0.0), dtype=float),
            horizon=int(data.get("horizon", 1)),
            action_names=names,
            observation_names=tuple(data.get("observations", ())),
        )
    except InvalidModel:
        raise
    except KeyError as e:
        raise InvalidModel(f"model definition is missing {e}") from e
    except (TypeError, ValueError) as e:
        raise InvalidModel(f"malformed model definition: {e}") from e


def model_to_dict(m: PomdpModel) -> Dict[str, Any]:
    return {
        "actions": [{"name": n, "kind": k.value} for n, k in zip(m.action_names, m.kinds)],
        "T": m.transition.tolist(),
        "O": m.observation.tolist(),
        "R": m.reward.tolist(),
        "reveal_cost": m.reveal_cost.tolist(),
        "horizon": m.horizon,
        "observations": list(m.observation_names),
    }


def load_model(path: Union[str, Path]) -> PomdpModel:
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = json.load(f)
    except json.JSONDecodeError as e:
        raise InvalidModel(f"{path}: invalid JSON: {e}") from e
    return model_from_dict(data)


def belief_grid(n_states: int, resolution: int) -> Iterator[np.ndarray]:
    """Every belief whose entries are multiples of 1/resolution, b_0 ascending."""
    if n_states < 1 or resolution < 1:
        raise ValueError("n_states and resolution must be >= 1")

    def compositions(remaining: int, parts: int) -> Iterator[List[int]]:
        if parts == 1:
            yield [remaining]
            return
        for first in range(remaining + 1):
            for rest in compositions(remaining - first, parts - 1):
                yield [first, *rest]

    for counts in compositions(resolution, n_states):
        yield np.asarray(counts, dtype=float) / resolution
