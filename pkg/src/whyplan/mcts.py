"""Monte Carlo Tree Search over macro actions.

Each iteration samples one goal and trajectory per non-ego vehicle, walks the
tree with UCB1 selection, forward-simulates the chosen macros against the
fixed traffic, and backs the terminal reward up the visited path. The full
record of every iteration (the trace log) is the planner's second output and
the sole input to the Bayes net.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ScenarioValidationError
from .maneuvers import (KinematicParams, MacroAction, Trajectory, applicable_macros,
                        concat_trajectories, extract_features)
from .recognition import Predictions, predict_all
from .scenario import JointState, Scenario
from .simulation import FixedTraffic, MacroStepResult, SimulationContext, simulate_step

OUTCOME_KINDS = ("done", "collision", "termination", "dead")
# Argmax tie-breaking prefers safety-salient outcomes.
OUTCOME_SAFETY_ORDER = ("collision", "done", "termination", "dead")

# First-visit order for untried actions: progress-making actions first, so a
# fresh branch's initial sample is its natural continuation rather than a
# pathological action chain.
SELECTION_ORDER = {name: i for i, name in enumerate((
    "Continue", "Change-left", "Change-right", "Exit-right", "Exit-straight",
    "Exit-left", "Continue-next-exit", "Stop"))}

REWARD_COMPONENTS = ("time", "jerk", "angular_acceleration", "curvature",
                     "collision", "termination")

# Components that must all be present for each outcome; dead is the
# all-absent pattern.
OUTCOME_REQUIRED = {
    "done": ("time", "jerk", "angular_acceleration", "curvature"),
    "collision": ("collision",),
    "termination": ("termination",),
    "dead": (),
}


@dataclass(frozen=True)
class RewardConfig:
    """Weights of the linear reward; collision and termination negative."""

    weights: dict = field(default_factory=lambda: {
        "time": -1.0,
        "jerk": -0.1,
        "angular_acceleration": -0.1,
        "curvature": -0.1,
        "collision": -100.0,
        "termination": -50.0,
    })

    def __post_init__(self):
        missing = set(REWARD_COMPONENTS) - set(self.weights)
        extra = set(self.weights) - set(REWARD_COMPONENTS)
        if missing or extra:
            raise ScenarioValidationError(
                f"reward weights must cover exactly {REWARD_COMPONENTS}; "
                f"missing {sorted(missing)}, extra {sorted(extra)}")
        for k, v in self.weights.items():
            if not math.isfinite(v):
                raise ScenarioValidationError(f"reward weight {k} not finite")
        for k in ("collision", "termination"):
            if self.weights[k] >= 0:
                raise ScenarioValidationError(f"reward weight {k} must be negative")


@dataclass(frozen=True)
class PlannerConfig:
    iterations: int = 300
    max_depth: int = 3
    exploration: float = math.sqrt(2.0)
    seed: int = 0

    def __post_init__(self):
        if self.iterations < 1:
            raise ScenarioValidationError("iterations must be >= 1")
        if self.max_depth < 1:
            raise ScenarioValidationError("max_depth must be >= 1")


def components_for(outcome: str, traj: Trajectory, goal, layout) -> dict:
    """Reward components of a terminal trajectory; absent components are None."""
    comps: dict = {c: None for c in REWARD_COMPONENTS}
    if outcome == "done":
        f = extract_features(traj, goal, layout)
        comps["time"] = f.time_to_goal
        comps["jerk"] = f.jerk
        comps["angular_acceleration"] = f.angular_acceleration
        comps["curvature"] = f.curvature
    elif outcome == "collision":
        comps["collision"] = 1.0
    elif outcome == "termination":
        comps["termination"] = 1.0
    elif outcome != "dead":
        raise ValueError(f"unknown outcome {outcome!r}")
    return comps


def check_components(outcome: str, comps: dict) -> None:
    required = OUTCOME_REQUIRED[outcome]
    present = {c for c, v in comps.items() if v is not None}
    if set(required) != present:
        raise ScenarioValidationError(
            f"outcome {outcome!r} requires exactly components {required}, got {sorted(present)}")


def terminal_reward(traj: Trajectory, outcome: str, reward_config: RewardConfig,
                    goal, layout) -> tuple[float, dict]:
    """Scalar reward and component values at a terminal simulation state."""
    comps = components_for(outcome, traj, goal, layout)
    w = reward_config.weights
    if outcome == "dead":
        return w["termination"], comps
    scalar = sum(w[c] * v for c, v in comps.items() if v is not None)
    return float(scalar), comps


@dataclass(frozen=True)
class TraceRecord:
    """Everything one MCTS iteration decided and observed."""

    index: int
    assignment: dict  # vehicle id -> (goal index, trajectory index)
    macros: tuple[str, ...]
    components: dict
    outcome: str
    collider: str | None
    reward: float
    steps: int

    def __post_init__(self):
        if self.outcome not in OUTCOME_KINDS:
            raise ScenarioValidationError(f"unknown outcome {self.outcome!r}")
        check_components(self.outcome, self.components)

    def assignment_key(self) -> tuple:
        return tuple(sorted((vid, gs[0], gs[1]) for vid, gs in self.assignment.items()))


@dataclass
class _Node:
    visits: int = 0
    actions: dict = field(default_factory=dict)  # name -> [n, q]


class SearchTree:
    """Visit counts and Q values keyed by macro-sequence prefix."""

    def __init__(self):
        self.nodes: dict[tuple, _Node] = {}

    def node(self, key: tuple) -> _Node:
        if key not in self.nodes:
            self.nodes[key] = _Node()
        return self.nodes[key]

    def update(self, key: tuple, action: str, reward: float) -> None:
        node = self.node(key)
        node.visits += 1
        stat = node.actions.setdefault(action, [0, 0.0])
        stat[0] += 1
        stat[1] += (reward - stat[1]) / stat[0]

    def best_path(self) -> tuple[str, ...]:
        """Root-to-leaf action sequence by visit count (ties: Q, then name)."""
        path: list[str] = []
        key: tuple = ()
        while key in self.nodes and self.nodes[key].actions:
            acts = self.nodes[key].actions
            name = sorted(acts.items(), key=lambda kv: (-kv[1][0], -kv[1][1], kv[0]))[0][0]
            path.append(name)
            key = key + (name,)
        return tuple(path)


@dataclass
class MctsResult:
    plan: tuple[str, ...]
    tree: SearchTree
    trace_log: list[TraceRecord]
    predictions: Predictions
    initial: JointState


def _select_ucb(node: _Node, actions: list[MacroAction], exploration: float,
                r_lo: float, r_hi: float) -> MacroAction:
    ordered = sorted(actions, key=lambda a: SELECTION_ORDER.get(a.name, 99))
    for a in ordered:  # untried first
        if a.name not in node.actions or node.actions[a.name][0] == 0:
            return a
    span = max(r_hi - r_lo, 1e-9)
    total = sum(node.actions[a.name][0] for a in actions)
    log_total = math.log(max(total, 2))
    best, best_score = None, -math.inf
    for a in ordered:
        n, q = node.actions[a.name]
        score = (q - r_lo) / span + exploration * math.sqrt(log_total / n)
        if score > best_score + 1e-12:
            best, best_score = a, score
    return best


def run_mcts(scenario: Scenario, initial: JointState, config: PlannerConfig,
             reward_config: RewardConfig | None = None,
             predictions: Predictions | None = None,
             params: KinematicParams | None = None) -> MctsResult:
    """Plan for the ego with MCTS; returns the plan, tree and full trace log.

    `predictions` normally comes from goal recognition over the observation
    phase; without it, posteriors fall back to single-state prefixes (uniform
    over reachable goals). Deterministic for a fixed config.seed.
    """
    reward_config = reward_config or RewardConfig()
    params = params or KinematicParams(cruise_speed=scenario.target_speed)
    if predictions is None:
        prefixes = {vid: _single_state_prefix(initial, vid, scenario.dt)
                    for vid in scenario.non_ego_ids}
        predictions = predict_all(scenario, prefixes, params=params)

    ctx = SimulationContext(layout=scenario.layout, ego_id=scenario.ego_id,
                            ego_goal=scenario.ego_goal, dt=scenario.dt,
                            horizon=scenario.horizon, params=params)
    rng = np.random.default_rng(config.seed)
    tree = SearchTree()
    log: list[TraceRecord] = []
    r_lo, r_hi = math.inf, -math.inf

    for k in range(config.iterations):
        assignment = {vid: predictions[vid].sample(rng) for vid in scenario.non_ego_ids}
        fixed = {vid: predictions[vid].options[g][s].trajectory
                 for vid, (g, s) in assignment.items()}
        traffic = FixedTraffic(scenario.layout, fixed, params)

        state = initial
        path: list[tuple[tuple, str]] = []
        ego_parts: list[Trajectory] = []
        outcome: str | None = None
        collider = None
        for depth in range(config.max_depth):
            actions = applicable_macros(state, scenario.ego_id, scenario.layout,
                                        scenario.ego_goal, params)
            key = tuple(a for _, a in path)
            lo = r_lo if math.isfinite(r_lo) else 0.0
            hi = r_hi if math.isfinite(r_hi) else 1.0
            choice = _select_ucb(tree.node(key), actions, config.exploration, lo, hi)
            path.append((key, choice.name))
            step: MacroStepResult = simulate_step(ctx, state, choice, traffic)
            ego_parts.append(step.ego_trajectory)
            if step.outcome is not None:
                outcome = step.outcome
                collider = step.collider
                break
            state = step.next_state
        if outcome is None:
            outcome = "termination"

        ego_traj = concat_trajectories(ego_parts)
        reward, comps = terminal_reward(ego_traj, outcome, reward_config,
                                        scenario.ego_goal, scenario.layout)
        r_lo = min(r_lo, reward)
        r_hi = max(r_hi, reward)
        for key, action in path:
            tree.update(key, action, reward)
        log.append(TraceRecord(
            index=k,
            assignment=dict(assignment),
            macros=tuple(a for _, a in path),
            components=comps,
            outcome=outcome,
            collider=collider,
            reward=reward,
            steps=len(ego_traj) - 1,
        ))

    return MctsResult(plan=tree.best_path(), tree=tree, trace_log=log,
                      predictions=predictions, initial=initial)


def _single_state_prefix(initial: JointState, vid: str, dt: float) -> Trajectory:
    st = initial.vehicles[vid]
    return Trajectory(dt=dt, xs=np.array([st.x]), ys=np.array([st.y]),
                      headings=np.array([st.heading]), speeds=np.array([st.speed]),
                      accels=np.array([0.0]), vehicle_id=vid)
