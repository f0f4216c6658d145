"""End-to-end orchestration: sample, observe, recognize, plan, model.

Also owns the run-directory format: everything an explanation needs is
persisted (trace log, goal/trajectory factors, config), so `explain` never
re-plans. Artifact files are byte-stable for a fixed seed.
"""

import hashlib
import json
import math
import os
from dataclasses import dataclass

from .bayes_net import BnModel, build_bn, model_to_dict
from .causal import (CausalSummary, CounterfactualQuery, agent_influences, assemble_summary,
                     outcome_given_cf, reward_deltas)
from .grammar import explain as render_explanation
from .maneuvers import KinematicParams, macro_from_name
from .mcts import MctsResult, PlannerConfig, RewardConfig, TraceRecord, run_mcts
from .recognition import Predictions, predict_all
from .scenario import JointState, Scenario, sample_initial_states
from .simulation import lane_keep_plan, observe


@dataclass
class PipelineResult:
    scenario: Scenario
    seed: int
    planner: PlannerConfig
    reward: RewardConfig
    initial: JointState
    planning_state: JointState
    prefixes: dict
    predictions: Predictions
    mcts: MctsResult
    model: BnModel


def true_goal_plans(scenario: Scenario, initial: JointState, params: KinematicParams) -> dict:
    """Observation-phase plan per vehicle: its best plan to its true goal.

    The ego has not planned yet and just keeps its lane.
    """
    from .recognition import enumerate_plans
    plans: dict = {}
    for spec in scenario.vehicles:
        state = initial.vehicles[spec.id]
        if spec.id == scenario.ego_id or spec.true_goal is None:
            plans[spec.id] = lane_keep_plan(scenario.layout, state)
            continue
        candidates = enumerate_plans(state, spec.true_goal, scenario.layout, scenario.dt,
                                     scenario.horizon, params)
        if not candidates:
            plans[spec.id] = lane_keep_plan(scenario.layout, state)
            continue
        plans[spec.id] = [macro_from_name(name) for name in candidates[0].macros]
    return plans


def planner_config(scenario: Scenario, seed: int, iterations: int = 300, max_depth: int = 3,
                   exploration: float | None = None) -> PlannerConfig:
    """Planner settings with the scenario's calibration overrides applied."""
    if exploration is None:
        exploration = float(scenario.planner_overrides.get("exploration", math.sqrt(2.0)))
    return PlannerConfig(iterations=iterations, max_depth=max_depth,
                         exploration=exploration, seed=seed)


def run_pipeline(scenario: Scenario, seed: int, planner: PlannerConfig | None = None,
                 reward: RewardConfig | None = None) -> PipelineResult:
    """Full planning run: returns the plan, trace log and Bayes net."""
    planner = planner or planner_config(scenario, seed)
    reward = reward or RewardConfig()
    params = KinematicParams(cruise_speed=scenario.target_speed)
    initial = sample_initial_states(scenario, seed)
    plans = true_goal_plans(scenario, initial, params)
    prefixes, planning_state = observe(scenario, initial, plans)
    predictions = predict_all(scenario, prefixes, params=params)
    result = run_mcts(scenario, planning_state, planner, reward_config=reward,
                      predictions=predictions, params=params)
    model = model_from(result, planner.max_depth)
    return PipelineResult(scenario=scenario, seed=seed, planner=planner, reward=reward,
                          initial=initial, planning_state=planning_state, prefixes=prefixes,
                          predictions=predictions, mcts=result, model=model)


def prediction_factors(predictions: Predictions) -> tuple[dict, dict, dict, dict]:
    """(goal probs, trajectory probs, trajectory macros, labels) for the net."""
    goal_probs: dict = {}
    traj_probs: dict = {}
    traj_macros: dict = {}
    labels: dict = {}
    for vid, pred in predictions.vehicles.items():
        goal_probs[vid] = {gi: p for gi, p in enumerate(pred.posterior.probs)}
        traj_probs[vid] = {}
        traj_macros[vid] = {}
        for gi, opts in pred.options.items():
            for si, opt in enumerate(opts):
                traj_probs[vid][(gi, si)] = opt.probability
                traj_macros[vid][(gi, si)] = opt.macros
        labels[vid] = pred.label
    return goal_probs, traj_probs, traj_macros, labels


def model_from(result: MctsResult, d_max: int) -> BnModel:
    goal_probs, traj_probs, traj_macros, labels = prediction_factors(result.predictions)
    return build_bn(result.trace_log, goal_probs, traj_probs, d_max,
                    traj_macros=traj_macros, labels=labels)


def explain_query(model: BnModel, plan: tuple[str, ...], reward: RewardConfig,
                  query: CounterfactualQuery, style: dict | None = None,
                  predictions: Predictions | None = None
                  ) -> tuple[CausalSummary, str, str]:
    """Answer one counterfactual query: (summary, raw sentence, final sentence).

    Reward effects only make sense against a completed counterfactual, so
    they are suppressed when the most likely outcome is not `done` (matching
    how collision and no-goal explanations read).
    """
    outcome = outcome_given_cf(model, query)
    if outcome.kind == "done" and query.n_effects > 0:
        effects = reward_deltas(model, plan, query, reward)
    else:
        effects = []
    causes = agent_influences(model, predictions, query.n_causes)
    summary = assemble_summary(query, outcome, effects, causes)
    raw, text = render_explanation(summary, style)
    return summary, raw, text


# --- run directory -----------------------------------------------------------


def _dump(path: str, payload) -> None:
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=1, sort_keys=True)
        fh.write("\n")


def file_sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


def save_run(out_dir: str, scenario_path, pipe: PipelineResult) -> None:
    os.makedirs(out_dir, exist_ok=True)
    _dump(os.path.join(out_dir, "run.json"), {
        "scenario_path": str(scenario_path),
        "scenario_sha256": file_sha256(scenario_path),
        "scenario_name": pipe.scenario.name,
        "seed": pipe.seed,
        "iterations": pipe.planner.iterations,
        "max_depth": pipe.planner.max_depth,
        "exploration": pipe.planner.exploration,
        "reward_weights": pipe.reward.weights,
        "plan": list(pipe.mcts.plan),
    })
    _dump(os.path.join(out_dir, "tracelog.json"), [
        {
            "index": rec.index,
            "assignment": {vid: list(gs) for vid, gs in sorted(rec.assignment.items())},
            "macros": list(rec.macros),
            "components": rec.components,
            "outcome": rec.outcome,
            "collider": rec.collider,
            "reward": rec.reward,
            "steps": rec.steps,
        }
        for rec in pipe.mcts.trace_log
    ])
    goal_probs, traj_probs, traj_macros, labels = prediction_factors(pipe.predictions)
    _dump(os.path.join(out_dir, "predictions.json"), {
        vid: {
            "label": labels[vid],
            "goals": {str(gi): p for gi, p in goal_probs[vid].items()},
            "options": {f"{gi}/{si}": {"p": p, "macros": list(traj_macros[vid][(gi, si)])}
                        for (gi, si), p in sorted(traj_probs[vid].items())},
        }
        for vid in sorted(goal_probs)
    })
    _dump(os.path.join(out_dir, "bn.json"), model_to_dict(pipe.model))


@dataclass
class LoadedRun:
    plan: tuple[str, ...]
    d_max: int
    reward: RewardConfig
    model: BnModel
    meta: dict


def load_run(run_dir: str) -> LoadedRun:
    """Rebuild the model from persisted artifacts, without re-planning."""
    with open(os.path.join(run_dir, "run.json")) as fh:
        meta = json.load(fh)
    with open(os.path.join(run_dir, "tracelog.json")) as fh:
        raw_log = json.load(fh)
    with open(os.path.join(run_dir, "predictions.json")) as fh:
        raw_pred = json.load(fh)
    records = [
        TraceRecord(
            index=r["index"],
            assignment={vid: tuple(gs) for vid, gs in r["assignment"].items()},
            macros=tuple(r["macros"]),
            components={k: v for k, v in r["components"].items()},
            outcome=r["outcome"],
            collider=r["collider"],
            reward=r["reward"],
            steps=r["steps"],
        )
        for r in raw_log
    ]
    goal_probs = {vid: {int(g): p for g, p in d["goals"].items()}
                  for vid, d in raw_pred.items()}
    traj_probs = {}
    traj_macros = {}
    labels = {}
    for vid, d in raw_pred.items():
        labels[vid] = d["label"]
        traj_probs[vid] = {}
        traj_macros[vid] = {}
        for key, od in d["options"].items():
            gi, si = (int(part) for part in key.split("/"))
            traj_probs[vid][(gi, si)] = od["p"]
            traj_macros[vid][(gi, si)] = tuple(od["macros"])
    reward = RewardConfig(weights=meta["reward_weights"])
    model = build_bn(records, goal_probs, traj_probs, meta["max_depth"],
                     traj_macros=traj_macros, labels=labels)
    return LoadedRun(plan=tuple(meta["plan"]), d_max=meta["max_depth"], reward=reward,
                     model=model, meta=meta)
