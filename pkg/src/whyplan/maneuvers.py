"""Macro actions, manoeuvres, local trajectory generation and features.

Macro actions (Continue, Change-left/right, Exit, Continue-next-exit, Stop)
expand into chains of manoeuvres (lane-follow, lane-change, give-way, turn,
stop). A chain rolls out as a kinematic trajectory: constant-acceleration
point mass following lane midlines, cubic lateral blends for lane changes,
give-way segments that hold zero speed until their yield predicate clears.
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import InapplicableMacroError, NoApplicableActionError
from .geometry import Polyline, normalize_angle, smoothstep, turn_curve
from .scenario import (Goal, JointState, RoadLayout, VehicleState, goal_contains, locate)

MACRO_KINDS = ("Continue", "Change-left", "Change-right", "Exit", "Continue-next-exit", "Stop")
MANEUVER_KINDS = ("lane-follow", "lane-change-left", "lane-change-right",
                  "turn-left", "turn-right", "turn-straight", "give-way", "stop")


@dataclass(frozen=True)
class KinematicParams:
    """Tunables of the motion model and applicability predicates."""

    cruise_speed: float = 10.0
    accel_max: float = 2.0
    brake_comfort: float = 2.0
    # Turn approaches shed speed early and gently, like a driver signalling
    # an exit, so following traffic sees the slowdown well before the turn.
    brake_approach: float = 1.0
    brake_max: float = 4.5
    lane_change_duration: float = 3.0
    turn_speed: float = 2.5
    headway_s: float = 1.5
    giveway_window_s: float = 4.0
    conflict_clearance: float = 4.5
    collision_radius: float = 1.5
    follow_time_gap: float = 1.0
    follow_min_gap: float = 2.0
    lead_lateral: float = 3.2
    lead_lookahead: float = 60.0


@dataclass(frozen=True)
class MacroAction:
    """High-level action; Exit additionally carries a turn direction."""

    kind: str
    direction: str | None = None

    def __post_init__(self):
        if self.kind not in MACRO_KINDS:
            raise ValueError(f"unknown macro kind {self.kind!r}")
        if self.kind == "Exit":
            if self.direction not in ("left", "right", "straight"):
                raise ValueError(f"Exit needs a direction, got {self.direction!r}")
        elif self.direction is not None:
            raise ValueError(f"{self.kind} takes no direction")

    @property
    def name(self) -> str:
        return f"Exit-{self.direction}" if self.kind == "Exit" else self.kind

    def __str__(self) -> str:
        return self.name


def macro_from_name(name: str) -> MacroAction:
    if name.startswith("Exit-"):
        return MacroAction("Exit", name.split("-", 1)[1])
    return MacroAction(name)


ALL_MACRO_NAMES = ("Change-left", "Change-right", "Continue", "Continue-next-exit",
                   "Exit-left", "Exit-right", "Exit-straight", "Stop")


@dataclass(frozen=True)
class Maneuver:
    """Primitive motion segment with concrete lane references.

    hold_speed marks turn-approach segments: the vehicle keeps its entry
    speed instead of accelerating to cruise (it is about to yield or turn).
    """

    kind: str
    lanes: tuple[str, ...] = ()
    target_lane: str | None = None
    junction: str | None = None
    connection: tuple[str, str] | None = None
    hold_speed: bool = False

    def __post_init__(self):
        if self.kind not in MANEUVER_KINDS:
            raise ValueError(f"unknown manoeuvre kind {self.kind!r}")
        if self.kind.startswith("lane-change") and self.target_lane is None:
            raise ValueError(f"{self.kind} needs a target lane")
        if (self.kind == "give-way" or self.kind.startswith("turn-")) and (
                self.junction is None or self.connection is None):
            raise ValueError(f"{self.kind} needs a junction and connection")


@dataclass
class Trajectory:
    """State sequence at fixed dt; adjacent states differ by one step."""

    dt: float
    xs: np.ndarray
    ys: np.ndarray
    headings: np.ndarray
    speeds: np.ndarray
    accels: np.ndarray
    vehicle_id: str = ""
    truncated: bool = False

    def __len__(self) -> int:
        return len(self.xs)

    def state_at(self, k: int) -> VehicleState:
        k = min(max(k, 0), len(self.xs) - 1)
        return VehicleState(float(self.xs[k]), float(self.ys[k]), float(self.headings[k]),
                            max(float(self.speeds[k]), 0.0), float(self.accels[k]))

    @property
    def states(self) -> list[VehicleState]:
        return [self.state_at(k) for k in range(len(self.xs))]

    def tail_state(self) -> VehicleState:
        return self.state_at(len(self.xs) - 1)


def concat_trajectories(parts: list[Trajectory]) -> Trajectory:
    """Join trajectories end to end, dropping duplicated joint states."""
    parts = [p for p in parts if len(p) > 0]
    if not parts:
        raise ValueError("nothing to concatenate")
    xs, ys, hs, vs, accs = [parts[0].xs], [parts[0].ys], [parts[0].headings], \
        [parts[0].speeds], [parts[0].accels]
    for p in parts[1:]:
        xs.append(p.xs[1:])
        ys.append(p.ys[1:])
        hs.append(p.headings[1:])
        vs.append(p.speeds[1:])
        accs.append(p.accels[1:])
    return Trajectory(
        dt=parts[0].dt,
        xs=np.concatenate(xs), ys=np.concatenate(ys), headings=np.concatenate(hs),
        speeds=np.concatenate(vs), accels=np.concatenate(accs),
        vehicle_id=parts[0].vehicle_id,
        truncated=parts[-1].truncated,
    )


@dataclass(frozen=True)
class TrajectoryFeatures:
    """Per-trajectory quantities behind the reward components."""

    time_to_goal: float
    jerk: float
    angular_acceleration: float
    curvature: float
    reached_goal: bool


# --- lane-follow chains ------------------------------------------------------


def lane_follow_chain(layout: RoadLayout, lane_id: str) -> list[str]:
    """Lanes reachable by pure lane keeping.

    Follows successors, and crosses junctions only through straight
    connections that hold priority (yield-free); any other movement needs an
    Exit macro.
    """
    chain = [lane_id]
    seen = {lane_id}
    cur = lane_id
    while True:
        lane = layout.lanes[cur]
        nxt = lane.successors[0] if lane.successors else None
        if nxt is None:
            straight = [c for _, c in layout.connections_from(cur)
                        if c.direction == "straight" and c.has_priority]
            nxt = straight[0].to_lane if straight else None
        if nxt is None or nxt in seen:
            return chain
        chain.append(nxt)
        seen.add(nxt)
        cur = nxt


def junctions_on_chain(layout: RoadLayout, chain: list[str]) -> list[tuple[str, str]]:
    """(junction id, arrival lane id) pairs in chain order."""
    out = []
    for lane_id in chain:
        for junction, _ in layout.connections_from(lane_id):
            if (junction.id, lane_id) not in out:
                out.append((junction.id, lane_id))
    return out


def chain_polyline(layout: RoadLayout, chain: list[str], from_s: float = 0.0) -> Polyline | None:
    """Concatenated midline of a lane chain starting at arc length from_s.

    Gaps between consecutive lanes (spatially separated junction crossings)
    are bridged with a connection curve. Returns None when less than ~5 cm of
    path remains.
    """
    pts: list[np.ndarray] = []
    first = layout.lanes[chain[0]].midline
    s0 = min(max(from_s, 0.0), first.length)
    if first.length - s0 > 1e-6:
        pts.append(first.point_at(s0))
        for i, cs in enumerate(first.cum_s):
            if cs > s0 + 1e-9:
                pts.append(first.pts[i])
    else:
        pts.append(first.point_at(first.length))
    prev = first
    for lane_id in chain[1:]:
        mid = layout.lanes[lane_id].midline
        gap = float(np.linalg.norm(mid.pts[0] - prev.pts[-1]))
        if gap > 0.1:
            bridge = turn_curve(prev.pts[-1], prev.heading_at(prev.length),
                                mid.pts[0], mid.heading_at(0.0))
            pts.extend(bridge[1:-1])
        for i in range(len(mid.pts)):
            if i == 0 and gap <= 0.1:
                continue
            pts.append(mid.pts[i])
        prev = mid
    arr = np.asarray(pts)
    if len(arr) < 2 or np.sum(np.linalg.norm(np.diff(arr, axis=0), axis=1)) < 0.05:
        return None
    return Polyline(arr)


def merged_path(base: Polyline, lat0: float, step: float = 0.5) -> Polyline:
    """Overlay a lateral merge-in blend on the first metres of a path."""
    if abs(lat0) < 0.05:
        return base
    merge_len = min(max(6.0, abs(lat0) * 8.0), max(base.length - 0.5, 1.0))
    pts = []
    s = 0.0
    while s < merge_len:
        off = lat0 * (1.0 - smoothstep(s / merge_len))
        pts.append(base.point_at(s) + off * base.normal_at(s))
        s += step
    for i, cs in enumerate(base.cum_s):
        if cs >= merge_len:
            pts.append(base.pts[i])
    if len(pts) < 2:
        return base
    return Polyline(np.asarray(pts))


# --- applicability -----------------------------------------------------------


def _chain_reaches_goal(layout: RoadLayout, chain: list[str], from_s: float, goal: Goal) -> bool:
    for i, lane_id in enumerate(chain):
        mid = layout.lanes[lane_id].midline
        start = from_s if i == 0 else 0.0
        s = start
        while s <= mid.length:
            x, y = mid.point_at(s)
            if goal_contains(layout, goal, float(x), float(y)):
                return True
            s += 2.0
        x, y = mid.point_at(mid.length)
        if goal_contains(layout, goal, float(x), float(y)):
            return True
    return False


def _headway_ok(state: JointState, vehicle_id: str, layout: RoadLayout,
                target_lane_id: str, params: KinematicParams) -> bool:
    me = state.vehicles[vehicle_id]
    lane = layout.lanes[target_lane_id]
    s_me, _, _ = lane.midline.project((me.x, me.y))
    for vid, other in state.vehicles.items():
        if vid == vehicle_id:
            continue
        s_o, _, dist = lane.midline.project((other.x, other.y))
        if dist > lane.width / 2.0 + 0.3:
            continue
        ds = s_o - s_me
        if ds >= 0.0:
            headway = ds / max(me.speed, 0.1)
        else:
            headway = -ds / max(other.speed, 0.1)
        if headway < params.headway_s:
            return False
    return True


def applicable_macros(state: JointState, vehicle_id: str, layout: RoadLayout, goal: Goal,
                      params: KinematicParams | None = None) -> list[MacroAction]:
    """Macro actions whose first manoeuvre is applicable, sorted by name.

    Raises NoApplicableActionError when empty (cannot happen while Stop stays
    unconditional; kept as a guard against future predicate changes).
    """
    params = params or KinematicParams()
    me = state.vehicles[vehicle_id]
    lane_id, s, _ = locate(layout, (me.x, me.y))
    lane = layout.lanes[lane_id]
    chain = lane_follow_chain(layout, lane_id)
    out: list[MacroAction] = [MacroAction("Stop")]

    if _chain_reaches_goal(layout, chain, s, goal):
        out.append(MacroAction("Continue"))

    for neighbor, kind in ((lane.left_neighbor, "Change-left"),
                           (lane.right_neighbor, "Change-right")):
        if neighbor is not None and _headway_ok(state, vehicle_id, layout, neighbor, params):
            out.append(MacroAction(kind))

    junctions = junctions_on_chain(layout, chain)
    if junctions:
        jid, arrival = junctions[0]
        junction = layout.junctions[jid]
        for conn in junction.connections:
            if conn.from_lane != arrival:
                continue
            if conn.direction == "straight" and conn.has_priority:
                continue  # priority straights belong to Continue
            macro = MacroAction("Exit", conn.direction)
            if macro not in out:
                out.append(macro)
    if len(junctions) >= 2:
        out.append(MacroAction("Continue-next-exit"))

    if not out:
        raise NoApplicableActionError(
            f"no applicable macro action for {vehicle_id!r} on lane {lane_id!r}")
    return sorted(out, key=lambda m: m.name)


def expand_macro(macro: MacroAction, state: JointState, vehicle_id: str,
                 layout: RoadLayout) -> list[Maneuver]:
    """Expand a macro action into its manoeuvre chain at the current state."""
    me = state.vehicles[vehicle_id]
    lane_id, _, _ = locate(layout, (me.x, me.y))
    lane = layout.lanes[lane_id]
    chain = lane_follow_chain(layout, lane_id)

    if macro.kind == "Continue":
        return [Maneuver("lane-follow", lanes=tuple(chain))]

    if macro.kind == "Stop":
        return [Maneuver("stop", lanes=tuple(chain))]

    if macro.kind in ("Change-left", "Change-right"):
        target = lane.left_neighbor if macro.kind == "Change-left" else lane.right_neighbor
        if target is None:
            raise InapplicableMacroError(f"{macro.name}: no neighbor lane from {lane_id!r}")
        kind = "lane-change-left" if macro.kind == "Change-left" else "lane-change-right"
        return [Maneuver(kind, lanes=(lane_id,), target_lane=target)]

    if macro.kind in ("Exit", "Continue-next-exit"):
        junctions = junctions_on_chain(layout, chain)
        want_index = 0 if macro.kind == "Exit" else 1
        if len(junctions) <= want_index:
            raise InapplicableMacroError(f"{macro.name}: no junction ahead on lane {lane_id!r}")
        jid, arrival = junctions[want_index]
        junction = layout.junctions[jid]
        conns = [c for c in junction.connections if c.from_lane == arrival]
        if macro.kind == "Exit":
            conns = [c for c in conns if c.direction == macro.direction
                     and not (c.direction == "straight" and c.has_priority)]
            if not conns:
                raise InapplicableMacroError(
                    f"{macro.name}: junction {jid!r} has no {macro.direction} connection "
                    f"from {arrival!r}")
            conn = conns[0]
        else:
            by_pref = {d: i for i, d in enumerate(("right", "straight", "left"))}
            conns = [c for c in conns if not (c.direction == "straight" and c.has_priority)] or conns
            conn = sorted(conns, key=lambda c: by_pref[c.direction])[0]
        approach = chain[:chain.index(arrival) + 1]
        return [
            Maneuver("lane-follow", lanes=tuple(approach), hold_speed=True),
            Maneuver("give-way", lanes=(arrival,), junction=jid,
                     connection=(conn.from_lane, conn.to_lane)),
            Maneuver(f"turn-{conn.direction}", lanes=(conn.to_lane,), junction=jid,
                     connection=(conn.from_lane, conn.to_lane)),
        ]

    raise InapplicableMacroError(f"cannot expand {macro.name}")


# --- rollout -----------------------------------------------------------------


class _Segment:
    """One manoeuvre's integration state."""

    end_speed = 0.0

    def desired_speed(self, v: float, params: KinematicParams) -> float:
        raise NotImplementedError

    def advance_dist(self, dist: float) -> tuple[float, float, float, float]:
        """Move up to dist along the segment; returns pose and distance used."""
        raise NotImplementedError

    def done(self) -> bool:
        raise NotImplementedError

    def conflict_points(self):
        return None


def _envelope(remaining: float, end_speed: float, cruise: float, brake: float) -> float:
    if remaining <= 0.0:
        return end_speed
    return min(cruise, math.sqrt(end_speed * end_speed + 2.0 * brake * remaining))


class _FollowSegment(_Segment):
    def __init__(self, path: Polyline, x: float, y: float, heading: float,
                 cruise: float, end_speed: float, hold_entry: bool = False):
        self.path = path
        s, lat, _ = path.project((x, y))
        self.s = s
        self.heading = heading
        self.cruise = cruise
        self.end_speed = end_speed
        self._hold = hold_entry
        self._entry_v = None

    def desired_speed(self, v, params):
        if self._hold:
            if self._entry_v is None:
                self._entry_v = max(v, self.end_speed)
            cruise = min(self.cruise, self._entry_v)
            brake = params.brake_approach
        else:
            cruise = self.cruise
            brake = params.brake_comfort
        return _envelope(self.path.length - self.s, self.end_speed, cruise, brake)

    def advance_dist(self, dist):
        used = min(dist, self.path.length - self.s)
        self.s += used
        x, y = self.path.point_at(self.s)
        if used > 1e-9:
            self.heading = self.path.heading_at(self.s)
        return float(x), float(y), self.heading, used

    def done(self):
        return self.path.length - self.s < 1e-3


class _StopSegment(_Segment):
    def __init__(self, path: Polyline | None, x: float, y: float, heading: float):
        self.path = path
        self.s = path.project((x, y))[0] if path is not None else 0.0
        self.x, self.y = x, y
        self.heading = heading
        self.v_last = None
        self.end_speed = 0.0

    def desired_speed(self, v, params):
        return max(0.0, v - params.brake_comfort * 0.2)  # steady comfortable braking

    def advance_dist(self, dist):
        self.v_last = dist  # proxy: zero movement means stopped
        if self.path is None:
            return self.x, self.y, self.heading, 0.0
        used = min(dist, self.path.length - self.s)
        self.s += used
        x, y = self.path.point_at(self.s)
        self.x, self.y = float(x), float(y)
        if used > 1e-9:
            self.heading = self.path.heading_at(self.s)
        return self.x, self.y, self.heading, used

    def done(self):
        return self.v_last is not None and self.v_last < 1e-4


class _LaneChangeSegment(_Segment):
    """Cubic lateral blend onto the target lane over a fixed duration."""

    def __init__(self, path: Polyline, x: float, y: float, heading: float,
                 duration: float, cruise: float):
        self.path = path
        s, lat, _ = path.project((x, y))
        self.s = s
        self.lat = lat
        self.lat0 = lat
        self.u = 0.0
        self.duration = duration
        self.cruise = cruise
        self.end_speed = cruise
        self.x, self.y = x, y
        self.heading = heading

    def desired_speed(self, v, params):
        return _envelope(self.path.length - self.s, 0.0, self.cruise, params.brake_comfort)

    def advance(self, v, dt):
        self.u = min(self.u + dt, self.duration)
        new_lat = self.lat0 * (1.0 - smoothstep(self.u / self.duration))
        dlat = new_lat - self.lat
        chord = v * dt
        ds = math.sqrt(max(chord * chord - dlat * dlat, (0.25 * chord) ** 2))
        self.s = min(self.s + ds, self.path.length)
        self.lat = new_lat
        base = self.path.point_at(self.s)
        n = self.path.normal_at(self.s)
        x = float(base[0] + self.lat * n[0])
        y = float(base[1] + self.lat * n[1])
        if self.u >= self.duration - 1e-9:
            # Terminated: aligned with the target lane again.
            self.heading = self.path.heading_at(self.s)
        elif chord > 1e-6:
            self.heading = math.atan2(y - self.y, x - self.x)
        self.x, self.y = x, y
        return x, y, self.heading

    def done(self):
        return self.u >= self.duration - 1e-9


class _GiveWaySegment(_Segment):
    """Approach the stop point; hold zero speed until the predicate clears."""

    def __init__(self, path: Polyline, x: float, y: float, heading: float,
                 conflict_pts: np.ndarray, cleared: bool, turn_speed: float,
                 junction: str | None = None):
        self.path = path
        self.s = path.project((x, y))[0]
        self.heading = heading
        self.x, self.y = x, y
        self._conflict = conflict_pts
        self.cleared = cleared
        self.turn_speed = turn_speed
        self.end_speed = turn_speed
        self.junction = junction

    def desired_speed(self, v, params):
        remaining = self.path.length - self.s
        if self.cleared:
            return _envelope(remaining, self.turn_speed, params.cruise_speed,
                             params.brake_approach)
        return _envelope(remaining, 0.0, params.cruise_speed, params.brake_comfort)

    def advance_dist(self, dist):
        if not self.cleared:
            # Holding for the predicate: approach the stop point but no further.
            dist = min(dist, max(self.path.length - self.s, 0.0))
        used = min(dist, self.path.length - self.s)
        self.s += used
        x, y = self.path.point_at(self.s)
        if used > 1e-9:
            self.heading = self.path.heading_at(self.s)
        self.x, self.y = float(x), float(y)
        return self.x, self.y, self.heading, used

    def done(self):
        return self.cleared and self.path.length - self.s < 0.3

    def conflict_points(self):
        return self._conflict


def _segment_for(m: Maneuver, x: float, y: float, heading: float, layout: RoadLayout,
                 params: KinematicParams, end_speed: float) -> _Segment | None:
    if m.kind == "lane-follow":
        base = chain_polyline(layout, list(m.lanes),
                              from_s=layout.lanes[m.lanes[0]].midline.project((x, y))[0])
        if base is None:
            return None
        lat = base.project((x, y))[1]
        path = merged_path(base, lat)
        return _FollowSegment(path, x, y, heading, params.cruise_speed, end_speed,
                              hold_entry=m.hold_speed)
    if m.kind == "stop":
        base = chain_polyline(layout, list(m.lanes),
                              from_s=layout.lanes[m.lanes[0]].midline.project((x, y))[0])
        return _StopSegment(base, x, y, heading)
    if m.kind in ("lane-change-left", "lane-change-right"):
        target_chain = lane_follow_chain(layout, m.target_lane)
        base = chain_polyline(layout, target_chain,
                              from_s=max(layout.lanes[m.target_lane].midline.project((x, y))[0]
                                         - 1.0, 0.0))
        if base is None:
            raise InapplicableMacroError(f"lane change target {m.target_lane!r} has no room")
        return _LaneChangeSegment(base, x, y, heading, params.lane_change_duration,
                                  params.cruise_speed)
    if m.kind == "give-way":
        incoming = layout.lanes[m.connection[0]].midline
        s_here = incoming.project((x, y))[0]
        remaining = chain_polyline(layout, [m.connection[0]], from_s=s_here)
        conflict = _connection_curve(layout, m.connection)
        if remaining is None:
            # Already at the stop point; a minimal stub keeps the hold logic alive.
            end = incoming.point_at(incoming.length)
            fwd = np.array([math.cos(heading), math.sin(heading)])
            remaining = Polyline([end - 0.05 * fwd, end + 0.05 * fwd])
        return _GiveWaySegment(remaining, x, y, heading, conflict, False, params.turn_speed,
                               junction=m.junction)
    if m.kind.startswith("turn-"):
        pts = _connection_curve(layout, m.connection)
        return _FollowSegment(Polyline(pts), x, y, heading, params.turn_speed, params.turn_speed)
    raise ValueError(f"unknown manoeuvre {m.kind!r}")


def _connection_curve(layout: RoadLayout, connection: tuple[str, str]) -> np.ndarray:
    a = layout.lanes[connection[0]].midline
    b = layout.lanes[connection[1]].midline
    return turn_curve(a.point_at(a.length), a.heading_at(a.length),
                      b.point_at(0.0), b.heading_at(0.0))


def _end_speed_for(i: int, maneuvers: list[Maneuver], params: KinematicParams) -> float:
    nxt = maneuvers[i + 1] if i + 1 < len(maneuvers) else None
    if nxt is None:
        kind = maneuvers[i].kind
        if kind.startswith("turn-"):
            return params.turn_speed
        if kind in ("lane-change-left", "lane-change-right"):
            return params.cruise_speed
        return 0.0
    if nxt.kind in ("give-way",) or nxt.kind.startswith("turn-"):
        return params.turn_speed
    if nxt.kind == "stop":
        return params.cruise_speed
    return params.cruise_speed


def roll_chain(maneuvers: list[Maneuver], start: VehicleState, layout: RoadLayout,
               dt: float, horizon: int, params: KinematicParams | None = None,
               speed_limit_fn=None, giveway_clear_fn=None, t0: int = 0) -> Trajectory:
    """Integrate a manoeuvre chain from a start state.

    speed_limit_fn(x, y, v, segment, t_index) caps the commanded speed
    (car following) and may return None to abort the rollout at the current
    state (the caller detected a terminal condition); giveway_clear_fn
    (segment, t_index) decides when a give-way segment may proceed. The
    rollout stops after `horizon` steps and flags the trajectory truncated
    if the chain did not complete.
    """
    params = params or KinematicParams()
    if not maneuvers:
        raise InapplicableMacroError("empty manoeuvre chain")
    xs = [start.x]
    ys = [start.y]
    hs = [start.heading]
    vs = [start.speed]
    accs: list[float] = []
    x, y, heading, v = start.x, start.y, start.heading, start.speed

    seg_idx = 0
    seg: _Segment | None = None
    steps = 0
    truncated = False

    def next_segment(idx):
        while idx < len(maneuvers):
            built = _segment_for(maneuvers[idx], x, y, heading, layout, params,
                                 _end_speed_for(idx, maneuvers, params))
            if built is not None:
                return built, idx
            idx += 1  # nothing left to drive in this manoeuvre
        return None, idx

    while True:
        if seg is None:
            seg, seg_idx = next_segment(seg_idx)
            if seg is None:
                break
        if steps >= horizon:
            truncated = True
            break
        if isinstance(seg, _GiveWaySegment) and not seg.cleared:
            if giveway_clear_fn is None or giveway_clear_fn(seg, t0 + steps):
                seg.cleared = True
        v_des = seg.desired_speed(v, params)
        if speed_limit_fn is not None:
            limit = speed_limit_fn(x, y, v, seg, t0 + steps)
            if limit is None:
                break
            v_des = min(v_des, limit)
        a = min(max((v_des - v) / dt, -params.brake_max), params.accel_max)
        v_next = max(v + a * dt, 0.0)

        if isinstance(seg, _LaneChangeSegment):
            x, y, heading = seg.advance(v, dt)
        else:
            # Distance budget can span a segment boundary within one step.
            budget = v * dt
            x, y, heading, used = seg.advance_dist(budget)
            while seg.done() and budget - used > 1e-9:
                nxt, nxt_idx = next_segment(seg_idx + 1)
                if nxt is None or isinstance(nxt, _LaneChangeSegment):
                    break
                seg, seg_idx = nxt, nxt_idx
                if isinstance(seg, _GiveWaySegment) and not seg.cleared:
                    if giveway_clear_fn is None or giveway_clear_fn(seg, t0 + steps):
                        seg.cleared = True
                x, y, heading, u2 = seg.advance_dist(budget - used)
                used += u2
            if used < budget - 1e-9 and dt > 0:
                # Chain or hold point reached mid-step: the speed actually
                # driven is what the consistency contract must reflect.
                v_eff = used / dt
                vs[-1] = v_eff
                if accs:
                    accs[-1] = (v_eff - vs[-2]) / dt
                v_next = min(v_next, v_eff)
        xs.append(x)
        ys.append(y)
        hs.append(heading)
        vs.append(v_next)
        accs.append((v_next - vs[-2]) / dt)
        v = v_next
        steps += 1
        if seg.done():
            seg = None
            seg_idx += 1
    accs.append(0.0)
    return Trajectory(dt=dt, xs=np.asarray(xs), ys=np.asarray(ys), headings=np.asarray(hs),
                      speeds=np.asarray(vs), accels=np.asarray(accs), truncated=truncated)


def generate_trajectory(maneuvers: list[Maneuver], start: VehicleState, layout: RoadLayout,
                        dt: float, horizon: int,
                        params: KinematicParams | None = None) -> Trajectory:
    """Traffic-free rollout of a manoeuvre chain (give-way clears instantly)."""
    return roll_chain(maneuvers, start, layout, dt, horizon, params=params)


# --- features ----------------------------------------------------------------


def extract_features(traj: Trajectory, goal: Goal, layout: RoadLayout) -> TrajectoryFeatures:
    """Reward-relevant trajectory features.

    time_to_goal is dt times the first state index inside the goal region,
    or the full duration when the goal is never entered. Jerk is the second
    finite difference of speed, angular acceleration the second difference of
    heading, curvature heading change over arc length; all reported as mean
    absolute values.
    """
    n = len(traj)
    if n == 0:
        raise ValueError("empty trajectory")
    reached = False
    idx = n - 1
    for k in range(n):
        if goal_contains(layout, goal, float(traj.xs[k]), float(traj.ys[k])):
            reached = True
            idx = k
            break
    time_to_goal = idx * traj.dt

    if n < 3:
        return TrajectoryFeatures(time_to_goal, 0.0, 0.0, 0.0, reached)

    v = traj.speeds
    jerk = np.abs(np.diff(v, 2)) / traj.dt ** 2
    dtheta = np.array([normalize_angle(float(traj.headings[i + 1] - traj.headings[i]))
                       for i in range(n - 1)])
    angacc = np.abs(np.diff(dtheta)) / traj.dt ** 2
    ds = np.hypot(np.diff(traj.xs), np.diff(traj.ys))
    moving = ds > 0.01
    curvature = np.abs(dtheta[moving] / ds[moving]) if np.any(moving) else np.array([0.0])
    return TrajectoryFeatures(
        time_to_goal=float(time_to_goal),
        jerk=float(np.mean(jerk)),
        angular_acceleration=float(np.mean(angacc)),
        curvature=float(np.mean(curvature)),
        reached_goal=reached,
    )
