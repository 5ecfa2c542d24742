"""Desk-scale deterministic continuous-control environments with sparse rewards.

Three environments share one step interface:

* ``point_maze`` - a point mass in a walled arena with one interior wall; the
  agent accelerates in x/y and must round the wall to reach the goal circle.
* ``point_four_rooms`` - a 20x20 arena split into four rooms with one
  door (width 2) per shared wall.
* ``line_gripper`` - a planar gripper that must grasp an object, carry it to
  the tray region and release it.

Dynamics are pure functions of (state, action); the extrinsic reward is +1
exactly when the goal predicate holds at the next state, else 0. Horizon
bookkeeping is left to the caller.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

ENV_IDS = ("point_maze", "point_four_rooms", "line_gripper")

# Push-back distance from a wall after a collision, and the clearance used by
# the penetration check in tests.
WALL_EPS = 1e-9


@dataclass(frozen=True)
class Segment:
    """An axis-aligned wall segment."""

    x0: float
    y0: float
    x1: float
    y1: float

    def __post_init__(self):
        if self.x0 != self.x1 and self.y0 != self.y1:
            raise ValueError("wall segments must be axis-aligned")

    @property
    def vertical(self) -> bool:
        return self.x0 == self.x1


@dataclass(frozen=True)
class EnvSpec:
    id: str
    horizon: int
    goal_center: tuple
    goal_radius: float
    walls: tuple
    action_bound: tuple
    dt: float
    init_low: tuple
    init_high: tuple
    v_max: float = 2.0
    # line_gripper only:
    grasp_radius: float = 0.5
    object_init: tuple = (2.0, 1.0)
    goal_while_held: bool = False
    arena: tuple = (0.0, 0.0, 12.0, 8.0)  # xmin, ymin, xmax, ymax

    def __post_init__(self):
        if self.id not in ENV_IDS:
            raise ValueError(f"unknown env id {self.id!r}")
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        if self.goal_radius <= 0:
            raise ValueError("goal radius must be positive")

    @property
    def state_dim(self) -> int:
        return 6 if self.id == "line_gripper" else 4

    @property
    def action_dim(self) -> int:
        return 3 if self.id == "line_gripper" else 2


@dataclass
class StepResult:
    next_state: np.ndarray
    extrinsic_reward: float
    done: bool
    info: dict = field(default_factory=dict)


def point_maze_spec() -> EnvSpec:
    """12x8 arena; one interior wall at x=6 with a gap of 2.5 at the top.

    The start box sits in the bottom-left corner, the goal circle in the
    bottom-right: reaching it means climbing the left corridor, passing the
    gap and descending the right corridor.
    """
    arena = (0.0, 0.0, 12.0, 8.0)
    return EnvSpec(
        id="point_maze",
        horizon=120,
        goal_center=(11.0, 1.0),
        goal_radius=0.6,
        walls=_boundary_walls(arena) + (Segment(6.0, 0.0, 6.0, 5.5),),
        action_bound=(1.0, 1.0),
        dt=0.25,
        init_low=(0.5, 0.5, 0.0, 0.0),
        init_high=(1.5, 1.5, 0.0, 0.0),
        v_max=2.0,
        arena=arena,
    )


def point_four_rooms_spec() -> EnvSpec:
    """20x20 arena, four rooms, one door of width 2 per shared wall.

    Start in the bottom-left room, goal in the top-right room; the straight
    line between them hits the central corner, so every route passes two
    doors.
    """
    arena = (0.0, 0.0, 20.0, 20.0)
    walls = _boundary_walls(arena) + (
        # vertical divider x=10 with doors at y in [4,6] and [14,16]
        Segment(10.0, 0.0, 10.0, 4.0),
        Segment(10.0, 6.0, 10.0, 14.0),
        Segment(10.0, 16.0, 10.0, 20.0),
        # horizontal divider y=10 with doors at x in [4,6] and [14,16]
        Segment(0.0, 10.0, 4.0, 10.0),
        Segment(6.0, 10.0, 14.0, 10.0),
        Segment(16.0, 10.0, 20.0, 10.0),
    )
    return EnvSpec(
        id="point_four_rooms",
        horizon=200,
        goal_center=(17.5, 17.5),
        goal_radius=0.8,
        walls=walls,
        action_bound=(1.0, 1.0),
        dt=0.25,
        init_low=(1.0, 1.0, 0.0, 0.0),
        init_high=(3.0, 3.0, 0.0, 0.0),
        v_max=2.0,
        arena=arena,
    )


def line_gripper_spec() -> EnvSpec:
    """Planar gripper over a 10x6 workspace; tray circle on the right.

    Training episodes start with the gripper open in mid-air and the object
    resting on the left; success requires grasping, carrying and releasing
    inside the tray.
    """
    arena = (0.0, 0.0, 10.0, 6.0)
    return EnvSpec(
        id="line_gripper",
        horizon=60,
        goal_center=(8.0, 1.2),
        goal_radius=0.7,
        walls=_boundary_walls(arena),
        action_bound=(1.0, 1.0, 1.0),
        dt=0.5,
        # gripper x, y, grip_open, object x, y, holding
        init_low=(4.5, 3.5, 1.0, 2.0, 1.0, 0.0),
        init_high=(5.5, 4.5, 1.0, 2.0, 1.0, 0.0),
        grasp_radius=0.5,
        object_init=(2.0, 1.0),
        arena=arena,
    )


_BUILDERS = {
    "point_maze": point_maze_spec,
    "point_four_rooms": point_four_rooms_spec,
    "line_gripper": line_gripper_spec,
}


def make_spec(env_id: str) -> EnvSpec:
    try:
        return _BUILDERS[env_id]()
    except KeyError:
        raise ValueError(f"unknown env id {env_id!r}") from None


def _boundary_walls(arena) -> tuple:
    xmin, ymin, xmax, ymax = arena
    return (
        Segment(xmin, ymin, xmax, ymin),
        Segment(xmin, ymax, xmax, ymax),
        Segment(xmin, ymin, xmin, ymax),
        Segment(xmax, ymin, xmax, ymax),
    )


def reset(spec: EnvSpec, rng) -> np.ndarray:
    """Sample an initial state uniformly from the declared start box."""
    low = np.asarray(spec.init_low, dtype=np.float64)
    high = np.asarray(spec.init_high, dtype=np.float64)
    state = low + (high - low) * rng.uniform(size=low.shape)
    return state


def is_goal(spec: EnvSpec, state) -> bool:
    state = np.asarray(state, dtype=np.float64)
    if spec.id == "line_gripper":
        obj = state[3:5]
        holding = state[5] >= 0.5
        inside = np.linalg.norm(obj - np.asarray(spec.goal_center)) <= spec.goal_radius
        if spec.goal_while_held:
            return bool(inside)
        return bool(inside and not holding)
    pos = state[:2]
    return bool(np.linalg.norm(pos - np.asarray(spec.goal_center)) <= spec.goal_radius)


def _segment_hit(p, q, wall: Segment):
    """Earliest crossing parameter t in (0, 1] of motion p->q through a wall."""
    if wall.vertical:
        axis, lo, hi, plane = 0, min(wall.y0, wall.y1), max(wall.y0, wall.y1), wall.x0
    else:
        axis, lo, hi, plane = 1, min(wall.x0, wall.x1), max(wall.x0, wall.x1), wall.y0
    s0 = p[axis] - plane
    s1 = q[axis] - plane
    if s0 == 0.0 or s1 == s0 or s0 * s1 > 0.0:
        return None
    t = s0 / (s0 - s1)
    if not (0.0 < t <= 1.0):
        return None
    other = 1 - axis
    hit = p[other] + t * (q[other] - p[other])
    if lo <= hit <= hi:
        return t, axis, plane, -1.0 if s0 < 0.0 else 1.0
    return None


def _resolve_motion(p, v, walls, dt):
    """Move p by v*dt, truncating at the first wall hit and zeroing the
    velocity component into the wall."""
    q = p + v * dt
    best = None
    for wall in walls:
        hit = _segment_hit(p, q, wall)
        if hit is not None and (best is None or hit[0] < best[0]):
            best = hit
    if best is None:
        return q, v, False
    t, axis, plane, side = best
    new_p = p + t * (q - p)
    # land a hair on the approach side of the wall plane
    new_p[axis] = plane + side * WALL_EPS
    new_v = v.copy()
    new_v[axis] = 0.0
    return new_p, new_v, True


def step(spec: EnvSpec, state, action) -> StepResult:
    """Advance one time step; deterministic in (state, action)."""
    state = np.asarray(state, dtype=np.float64)
    action = np.asarray(action, dtype=np.float64)
    if action.shape != (spec.action_dim,):
        raise ValueError(f"action shape {action.shape} != ({spec.action_dim},)")
    if not np.all(np.isfinite(action)):
        raise ValueError("non-finite action rejected")
    bound = np.asarray(spec.action_bound, dtype=np.float64)
    clipped = np.clip(action, -bound, bound)
    was_clipped = bool(np.any(clipped != action))

    if spec.id == "line_gripper":
        next_state, collided = _gripper_step(spec, state, clipped)
    else:
        next_state, collided = _nav_step(spec, state, clipped)

    goal = is_goal(spec, next_state)
    return StepResult(
        next_state=next_state,
        extrinsic_reward=1.0 if goal else 0.0,
        done=goal,
        info={"collision": collided, "goal": goal, "action_clipped": was_clipped},
    )


def _nav_step(spec: EnvSpec, state, action):
    p = state[:2].copy()
    v = state[2:4].copy()
    v = np.clip(v + action * spec.dt, -spec.v_max, spec.v_max)
    p, v, collided = _resolve_motion(p, v, spec.walls, spec.dt)
    return np.concatenate([p, v]), collided


def _gripper_step(spec: EnvSpec, state, action):
    g = state[:2].copy()
    grip_open = float(state[2])
    obj = state[3:5].copy()
    holding = state[5] >= 0.5

    g, _, collided = _resolve_motion(g, action[:2], spec.walls, spec.dt)
    grip_open = float(np.clip(grip_open + action[2] * spec.dt, 0.0, 1.0))

    if holding:
        if grip_open >= 0.5:
            holding = False
            obj = g.copy()
    else:
        if grip_open < 0.5 and np.linalg.norm(g - obj) <= spec.grasp_radius:
            holding = True
    if holding:
        obj = g.copy()

    next_state = np.concatenate([g, [grip_open], obj, [1.0 if holding else 0.0]])
    return next_state, collided


# ---------------------------------------------------------------------------
# Layout serialization: a structured text file so tests can pin geometry.

_LAYOUT_HEADER = "irdec-env v1"


def spec_to_text(spec: EnvSpec) -> str:
    lines = [_LAYOUT_HEADER]
    lines.append(f"id {spec.id}")
    lines.append(f"horizon {spec.horizon}")
    lines.append(f"dt {spec.dt!r}")
    lines.append(f"v_max {spec.v_max!r}")
    lines.append("goal " + " ".join(repr(float(v)) for v in spec.goal_center)
                 + f" {spec.goal_radius!r}")
    lines.append("arena " + " ".join(repr(float(v)) for v in spec.arena))
    lines.append("action_bound " + " ".join(repr(float(v)) for v in spec.action_bound))
    lines.append("init_low " + " ".join(repr(float(v)) for v in spec.init_low))
    lines.append("init_high " + " ".join(repr(float(v)) for v in spec.init_high))
    if spec.id == "line_gripper":
        lines.append(f"grasp_radius {spec.grasp_radius!r}")
        lines.append("object_init " + " ".join(repr(float(v)) for v in spec.object_init))
        lines.append(f"goal_while_held {int(spec.goal_while_held)}")
    for w in spec.walls:
        lines.append(f"wall {w.x0!r} {w.y0!r} {w.x1!r} {w.y1!r}")
    return "\n".join(lines) + "\n"


def spec_from_text(text: str) -> EnvSpec:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0] != _LAYOUT_HEADER:
        raise ValueError("not an environment layout file")
    fields = {}
    walls = []
    for ln in lines[1:]:
        key, *rest = ln.split()
        if key == "wall":
            walls.append(Segment(*(float(v) for v in rest)))
        else:
            fields[key] = rest
    goal = [float(v) for v in fields["goal"]]
    kwargs = dict(
        id=fields["id"][0],
        horizon=int(fields["horizon"][0]),
        dt=float(fields["dt"][0]),
        v_max=float(fields["v_max"][0]),
        goal_center=tuple(goal[:-1]),
        goal_radius=goal[-1],
        arena=tuple(float(v) for v in fields["arena"]),
        action_bound=tuple(float(v) for v in fields["action_bound"]),
        init_low=tuple(float(v) for v in fields["init_low"]),
        init_high=tuple(float(v) for v in fields["init_high"]),
        walls=tuple(walls),
    )
    if kwargs["id"] == "line_gripper":
        kwargs["grasp_radius"] = float(fields["grasp_radius"][0])
        kwargs["object_init"] = tuple(float(v) for v in fields["object_init"])
        kwargs["goal_while_held"] = bool(int(fields["goal_while_held"][0]))
    return EnvSpec(**kwargs)


def save_spec(spec: EnvSpec, path):
    with open(path, "w") as fh:
        fh.write(spec_to_text(spec))


def load_spec(path) -> EnvSpec:
    with open(path) as fh:
        return spec_from_text(fh.read())
