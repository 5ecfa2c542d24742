"""Generation, storage and sampling of task-specific behaviour demonstrations.

A demo set covers only the final behavioural segment of a task: navigation
demos start just inside the final corridor/room and drive to the goal; gripper
demos start already holding the object and only place it. The demonstrator is
a noisy proportional waypoint controller with retry-until-success, so demos
are reproducibly sub-optimal.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import envs
from .envs import EnvSpec

# Sub-optimality: zero-mean action noise with sigma = 10% of the action bound.
DEMO_NOISE_FRACTION = 0.1
RETRY_BUDGET = 50

_FILE_HEADER = "irdec-demos v1"


class DemoGenerationError(RuntimeError):
    pass


class DemoFormatError(ValueError):
    pass


@dataclass(frozen=True)
class FamiliarRegion:
    """Predicate describing where demo trajectories live.

    Navigation: an axis-aligned box on (x, y). Gripper: holding == 1, or the
    object already released inside the tray.
    """

    env_id: str
    box: tuple = None  # (xmin, ymin, xmax, ymax) for navigation envs

    def contains(self, spec: EnvSpec, state) -> bool:
        state = np.asarray(state, dtype=np.float64)
        if self.env_id == "line_gripper":
            if state[5] >= 0.5:
                return True
            obj = state[3:5]
            return bool(
                np.linalg.norm(obj - np.asarray(spec.goal_center)) <= spec.goal_radius
            )
        xmin, ymin, xmax, ymax = self.box
        return bool(xmin <= state[0] <= xmax and ymin <= state[1] <= ymax)


@dataclass
class DemoTrajectory:
    env_id: str
    states: np.ndarray  # (T, state_dim)
    actions: np.ndarray  # (T, action_dim)
    terminal_success: bool

    def __len__(self):
        return self.states.shape[0]


@dataclass
class DemoSet:
    env_id: str
    trajectories: list

    def __len__(self):
        return len(self.trajectories)

    @property
    def n_pairs(self) -> int:
        return sum(len(t) for t in self.trajectories)

    def all_states(self) -> np.ndarray:
        return np.concatenate([t.states for t in self.trajectories], axis=0)

    def all_actions(self) -> np.ndarray:
        return np.concatenate([t.actions for t in self.trajectories], axis=0)


# Per-environment demo segment: where demos start and which waypoints the
# scripted controller tracks on its way to the goal.
_DEMO_SEGMENTS = {
    "point_maze": {
        "start_low": (6.5, 6.0),
        "start_high": (7.5, 7.0),
        "region": FamiliarRegion("point_maze", box=(6.25, 0.0, 12.0, 8.0)),
        "max_len": 60,
    },
    "point_four_rooms": {
        "start_low": (14.5, 11.0),
        "start_high": (16.5, 12.5),
        "region": FamiliarRegion("point_four_rooms", box=(10.25, 10.25, 20.0, 20.0)),
        "max_len": 60,
    },
    "line_gripper": {
        "start_low": (1.5, 3.0),
        "start_high": (2.5, 4.0),
        "region": FamiliarRegion("line_gripper"),
        "max_len": 25,
    },
}


def familiar_region(env_id: str) -> FamiliarRegion:
    return _DEMO_SEGMENTS[env_id]["region"]


def demo_max_len(env_id: str) -> int:
    return _DEMO_SEGMENTS[env_id]["max_len"]


def _nav_controller_action(spec: EnvSpec, state, target):
    """Proportional waypoint tracking: command the acceleration that steers
    the current velocity toward a capped approach velocity."""
    pos, vel = state[:2], state[2:4]
    delta = np.asarray(target) - pos
    dist = np.linalg.norm(delta)
    if dist > 1e-12:
        speed = min(spec.v_max, dist / spec.dt)
        v_des = delta / dist * speed
    else:
        v_des = np.zeros(2)
    return (v_des - vel) / spec.dt


def _run_nav_demo(spec: EnvSpec, seg, rng, noise_sigma):
    low = np.asarray(seg["start_low"] + (0.0, 0.0))
    high = np.asarray(seg["start_high"] + (0.0, 0.0))
    state = low + (high - low) * rng.uniform(size=4)
    bound = np.asarray(spec.action_bound)
    states, actions = [], []
    for _ in range(seg["max_len"]):
        a = _nav_controller_action(spec, state, spec.goal_center)
        if noise_sigma > 0.0:
            a = a + rng.normal(0.0, noise_sigma, size=a.shape) * bound
        a = np.clip(a, -bound, bound)
        states.append(state.copy())
        actions.append(a.copy())
        result = envs.step(spec, state, a)
        state = result.next_state
        if result.done:
            return DemoTrajectory(spec.id, np.array(states), np.array(actions), True)
    return None


def _run_gripper_demo(spec: EnvSpec, seg, rng, noise_sigma):
    low = np.asarray(seg["start_low"])
    high = np.asarray(seg["start_high"])
    g = low + (high - low) * rng.uniform(size=2)
    # already holding the object with the grip closed
    state = np.concatenate([g, [0.0], g, [1.0]])
    bound = np.asarray(spec.action_bound)
    goal = np.asarray(spec.goal_center)
    above_tray = goal + np.array([0.0, 1.5])
    states, actions = [], []
    for _ in range(seg["max_len"]):
        gpos = state[:2]
        if np.linalg.norm(gpos - goal) <= 0.5 * spec.goal_radius:
            move = np.zeros(2)
            grip = 1.0  # open to release
        else:
            target = goal if abs(gpos[0] - goal[0]) < 0.8 else above_tray
            delta = target - gpos
            dist = np.linalg.norm(delta)
            speed = min(1.0, dist / spec.dt)
            move = delta / max(dist, 1e-12) * speed
            grip = -1.0  # keep closed while carrying
        a = np.concatenate([move, [grip]])
        if noise_sigma > 0.0:
            a = a + rng.normal(0.0, noise_sigma, size=a.shape) * bound
        a = np.clip(a, -bound, bound)
        states.append(state.copy())
        actions.append(a.copy())
        result = envs.step(spec, state, a)
        state = result.next_state
        if result.done:
            return DemoTrajectory(spec.id, np.array(states), np.array(actions), True)
    return None


def generate_demos(spec: EnvSpec, n: int, rng,
                   noise_sigma: float = DEMO_NOISE_FRACTION) -> DemoSet:
    """Generate ``n`` successful demo trajectories for ``spec``.

    Each trajectory starts inside the familiar region and is produced by the
    scripted controller with additive action noise; failed attempts are
    retried up to a budget.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    seg = _DEMO_SEGMENTS[spec.id]
    runner = _run_gripper_demo if spec.id == "line_gripper" else _run_nav_demo
    trajectories = []
    for _ in range(n):
        traj = None
        region = seg["region"]
        for _attempt in range(RETRY_BUDGET):
            traj = runner(spec, seg, rng, noise_sigma)
            if traj is not None and not all(
                region.contains(spec, s) for s in traj.states
            ):
                traj = None  # wandered outside the demo segment
            if traj is not None:
                break
        if traj is None:
            raise DemoGenerationError(
                f"demo controller failed {RETRY_BUDGET} times on {spec.id}"
            )
        trajectories.append(traj)
    return DemoSet(spec.id, trajectories)


def sample_pairs(demo_set: DemoSet, k: int, rng):
    """Draw ``k`` (state, action) pairs uniformly over all demo steps,
    with replacement."""
    if k < 1:
        raise ValueError("k must be >= 1")
    if not demo_set.trajectories:
        raise ValueError("cannot sample from an empty demo set")
    states = demo_set.all_states()
    actions = demo_set.all_actions()
    idx = rng.integers(0, states.shape[0], size=k)
    return states[idx], actions[idx]


def transition_arrays(demo_set: DemoSet, spec: EnvSpec):
    """Replay every demo through the simulator into transition arrays.

    Returns ``(s, a, r, s2, done)`` stacked over all demo steps. The stored
    trajectories keep only (state, action) pairs, so the successor state,
    extrinsic reward and done flag of each step are reconstructed exactly by
    stepping the deterministic simulator.
    """
    if not demo_set.trajectories:
        raise ValueError("cannot build transitions from an empty demo set")
    if demo_set.env_id != spec.id:
        raise ValueError(f"demo set is for {demo_set.env_id}, spec is {spec.id}")
    s, a, r, s2, done = [], [], [], [], []
    for traj in demo_set.trajectories:
        state = traj.states[0].copy()
        for t in range(len(traj)):
            result = envs.step(spec, state, traj.actions[t])
            s.append(state)
            a.append(traj.actions[t])
            r.append(result.extrinsic_reward)
            s2.append(result.next_state)
            done.append(1.0 if result.done else 0.0)
            state = result.next_state
    return (np.array(s), np.array(a), np.array(r), np.array(s2),
            np.array(done))


def sample_transitions(transitions, k: int, rng):
    """Uniform with-replacement batch of ``k`` demo transitions."""
    if k < 1:
        raise ValueError("k must be >= 1")
    idx = rng.integers(0, transitions[0].shape[0], size=k)
    return tuple(arr[idx] for arr in transitions)


def _fmt(values) -> str:
    return " ".join(repr(float(v)) for v in values)


def save_demos(demo_set: DemoSet, path):
    """One record per line: env header, then per-trajectory state/action
    records. Floats are printed round-trip exact."""
    with open(path, "w") as fh:
        fh.write(_FILE_HEADER + "\n")
        fh.write(f"env {demo_set.env_id}\n")
        fh.write(f"trajectories {len(demo_set.trajectories)}\n")
        for traj in demo_set.trajectories:
            fh.write(f"traj {len(traj)} success={int(traj.terminal_success)}\n")
            for s, a in zip(traj.states, traj.actions):
                fh.write("s " + _fmt(s) + "\n")
                fh.write("a " + _fmt(a) + "\n")
        fh.write("end\n")


def load_demos(path) -> DemoSet:
    """Parse and validate a demo file; malformed input raises with the
    offending line number and no partial set is returned."""
    with open(path) as fh:
        lines = fh.read().splitlines()

    def fail(lineno, message):
        raise DemoFormatError(f"{path}:{lineno}: {message}")

    if not lines or lines[0] != _FILE_HEADER:
        fail(1, f"expected header {_FILE_HEADER!r}")
    if len(lines) < 3 or not lines[1].startswith("env "):
        fail(2, "missing env record")
    env_id = lines[1].split()[1]
    if env_id not in envs.ENV_IDS:
        fail(2, f"unknown env id {env_id!r}")
    spec = envs.make_spec(env_id)
    bound = np.asarray(spec.action_bound)
    if not lines[2].startswith("trajectories "):
        fail(3, "missing trajectory count")
    declared = int(lines[2].split()[1])

    trajectories = []
    i = 3
    while i < len(lines) and lines[i] != "end":
        parts = lines[i].split()
        if parts[0] != "traj" or len(parts) != 3:
            fail(i + 1, f"expected trajectory record, got {lines[i]!r}")
        n_steps = int(parts[1])
        success = parts[2] == "success=1"
        if not success:
            fail(i + 1, "stored demo trajectories must be successful")
        i += 1
        states, actions = [], []
        for step_idx in range(n_steps):
            for prefix, dim, sink in (("s", spec.state_dim, states),
                                      ("a", spec.action_dim, actions)):
                if i >= len(lines):
                    fail(len(lines), "truncated file")
                parts = lines[i].split()
                if parts[0] != prefix or len(parts) != dim + 1:
                    fail(i + 1, f"expected {prefix!r} record of width {dim}")
                try:
                    sink.append([float(v) for v in parts[1:]])
                except ValueError:
                    fail(i + 1, "unparseable float")
                i += 1
        actions_arr = np.array(actions)
        over = np.abs(actions_arr) > bound
        if np.any(over):
            j, d = np.argwhere(over)[0]
            fail(i, f"action out of bounds at step {j}, dim {d}")
        if not states:
            fail(i, "empty trajectory")
        trajectories.append(DemoTrajectory(env_id, np.array(states), actions_arr, True))
    if i >= len(lines) or lines[i] != "end":
        fail(len(lines), "truncated file: missing end record")
    if len(trajectories) != declared:
        fail(len(lines), f"declared {declared} trajectories, found {len(trajectories)}")
    return DemoSet(env_id, trajectories)


def replay_error(demo_set: DemoSet, spec: EnvSpec) -> float:
    """Max state reconstruction error when replaying each stored action
    sequence from its stored start state through the simulator."""
    worst = 0.0
    for traj in demo_set.trajectories:
        state = traj.states[0].copy()
        for t in range(len(traj)):
            worst = max(worst, float(np.max(np.abs(state - traj.states[t]))))
            state = envs.step(spec, state, traj.actions[t]).next_state
    return worst
