"""Street-corridor V2I geometry: UE motion, obstacles, blockage and multipath."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..config import ScenarioConfig
from ..seeds import numpy_rng

C_LIGHT = 299_792_458.0


@dataclass(frozen=True)
class Box:
    """Axis-aligned box: centre (cx, cy), footprint (wx, wy), height (metres)."""

    cx: float
    cy: float
    wx: float
    wy: float
    height: float

    def shifted(self, dx: float) -> "Box":
        return Box(self.cx + dx, self.cy, self.wx, self.wy, self.height)

    @property
    def bounds(self) -> tuple[float, float, float, float]:
        return (self.cx - self.wx / 2, self.cx + self.wx / 2, self.cy - self.wy / 2, self.cy + self.wy / 2)


@dataclass
class SceneState:
    t: int
    position: np.ndarray  # (2,) metres, BS at origin, array broadside along +y
    velocity: np.ndarray  # (2,) m/s
    gains: np.ndarray  # (L,) complex
    aods: np.ndarray  # (L,) radians from broadside
    blocked: np.ndarray  # (L,) bool
    obstacles: list[Box] = field(default_factory=list)
    blockers: list[Box] = field(default_factory=list)
    ue_box: Box | None = None

    @property
    def los(self) -> bool:
        return not bool(self.blocked[0])


def wavelength(cfg: ScenarioConfig) -> float:
    return C_LIGHT / (cfg.carrier_ghz * 1e9)


def segment_hits_box(p0, p1, box: Box) -> bool:
    """Slab test: does the closed segment p0->p1 intersect the box footprint?"""
    x0, x1, y0, y1 = box.bounds
    d = np.asarray(p1, float) - np.asarray(p0, float)
    t_lo, t_hi = 0.0, 1.0
    for axis, (lo, hi) in enumerate(((x0, x1), (y0, y1))):
        o = float(p0[axis])
        if abs(d[axis]) < 1e-15:
            if o < lo or o > hi:
                return False
            continue
        a, b = (lo - o) / d[axis], (hi - o) / d[axis]
        if a > b:
            a, b = b, a
        t_lo, t_hi = max(t_lo, a), min(t_hi, b)
        if t_lo > t_hi:
            return False
    return True


def aod(point) -> float:
    """Angle from array broadside (+y) towards +x."""
    return float(np.arctan2(point[0], point[1]))


def _path_gain(length: float, lam: float, scale: float) -> complex:
    return scale * lam / (4.0 * np.pi * length) * np.exp(-2j * np.pi * length / lam)


def scene_paths(position, obstacles, blockers, cfg: ScenarioConfig):
    """LoS, far-wall reflection and one scattered path per static obstacle."""
    pos = np.asarray(position, float)
    r = float(np.hypot(*pos))
    if r < 1e-6:
        raise ValueError("degenerate geometry: UE at the BS origin")
    lam = wavelength(cfg)
    loss = 10.0 ** (-cfg.blockage_loss_db / 20.0)
    origin = np.zeros(2)
    all_boxes = list(obstacles) + list(blockers)

    def blocked(a, b, skip=None):
        return any(segment_hits_box(a, b, bx) for bx in all_boxes if bx is not skip)

    gains, aods, flags = [], [], []
    los_blocked = blocked(origin, pos)
    gains.append(_path_gain(r, lam, loss if los_blocked else 1.0))
    aods.append(aod(pos))
    flags.append(los_blocked)

    image = np.array([pos[0], 2.0 * cfg.wall_y - pos[1]])
    hit = image * ((cfg.wall_y) / image[1])
    wall_blocked = blocked(origin, hit) or blocked(hit, pos)
    gains.append(_path_gain(float(np.hypot(*image)), lam, cfg.reflection_coef * (loss if wall_blocked else 1.0)))
    aods.append(aod(image))
    flags.append(wall_blocked)

    for box in obstacles:
        s = np.array([box.cx, box.cy])
        length = float(np.hypot(*s) + np.hypot(*(pos - s)))
        gains.append(_path_gain(length, lam, 0.5 * cfg.reflection_coef))
        aods.append(aod(s))
        flags.append(False)
    return np.array(gains), np.array(aods), np.array(flags, dtype=bool)


def sample_layout(cfg: ScenarioConfig, rng: np.random.Generator):
    """Static obstacles between BS and street, and moving blockers (base boxes + speeds)."""
    obstacles = []
    for _ in range(cfg.n_obstacles):
        obstacles.append(
            Box(
                float(rng.uniform(-18.0, 18.0)),
                float(rng.uniform(4.0, 9.0)),
                float(rng.uniform(1.0, 3.0)),
                float(rng.uniform(1.0, 2.5)),
                float(rng.uniform(2.0, 4.0)),
            )
        )
    blockers = []
    for _ in range(cfg.n_blockers):
        direction = rng.choice([-1.0, 1.0])
        speed = direction * rng.uniform(*cfg.blocker_speed)
        start = float(rng.uniform(cfg.street_x[0] - 10.0, cfg.street_x[1] + 10.0))
        blockers.append((Box(start, 10.0, 10.0, 2.5, 3.5), float(speed)))
    return obstacles, blockers


def simulate_trajectory(cfg: ScenarioConfig, seed: int, n_frames: int | None = None) -> list[SceneState]:
    """Piecewise constant-velocity UE motion with random turn and stop events.

    Within a segment positions are ``p_seg + (t - t_seg) * dt * v_seg``, so a run
    without events reproduces ``p[0] + t * dt * v`` exactly.
    """
    n_frames = cfg.seq_len if n_frames is None else n_frames
    if n_frames < 2:
        raise ValueError("need at least 2 frames")
    rng = numpy_rng(seed)
    obstacles, blockers = sample_layout(cfg, rng)

    direction = float(rng.choice([-1.0, 1.0]))
    speed = float(rng.uniform(*cfg.speed))
    travel = speed * cfg.dt * (n_frames - 1)
    lo, hi = cfg.street_x
    room = max(hi - lo - travel, 0.0)
    x0 = lo + float(rng.uniform(0.0, room)) if direction > 0 else hi - float(rng.uniform(0.0, room))
    y0 = float(rng.uniform(*cfg.street_y))
    heading = 0.0 if direction > 0 else np.pi

    seg_pos = np.array([x0, y0])
    seg_t = 0
    vel = speed * np.array([np.cos(heading), np.sin(heading)])
    stop_left = 0
    states = []
    for t in range(n_frames):
        pos = seg_pos + (t - seg_t) * cfg.dt * vel
        moving = [b.shifted(v * t * cfg.dt) for b, v in blockers]
        gains, aods, flags = scene_paths(pos, obstacles, moving, cfg)
        ue_box = Box(float(pos[0]), float(pos[1]), 4.5, 1.9, 1.5)
        states.append(SceneState(t, pos.copy(), vel.copy(), gains, aods, flags, obstacles, moving, ue_box))

        # events take effect from the next frame on
        new_vel = vel
        if stop_left > 0:
            stop_left -= 1
            if stop_left == 0:
                new_vel = speed * np.array([np.cos(heading), np.sin(heading)])
        elif cfg.stop_prob > 0 and rng.random() < cfg.stop_prob:
            stop_left = cfg.stop_frames
            new_vel = np.zeros(2)
        elif cfg.turn_prob > 0 and rng.random() < cfg.turn_prob:
            heading += np.deg2rad(cfg.turn_deg) * rng.choice([-1.0, 1.0])
            new_vel = speed * np.array([np.cos(heading), np.sin(heading)])
        nxt = pos + cfg.dt * new_vel
        if not (cfg.street_y[0] <= nxt[1] <= cfg.street_y[1]):
            heading = -heading
            if stop_left == 0:
                new_vel = speed * np.array([np.cos(heading), np.sin(heading)])
        if new_vel is not vel:
            seg_pos, seg_t, vel = pos, t, new_vel
    return states
