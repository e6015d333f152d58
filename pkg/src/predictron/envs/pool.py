"""A small 2-D pool table: four balls, four corner pockets, event pseudo-rewards.

The table is the unit square. Ball 0 is the white ball; it is the only ball
moving at the break. Each frame lasts ``dt`` seconds and is integrated in
at least ``substeps`` equal pieces, more when a ball would otherwise move
over half its radius in one piece.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

N_BALLS = 4
N_EVENTS = 14
DISCOUNTS = (0.0, 0.5, 0.9, 0.98, 1.0)
N_TARGETS = N_EVENTS * N_BALLS * len(DISCOUNTS)
INPUT_FRAMES = 5
MAX_FRAMES = 151
# a channel whose event fires once in thousands of episodes would otherwise
# normalise that event to ~1/std and swamp the summed loss
NORM_FLOOR = 0.1

# event indices
EV_BALL = 0
EV_RAIL = 1
EV_ENTER_QUADRANT = 2  # .. 5
EV_IN_QUADRANT = 6  # .. 9
EV_ENTER_POCKET = 10  # .. 13

EVENT_NAMES = (
    ["ball_collision", "rail_collision"]
    + [f"enter_quadrant{q}" for q in range(4)]
    + [f"in_quadrant{q}" for q in range(4)]
    + [f"enter_pocket{p}" for p in range(4)]
)

POCKETS = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])
BALL_COLOURS = np.array([[1.0, 1.0, 1.0], [0.9, 0.1, 0.1], [0.95, 0.85, 0.1], [0.1, 0.2, 0.9]])
TABLE_COLOUR = np.array([0.1, 0.45, 0.2])


@dataclass
class Physics:
    friction: float = 0.8  # linear deceleration, units / s^2
    restitution: float = 0.95
    radius: float = 0.03
    pocket_radius: float = 0.06
    dt: float = 1.0 / 30.0
    substeps: int = 4
    stop_speed: float = 0.01
    speed_scale: float = 0.5  # break speeds 7..14 -> 3.5..7 table units / s

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass
class TableState:
    pos: np.ndarray  # [4, 2]
    vel: np.ndarray  # [4, 2]
    active: np.ndarray  # [4] bool, False once pocketed
    speed: float = 0.0  # break speed in the 7..14 units
    angle: float = 0.0

    def copy(self) -> "TableState":
        return TableState(self.pos.copy(), self.vel.copy(), self.active.copy(), self.speed, self.angle)


@dataclass
class Frame:
    pos: np.ndarray
    vel: np.ndarray
    active: np.ndarray
    ball_contact: np.ndarray  # [4] bool, touched another ball during the frame
    rail_contact: np.ndarray  # [4] bool
    pocketed: np.ndarray  # [4] int, pocket index entered this frame or -1


@dataclass
class Episode:
    frames: list[Frame]
    events: np.ndarray  # [T, 4, 14] float32
    rejected: bool
    state: TableState | None = None
    extra: dict = field(default_factory=dict)

    @property
    def n_frames(self) -> int:
        return len(self.frames)


def _rng(seed) -> np.random.Generator:
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


def place_balls(rng, physics: Physics = Physics()) -> np.ndarray:
    """Four uniform, pairwise non-overlapping centres away from rails and pockets."""
    r = physics.radius
    pos = np.zeros((N_BALLS, 2))
    i = 0
    while i < N_BALLS:
        p = rng.uniform(r, 1 - r, size=2)
        if np.min(np.linalg.norm(POCKETS - p, axis=1)) <= physics.pocket_radius + r:
            continue
        if i and np.min(np.linalg.norm(pos[:i] - p, axis=1)) <= 2 * r:
            continue
        pos[i] = p
        i += 1
    return pos


def shot(pos: np.ndarray, speed: float, angle: float, physics: Physics = Physics()) -> TableState:
    vel = np.zeros((N_BALLS, 2))
    v = speed * physics.speed_scale
    vel[0] = (v * math.cos(angle), v * math.sin(angle))
    return TableState(pos.copy(), vel, np.ones(N_BALLS, dtype=bool), float(speed), float(angle))


def sample_break(seed, physics: Physics = Physics()) -> TableState:
    rng = _rng(seed)
    pos = place_balls(rng, physics)
    speed = rng.uniform(7.0, 14.0)
    angle = rng.uniform(0.0, 2 * math.pi)
    return shot(pos, speed, angle, physics)


def kinetic_energy(state_or_frame) -> float:
    v = state_or_frame.vel[state_or_frame.active]
    return 0.5 * float((v * v).sum())


def _substep(st: TableState, ph: Physics, h: float, ball_hit, rail_hit, pocketed) -> None:
    r = ph.radius
    pos, vel, active = st.pos, st.vel, st.active
    for i in range(N_BALLS):
        if not active[i]:
            continue
        sp = math.hypot(vel[i, 0], vel[i, 1])
        if sp > 0.0:
            new = max(sp - ph.friction * h, 0.0)
            vel[i] *= new / sp
            pos[i] += vel[i] * h
    # equal-mass elastic collisions
    for i in range(N_BALLS):
        if not active[i]:
            continue
        for j in range(i + 1, N_BALLS):
            if not active[j]:
                continue
            d = pos[j] - pos[i]
            dist = math.hypot(d[0], d[1])
            if dist >= 2 * r or dist == 0.0:
                continue
            n = d / dist
            approach = float(np.dot(vel[i] - vel[j], n))
            if approach > 0.0:
                dv = approach * n
                vel[i] -= dv
                vel[j] += dv
            overlap = 2 * r - dist
            pos[i] -= 0.5 * overlap * n
            pos[j] += 0.5 * overlap * n
            ball_hit[i] = ball_hit[j] = True
    for i in range(N_BALLS):
        if not active[i]:
            continue
        for axis in (0, 1):
            if pos[i, axis] < r:
                pos[i, axis] = min(2 * r - pos[i, axis], 1 - r)
                if vel[i, axis] < 0:
                    vel[i, axis] *= -ph.restitution
                    vel[i, 1 - axis] *= ph.restitution
                rail_hit[i] = True
            elif pos[i, axis] > 1 - r:
                pos[i, axis] = max(2 * (1 - r) - pos[i, axis], r)
                if vel[i, axis] > 0:
                    vel[i, axis] *= -ph.restitution
                    vel[i, 1 - axis] *= ph.restitution
                rail_hit[i] = True
        dists = np.hypot(POCKETS[:, 0] - pos[i, 0], POCKETS[:, 1] - pos[i, 1])
        p = int(np.argmin(dists))
        if dists[p] < ph.pocket_radius:
            active[i] = False
            vel[i] = 0.0
            pocketed[i] = p


def _snapshot(st: TableState, ball_hit, rail_hit, pocketed) -> Frame:
    return Frame(st.pos.copy(), st.vel.copy(), st.active.copy(), ball_hit, rail_hit, pocketed)


def step_frame(st: TableState, ph: Physics) -> Frame:
    """Advance ``st`` in place by one frame and return the frame record."""
    ball_hit = np.zeros(N_BALLS, dtype=bool)
    rail_hit = np.zeros(N_BALLS, dtype=bool)
    pocketed = np.full(N_BALLS, -1)
    v = st.vel[st.active]
    vmax = float(np.max(np.hypot(v[:, 0], v[:, 1]))) if v.size else 0.0
    n = max(ph.substeps, math.ceil(vmax * ph.dt / (0.5 * ph.radius)))
    h = ph.dt / n
    for _ in range(n):
        _substep(st, ph, h, ball_hit, rail_hit, pocketed)
    # a pocketed ball logs the pocket, not the rail it brushed on the way in
    rail_hit &= pocketed < 0
    return _snapshot(st, ball_hit, rail_hit, pocketed)


def is_moving(st: TableState, ph: Physics) -> bool:
    v = st.vel[st.active]
    return bool(v.size) and float(np.max(np.hypot(v[:, 0], v[:, 1]))) >= ph.stop_speed


def simulate_episode(state: TableState, physics: Physics = Physics(),
                     max_frames: int = MAX_FRAMES, min_frames: int = INPUT_FRAMES + 1) -> Episode:
    """Roll the table forward until every ball stops.

    Frame 0 is the initial state. Episodes longer than ``max_frames`` stop
    early and come back with ``rejected=True``; short ones are padded with
    stationary frames up to ``min_frames``.
    """
    st = state.copy()
    none = np.zeros(N_BALLS, dtype=bool)
    frames = [_snapshot(st, none.copy(), none.copy(), np.full(N_BALLS, -1))]
    rejected = False
    while is_moving(st, physics) or len(frames) < min_frames:
        if len(frames) >= max_frames:
            rejected = True
            break
        frames.append(step_frame(st, physics))
    return Episode(frames, detect_events(frames), rejected, state)


def quadrant(p: np.ndarray) -> int:
    return int(p[0] >= 0.5) + 2 * int(p[1] >= 0.5)


def detect_events(frames: list[Frame]) -> np.ndarray:
    """[T, 4, 14] binary pseudo-rewards; entering events fire on the transition frame only."""
    T = len(frames)
    ev = np.zeros((T, N_BALLS, N_EVENTS), dtype=np.float32)
    prev_q = [quadrant(frames[0].pos[b]) for b in range(N_BALLS)]
    for t, fr in enumerate(frames):
        for b in range(N_BALLS):
            if fr.ball_contact[b]:
                ev[t, b, EV_BALL] = 1
            if fr.rail_contact[b]:
                ev[t, b, EV_RAIL] = 1
            if fr.pocketed[b] >= 0:
                ev[t, b, EV_ENTER_POCKET + fr.pocketed[b]] = 1
            if not fr.active[b]:
                continue
            q = quadrant(fr.pos[b])
            ev[t, b, EV_IN_QUADRANT + q] = 1
            if t > 0 and q != prev_q[b]:
                ev[t, b, EV_ENTER_QUADRANT + q] = 1
            prev_q[b] = q
    return ev


def target_index(event: int, ball: int, discount_idx: int) -> int:
    """Position of one GVF in the 280-vector (event-major, then ball, then discount)."""
    return (event * N_BALLS + ball) * len(DISCOUNTS) + discount_idx


def compute_gvf_targets(events: np.ndarray, origin: int = INPUT_FRAMES,
                        discounts=DISCOUNTS) -> np.ndarray:
    """sum_t gamma^t reward_{t+1}, where reward_1 is the frame at ``origin``."""
    rewards = events[origin:].reshape(events.shape[0] - origin, -1).astype(np.float64)  # [T', 56]
    steps = np.arange(rewards.shape[0])
    out = np.empty((rewards.shape[1], len(discounts)))
    for d, gamma in enumerate(discounts):
        if gamma == 0.0:
            weights = (steps == 0).astype(np.float64)
        else:
            weights = gamma ** steps
        out[:, d] = weights @ rewards
    # reorder from (ball, event) channels to the event-major layout
    out = out.reshape(N_BALLS, N_EVENTS, len(discounts)).transpose(1, 0, 2)
    return out.reshape(-1)


# rendering ------------------------------------------------------------------

def rasterize(pos: np.ndarray, active: np.ndarray, size: int, radius: float) -> np.ndarray:
    """[3, size, size] image; row 0 is the top rail (y = 1)."""
    centres = (np.arange(size) + 0.5) / size
    xs = centres[None, :]
    ys = (1.0 - centres)[:, None]
    img = np.empty((3, size, size))
    img[:] = TABLE_COLOUR[:, None, None]
    for b in range(N_BALLS):
        if not active[b]:
            continue
        # only test pixels inside the ball's bounding box
        x0, x1 = _span(pos[b, 0], radius, size)
        y0, y1 = _span(1.0 - pos[b, 1], radius, size)
        mask = ((xs[:, x0:x1] - pos[b, 0]) ** 2 + (ys[y0:y1] - pos[b, 1]) ** 2) <= radius * radius
        img[:, y0:y1, x0:x1][:, mask] = BALL_COLOURS[b][:, None]
    return img


def _span(centre: float, radius: float, size: int) -> tuple[int, int]:
    lo = max(int(math.floor((centre - radius) * size)) - 1, 0)
    hi = min(int(math.ceil((centre + radius) * size)) + 1, size)
    return lo, hi


def bilinear_weights(n_in: int, n_out: int) -> np.ndarray:
    """[n_out, n_in] triangle-filter weights, widened by the scale when shrinking."""
    scale = n_in / n_out
    support = max(scale, 1.0)
    w = np.zeros((n_out, n_in))
    src = np.arange(n_in) + 0.5
    for o in range(n_out):
        centre = (o + 0.5) * scale
        k = np.clip(1.0 - np.abs(src - centre) / support, 0.0, None)
        w[o] = k / k.sum()
    return w


_WEIGHTS: dict = {}


def downsample(img: np.ndarray, out_size: int) -> np.ndarray:
    c, h, w = img.shape
    key = (h, w, out_size)
    if key not in _WEIGHTS:
        _WEIGHTS[key] = (bilinear_weights(h, out_size), bilinear_weights(w, out_size).T.copy())
    wy, wxt = _WEIGHTS[key]
    return wy @ img @ wxt


def render_frame(frame_or_state, size: int = 16, physics: Physics = Physics(),
                 supersample: int = 10) -> np.ndarray:
    hi = rasterize(frame_or_state.pos, frame_or_state.active, size * supersample, physics.radius)
    return downsample(hi, size).astype(np.float32)


def episode_input(ep: Episode, size: int = 16, physics: Physics = Physics()) -> np.ndarray:
    """The first five frames stacked into a [15, size, size] input."""
    return np.concatenate([render_frame(ep.frames[t], size, physics) for t in range(INPUT_FRAMES)])


def sample_episode(rng, physics: Physics = Physics(), max_tries: int = 100) -> tuple[Episode, int]:
    """Sample breaks until one is accepted; returns the episode and rejection count."""
    rng = _rng(rng)
    for tries in range(max_tries):
        ep = simulate_episode(sample_break(rng, physics), physics)
        if not ep.rejected:
            return ep, tries
    raise RuntimeError("no accepted episode after max_tries breaks")


def generate_dataset(rng, n: int, size: int = 16, physics: Physics = Physics()):
    """(inputs [n,15,s,s], raw targets [n,280]) from ``n`` accepted episodes."""
    rng = _rng(rng)
    xs = np.empty((n, 3 * INPUT_FRAMES, size, size), dtype=np.float32)
    ys = np.empty((n, N_TARGETS), dtype=np.float64)
    for i in range(n):
        ep, _ = sample_episode(rng, physics)
        xs[i] = episode_input(ep, size, physics)
        ys[i] = compute_gvf_targets(ep.events)
    return xs, ys


@dataclass
class NormStats:
    scale: np.ndarray
    degenerate: np.ndarray


def normalization_stats(targets: np.ndarray, min_std: float = 1e-6, floor: float = 0.0) -> NormStats:
    """Per-dimension std of unnormalised targets.

    Stds below ``min_std`` (constant channels) fall back to 1; the rest are
    raised to at least ``floor``.
    """
    targets = np.asarray(targets, dtype=np.float64)
    if targets.shape[0] < 2:
        raise ValueError("need at least two samples for normalisation statistics")
    std = targets.std(axis=0)
    degenerate = std < min_std
    return NormStats(np.where(degenerate, 1.0, np.maximum(std, floor)), degenerate)


def pool_normalization(rng, n_episodes: int, physics: Physics = Physics()) -> NormStats:
    rng = _rng(rng)
    ys = np.empty((n_episodes, N_TARGETS))
    for i in range(n_episodes):
        ep, _ = sample_episode(rng, physics)
        ys[i] = compute_gvf_targets(ep.events)
    return normalization_stats(ys, floor=NORM_FLOOR)
