"""Trajectory ingestion: ETH/UCY text files, scene windows, normalization.

File format (one observation per line, whitespace separated)::

    frame_index agent_id x y

Blank lines and lines starting with ``#`` are ignored. Public dumps of these
datasets disagree on column order; ``swap_xy=True`` reads ``frame agent y x``.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field

import numpy as np


class DataFormatError(ValueError):
    pass


@dataclass
class ObservationTable:
    """Observation records sorted by (agent_id, frame)."""

    frames: np.ndarray  # int64 [R]
    agents: np.ndarray  # int64 [R]
    xy: np.ndarray  # float64 [R, 2]
    sampling_rate: float = 2.5

    def __len__(self):
        return len(self.frames)

    @property
    def agent_ids(self):
        return np.unique(self.agents)

    @classmethod
    def from_records(cls, records, sampling_rate=2.5):
        arr = np.asarray(records, dtype=np.float64).reshape(-1, 4)
        frames = arr[:, 0].astype(np.int64)
        agents = arr[:, 1].astype(np.int64)
        order = np.lexsort((frames, agents))
        table = cls(frames[order], agents[order], arr[order, 2:4].copy(), sampling_rate)
        table._check_unique()
        return table

    def _check_unique(self):
        if len(self) < 2:
            return
        same = (np.diff(self.agents) == 0) & (np.diff(self.frames) == 0)
        if same.any():
            k = int(np.argmax(same))
            raise DataFormatError(
                f"duplicate observation for frame {self.frames[k]}, agent {self.agents[k]}"
            )


def parse_ethucy(source, swap_xy=False, sampling_rate=2.5) -> ObservationTable:
    """Parse a trajectory file given as a path, raw bytes, or an open stream."""
    if isinstance(source, (bytes, bytearray)):
        text = bytes(source).decode()
    elif hasattr(source, "read"):
        raw = source.read()
        text = raw.decode() if isinstance(raw, bytes) else raw
    else:
        with open(source, encoding="utf-8") as fh:
            text = fh.read()

    records = []
    for lineno, line in enumerate(io.StringIO(text), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        parts = stripped.split()
        if len(parts) != 4:
            raise DataFormatError(f"line {lineno}: expected 4 columns, got {len(parts)}")
        try:
            frame, agent, a, b = (float(p) for p in parts)
        except ValueError:
            raise DataFormatError(f"line {lineno}: non-numeric field in {stripped!r}") from None
        if not all(math.isfinite(v) for v in (frame, agent, a, b)):
            raise DataFormatError(f"line {lineno}: non-finite value")
        x, y = (b, a) if swap_xy else (a, b)
        records.append((frame, agent, x, y))
    return ObservationTable.from_records(records, sampling_rate)


@dataclass
class SceneWindow:
    agent_ids: np.ndarray  # [N]
    positions: np.ndarray  # [N, T + T', 2] world frame
    obs_len: int
    pred_len: int
    start_frame: int = 0


@dataclass
class NormalizedScene:
    """One prediction instance in per-agent centered coordinates.

    ``offsets[i, t] = pos[i, t + 1] - pos[i, t]`` over the observed steps;
    ``observed`` and ``ground_truth`` are positions minus ``origins`` (the
    last observed world position of each agent), so ``observed[:, -1]`` is
    exactly zero. ``world_positions`` keeps the raw observed coordinates for
    pairwise relative positions.
    """

    agent_ids: np.ndarray
    offsets: np.ndarray  # [N, T-1, 2]
    observed: np.ndarray  # [N, T, 2]
    origins: np.ndarray  # [N, 2]
    world_positions: np.ndarray  # [N, T, 2]
    ground_truth: np.ndarray  # [N, T', 2]
    scene_id: int = 0

    @property
    def n_agents(self):
        return len(self.agent_ids)

    @property
    def obs_len(self):
        return self.observed.shape[1]

    @property
    def pred_len(self):
        return self.ground_truth.shape[1]


def build_windows(table, obs_len=8, pred_len=12, frame_stride=1, frame_step=None):
    """Slide a window of ``obs_len + pred_len`` sampled steps over the table.

    ``frame_step`` is the frame-index increment between sampled steps (10 in
    the common ETH/UCY dumps); it is inferred as the most common positive
    per-agent frame gap when omitted. Windows start at every ``frame_stride``
    sampled steps and keep only agents present at every step.
    """
    if obs_len < 2 or pred_len < 1:
        raise ValueError("need obs_len >= 2 and pred_len >= 1")
    if len(table) == 0:
        return []
    if frame_step is None:
        frame_step = _infer_frame_step(table)
    total = obs_len + pred_len

    lookup = {}
    for f, a, p in zip(table.frames, table.agents, table.xy):
        lookup[(int(a), int(f))] = p
    by_frame = {}
    for f, a in zip(table.frames, table.agents):
        by_frame.setdefault(int(f), []).append(int(a))

    first, last = int(table.frames.min()), int(table.frames.max())
    windows = []
    start = first
    while start + (total - 1) * frame_step <= last:
        steps = [start + k * frame_step for k in range(total)]
        candidates = sorted(set(by_frame.get(start, ())))
        keep = [a for a in candidates if all((a, f) in lookup for f in steps)]
        if keep:
            pos = np.array([[lookup[(a, f)] for f in steps] for a in keep])
            windows.append(SceneWindow(np.array(keep), pos, obs_len, pred_len, start))
        start += frame_stride * frame_step
    return windows


def _infer_frame_step(table):
    same_agent = np.diff(table.agents) == 0
    gaps = np.diff(table.frames)[same_agent]
    gaps = gaps[gaps > 0]
    if len(gaps) == 0:
        return 1
    values, counts = np.unique(gaps, return_counts=True)
    return int(values[np.argmax(counts)])


def normalize(window: SceneWindow, scene_id=0) -> NormalizedScene:
    obs = window.positions[:, : window.obs_len]
    fut = window.positions[:, window.obs_len :]
    origins = obs[:, -1].copy()
    return NormalizedScene(
        agent_ids=np.asarray(window.agent_ids),
        offsets=np.diff(obs, axis=1),
        observed=obs - origins[:, None],
        origins=origins,
        world_positions=obs.copy(),
        ground_truth=fut - origins[:, None],
        scene_id=scene_id,
    )


def leave_one_out_split(subsets, held_out):
    """Train on every named subset except ``held_out``, test on that one."""
    if held_out not in subsets:
        raise KeyError(f"unknown subset {held_out!r}; have {sorted(subsets)}")
    test = list(subsets[held_out])
    train = [item for name, items in subsets.items() if name != held_out for item in items]
    return train, test


# -- synthetic junction ---------------------------------------------------


def exit_headings(n_exits):
    """Exit directions in degrees relative to the approach heading.

    Spread evenly from a left turn (+90) to a right turn (-90); a single exit
    is a left turn.
    """
    if n_exits < 1:
        raise ValueError("need at least one exit")
    if n_exits == 1:
        return np.array([90.0])
    return np.linspace(90.0, -90.0, n_exits)


@dataclass
class JunctionLabels:
    """Ground-truth branch choice per synthetic agent (for diagnostics)."""

    agent_ids: np.ndarray
    branches: np.ndarray
    headings_deg: np.ndarray = field(default_factory=lambda: np.zeros(0))


def synth_junction(
    n_scenes,
    n_exits=3,
    branch_probs=None,
    noise_std=0.05,
    seed=0,
    obs_len=8,
    pred_len=12,
    speed=(0.4, 0.6),
    agents_per_scene=1,
    gap=5,
    return_labels=False,
):
    """Agents walk straight to a junction, then leave along one of the exits.

    Every scene occupies its own block of frames (``gap`` empty frames apart),
    agents move along +x during the ``obs_len`` observed steps (reaching the
    junction exactly at the last one), then follow exit heading k for
    ``pred_len`` steps. Isotropic Gaussian noise of ``noise_std`` meters is
    added to every position. Extra agents in a scene start 3 m apart laterally.
    """
    probs = np.full(n_exits, 1.0 / n_exits) if branch_probs is None else np.asarray(branch_probs, float)
    if probs.shape != (n_exits,) or np.any(probs < 0) or abs(probs.sum() - 1.0) > 1e-9:
        raise ValueError(f"branch_probs must be {n_exits} nonnegative values summing to 1")
    headings = np.deg2rad(exit_headings(n_exits))
    rng = np.random.default_rng(seed)
    total = obs_len + pred_len
    records, agent_list, branch_list = [], [], []
    agent_id = 0
    for s in range(n_scenes):
        base = s * (total + gap)
        junction = rng.uniform(-50, 50, size=2)
        for a in range(agents_per_scene):
            v = rng.uniform(*speed) if np.ndim(speed) else float(speed)
            k = rng.choice(n_exits, p=probs)
            centre = junction + np.array([0.0, 3.0 * a])
            steps = np.arange(total) - (obs_len - 1)
            pos = np.empty((total, 2))
            before = steps <= 0
            pos[before] = centre + np.outer(steps[before] * v, [1.0, 0.0])
            direction = np.array([np.cos(headings[k]), np.sin(headings[k])])
            pos[~before] = centre + np.outer(steps[~before] * v, direction)
            if noise_std > 0:
                pos = pos + rng.normal(scale=noise_std, size=pos.shape)
            for t in range(total):
                records.append((base + t, agent_id, pos[t, 0], pos[t, 1]))
            agent_list.append(agent_id)
            branch_list.append(k)
            agent_id += 1
    table = ObservationTable.from_records(records, sampling_rate=2.5)
    if return_labels:
        return table, JunctionLabels(np.array(agent_list), np.array(branch_list), np.rad2deg(headings))
    return table


def junction_scenes(n_scenes, seed=0, obs_len=8, pred_len=12, **kwargs):
    """Generate, window and normalize junction data in one call."""
    table = synth_junction(n_scenes, seed=seed, obs_len=obs_len, pred_len=pred_len, **kwargs)
    windows = build_windows(table, obs_len, pred_len, frame_step=1)
    return [normalize(w, scene_id=i) for i, w in enumerate(windows)]


def load_scenes(paths, obs_len=8, pred_len=12, frame_stride=1, swap_xy=False):
    scenes = []
    for path in paths:
        table = parse_ethucy(path, swap_xy=swap_xy)
        for w in build_windows(table, obs_len, pred_len, frame_stride):
            scenes.append(normalize(w, scene_id=len(scenes)))
    return scenes


# -- debug dump -------------------------------------------------------------


def write_scenes(scenes, stream):
    """Dump world-frame positions as ``scene_id agent_id t x y`` lines.

    ``t`` counts from 0 over observed then future steps.
    """
    stream.write("# scene_id agent_id t x y\n")
    for scene in scenes:
        full = np.concatenate(
            [scene.world_positions, scene.ground_truth + scene.origins[:, None]], axis=1
        )
        for i, aid in enumerate(scene.agent_ids):
            for t, (x, y) in enumerate(full[i]):
                stream.write(f"{scene.scene_id} {aid} {t} {float(x)!r} {float(y)!r}\n")


def read_scenes(stream, obs_len):
    """Inverse of :func:`write_scenes`."""
    rows = {}
    for line in stream:
        if not line.strip() or line.startswith("#"):
            continue
        sid, aid, t, x, y = line.split()
        rows.setdefault(int(sid), {}).setdefault(int(aid), []).append((int(t), float(x), float(y)))
    scenes = []
    for sid in sorted(rows):
        agents = sorted(rows[sid])
        pos = np.array([[xy for _, *xy in sorted(rows[sid][a])] for a in agents])
        window = SceneWindow(np.array(agents), pos, obs_len, pos.shape[1] - obs_len)
        scenes.append(normalize(window, scene_id=sid))
    return scenes
