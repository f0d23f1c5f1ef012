"""Shoebox room sampling and image-method impulse responses.

Walls are ordered ``(x=0, x=Lx, y=0, y=Ly, z=0, z=Lz)``. Reflection
coefficients are frequency independent, ``beta = sqrt(1 - alpha)``, and
every image is rendered with an 81-tap Hann-windowed sinc so arrivals keep
their fractional delay.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numba
import numpy as np
from scipy import signal

from .audio import DEFAULT_SAMPLE_RATE, write_wav
from .errors import ConfigurationError, InputError, ParameterError, PlacementError, SamplingExhaustedError
from .geometry import ArrayGeometry, ArrayPose, array_radius, place_array
from .jsonl import write_jsonl

DEFAULT_SPEED_OF_SOUND = 340.0
_EYRING_CONST = 24.0 * math.log(10.0)


@dataclass(frozen=True)
class SamplerBounds:
    room_min: tuple = (3.0, 3.0, 3.0)
    room_max: tuple = (8.0, 8.0, 3.0)
    array_height: tuple = (1.0, 1.5)
    source_height: tuple = (1.2, 1.9)
    distance: tuple = (0.5, 5.0)
    min_source_angle_deg: float = 20.0
    t60: tuple = (0.2, 1.0)
    num_sources: int = 2
    wall_margin: float = 0.1
    min_array_separation: float = 0.3
    max_attempts: int = 10000
    speed_of_sound: float = DEFAULT_SPEED_OF_SOUND

    def validate(self) -> None:
        pairs = {
            "room": (self.room_min, self.room_max),
            "array_height": self.array_height,
            "source_height": self.source_height,
            "distance": self.distance,
            "t60": self.t60,
        }
        for name, (lo, hi) in pairs.items():
            if np.any(np.asarray(lo, float) > np.asarray(hi, float)):
                raise ParameterError(f"{name} bounds inconsistent: {lo} > {hi}")
        if self.t60[0] <= 0:
            raise ParameterError("t60 lower bound must be positive")
        if self.num_sources < 1:
            raise ParameterError("num_sources must be >= 1")
        if self.max_attempts < 1:
            raise ParameterError("max_attempts must be >= 1")


@dataclass(frozen=True)
class RoomScenario:
    room_dims: tuple
    absorption: tuple
    array_pose: ArrayPose
    source_positions: tuple
    seed: int = 0
    t60: float | None = None

    def __post_init__(self):
        if len(self.room_dims) != 3:
            raise ParameterError("room_dims must have 3 components")
        if len(self.absorption) != 6:
            raise ParameterError("absorption needs one coefficient per wall (6)")
        for a in self.absorption:
            if not 0.0 <= a <= 1.0:
                raise ParameterError(f"absorption {a} outside [0, 1]")

    @property
    def centroid(self) -> np.ndarray:
        return np.asarray(self.array_pose.position, dtype=float)

    def to_dict(self) -> dict:
        return {
            "room_dims": [float(v) for v in self.room_dims],
            "absorption": [float(v) for v in self.absorption],
            "t60": None if self.t60 is None else float(self.t60),
            "array_pose": self.array_pose.to_dict(),
            "source_positions": [[float(v) for v in p] for p in self.source_positions],
            "seed": int(self.seed),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "RoomScenario":
        return cls(
            room_dims=tuple(doc["room_dims"]),
            absorption=tuple(doc["absorption"]),
            array_pose=ArrayPose.from_dict(doc["array_pose"]),
            source_positions=tuple(tuple(p) for p in doc["source_positions"]),
            seed=int(doc.get("seed", 0)),
            t60=doc.get("t60"),
        )


@dataclass(frozen=True)
class RirConfig:
    max_order: int | None = None
    speed_of_sound: float = DEFAULT_SPEED_OF_SOUND
    sample_rate: int = DEFAULT_SAMPLE_RATE
    length: int | None = None
    tail_seconds: float = 0.05
    max_seconds: float = 2.0
    taps: int = 81
    highpass_hz: float | None = 10.0


@dataclass
class Rir:
    samples: np.ndarray  # (mics, length)
    sample_rate: int = DEFAULT_SAMPLE_RATE
    direct_delays: np.ndarray = field(default=None, repr=False)  # samples, per mic

    @property
    def length(self) -> int:
        return self.samples.shape[1]

    @property
    def num_mics(self) -> int:
        return self.samples.shape[0]


# ---------------------------------------------------------------- acoustics

def surface_areas(room_dims) -> np.ndarray:
    lx, ly, lz = (float(v) for v in room_dims)
    return np.array([ly * lz, ly * lz, lx * lz, lx * lz, lx * ly, lx * ly])


def eyring_t60(room_dims, absorption, speed_of_sound=DEFAULT_SPEED_OF_SOUND) -> float:
    """Eyring reverberation time; ``absorption`` is a scalar or one value per wall."""
    areas = surface_areas(room_dims)
    alpha = np.broadcast_to(np.asarray(absorption, dtype=float), (6,))
    mean_alpha = float(np.sum(areas * alpha) / np.sum(areas))
    if mean_alpha <= 0.0:
        return math.inf
    if mean_alpha >= 1.0:
        return 0.0
    volume = float(np.prod(room_dims))
    return _EYRING_CONST * volume / (speed_of_sound * -np.sum(areas) * math.log(1.0 - mean_alpha))


def eyring_absorption(room_dims, t60, speed_of_sound=DEFAULT_SPEED_OF_SOUND) -> float:
    """Uniform absorption coefficient giving ``t60`` under Eyring's formula."""
    if t60 <= 0:
        raise ParameterError("t60 must be positive")
    volume = float(np.prod(room_dims))
    total_area = float(np.sum(surface_areas(room_dims)))
    return 1.0 - math.exp(-_EYRING_CONST * volume / (speed_of_sound * total_area * t60))


def schroeder_curve(h: np.ndarray) -> np.ndarray:
    """Backward-integrated energy decay curve in dB, normalized to 0 dB at t=0."""
    energy = np.cumsum(np.asarray(h, dtype=float)[::-1] ** 2)[::-1]
    with np.errstate(divide="ignore"):
        return 10.0 * np.log10(energy / energy[0])


def schroeder_t60(h: np.ndarray, sample_rate: int, decay_db: tuple = (-5.0, -25.0)) -> float:
    """Reverberation time by a least-squares line through the decay curve.

    The fit spans ``decay_db`` (T20 by default) and is extrapolated to 60 dB.
    """
    edc = schroeder_curve(h)
    hi, lo = decay_db
    idx = np.nonzero((edc <= hi) & (edc >= lo))[0]
    if idx.size < 2:
        raise InputError("decay curve does not span the fit range")
    t = idx / sample_rate
    slope, _ = np.polyfit(t, edc[idx], 1)
    if slope >= 0:
        raise InputError("decay curve is not decaying")
    return -60.0 / slope


# ----------------------------------------------------------------- sampling

def _angle_deg(a: np.ndarray, b: np.ndarray) -> float:
    cos = np.dot(a, b) / (np.linalg.norm(a) * np.linalg.norm(b))
    return math.degrees(math.acos(max(-1.0, min(1.0, cos))))


def _source_ok(src, centroid, others, bounds) -> bool:
    vec = src - centroid
    d = np.linalg.norm(vec)
    if not bounds.distance[0] <= d <= bounds.distance[1]:
        return False
    return all(_angle_deg(vec, o - centroid) > bounds.min_source_angle_deg for o in others)


def _uniform_point(rng, dims, margin, z_range):
    x = rng.uniform(margin, dims[0] - margin)
    y = rng.uniform(margin, dims[1] - margin)
    z = rng.uniform(*z_range)
    return np.array([x, y, z])


def sample_scenario(seed: int, bounds: SamplerBounds | None = None, geometry: ArrayGeometry | None = None) -> RoomScenario:
    """Draw a room, absorption, array pose and source positions.

    Rejection sampling; raises :class:`SamplingExhaustedError` once
    ``bounds.max_attempts`` candidate draws fail.
    """
    bounds = bounds or SamplerBounds()
    bounds.validate()
    rng = np.random.default_rng(seed)
    arr_margin = bounds.wall_margin + (array_radius(geometry) if geometry is not None else 0.0)
    attempts = 0
    while attempts < bounds.max_attempts:
        dims = rng.uniform(bounds.room_min, bounds.room_max)
        if np.any(dims[:2] <= 2 * arr_margin) or np.any(dims[:2] <= 2 * bounds.wall_margin):
            attempts += 1
            continue
        t60 = float(rng.uniform(*bounds.t60))
        alpha = eyring_absorption(dims, t60, bounds.speed_of_sound)
        centroid = _uniform_point(rng, dims, arr_margin, bounds.array_height)
        yaw = float(rng.uniform(0.0, 2 * math.pi))
        sources: list[np.ndarray] = []
        while len(sources) < bounds.num_sources and attempts < bounds.max_attempts:
            attempts += 1
            cand = _uniform_point(rng, dims, bounds.wall_margin, bounds.source_height)
            if _source_ok(cand, centroid, sources, bounds):
                sources.append(cand)
        if len(sources) < bounds.num_sources:
            break
        scenario = RoomScenario(
            room_dims=tuple(float(v) for v in dims),
            absorption=(alpha,) * 6,
            array_pose=ArrayPose(tuple(float(v) for v in centroid), yaw),
            source_positions=tuple(tuple(float(v) for v in s) for s in sources),
            seed=int(seed),
            t60=t60,
        )
        if geometry is not None:
            place_array(geometry, scenario.array_pose, scenario.room_dims)
        return scenario
    raise SamplingExhaustedError(f"no valid scenario after {bounds.max_attempts} attempts (seed {seed})")


def sample_extra_poses(scenario: RoomScenario, count: int, seed: int, bounds: SamplerBounds | None = None,
                       geometries=None) -> list[ArrayPose]:
    """Additional array poses sharing ``scenario``'s room and sources.

    Each pose satisfies the height, distance and source-angle constraints
    with respect to its own centroid, and keeps ``min_array_separation``
    from every other array.
    """
    bounds = bounds or SamplerBounds()
    rng = np.random.default_rng(seed)
    geometries = list(geometries) if geometries is not None else [None] * count
    dims = np.asarray(scenario.room_dims)
    sources = [np.asarray(s) for s in scenario.source_positions]
    placed = [scenario.centroid]
    poses = []
    attempts = 0
    for geom in geometries:
        margin = bounds.wall_margin + (array_radius(geom) if geom is not None else 0.0)
        while True:
            attempts += 1
            if attempts > bounds.max_attempts:
                raise SamplingExhaustedError("could not place additional arrays")
            c = _uniform_point(rng, dims, margin, bounds.array_height)
            if any(np.linalg.norm(c - p) < bounds.min_array_separation for p in placed):
                continue
            if all(_source_ok(s, c, sources[:i], bounds) for i, s in enumerate(sources)):
                break
        pose = ArrayPose(tuple(float(v) for v in c), float(rng.uniform(0.0, 2 * math.pi)))
        placed.append(c)
        poses.append(pose)
    return poses


def check_scenario(scenario: RoomScenario, bounds: SamplerBounds | None = None) -> list[str]:
    """List every constraint the scenario violates (empty when valid)."""
    bounds = bounds or SamplerBounds()
    problems = []
    dims = np.asarray(scenario.room_dims)
    if np.any(dims < np.asarray(bounds.room_min) - 1e-12) or np.any(dims > np.asarray(bounds.room_max) + 1e-12):
        problems.append(f"room dims {dims.tolist()} outside bounds")
    c = scenario.centroid
    if not bounds.array_height[0] <= c[2] <= bounds.array_height[1]:
        problems.append(f"array height {c[2]:.3f} outside bounds")
    for i, s in enumerate(scenario.source_positions):
        s = np.asarray(s)
        if not bounds.source_height[0] <= s[2] <= bounds.source_height[1]:
            problems.append(f"source {i} height {s[2]:.3f} outside bounds")
        if np.any(s <= 0) or np.any(s >= dims):
            problems.append(f"source {i} outside room")
        if not _source_ok(s, c, [np.asarray(o) for o in scenario.source_positions[:i]], bounds):
            problems.append(f"source {i} violates distance/angle constraints")
    return problems


# ------------------------------------------------------------ image method

@numba.njit(cache=True)
def _ism_kernel(out, source, mics, dims, beta, fs, c, max_order, taps):
    """Accumulate every image source into ``out`` (mics x length)."""
    n_mics, length = out.shape
    half = taps // 2
    radius = (length + half) / fs * c
    lo = np.empty(3)
    hi = np.empty(3)
    for k in range(3):
        lo[k] = mics[:, k].min() - radius
        hi[k] = mics[:, k].max() + radius
    a = np.pi / (half + 1)
    cos_at = np.empty(taps)
    sin_at = np.empty(taps)
    for t in range(-half, half + 1):
        cos_at[t + half] = np.cos(a * t)
        sin_at[t + half] = np.sin(a * t)
    n_lo = np.empty(3, dtype=np.int64)
    n_hi = np.empty(3, dtype=np.int64)
    for k in range(3):
        n_lo[k] = int(np.floor((lo[k] - source[k]) / (2 * dims[k]))) - 1
        n_hi[k] = int(np.ceil((hi[k] + source[k]) / (2 * dims[k]))) + 1
    for qx in range(2):
        for nx in range(n_lo[0], n_hi[0] + 1):
            x = 2 * nx * dims[0] + (1 - 2 * qx) * source[0]
            if x < lo[0] or x > hi[0]:
                continue
            hx0 = abs(nx - qx)
            hx1 = abs(nx)
            gx = beta[0] ** hx0 * beta[1] ** hx1
            for qy in range(2):
                for ny in range(n_lo[1], n_hi[1] + 1):
                    y = 2 * ny * dims[1] + (1 - 2 * qy) * source[1]
                    if y < lo[1] or y > hi[1]:
                        continue
                    hy0 = abs(ny - qy)
                    hy1 = abs(ny)
                    gy = gx * beta[2] ** hy0 * beta[3] ** hy1
                    for qz in range(2):
                        for nz in range(n_lo[2], n_hi[2] + 1):
                            z = 2 * nz * dims[2] + (1 - 2 * qz) * source[2]
                            if z < lo[2] or z > hi[2]:
                                continue
                            hz0 = abs(nz - qz)
                            hz1 = abs(nz)
                            if max_order >= 0 and hx0 + hx1 + hy0 + hy1 + hz0 + hz1 > max_order:
                                continue
                            gain = gy * beta[4] ** hz0 * beta[5] ** hz1
                            if gain == 0.0:
                                continue
                            for m in range(n_mics):
                                dx = x - mics[m, 0]
                                dy = y - mics[m, 1]
                                dz = z - mics[m, 2]
                                dist = np.sqrt(dx * dx + dy * dy + dz * dz)
                                delay = dist / c * fs
                                if delay >= length + half:
                                    continue
                                amp = gain / (4.0 * np.pi * dist)
                                n0 = int(np.floor(delay))
                                f = delay - n0
                                # sin(pi (t - f)) = -(-1)^t sin(pi f) for integer t
                                spf = np.sin(np.pi * f)
                                caf = np.cos(a * f)
                                saf = np.sin(a * f)
                                for t in range(-half, half + 1):
                                    idx = n0 + t
                                    if idx < 0 or idx >= length:
                                        continue
                                    u = t - f
                                    if abs(u) < 1e-12:
                                        s = 1.0
                                    else:
                                        sgn = -1.0 if t % 2 == 0 else 1.0
                                        s = sgn * spf / (np.pi * u)
                                    w = 0.5 * (1.0 + cos_at[t + half] * caf + sin_at[t + half] * saf)
                                    out[m, idx] += amp * s * w


def rir_length(scenario: RoomScenario, mics: np.ndarray, source: np.ndarray, config: RirConfig) -> int:
    fs = config.sample_rate
    if config.length is not None:
        return int(config.length)
    direct = np.linalg.norm(mics - source, axis=1).max() / config.speed_of_sound * fs
    floor_len = int(math.ceil(direct)) + config.taps // 2 + 1
    t60 = eyring_t60(scenario.room_dims, scenario.absorption, config.speed_of_sound)
    if math.isinf(t60):
        if config.max_order is None:
            raise ConfigurationError("zero absorption needs a finite max_order")
        n = int(config.max_seconds * fs)
    else:
        n = int(math.ceil((t60 + config.tail_seconds) * fs))
    return min(max(n, floor_len), max(int(config.max_seconds * fs), floor_len))


def simulate_rir(scenario: RoomScenario, geometry: ArrayGeometry, source_index: int = 0,
                 config: RirConfig | None = None) -> Rir:
    """Per-microphone impulse responses from one source by the image method."""
    config = config or RirConfig()
    if not 0 <= source_index < len(scenario.source_positions):
        raise InputError(f"source_index {source_index} out of range")
    if config.max_order is not None and config.max_order < 0:
        raise ConfigurationError("max_order must be >= 0")
    mics = place_array(geometry, scenario.array_pose, scenario.room_dims)
    source = np.asarray(scenario.source_positions[source_index], dtype=float)
    if np.any(source <= 0) or np.any(source >= np.asarray(scenario.room_dims)):
        raise PlacementError(f"source {source_index} lies outside the room")
    fs, c = config.sample_rate, config.speed_of_sound
    length = rir_length(scenario, mics, source, config)
    out = np.zeros((mics.shape[0], length))
    beta = np.sqrt(1.0 - np.asarray(scenario.absorption, dtype=float))
    max_order = -1 if config.max_order is None else int(config.max_order)
    _ism_kernel(out, source, np.ascontiguousarray(mics), np.asarray(scenario.room_dims, dtype=float),
                beta, float(fs), float(c), max_order, int(config.taps))
    if config.highpass_hz:
        # the image sum carries a slowly decaying DC build-up that would
        # otherwise dominate the late decay curve
        sos = signal.butter(2, config.highpass_hz, btype="highpass", fs=fs, output="sos")
        out = signal.sosfiltfilt(sos, out, axis=1)
    direct = np.linalg.norm(mics - source, axis=1) / c * fs
    return Rir(out, fs, direct)


# ------------------------------------------------------------------- batch

def item_seed(batch_seed: int, index: int) -> int:
    """Per-item seed derived from the batch seed; independent of scheduling."""
    return int(np.random.SeedSequence([int(batch_seed), int(index)]).generate_state(1)[0])


def _batch_item(args):
    scenario_index, seed, geometry_doc, bounds, config, n_src = args
    geometry = ArrayGeometry.from_dict(geometry_doc)
    scenario = sample_scenario(seed, replace(bounds, num_sources=max(bounds.num_sources, n_src)), geometry)
    return scenario, [simulate_rir(scenario, geometry, s, config) for s in range(n_src)]


def batch_generate(num_rirs: int, geometry: ArrayGeometry, seed: int, out_dir, bounds: SamplerBounds | None = None,
                   config: RirConfig | None = None, sources_per_scenario: int = 2, jobs: int = 1,
                   extra: dict | None = None) -> list[dict]:
    """Write ``num_rirs`` multichannel RIR WAVs plus ``rirs.jsonl``.

    Consecutive RIRs share a room: each scenario contributes
    ``sources_per_scenario`` files (the last scenario may contribute fewer).
    ``extra`` is merged into every manifest row (config echo).
    """
    if num_rirs < 1:
        raise InputError("num_rirs must be >= 1")
    bounds = bounds or SamplerBounds()
    config = config or RirConfig()
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    geometry.save(out_dir / "geometry.json")
    n_scen = math.ceil(num_rirs / sources_per_scenario)
    tasks = []
    for i in range(n_scen):
        n_src = min(sources_per_scenario, num_rirs - i * sources_per_scenario)
        tasks.append((i, item_seed(seed, i), geometry.to_dict(), bounds, config, n_src))
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_batch_item, tasks))
    else:
        results = [_batch_item(t) for t in tasks]
    rows = []
    for i, (scenario, rirs) in enumerate(results):
        for s, rir in enumerate(rirs):
            rid = f"rir{len(rows):05d}"
            name = f"{rid}.wav"
            write_wav(out_dir / name, rir.samples, rir.sample_rate)
            row = {
                "id": rid,
                "file": name,
                "scenario_id": f"room{i:05d}",
                "source_index": s,
                "geometry": "geometry.json",
                "topology": geometry.topology.value,
                "sample_rate": rir.sample_rate,
                "length": rir.length,
                "scenario": scenario.to_dict(),
                "rir_config": asdict(config),
            }
            if extra:
                row.update(extra)
            rows.append(row)
    write_jsonl(out_dir / "rirs.jsonl", rows)
    return rows
