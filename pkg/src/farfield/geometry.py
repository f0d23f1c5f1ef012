"""Microphone-array topologies and their placement in a room.

Positions are in meters. Local frames put the array centre at the origin,
with linear arrays along +x and circular arrays in the xy plane. Channel
indices are 0-based in code; reports convert to 1-based numbering.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ParameterError, PlacementError

DEFAULT_CIRCULAR_RADIUS = 0.05
DEFAULT_LINEAR_SPACING = 0.011
DEFAULT_NONUNIFORM_GAPS = (0.02, 0.03, 0.05, 0.08, 0.05, 0.03, 0.02)
DEFAULT_DUAL_GAP = 0.05


class Topology(str, enum.Enum):
    CIRCULAR16 = "circular16"
    LINEAR_UNIFORM8 = "linear_uniform8"
    LINEAR_NONUNIFORM8 = "linear_nonuniform8"
    DUAL_LINEAR16 = "dual_linear16"

    @classmethod
    def parse(cls, value: "Topology | str") -> "Topology":
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower().replace("-", "_")
        aliases = {
            "circular": cls.CIRCULAR16,
            "linear_uniform": cls.LINEAR_UNIFORM8,
            "linear_nonuniform": cls.LINEAR_NONUNIFORM8,
            "dual_linear": cls.DUAL_LINEAR16,
        }
        if key in aliases:
            return aliases[key]
        try:
            return cls(key)
        except ValueError:
            raise ParameterError(f"unknown topology {value!r}") from None


@dataclass(frozen=True)
class ArrayGeometry:
    topology: Topology
    params: dict
    mic_positions: np.ndarray = field(repr=False)
    reference_mic: int = 0

    @property
    def num_mics(self) -> int:
        return self.mic_positions.shape[0]

    def pairwise_distances(self) -> np.ndarray:
        return pairwise_distances(self.mic_positions)

    def to_dict(self) -> dict:
        return {
            "topology": self.topology.value,
            "params": _jsonable(self.params),
            "mic_positions": self.mic_positions.tolist(),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "ArrayGeometry":
        topology = Topology.parse(doc["topology"])
        positions = np.asarray(doc["mic_positions"], dtype=float)
        if positions.ndim != 2 or positions.shape[1] != 3:
            raise ParameterError("mic_positions must be a list of [x, y, z]")
        return cls(topology, dict(doc.get("params", {})), positions)

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2))

    @classmethod
    def load(cls, path) -> "ArrayGeometry":
        return cls.from_dict(json.loads(Path(path).read_text()))


@dataclass(frozen=True)
class ArrayPose:
    position: tuple
    yaw: float = 0.0

    def to_dict(self) -> dict:
        return {"position": [float(v) for v in self.position], "yaw": float(self.yaw)}

    @classmethod
    def from_dict(cls, doc: dict) -> "ArrayPose":
        return cls(tuple(float(v) for v in doc["position"]), float(doc["yaw"]))


def _jsonable(params: dict) -> dict:
    out = {}
    for k, v in params.items():
        if isinstance(v, (tuple, list, np.ndarray)):
            out[k] = [float(x) for x in v]
        else:
            out[k] = float(v) if isinstance(v, (int, float, np.floating)) else v
    return out


def _positive(name, value) -> float:
    value = float(value)
    if not np.isfinite(value) or value <= 0:
        raise ParameterError(f"{name} must be positive, got {value}")
    return value


def _line(offsets: np.ndarray) -> np.ndarray:
    x = offsets - 0.5 * (offsets[0] + offsets[-1])
    return np.column_stack([x, np.zeros_like(x), np.zeros_like(x)])


def build_array(topology, **params) -> ArrayGeometry:
    """Build one of the supported array topologies in its local frame.

    Parameters
    ----------
    topology : Topology or str
    radius : float, optional
        Circular16 radius, default 0.05 m.
    spacing : float, optional
        Intra-array spacing of LinearUniform8 and each DualLinear16 half,
        default 0.011 m.
    gaps : sequence of 7 floats, optional
        Consecutive gaps of LinearNonuniform8.
    gap : float, optional
        Distance between the two DualLinear16 halves (last mic of A to first
        mic of B), default 0.05 m.
    """
    topology = Topology.parse(topology)
    allowed = {
        Topology.CIRCULAR16: {"radius"},
        Topology.LINEAR_UNIFORM8: {"spacing"},
        Topology.LINEAR_NONUNIFORM8: {"gaps"},
        Topology.DUAL_LINEAR16: {"spacing", "gap"},
    }[topology]
    unknown = set(params) - allowed
    if unknown:
        raise ParameterError(f"{topology.value} does not accept {sorted(unknown)}")

    if topology is Topology.CIRCULAR16:
        radius = _positive("radius", params.get("radius", DEFAULT_CIRCULAR_RADIUS))
        angles = 2 * np.pi * np.arange(16) / 16
        pos = np.column_stack([radius * np.cos(angles), radius * np.sin(angles), np.zeros(16)])
        return ArrayGeometry(topology, {"radius": radius}, pos)

    if topology is Topology.LINEAR_UNIFORM8:
        spacing = _positive("spacing", params.get("spacing", DEFAULT_LINEAR_SPACING))
        return ArrayGeometry(topology, {"spacing": spacing}, _line(spacing * np.arange(8)))

    if topology is Topology.LINEAR_NONUNIFORM8:
        gaps = params.get("gaps", DEFAULT_NONUNIFORM_GAPS)
        gaps = [float(g) for g in np.atleast_1d(gaps)]
        if len(gaps) != 7:
            raise ParameterError(f"linear_nonuniform8 needs 7 gaps, got {len(gaps)}")
        for g in gaps:
            _positive("gap", g)
        offsets = np.concatenate([[0.0], np.cumsum(gaps)])
        return ArrayGeometry(topology, {"gaps": tuple(gaps)}, _line(offsets))

    spacing = _positive("spacing", params.get("spacing", DEFAULT_LINEAR_SPACING))
    gap = _positive("gap", params.get("gap", DEFAULT_DUAL_GAP))
    half = spacing * np.arange(8)
    offsets = np.concatenate([half, half[-1] + gap + half])
    return ArrayGeometry(topology, {"spacing": spacing, "gap": gap}, _line(offsets))


def rotation_z(yaw: float) -> np.ndarray:
    c, s = np.cos(yaw), np.sin(yaw)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def place_array(geometry: ArrayGeometry, pose: ArrayPose, room_dims=None) -> np.ndarray:
    """Rotate the array by ``pose.yaw`` and translate it to ``pose.position``.

    If ``room_dims`` is given, every resulting microphone must lie strictly
    inside the box ``[0, L]`` on each axis.
    """
    position = np.asarray(pose.position, dtype=float)
    placed = geometry.mic_positions @ rotation_z(pose.yaw).T + position
    if room_dims is not None:
        dims = np.asarray(room_dims, dtype=float)
        if not (np.all(placed > 0) and np.all(placed < dims)):
            raise PlacementError(
                f"array at {position.tolist()} (yaw {pose.yaw:.3f}) leaves room {dims.tolist()}"
            )
    return placed


def pairwise_distances(points: np.ndarray) -> np.ndarray:
    diff = points[:, None, :] - points[None, :, :]
    return np.sqrt(np.sum(diff**2, axis=-1))


def array_radius(geometry: ArrayGeometry) -> float:
    """Largest distance of any mic from the local origin."""
    return float(np.max(np.linalg.norm(geometry.mic_positions, axis=1)))
