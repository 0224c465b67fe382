"""
Patch Grids
===========
Multi-scale square-window grids over the normalized frame (levels 1-3)
and the sliding windows used by best-window search.

Window order is row-major with y as the outer loop.
"""

from dataclasses import dataclass
from enum import Enum
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

from src.utils import InvalidArgumentError


class Level(str, Enum):
    L1 = "L1"
    L2 = "L2"
    L3 = "L3"

    @classmethod
    def parse(cls, value: Union[str, int, "Level"]) -> "Level":
        """Accept "L2", "l2", "2" or 2."""
        if isinstance(value, Level):
            return value
        text = str(value).strip().upper()
        if not text.startswith("L"):
            text = "L" + text
        try:
            return cls(text)
        except ValueError:
            raise InvalidArgumentError(f"unknown level {value!r}") from None

    @property
    def index(self) -> int:
        return int(self.value[1:]) - 1


ALL_LEVELS = (Level.L1, Level.L2, Level.L3)


@dataclass(frozen=True)
class PatchSpec:
    """Square window [x, x+side) x [y, y+side); level is None for sliding windows."""

    level: Optional[Level]
    x: int
    y: int
    side: int

    @property
    def window(self) -> Tuple[int, int, int, int]:
        return self.x, self.y, self.side, self.side

    def key(self) -> Tuple[str, int, int, int]:
        return (self.level.value if self.level else "", self.x, self.y, self.side)


@dataclass(frozen=True)
class GridConfig:
    frame: int = 256
    level_sides: Tuple[int, ...] = (256, 128, 64)
    stride: int = 32

    def __post_init__(self):
        object.__setattr__(self, "level_sides", tuple(int(s) for s in self.level_sides))
        if self.stride < 1:
            raise InvalidArgumentError(f"stride must be >= 1, got {self.stride}")
        if self.frame < 1:
            raise InvalidArgumentError(f"frame must be >= 1, got {self.frame}")
        if len(self.level_sides) != len(ALL_LEVELS):
            raise InvalidArgumentError(
                f"level_sides needs one side per level ({len(ALL_LEVELS)}), got {list(self.level_sides)}")
        for side in self.level_sides:
            _check_side(side, self.frame)

    def side_of(self, level: Level) -> int:
        return self.level_sides[Level.parse(level).index]

    def to_dict(self) -> Dict:
        return {"frame": self.frame, "level_sides": list(self.level_sides), "stride": self.stride}


def _check_side(side: int, frame: int) -> None:
    if side < 1 or side > frame:
        raise InvalidArgumentError(f"window side {side} does not fit frame {frame}")


def grid_count(frame: int, side: int, stride: int) -> int:
    """Number of windows of one side: (floor((frame - side) / stride) + 1) ** 2."""
    _check_side(side, frame)
    per_axis = (frame - side) // stride + 1
    return per_axis * per_axis


def _positions(frame: int, side: int, stride: int) -> range:
    # last in-bounds position; no extra right/bottom-anchored window
    return range(0, frame - side + 1, stride)


def _windows(frame: int, side: int, stride: int, level: Optional[Level]) -> List[PatchSpec]:
    _check_side(side, frame)
    if stride < 1:
        raise InvalidArgumentError(f"stride must be >= 1, got {stride}")
    return [PatchSpec(level, x, y, side)
            for y in _positions(frame, side, stride)
            for x in _positions(frame, side, stride)]


def grid(cfg: GridConfig, level_index: Union[int, str, Level]) -> List[PatchSpec]:
    """
    Windows of one pyramid level.

    Args:
        cfg: Grid configuration
        level_index: Level (L1/L2/L3, or 0-based int index)

    Returns:
        PatchSpecs at positions 0, stride, 2*stride, ... per axis
    """
    if isinstance(level_index, int) and not isinstance(level_index, bool):
        if not 0 <= level_index < len(ALL_LEVELS):
            raise InvalidArgumentError(f"level index out of range: {level_index}")
        level = ALL_LEVELS[level_index]
    else:
        level = Level.parse(level_index)
    return _windows(cfg.frame, cfg.side_of(level), cfg.stride, level)


def level_grids(cfg: GridConfig, levels: Iterable[Level]) -> Dict[Level, List[PatchSpec]]:
    """Grids of several levels keyed by level, in the given order."""
    return {Level.parse(level): grid(cfg, Level.parse(level)) for level in levels}


def sliding_windows(frame: int, sides: Sequence[int], stride: int) -> List[PatchSpec]:
    """
    Union of stride grids for several window sides.

    Ordered by side (largest first), then row-major.
    """
    windows: List[PatchSpec] = []
    for side in sorted(set(int(s) for s in sides), reverse=True):
        windows.extend(_windows(frame, side, stride, None))
    return windows
