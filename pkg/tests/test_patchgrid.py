import pytest

from src.analytics.patchgrid import (GridConfig, Level, PatchSpec, grid, grid_count,
                                     level_grids, sliding_windows)
from src.utils import InvalidArgumentError


@pytest.mark.parametrize("side, expected", [(128, 25), (64, 49), (256, 1)])
def test_grid_counts(side, expected):
    assert grid_count(256, side, 32) == expected


def test_default_levels():
    cfg = GridConfig()
    grids = level_grids(cfg, [Level.L1, Level.L2, Level.L3])
    assert [len(grids[level]) for level in (Level.L1, Level.L2, Level.L3)] == [1, 25, 49]
    assert grids[Level.L1] == [PatchSpec(Level.L1, 0, 0, 256)]


def test_grid_is_row_major_with_y_outer():
    specs = grid(GridConfig(), "L2")
    assert [(s.x, s.y) for s in specs[:6]] == [(0, 0), (32, 0), (64, 0), (96, 0), (128, 0), (0, 32)]
    assert specs[-1] == PatchSpec(Level.L2, 128, 128, 128)
    assert all(s.x + s.side <= 256 and s.y + s.side <= 256 for s in specs)


def test_grid_accepts_index_and_label():
    cfg = GridConfig()
    assert grid(cfg, 2) == grid(cfg, Level.L3) == grid(cfg, "l3")


def test_no_extra_border_window():
    # (256 - 100) / 32 is not an integer: the last window stops short of the border
    specs = grid(GridConfig(level_sides=(256, 100, 64)), Level.L2)
    assert len(specs) == grid_count(256, 100, 32) == 25
    assert max(s.x for s in specs) == 128


@pytest.mark.parametrize("sides, expected", [([224], 9), ([224, 192, 160, 128], 164), ([256], 1)])
def test_sliding_window_counts(sides, expected):
    assert len(sliding_windows(256, sides, 16)) == expected


def test_sliding_windows_largest_side_first():
    windows = sliding_windows(256, [128, 224], 16)
    assert windows[0] == PatchSpec(None, 0, 0, 224)
    assert windows[9].side == 128
    assert all(w.level is None for w in windows)


def test_invalid_grids():
    with pytest.raises(InvalidArgumentError):
        GridConfig(level_sides=(256, 300, 64))
    with pytest.raises(InvalidArgumentError):
        GridConfig(stride=0)
    with pytest.raises(InvalidArgumentError):
        GridConfig(level_sides=(256, 128))
    with pytest.raises(InvalidArgumentError):
        grid(GridConfig(), 3)
    with pytest.raises(InvalidArgumentError):
        Level.parse("L4")
