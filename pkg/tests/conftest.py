import numpy as np
import pytest

from gridloc.grids import GridGeometry, GridMap


def make_map(occ: np.ndarray, cell_px: int, theta: int = 4,
             resolution: float = 0.05) -> GridMap:
    """Wrap a hand-built occupancy raster in a GridMap."""
    h, w = occ.shape
    assert h % cell_px == 0 and w % cell_px == 0
    g = GridGeometry(n=h // cell_px, m=w // cell_px, theta=theta,
                     cell_px=cell_px, resolution=resolution)
    return GridMap(occ.astype(np.uint8), g)


def empty_room(side_px: int = 201, cell_px: int = 3, border: int = 1,
               resolution: float = 0.05, theta: int = 4) -> GridMap:
    """Square room: free interior, `border`-pixel obstacle ring."""
    occ = np.ones((side_px, side_px), dtype=np.uint8)
    occ[:border, :] = occ[-border:, :] = 0
    occ[:, :border] = occ[:, -border:] = 0
    return make_map(occ, cell_px, theta=theta, resolution=resolution)


@pytest.fixture()
def room_map():
    # 161 px interior at 1/16 m/px: a ~10 m room inside a 2 px wall, sized
    # so the interior center is an exactly representable pixel center
    return empty_room(side_px=165, cell_px=3, border=2, resolution=0.0625)
