"""The 4x4 worked example: channel matrix and received vector as printed."""
from __future__ import annotations

import numpy as np

SNR_DB = 100.0

_H = 1e-5 * np.array(
    [
        [-0.1458 + 0.2401j, -2.0998 - 0.7353j, -2.1459 - 2.0284j, 0.6130 + 2.0420j],
        [17.7199 + 18.8315j, 1.8431 - 2.4183j, 5.7441 + 2.0536j, 0.4837 - 3.0383j],
        [5.1714 - 14.5292j, 0.1184 - 1.5314j, -10.3012 + 0.1049j, 2.4388 - 0.8546j],
        [-25.2041 - 16.2758j, 1.1697 - 0.3792j, 2.2858 - 0.2858j, 6.0425 - 2.6317j],
    ]
)

_Y = np.array([1.6847 - 7.1280j, -20.9794 + 3.6052j, -3.0214 + 3.8041j, 21.5306 + 6.5308j])

# update times of the two fixed serial schedules (user 1..4)
CONVERGENT_TIMES = (0.198, 0.432, 0.909, 0.859)
DIVERGENT_TIMES = (0.198, 0.432, 0.859, 0.909)


def load_paper_instance() -> tuple[np.ndarray, np.ndarray]:
    """Return fresh copies of (H, y)."""
    return _H.copy(), _Y.copy()
