"""propsel: single-object tracking by proposal selection.

A tracking-by-detection toolkit that localizes one object per frame by
choosing the best proposal from a candidate set built from a multiscale
linear-SVM detector plus similarity-transform proposals estimated by Hough
voting on optical-flow correspondences, with Kalman-gated pruning and
edgeness-based tie-breaking.
"""

__version__ = "0.1.0"

from .geometry import RotatedBox, Similarity  # noqa: F401
from .imaging import Image, load_image, save_image  # noqa: F401
