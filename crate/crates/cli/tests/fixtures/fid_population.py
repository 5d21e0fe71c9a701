"""Closed-form Fréchet distance between the two Gaussians sampled by the
acceptance suite, computed with scipy's general matrix square root."""

import numpy as np
from scipy.linalg import sqrtm

mu1 = np.zeros(4)
l1 = np.diag(np.sqrt([1.0, 2.0, 3.0, 4.0]))
mu2 = np.array([1.0, -1.0, 0.5, 2.0])
l2 = np.array(
    [
        [1.0, 0.0, 0.0, 0.0],
        [0.5, 1.5, 0.0, 0.0],
        [0.2, -0.3, 0.8, 0.0],
        [0.1, 0.4, -0.2, 1.2],
    ]
)
s1 = l1 @ l1.T
s2 = l2 @ l2.T
cross = sqrtm(s1 @ s2).real
fid = np.sum((mu1 - mu2) ** 2) + np.trace(s1) + np.trace(s2) - 2.0 * np.trace(cross)
print(repr(float(fid)))
