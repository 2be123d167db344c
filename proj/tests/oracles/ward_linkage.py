"""Reference Ward linkage for a fixed point set (scipy)."""
import json
import sys

import numpy as np
from scipy.cluster.hierarchy import linkage

POINTS = [
    [0.0, 0.0, 1.0],
    [0.3, 0.1, 0.9],
    [5.0, 5.2, 0.1],
    [4.8, 5.0, 0.3],
    [9.1, 0.2, 2.0],
    [0.2, 0.4, 1.3],
    [5.5, 4.4, 0.0],
    [8.7, 0.9, 2.2],
]

z = linkage(np.array(POINTS), method="ward", metric="euclidean")
out = {"points": POINTS, "linkage": [[int(a), int(b), float(h), int(s)] for a, b, h, s in z]}
json.dump(out, sys.stdout, indent=1)
