"""Regenerates tests/data/hdbscan_reference.json from scikit-learn's HDBSCAN."""
import json
import pathlib

import numpy as np
import sklearn
from sklearn.cluster import HDBSCAN
from sklearn.cluster._hdbscan import hdbscan as _impl
from sklearn.datasets import make_blobs, make_moons

_unstable_process_mst = _impl._process_mst


def _stable_process_mst(mst):
    # numpy's default argsort is not stable, so equal-weight MST edges merge in
    # an unspecified order. The stable variant gives a reproducible reference.
    return _impl.make_single_linkage(mst[np.argsort(mst["distance"], kind="stable")])


def fit(x, mcs, ms, stable):
    _impl._process_mst = _stable_process_mst if stable else _unstable_process_mst
    try:
        return HDBSCAN(min_cluster_size=mcs, min_samples=ms).fit(x).labels_
    finally:
        _impl._process_mst = _unstable_process_mst


def uniform(n, seed):
    return np.random.default_rng(seed).uniform(size=(n, 2))


CASES = [
    ("blobs_small", lambda: make_blobs(60, centers=3, cluster_std=0.6, random_state=1)[0], 5, 5),
    ("blobs_200", lambda: make_blobs(200, centers=4, cluster_std=1.0, random_state=2)[0], 5, 5),
    ("blobs_500_3d", lambda: make_blobs(500, n_features=3, centers=5, cluster_std=1.2, random_state=3)[0], 10, 5),
    ("blobs_uneven", lambda: make_blobs([300, 60, 20], cluster_std=[1.5, 0.5, 0.2], random_state=4)[0], 8, 4),
    ("blobs_2000_8d", lambda: make_blobs(2000, n_features=8, centers=6, cluster_std=2.0, random_state=5)[0], 5, 5),
    ("moons_300", lambda: make_moons(300, noise=0.06, random_state=6)[0], 5, 5),
    ("moons_1000", lambda: make_moons(1000, noise=0.1, random_state=7)[0], 15, 10),
    ("uniform_50", lambda: uniform(50, 8), 25, 25),
    ("uniform_400", lambda: uniform(400, 9), 5, 5),
    ("blobs_noise", lambda: np.vstack([make_blobs(300, centers=3, cluster_std=0.4, random_state=10)[0],
                                       np.random.default_rng(10).uniform(-12, 12, size=(100, 2))]), 10, 10),
    ("moons_blobs_1500", lambda: np.vstack([make_moons(1000, noise=0.05, random_state=11)[0] * 4,
                                            make_blobs(500, centers=[[10, 10], [-6, 6]], cluster_std=0.8,
                                                       random_state=11)[0]]), 20, 5),
    ("blobs_1000_min2", lambda: make_blobs(1000, centers=8, cluster_std=0.8, random_state=12)[0], 5, 1),
]


def main():
    out = {"generator": f"scikit-learn {sklearn.__version__} HDBSCAN", "cases": []}
    for name, make, mcs, ms in CASES:
        x = np.asarray(make(), dtype=float)
        labels = fit(x, mcs, ms, stable=False)
        stable = fit(x, mcs, ms, stable=True)
        out["cases"].append({"name": name, "min_cluster_size": mcs, "min_samples": ms,
                             "points": x.tolist(), "labels": labels.tolist(),
                             "labels_stable_ties": stable.tolist(),
                             "tie_sensitive": bool((labels != stable).any())})
        print(name, len(x), "clusters", labels.max() + 1, "noise", int((labels < 0).sum()),
              "tie-sensitive" if (labels != stable).any() else "")
    path = pathlib.Path(__file__).resolve().parent.parent / "data" / "hdbscan_reference.json"
    path.write_text(json.dumps(out))


if __name__ == "__main__":
    main()
