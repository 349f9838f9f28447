"""Smoke test for the cvcluster Python extension.

Build first with
    cargo build -p cvcluster-py --features extension-module --release
then run this script from the repository root.
"""

import importlib.machinery
import importlib.util
import json
import math
import pathlib
import sys


def load():
    try:
        import cvcluster_py

        return cvcluster_py
    except ImportError:
        pass
    root = pathlib.Path(__file__).resolve().parent.parent
    for profile in ("release", "debug"):
        path = root / "target" / profile / "libcvcluster_py.so"
        if path.exists():
            loader = importlib.machinery.ExtensionFileLoader("cvcluster_py", str(path))
            spec = importlib.util.spec_from_file_location("cvcluster_py", path, loader=loader)
            module = importlib.util.module_from_spec(spec)
            loader.exec_module(module)
            return module
    sys.exit("cvcluster_py not found; build the extension first")


def close(a, b, tol):
    return abs(a - b) <= tol


def main():
    cv = load()

    graph = cv.ClusterGraph.from_spec("chain:6")
    assert graph.vertex_count == 6 and len(graph.edges) == 5
    state = cv.GaussianState.cluster(graph, 0.7)
    ratios = cv.nullifier_ratios(state, graph)
    assert all(close(x, math.exp(-1.4), 1e-10) for x in ratios), ratios

    nu = cv.symplectic_eigenvalues(state.cov)
    assert all(close(x, 1.0, 1e-9) for x in nu)
    s, spectrum = cv.williamson(state.with_detection_loss(0.9).cov)
    assert len(s) == 12 and min(spectrum) >= 1.0

    assert cv.npt_value(state.cov, [0, 1, 2]) > 0.0
    assert cv.steerability(state.cov, [0, 1, 2], [3, 4, 5]) > 0.0
    summary = json.loads(cv.sweep_summary(state.cov))
    assert summary["bipartitions"] == 31 and summary["npt_positive"] == 31

    r = 0.5
    epr = [
        [math.cosh(2 * r), -math.sinh(2 * r), 0, 0],
        [-math.sinh(2 * r), math.cosh(2 * r), 0, 0],
        [0, 0, math.cosh(2 * r), math.sinh(2 * r)],
        [0, 0, math.sinh(2 * r), math.cosh(2 * r)],
    ]
    assert close(cv.duan_value(epr, 0, 1), math.exp(-2 * r), 1e-10)
    assert close(cv.epr_product(epr, 0, 1), 1 / math.cosh(2 * r) ** 2, 1e-10)

    small = cv.GaussianState.cluster(cv.ClusterGraph.from_spec("chain:2"), 0.5)
    _, mle, nu_min = cv.tomography(small, 5000, 7, eta=0.95)
    assert len(mle) == 4 and nu_min >= 1.0 - 1e-6

    fits = cv.detection_sweep("X", [-1.0, 0.0, 1.0], 1.0, 3, shots=200)
    detected = [label for label, _, _, hit in fits if hit]
    assert detected and all(label.startswith("s") for label in detected), detected

    try:
        cv.ClusterGraph.from_spec("ring:3")
    except ValueError:
        pass
    else:
        raise AssertionError("bad spec accepted")

    print("python smoke test passed")


if __name__ == "__main__":
    main()
