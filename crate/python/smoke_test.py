#!/usr/bin/env python3
"""Smoke test for the refpoint_py extension module.

Builds the cdylib with cargo, imports it, and exercises the main
operations: geodetic conversion, scenario handling, corpus generation
and ROI matching.
"""

import math
import shutil
import subprocess
import sys
import tempfile
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent


def build_module(tmp: Path) -> Path:
    subprocess.run(
        ["cargo", "build", "-p", "refpoint-py"], cwd=ROOT, check=True
    )
    built = ROOT / "target" / "debug" / "librefpoint_py.so"
    target = tmp / "refpoint_py.so"
    shutil.copyfile(built, target)
    return tmp


def main() -> int:
    tmp = Path(tempfile.mkdtemp(prefix="refpoint_py_"))
    sys.path.insert(0, str(build_module(tmp)))
    import refpoint_py as rp

    # Geodetic conversion hits the WGS84 anchor points.
    x, y, z = rp.wgs84_to_ecef(0.0, 0.0, 0.0)
    assert abs(x - 6378137.0) < 1e-6 and abs(y) < 1e-6 and abs(z) < 1e-6
    _, _, zp = rp.wgs84_to_ecef(90.0, 0.0, 0.0)
    assert abs(zp - 6356752.3142) < 1e-6

    # Scenario: JSON round trip, geometry queries.
    sc = rp.Scenario.default()
    assert sc.n_poses == 4 and sc.n_rois == 5 and sc.n_pois == 10
    sc2 = rp.Scenario.from_json(sc.to_json())
    assert sc2.n_rois == sc.n_rois
    for roi in range(5):
        d = sc.roi_distance(1, roi)
        assert 10.0 <= d <= 30.0, d
        assert sc.roi_distance(4, roi) > 100.0
    assert sc.categorize(2, 0).endswith("right")
    assert sc.categorize(3, 0).endswith("left")

    # Ground truth is a unit vector; matching it recovers the ROI.
    for roi in range(5):
        g = sc.ground_truth(1, roi)
        assert abs(math.dist(g, (0, 0, 0)) - 1.0) < 1e-9
        result = sc.match_vector(1, g)
        assert result["chosen"] == roi, (roi, result)
        ranking = result["ranking"]
        assert len(ranking) == 5 and ranking[0]["roi_id"] == roi
        assert ranking[0]["distance"] <= ranking[-1]["distance"]

    # Corpus generation and loading.
    corpus = tmp / "corpus"
    summary = sc.generate_corpus(
        str(corpus), users=2, events=4, seed=9, noiseless=True, occlusion=False
    )
    assert summary["n_events"] == 8
    events = rp.corpus_events(str(corpus))
    assert len(events) == 8
    assert {e["user_id"] for e in events} == {"u01", "u02"}
    assert all(e["n_frames"] == 72 for e in events)

    # Metric sanity: orthogonal pair averages 45 degrees.
    mean, sd = rp.mad_metric(
        [(1, 0, 0), (0, 1, 0)], [(1, 0, 0), (1, 0, 0)]
    )
    assert abs(mean - 45.0) < 1e-9 and abs(sd - 45.0) < 1e-9

    # Errors surface as Python exceptions.
    try:
        rp.wgs84_to_ecef(95.0, 0.0, 0.0)
    except ValueError:
        pass
    else:
        raise AssertionError("latitude out of range should raise")

    shutil.rmtree(tmp)
    print("refpoint_py smoke test: PASS")
    return 0


if __name__ == "__main__":
    sys.exit(main())
