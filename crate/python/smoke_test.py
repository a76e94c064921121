"""Smoke test for the curlvar Python extension.

Build and install with `maturin develop -m crates/py/pyproject.toml`, or build
`cargo build --release -p curlvar-py --features extension-module` and put
`target/release/libcurlvar.so` on the path as `curlvar.so`.
"""

import math
import sys

import curlvar


def close(a, b, rel):
    return abs(a - b) <= rel * abs(b)


def main():
    grid = curlvar.GridSpec(math.pi, 10)
    assert grid.cells == [10, 10, 10]
    assert close(grid.volume, math.pi**3, 1e-12)

    u = curlvar.VectorField.random(grid, 7)
    comps = u.components()
    assert [len(c) for c in comps] == [math.prod(u.shape(c)) for c in range(3)]
    v = curlvar.VectorField.from_components(grid, comps)
    assert v.norm_l2() == u.norm_l2()

    spec = curlvar.spectrum(grid, count=5)
    first = spec["ladder"][0]
    assert first["multiplicity"] == 3 and close(first["lambda"], 2.0, 0.05), first

    summary, field = curlvar.groundstate(curlvar.GridSpec(math.pi, 8), seed=1)
    assert summary["converged"], summary["flags"]
    assert summary["S_bar_estimate"] > 3 * (math.pi / 2) ** (4 / 3)
    assert field.staggering == "edge"

    res = curlvar.bn(curlvar.GridSpec(math.pi, 8), -1.0, c0=1.0)
    assert 0 < res["c_lambda"] <= res["bound"] + 1e-6, res

    report = curlvar.verify(quick=True)
    assert report["passed"], report

    try:
        curlvar.GridSpec(-1.0, 8)
    except ValueError:
        pass
    else:
        raise AssertionError("negative box length accepted")

    print(f"curlvar {curlvar.__version__}: smoke test passed")
    return 0


if __name__ == "__main__":
    sys.exit(main())
