"""Smoke test for the Python module.

Build first with `cargo build --release -p mtwkit-py` (or `maturin develop`
in crates/py). The script imports an installed `mtwkit` if there is one,
otherwise the freshly built library under target/.
"""

import importlib.util
import math
import shutil
import sys
import tempfile
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent


def load():
    try:
        import mtwkit

        return mtwkit
    except ImportError:
        pass
    for profile in ("release", "debug"):
        lib = ROOT / "target" / profile / "libmtwkit_py.so"
        if lib.exists():
            tmp = Path(tempfile.mkdtemp()) / "mtwkit.so"
            shutil.copy(lib, tmp)
            spec = importlib.util.spec_from_file_location("mtwkit", tmp)
            mod = importlib.util.module_from_spec(spec)
            spec.loader.exec_module(mod)
            return mod
    sys.exit("mtwkit not built; run `cargo build --release -p mtwkit-py`")


def main():
    m = load()

    c = m.Cost("quadratic", 2)
    assert math.isclose(c([0.0, 0.0], [3.0, 4.0]), 12.5)
    assert c.grad_x([1.0, 2.0], [0.0, 0.0]) == [1.0, 2.0]
    assert abs(c.mtw_tensor([0, 0], [1, 0], [1, 0], [0, 1])) < 1e-12

    p4 = m.Cost("power", 2, p=4.0)
    print(p4, p4.mtw_tensor([0, 0], [1.5, 0.0], [1, 0], [0, 1]))
    try:
        m.Cost("bogus", 2)
        raise AssertionError("unknown cost accepted")
    except ValueError:
        pass

    ball = lambda cx: {"kind": "ball", "center": [cx, 0.0], "radius": 0.2}
    r = m.classify(m.Cost("sqrt-one-minus", 2), ball(0.0), ball(0.45), n_pairs=40)
    assert r["classification"] == "A3", r["classification"]

    xs = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]
    ys = [[x + 0.3, y - 0.2] for x, y in xs]
    sol = m.solve(c, xs, [1, 1, 1], ys, [1, 1, 1])
    assert {(e["source"], e["target"]) for e in sol["plan"]["entries"]} == {(0, 0), (1, 1), (2, 2)}
    assert sol["summary"]["duality_gap"] <= 1e-8

    u = m.c_transform(c, sol["potentials"]["v"], ys, xs)
    assert max(abs(a - b) for a, b in zip(u, sol["potentials"]["u"])) < 1e-9

    assert set(m.demos()) == {"quadratic-translate", "a3-ball", "loeper-break"}
    s = m.demo("quadratic-translate")
    s["grids"] = {"coarse": 8, "fine": 12}
    rep = m.run(s)
    assert rep["mtw"]["classification"] == "A3w"
    assert rep["regularity"]["u_c1"] and rep["regularity"]["v_strict"]
    assert rep["invariants"]["violations"] == []
    print("smoke test ok")


if __name__ == "__main__":
    main()
