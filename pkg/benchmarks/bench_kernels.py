"""Time the numba kernels against the numpy fallback.

    python3 benchmarks/bench_kernels.py [--repeat 3] [--size 128]

The first numba call of each kernel compiles (or loads from the on-disk
cache); it is run once untimed.
"""

import argparse
import time

import numpy as np

from orbitcarve import _accel
from orbitcarve.geometry import Camera
from orbitcarve.metrics import BVH
from orbitcarve.primitives import icosphere
from orbitcarve.raster import RasterConfig, render, render_backward


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def cases(size):
    mesh = icosphere(4, 0.8).with_colors(np.full((2562, 3), 0.5))
    f = 1.2 * size
    cam = Camera.look_at([0.0, 0.5, 3.0], [0, 0, 0], [0, 1, 0], f, f, size / 2, size / 2, size, size)
    soft, hard = RasterConfig(sigma=0.5), RasterConfig(mode="hard")
    pts = np.random.default_rng(0).uniform(-1, 1, (20000, 3))
    bvh = BVH(mesh.vertices, mesh.faces)

    def backward(b):
        out = render(mesh, cam, soft, b)
        return render_backward(mesh, cam, soft, grad_mask=np.ones_like(out.mask), grad_normal=np.ones_like(out.normal), forward=out, backend=b)

    return {
        f"render hard {size}px": lambda b: render(mesh, cam, hard, b),
        f"render soft {size}px": lambda b: render(mesh, cam, soft, b),
        f"render+backward soft {size}px": backward,
        "closest-triangle 20k pts": lambda b: bvh.query(pts, b),
    }


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--repeat", type=int, default=3)
    p.add_argument("--size", type=int, default=128)
    args = p.parse_args()
    backends = ["numba", "numpy"] if _accel.HAVE_NUMBA else ["numpy"]
    print(f"{'kernel':32s}" + "".join(f"{b:>12s}" for b in backends) + ("     speedup" if len(backends) == 2 else ""))
    for name, fn in cases(args.size).items():
        row = []
        for b in backends:
            fn(b)  # warm-up / JIT
            row.append(best_of(lambda: fn(b), args.repeat))
        line = f"{name:32s}" + "".join(f"{t * 1e3:10.1f}ms" for t in row)
        if len(row) == 2:
            line += f"{row[1] / row[0]:11.1f}x"
        print(line)


if __name__ == "__main__":
    main()
