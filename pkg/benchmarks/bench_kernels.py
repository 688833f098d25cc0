"""Time the numba and numpy pixel kernels side by side.

    python3 benchmarks/bench_kernels.py [--repeat N]

Both variants are imported directly, so the ``CROPSEG_DISABLE_NUMBA`` flag
does not matter here. Numba timings exclude the first (compiling) call.
"""
import argparse
import timeit

import numpy as np

from cropseg import kernels
from cropseg._accel import NUMBA_AVAILABLE


def cases(rng):
    # 2600x1950 field photo sizes, polygons with a few hundred vertices
    t = np.linspace(0, 2 * np.pi, 400, endpoint=False)
    r = 600 + 80 * np.sin(7 * t)
    xs, ys = 1300 + r * np.cos(t), 975 + r * np.sin(t)
    photo = rng.random((1950, 2600, 3))
    mask = (rng.random((1950, 2600)) > 0.7).astype(np.uint8)
    return {
        "fill_polygon 2600x1950": ("fill_polygon", (xs, ys, 1950, 2600)),
        "sample_bilinear 512 from 2600x1950": ("sample_bilinear", (photo, 700.3, 400.7, 1.9, 512, 512)),
        "mask_moments 2600x1950": ("mask_moments", (mask,)),
    }


def prepare(name, args):
    if name == "sample_bilinear":
        img, x0, y0, step, n, m = args
        return (np.ascontiguousarray(img, dtype=np.float64), float(x0), float(y0), float(step), n, m)
    if name == "fill_polygon":
        xs, ys, h, w = args
        return (np.ascontiguousarray(xs, float), np.ascontiguousarray(ys, float), h, w)
    return args


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    rng = np.random.default_rng(0)
    print(f"{'kernel':38s} {'numpy ms':>10s} {'numba ms':>10s} {'speedup':>8s}")
    for label, (name, raw) in cases(rng).items():
        call_args = prepare(name, raw)
        np_fn = getattr(kernels, f"{name}_numpy")
        t_np = min(timeit.repeat(lambda: np_fn(*call_args), number=1, repeat=args.repeat)) * 1e3
        if NUMBA_AVAILABLE:
            nb_fn = getattr(kernels, f"{name}_numba")
            nb_fn(*call_args)  # compile
            t_nb = min(timeit.repeat(lambda: nb_fn(*call_args), number=1, repeat=args.repeat)) * 1e3
            print(f"{label:38s} {t_np:10.2f} {t_nb:10.2f} {t_np / t_nb:7.1f}x")
        else:
            print(f"{label:38s} {t_np:10.2f} {'n/a':>10s} {'':>8s}")


if __name__ == "__main__":
    main()
