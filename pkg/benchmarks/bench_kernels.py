"""Compare the compiled and pure-Python kernel backends on pipeline-sized inputs.

    python benchmarks/bench_kernels.py [--repeat N]
"""
import argparse
import timeit

import numpy as np

from stllc import _pykernels, kernels
from stllc.dictionary import kmeans_fit
from stllc.hog3d import DecompositionConfig, _cell_offsets, dodecahedron_basis, grid
from stllc.sequence_io import synth_generate


def _inputs():
    basis = dodecahedron_basis()
    centers = np.ascontiguousarray(basis.centers)
    vol = synth_generate("up", 0).samples.astype(np.float64)
    cfg = DecompositionConfig()
    votes = _pykernels.pixel_votes(vol, 1, centers, basis.psi)
    locs = grid(vol.shape[2], vol.shape[1], cfg)
    offsets = np.array(_cell_offsets(cfg))
    starts = np.array([(t, y, x) for (x, y) in locs for t in range(vol.shape[0])])
    origins = np.unique((starts[:, None, :] + offsets[None]).reshape(-1, 3), axis=0)

    rng = np.random.default_rng(0)
    X = np.abs(rng.normal(size=(4000, 48)))
    X /= np.linalg.norm(X, axis=1, keepdims=True)
    D = kmeans_fit(X, n_s=200, seed=0).atoms
    A = X[:1000].T
    G = D.T @ D
    C = np.ascontiguousarray((D.T @ A).T)
    bb = np.sum(A * A, axis=0)
    return {
        "pixel_votes 20x48x64": lambda m: m.pixel_votes(vol, 1, centers, basis.psi),
        f"box_sums {len(origins)} cells": lambda m: m.box_sums(votes, origins, 1, 8, 8),
        "lasso_solve 1000 cols, 200 atoms": lambda m: m.lasso_solve(G, C, bb, 0.15, 1e-8, 10000),
    }


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=3)
    args = parser.parse_args()

    backends = {"python": _pykernels}
    if kernels.compiled():
        from stllc import _ckernels
        backends["cython"] = _ckernels
    else:
        print("compiled extension not built; timing the python backend only")

    print(f"{'kernel':36s}" + "".join(f"{name:>12s}" for name in backends) + "     speedup")
    for label, run in _inputs().items():
        times = {name: min(timeit.repeat(lambda: run(mod), number=1, repeat=args.repeat))
                 for name, mod in backends.items()}
        row = f"{label:36s}" + "".join(f"{t * 1e3:10.1f}ms" for t in times.values())
        if "cython" in times:
            row += f"  {times['python'] / times['cython']:8.1f}x"
        print(row)


if __name__ == "__main__":
    main()
