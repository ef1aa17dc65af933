#!/usr/bin/env python3
"""Benchmark the compiled rasterizer kernel against the numpy fallback.

Renders the same batch of random scenes through both backends, verifies the
outputs are bit-identical, and reports frames/s plus end-to-end sequence
generation throughput.

Usage: python benchmarks/bench_raster.py [--scenes N] [--image-size S]
"""

import argparse
import time

import numpy as np

from rfcnet.errors import PlacementFailure
from rfcnet.mnist import GlyphBank
from rfcnet.scene import SceneConfig, generate_sequence, render, sample_scene
from rfcnet.scene.raster import available_backends


def sample_scenes(config, n, seed):
    bank = GlyphBank.builtin("train")
    rng = np.random.default_rng(seed)
    scenes = []
    while len(scenes) < n:
        try:
            scenes.append(sample_scene(config, rng, bank))
        except PlacementFailure:
            continue
    return scenes


def bench_backend(scenes, backend, repeats):
    start = time.perf_counter()
    for _ in range(repeats):
        for scene in scenes:
            render(scene, backend=backend)
    elapsed = time.perf_counter() - start
    return len(scenes) * repeats / elapsed


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--scenes", type=int, default=200)
    parser.add_argument("--repeats", type=int, default=5)
    parser.add_argument("--image-size", type=int, default=64)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    config = SceneConfig(image_size=args.image_size)
    backends = available_backends()
    print(f"available backends: {', '.join(backends)}")
    scenes = sample_scenes(config, args.scenes, args.seed)

    if "compiled" in backends:
        img_c, lab_c = render(scenes[0], backend=backends["compiled"])
        img_p, lab_p = render(scenes[0], backend=backends["python"])
        assert np.array_equal(img_c, img_p) and np.array_equal(lab_c, lab_p), \
            "backends disagree; benchmark aborted"
        print("outputs bit-identical on the probe scene")

    print(f"\n{'backend':<10s} {'frames/s':>12s}")
    rates = {}
    for name, module in backends.items():
        rates[name] = bench_backend(scenes, module, args.repeats)
        print(f"{name:<10s} {rates[name]:>12,.0f}")
    if len(rates) == 2:
        print(f"\nspeedup: {rates['compiled'] / rates['python']:.1f}x")

    # end-to-end: full sequence generation with the active backend
    start = time.perf_counter()
    n_seq = max(20, args.scenes // 4)
    for i in range(n_seq):
        generate_sequence(config, (args.seed, i))
    elapsed = time.perf_counter() - start
    print(f"\nend-to-end generate_sequence: {n_seq / elapsed:.1f} sequences/s "
          f"(active backend)")


if __name__ == "__main__":
    main()
