"""Compute the reference accuracies for the end-to-end synthetic benchmark.

Runs the four benchmark arms once (500 episodes, 5-way 1-shot) and prints
the means and the three margins that tests/test_acceptance.py asserts.

    python scripts/freeze_benchmark.py
"""

import argparse
import dataclasses
import time

from localprop import MethodConfig, synth_generate
from localprop.evaluation import evaluate

NOISE = 0.6
LP = MethodConfig(clusters=10, knn=50)


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--episodes", type=int, default=500)
    args = parser.parse_args()

    store = synth_generate(20, 50, 6, 6, 32, clutter_fraction=0.5, noise=NOISE, seed=0)
    arms = {
        "gap_on": ("gap-proto", MethodConfig()),
        "gap_off": ("gap-proto", MethodConfig(use_attention=False)),
        "lp_trans": ("local-lp", dataclasses.replace(LP, transductive=True)),
        "lp_induct": ("local-lp", LP),
    }
    means = {}
    for name, (method, config) in arms.items():
        start = time.perf_counter()
        r = evaluate(store, method, config, episodes=args.episodes, seed=0, shots=1)
        means[name] = r.mean_accuracy
        print(f"{name:10s} {r.mean_accuracy:.6f} +- {r.ci95:.4f}  ({time.perf_counter() - start:.1f} s)", flush=True)

    print(f"attention margin     {means['gap_on'] - means['gap_off']:.6f}")
    print(f"transduction margin  {means['lp_trans'] - means['lp_induct']:.6f}")
    print(f"local-lp margin      {means['lp_trans'] - means['gap_on']:.6f}")


if __name__ == "__main__":
    main()
