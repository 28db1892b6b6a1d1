"""Pick the synthetic noise level for the end-to-end benchmark.

Sweeps the per-position noise of the synthetic store and reports GAP+Proto
accuracy (5-way 1-shot) with attention on and off. The benchmark uses the
median of the levels whose attention-on accuracy falls inside [0.6, 0.8].

    python scripts/calibrate_noise.py --episodes 200
"""

import argparse

from localprop import MethodConfig, synth_generate
from localprop.evaluation import evaluate

TARGET = (0.6, 0.8)


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--episodes", type=int, default=200)
    parser.add_argument("--levels", default="0.3,0.4,0.5,0.6,0.7,0.8,0.9,1.0")
    args = parser.parse_args()

    rows = []
    for noise in [float(v) for v in args.levels.split(",")]:
        store = synth_generate(20, 50, 6, 6, 32, clutter_fraction=0.5, noise=noise, seed=0)
        on = evaluate(store, "gap-proto", MethodConfig(), episodes=args.episodes, seed=0, shots=1)
        off = evaluate(store, "gap-proto", MethodConfig(use_attention=False), episodes=args.episodes, seed=0, shots=1)
        rows.append((noise, on.mean_accuracy))
        print(f"noise={noise:.2f}  gap-proto={on.mean_accuracy:.4f} +- {on.ci95:.4f}"
              f"  (no attention {off.mean_accuracy:.4f})", flush=True)

    inside = [r for r in rows if TARGET[0] <= r[1] <= TARGET[1]]
    if not inside:
        print("no level inside the target band")
        return
    best = inside[(len(inside) - 1) // 2]
    print(f"chosen noise={best[0]:.2f} (accuracy {best[1]:.4f})")


if __name__ == "__main__":
    main()
