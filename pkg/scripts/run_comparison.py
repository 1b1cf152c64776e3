"""Linear baseline vs CNN vs windowed CNN+RNN accuracy on one synthetic split."""
import argparse
from pathlib import Path

from rcnn_fer import report as R
from rcnn_fer.cnn import CnnConfig
from rcnn_fer.evaluation import compare_models
from rcnn_fer.synthetic import synthetic_dataset
from rcnn_fer.training import TrainConfig


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="runs/comparison")
    ap.add_argument("--noise", type=float, default=0.05)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    data = synthetic_dataset(size=32, per_class=40, noise=args.noise, seed=args.seed)
    acc, hist = compare_models(data, CnnConfig(input_size=32, seed=args.seed), TrainConfig(seed=args.seed))
    out = Path(args.out)
    R.emit_plot_data(out, epoch_accuracy=[h.accuracy for h in hist], comparison=acc)
    for name, a in acc.items():
        print(f"{name:9s} {a:.4f}")


if __name__ == "__main__":
    main()
