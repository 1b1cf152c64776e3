"""Shift analysis and plot data for the bundled four-window timeline."""
import argparse
from pathlib import Path

from rcnn_fer import report as R
from rcnn_fer.rnn import detect_shift, smoothness


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="runs/table2")
    args = ap.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    tl = R.table2_timeline()
    R.write_table2_csv(tl, out / "table2.csv")
    R.write_shift_json(tl, out / "shift.json")
    R.emit_plot_data(out, timeline=tl)
    print((out / "table2.csv").read_text(), end="")
    rep = detect_shift(tl)
    print("dominants:", " ".join(d.label for d in rep.dominants))
    for t in rep.transitions:
        print(f"shift {t.source.label} -> {t.target.label} at t+{t.timestamp - tl.timestamps[0]:g}s")
    print("smoothness:", smoothness(tl))
    dist = R.table1_distribution()
    print("table1 ranking:", " > ".join(c.label for c in dist.ranking()))


if __name__ == "__main__":
    main()
