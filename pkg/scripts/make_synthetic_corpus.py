"""Write the three-tone corpus as 16-bit WAVs under <out>/<label>/."""

import argparse

from mdrr.synthetic import write_tone_corpus


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("out")
    ap.add_argument("--per-class", type=int, default=40)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--duration", type=float, default=1.0)
    ap.add_argument("--snr-db", type=float, default=20.0)
    a = ap.parse_args()
    root = write_tone_corpus(a.out, n_per_class=a.per_class, seed=a.seed, duration=a.duration, snr_db=a.snr_db)
    print(f"wrote corpus to {root}")


if __name__ == "__main__":
    main()
