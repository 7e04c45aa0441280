#!/usr/bin/env python3
"""Step-size study on the lossless oscillator; prints slopes per method."""
import sys

from fieldcircuit import experiments


def main():
    out = sys.argv[1] if len(sys.argv) > 1 else "convergence-out"
    table = experiments.run_convergence(out_dir=out)
    for method, slope in table.slopes.items():
        expected = experiments.EXPECTED_ORDERS[method]
        print(f"{method:15s} slope {slope:+.3f} (expected {expected:.0f})")
    print(f"rows written to {table.files[0]}")


if __name__ == "__main__":
    main()
