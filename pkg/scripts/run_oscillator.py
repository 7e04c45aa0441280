#!/usr/bin/env python3
"""Run the LC oscillator experiment and print the energy summary.

Compares trapezoidal against implicit Euler on the same setup so the
conserving and non-conserving behaviour sit side by side.
"""
import sys

from fieldcircuit import experiments


def main():
    out = sys.argv[1] if len(sys.argv) > 1 else "osc-out"
    for method in ("trapezoidal", "implicit_euler"):
        cfg = experiments.OscillatorConfig(method=method)
        rep = experiments.run_oscillator(cfg, out_dir=f"{out}-{method}")
        print(f"{method}: max |H-H0|/H0 = {rep.max_rel_energy_drift:.3e}, "
              f"f = {rep.omega_measured / 6.283185307179586:.1f} Hz")


if __name__ == "__main__":
    main()
