#!/usr/bin/env python3
"""Index-2 oscillator (parallel voltage source): energy-balance defect of
trapezoidal vs implicit Euler."""
import sys

from fieldcircuit import experiments


def main():
    out = sys.argv[1] if len(sys.argv) > 1 else "index2-out"
    for method in ("trapezoidal", "implicit_euler"):
        cfg = experiments.OscillatorConfig(method=method)
        rep = experiments.run_index2(cfg, out_dir=f"{out}-{method}")
        print(f"{method}: |H - (E_in - D_cum)| at t_end = "
              f"{rep.defect_at_end:.3e} J "
              f"({rep.defect_at_end / rep.scale:.3e} of scale)")


if __name__ == "__main__":
    main()
