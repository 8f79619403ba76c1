"""Time the numba and numpy backends on the two hot kernels.

    python3 benchmarks/bench_kernels.py [--repeat 3] [--t-end 25]

Both backends run on identical inputs; the script also reports the largest
difference between their outputs. The first numba call (compilation) is
excluded from the timings.
"""

import argparse
import time

import numpy as np

from decoctl.baths import CorrelatedGaussianDecayBath
from decoctl.decay import DecayEngine, DecayScenario, dicke_vector
from decoctl.modulation import ModulationSchedule
from decoctl.oracle import exact_decay_solve


def scenario(t_end):
    bath = CorrelatedGaussianDecayBath(0.05, [0.75, 0.81, 1.0], 1.0)
    mod = ModulationSchedule.pulse_trains(1.0, np.pi * np.array([1.0, 0.70, 0.58]))
    return DecayScenario(bath, mod, np.full(3, 0.5), dicke_vector(3, 1), t_end, memory="full")


def best_of(fn, repeat):
    times = []
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--t-end", type=float, default=25.0)
    args = ap.parse_args()
    sc = scenario(args.t_end)
    cases = {
        "labelled_convolution": lambda be: DecayEngine(sc, backend=be).conv.Ur,
        "volterra_solve": lambda be: exact_decay_solve(sc, backend=be).alpha,
    }
    print(f"t_end={args.t_end:g}  dt={sc.time_step():.4g}  steps={int(round(args.t_end / sc.time_step()))}")
    print(f"{'kernel':<22}{'numba [s]':>12}{'numpy [s]':>12}{'speedup':>10}{'max |diff|':>14}")
    for name, run in cases.items():
        run("numba")  # compile
        t_nb, out_nb = best_of(lambda: run("numba"), args.repeat)
        t_np, out_np = best_of(lambda: run("numpy"), args.repeat)
        diff = float(np.abs(out_nb - out_np).max())
        print(f"{name:<22}{t_nb:>12.3f}{t_np:>12.3f}{t_np / t_nb:>10.1f}{diff:>14.2e}")


if __name__ == "__main__":
    main()
