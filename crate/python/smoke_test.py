"""Smoke test for the bosim extension module.

Build and run from the repository root:

    cargo build --release -p bosim-py --features extension-module
    cp target/release/libbosim.so python/bosim.so
    python3 python/smoke_test.py
"""

import math
import os
import sys

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

import bosim  # noqa: E402


def close(a, b, tol):
    assert abs(a - b) <= tol, f"{a} != {b}"


def main():
    assert bosim.__version__
    assert bosim.basis_size(3, 2, 3) == 56
    assert bosim.doi("1:1^1 1:2^1 3:1^2 3:3^1 4:2^1", 4, 3) == (3, 11)
    assert bosim.doi("1:1^2 3:1^3 4:1^1", 4, 3) == (1, 1)

    # one-body traces do not see species
    times = [0.1 * k for k in range(20)]
    same = bosim.evolve_density("1:1^1 2:1^1", 2, 2, 1, times, u=5.0)
    diff = bosim.evolve_density("1:1^1 2:2^1", 2, 2, 1, times, u=5.0)
    for a, b in zip(same, diff):
        close(a, 1.0, 1e-10)
        close(b, 1.0, 1e-10)

    f = bosim.excess_fluctuation("1:1^1 1:2^1 3:1^2 3:3^1 4:2^1", 4, 3, 1)
    close(f, 0.275, 0.005)

    w = bosim.block_weights("1:1^4 2:2^4", 2, 2)
    close(sum(w.values()), 1.0, 1e-10)
    close(w["5+3"], 0.4, 1e-10)

    dt = 0.1
    ts = [dt * k for k in range(1000)]
    omega = 2 * math.pi * 50 / (len(ts) * dt)
    peaks = bosim.dft_peaks(ts, [math.cos(omega * t) for t in ts], hann=False)
    assert len(peaks) == 1, peaks
    close(peaks[0][0], omega, 1e-9)
    close(peaks[0][1], 1.0, 1e-9)

    try:
        bosim.doi("1:1^2", 2, 1)
    except ValueError:
        pass
    else:
        raise AssertionError("single-mode state must be rejected")

    print("bosim smoke test passed")


if __name__ == "__main__":
    main()
