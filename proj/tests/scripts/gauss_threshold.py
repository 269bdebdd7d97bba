#!/usr/bin/env python3
"""Blur-and-threshold predictor over the text density grid format.

usage: gauss_threshold.py INPUT OUTPUT SIGMA_UM ETA BETA
"""
import sys

import numpy as np


def read_grid(path):
    with open(path) as f:
        header = f.readline().split()
        nx, ny = int(header[0]), int(header[1])
        dx, x0, y0 = (float(v) for v in header[2:5])
        values = np.array(f.read().split(), dtype=float).reshape(ny, nx)
    return nx, ny, dx, x0, y0, values


def blur(values, sigma, dx):
    if sigma <= 0:
        return values
    r = int(np.ceil(4 * sigma / dx - 1e-9))
    t = np.arange(-r, r + 1) * dx
    k = np.exp(-0.5 * (t / sigma) ** 2)
    k /= k.sum()
    padded = np.pad(values, ((0, 0), (r, r)), mode="edge")
    rows = np.array([np.convolve(row, k, mode="valid") for row in padded])
    padded = np.pad(rows, ((r, r), (0, 0)), mode="edge")
    return np.array([np.convolve(col, k, mode="valid") for col in padded.T]).T


def main():
    src, dst = sys.argv[1], sys.argv[2]
    sigma, eta, beta = (float(v) for v in sys.argv[3:6])
    nx, ny, dx, x0, y0, values = read_grid(src)
    rho = blur(values, sigma, dx)
    norm = np.tanh(beta * eta) + np.tanh(beta * (1 - eta))
    out = np.clip((np.tanh(beta * eta) + np.tanh(beta * (rho - eta))) / norm, 0.0, 1.0)
    with open(dst, "w") as f:
        f.write(f"{nx} {ny} {dx!r} {x0!r} {y0!r}\n")
        for row in out:
            f.write(" ".join(repr(float(v)) for v in row) + "\n")


if __name__ == "__main__":
    main()
