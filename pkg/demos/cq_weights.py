"""Convolution quadrature for the tempered fractional kernel.

Prints the first weights, checks second-order accuracy on a smooth probe
function and the sign of the discrete quadratic form.

    python3 demos/cq_weights.py [--alpha 0.5] [--lam 0.5]
"""
import argparse

import numpy as np

from oldroyd_isvd.kernels import cq_build, probe_orders, smooth_probe

if __name__ == "__main__":
    ap = argparse.ArgumentParser()
    ap.add_argument("--alpha", type=float, default=0.5)
    ap.add_argument("--lam", type=float, default=0.5)
    args = ap.parse_args()
    a, lam = args.alpha, args.lam

    w = cq_build(a, lam, 64, 1 / 64)
    print("omega_0..5:", " ".join(f"{x:.6f}" for x in w.omega[:6]))
    print("rho_1..5:  ", " ".join(f"{x:.6f}" for x in w.rho[1:6]))

    phi, _ = smooth_probe(a, lam)
    for dt, err, order in probe_orders(a, lam, phi, 1.0, [16, 32, 64, 128, 256]):
        print(f"dt={dt:.5f} max error {err:.3e} order {order:.3f}")

    # smallest eigenvalue of the symmetric part of the lower-triangular Toeplitz form
    N = 64
    T = np.zeros((N, N))
    for n in range(N):
        T[n, :n + 1] = w.omega[n::-1]
    print(f"min eigenvalue of sym(T): {np.linalg.eigvalsh(0.5 * (T + T.T)).min():.4e}")
