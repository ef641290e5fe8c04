"""Regenerates tiny_1p1_3steps.json by brute-force enumeration with numpy.

Usage: python3 tiny_1p1_oracle.py > tiny_1p1_3steps.json
"""
import itertools
import json

import numpy as np
from scipy.linalg import expm

L, A, N = 2, 1.0, 2
LAM, SIGMA, DT, STEPS = 0.5, 1.0, 0.1, 3
PHI = np.array([0.8, 0.6j])


def wrapped_normal(x, box):
    ks = np.arange(-60, 61)
    y = x + ks * box
    return np.exp(-y**2 / (2 * SIGMA**2)).sum() / (np.sqrt(2 * np.pi) * SIGMA)


g = np.array([wrapped_normal(n * A, L * A) for n in range(L)])
g /= g.sum() * A

k = 2 * np.pi * np.fft.fftfreq(L, d=A)
F = np.fft.fft(np.eye(L), axis=0)
t1 = np.linalg.inv(F) @ np.diag(k**2 / 2) @ F
u1 = expm(-1j * t1 * DT)
u = np.kron(u1, u1)

ops = [("none", np.sqrt(1 - N * LAM * DT) * u)]
for i in range(N):
    for x in range(L):
        mult = np.array([g[(((q >> (N - 1 - i)) & 1) - x) % L] for q in range(L**N)])
        ops.append(((i, x), np.sqrt(LAM * DT * A) * np.diag(np.sqrt(mult)) @ u))

sums = {}
for hist in itertools.product(ops, repeat=STEPS):
    kh = np.eye(L**N, dtype=complex)
    for _, op in hist:
        kh = op @ kh
    first = next((b[1] for b, _ in hist if b != "none" and b[0] == 0), None)
    label = "none" if first is None else f"site:{first}"
    sums.setdefault(label, np.zeros((L**N, L**N), dtype=complex))
    sums[label] += kh.conj().T @ kh

elements = []
for label, e in sums.items():
    p = np.zeros((L, L), dtype=complex)
    for s, s2 in itertools.product(range(L), repeat=2):
        for e1, e2 in itertools.product(range(L), repeat=2):
            p[s, s2] += PHI[e1].conj() * e[s * L + e1, s2 * L + e2] * PHI[e2]
    elements.append({"label": label, "matrix": [[[z.real, z.imag] for z in row] for row in p]})

print(json.dumps({"dim": L, "elements": elements}, indent=2))
