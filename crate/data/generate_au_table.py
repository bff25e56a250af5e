"""Regenerates au_optical.csv.

The table is NOT measured data. It samples the Lorentz-Drude parametrisation of
gold by Rakic, Djurisic, Elazar and Majewski, Appl. Opt. 37, 5271 (1998),
on a logarithmic energy grid. Swap in a measured tabulation (same CSV layout)
for quantitative work.
"""
import numpy as np

WP = 9.03
F0, G0 = 0.760, 0.053
OSC = [  # (f_j, Gamma_j eV, omega_j eV)
    (0.024, 0.241, 0.415),
    (0.010, 0.345, 0.830),
    (0.071, 0.870, 2.969),
    (0.601, 2.494, 4.304),
    (4.384, 2.214, 13.32),
]


def eps(w):
    e = 1 - F0 * WP**2 / (w * (w + 1j * G0))
    for f, g, w0 in OSC:
        e += f * WP**2 / (w0**2 - w**2 - 1j * w * g)
    return e


energies = np.logspace(-1, 3, 161)
nk = np.sqrt(eps(energies))
with open("au_optical.csv", "w") as out:
    out.write("# material=Au\n")
    out.write("# source=Lorentz-Drude model of Rakic et al., Appl. Opt. 37, 5271 (1998); sampled, not measured\n")
    out.write("# generator=data/generate_au_table.py (161 log-spaced energies, 0.1-1000 eV)\n")
    out.write("energy_eV,n,k\n")
    for e, z in zip(energies, nk):
        out.write(f"{e:.10g},{z.real:.10g},{z.imag:.10g}\n")
