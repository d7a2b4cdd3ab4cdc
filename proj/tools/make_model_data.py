#!/usr/bin/env python3
"""Model OX063 geometry and 13C hyperfine table.

Writes data/ox063_model.xyz (Angstrom, electron on the central carbon) and
data/c13_hyperfine.csv (site index among carbons in file order, Hz).
"""
import argparse
import math
import pathlib

import numpy as np

GAMMA_E = 2 * math.pi * 28.025e9
GAMMA_C = 2 * math.pi * 10.7084e6
MU0 = 4e-7 * math.pi
HBAR = 1.054571817e-34

CORE_ISO = {"center": 64.0e6, "ipso": 30.0e6, "ortho": 26.0e6, "meta": 22.0e6, "para": 28.0e6}
CORE_ANISO = {"center": 12.0e6, "ipso": 4.0e6, "ortho": 3.0e6, "meta": 2.0e6, "para": 4.0e6}
OUTER_ISO = {"quaternary": 1.5e6, "ch2a": 0.6e6, "ch2b": 0.2e6, "carboxyl": 2.0e6}


def unit(v):
    return v / np.linalg.norm(v)


def rot(axis, ang):
    a = unit(axis)
    k = np.array([[0, -a[2], a[1]], [a[2], 0, -a[0]], [-a[1], a[0], 0]])
    return np.eye(3) + math.sin(ang) * k + (1 - math.cos(ang)) * k @ k


def tetra(center, back, lateral, bond):
    """Three bond directions completing a tetrahedron opposite `back`."""
    b = unit(back)
    p = unit(lateral - np.dot(lateral, b) * b)
    q = np.cross(b, p)
    c = math.cos(math.radians(109.47))
    s = math.sqrt(1 - c * c)
    out = []
    for k in range(3):
        phi = 2 * math.pi * k / 3
        out.append(center + bond * (c * b + s * (math.cos(phi) * p + math.sin(phi) * q)))
    return out


def build(twist_deg):
    atoms = []  # (element, xyz, label)
    atoms.append(("C", np.zeros(3), "center"))
    for i in range(3):
        ang = 2 * math.pi * i / 3
        u = np.array([math.cos(ang), math.sin(ang), 0.0])
        normal0 = np.array([0.0, 0.0, 1.0])
        normal = rot(u, math.radians(twist_deg)) @ normal0
        w = np.cross(normal, u)
        rc = 1.48 + 1.40
        ring_center = rc * u
        ring = []
        names = ["ipso", "ortho", "meta", "para", "meta", "ortho"]
        for k in range(6):
            phi = math.pi + 2 * math.pi * k / 6
            pos = ring_center + 1.40 * (math.cos(phi) * u + math.sin(phi) * w)
            ring.append(pos)
            atoms.append(("C", pos, names[k]))
        # dithiole rings fused on ortho-meta bonds
        for (o, m) in ((1, 2), (5, 4)):
            out_o = unit(ring[o] - ring_center)
            out_m = unit(ring[m] - ring_center)
            s1 = ring[o] + 1.77 * out_o
            s2 = ring[m] + 1.77 * out_m
            atoms.append(("S", s1, "S"))
            atoms.append(("S", s2, "S"))
            mid = 0.5 * (s1 + s2)
            outward = unit(mid - 0.5 * (ring[o] + ring[m]))
            cq = mid + 1.05 * outward
            atoms.append(("C", cq, "quaternary"))
            for sgn in (1, -1):
                d1 = unit(0.55 * outward + sgn * 0.83 * normal)
                ca = cq + 1.54 * d1
                atoms.append(("C", ca, "ch2a"))
                hs = tetra(ca, cq - ca, outward, 1.09)
                hs.sort(key=lambda h: -np.dot(h - ca, d1 + sgn * normal))
                cb = ca + 1.54 * unit(hs[0] - ca)
                atoms.append(("H", hs[1], "H"))
                atoms.append(("H", hs[2], "H"))
                atoms.append(("C", cb, "ch2b"))
                hb = tetra(cb, ca - cb, normal * sgn, 1.09)
                hb.sort(key=lambda h: -np.dot(h - cb, cb - ca + 0.5 * outward))
                atoms.append(("H", hb[1], "H"))
                atoms.append(("H", hb[2], "H"))
                ox = cb + unit(hb[0] - cb) * 1.43
                atoms.append(("O", ox, "O"))
                atoms.append(("H", ox + 0.96 * unit(ox - cb + 0.6 * sgn * normal), "H"))
        # carboxyl on para
        cc = ring[3] + 1.50 * u
        atoms.append(("C", cc, "carboxyl"))
        o1 = cc + 1.21 * unit(u + 1.7 * w)
        o2 = cc + 1.34 * unit(u - 1.7 * w)
        atoms.append(("O", o1, "O"))
        atoms.append(("O", o2, "O"))
        atoms.append(("H", o2 + 0.97 * unit(u), "H"))
    return atoms


def point_dipole(r_m):
    return MU0 / (4 * math.pi) * HBAR * GAMMA_C * GAMMA_E / r_m**3 / (2 * math.pi)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default=str(pathlib.Path(__file__).resolve().parent.parent / "data"))
    ap.add_argument("--twist-deg", type=float, default=45.0)
    a = ap.parse_args()
    out = pathlib.Path(a.out)
    out.mkdir(parents=True, exist_ok=True)
    atoms = build(a.twist_deg)
    with open(out / "ox063_model.xyz", "w") as f:
        f.write(f"{len(atoms)}\n")
        f.write("OX063 model geometry, electron: 0.0 0.0 0.0\n")
        for el, p, _ in atoms:
            f.write(f"{el} {p[0]:.4f} {p[1]:.4f} {p[2]:.4f}\n")
    with open(out / "c13_hyperfine.csv", "w") as f:
        f.write("site_index,a_iso_hz,a_aniso_hz\n")
        idx = 0
        for el, p, label in atoms:
            if el != "C":
                continue
            if label in CORE_ISO:
                iso, aniso = CORE_ISO[label], CORE_ANISO[label]
            else:
                iso, aniso = OUTER_ISO[label], point_dipole(np.linalg.norm(p) * 1e-10)
            f.write(f"{idx},{iso:.1f},{aniso:.1f}\n")
            idx += 1
    counts = {}
    for el, _, _ in atoms:
        counts[el] = counts.get(el, 0) + 1
    print(counts)


if __name__ == "__main__":
    main()
