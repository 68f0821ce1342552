"""Regenerate ``oracles.json`` from symbolic calculations (sympy).

The JSON file is committed; the tests only read it.  Each entry holds the
symbolic inputs, the symbolic result as a string and its values at a fixed
set of sample points on the 2*pi box.

    python tests/oracles/make_oracles.py
"""
from __future__ import annotations

import json
from pathlib import Path

import sympy as sp

x1, x2, x3 = X = sp.symbols("x1 x2 x3", real=True)
POINTS = [(0.3, -1.1, 2.0), (1.7, 0.4, -0.6), (-2.5, 2.9, 0.9), (0.0, 0.0, 0.0)]


def grad(f):
    return [sp.diff(f, v) for v in X]


def wedge(a, b):
    """``(grad a ^ grad b)_k = eps_ijk d_i a^l d_l b^j``."""
    out = []
    for k in range(3):
        s = 0
        for i in range(3):
            for j in range(3):
                e = sp.LeviCivita(i, j, k)
                if e == 0:
                    continue
                for l in range(3):
                    s += e * sp.diff(a[l], X[i]) * sp.diff(b[j], X[l])
        out.append(sp.simplify(s))
    return out


def inverse_laplacian(src):
    """Solve ``lap p = src`` for a zero-mean trigonometric polynomial."""
    expr = sp.expand(sp.expand_trig(src).rewrite(sp.exp))
    expr = sp.powsimp(sp.expand(expr), combine="exp")
    p = 0
    for term in sp.Add.make_args(expr):
        exps = [a for a in sp.Mul.make_args(term) if isinstance(a, sp.exp)]
        coeff = sp.Mul(*[a for a in sp.Mul.make_args(term) if not isinstance(a, sp.exp)])
        arg = sum((e.args[0] for e in exps), sp.Integer(0))
        k = [sp.simplify(sp.expand(arg).coeff(v) / sp.I) for v in X]
        k2 = sum(c**2 for c in k)
        if k2 == 0:
            if sp.simplify(coeff) != 0:
                raise ValueError("source has a nonzero mean")
            continue
        p += -coeff * sp.exp(arg) / k2
    p = sp.simplify(sp.expand(p).rewrite(sp.cos))
    assert sp.simplify(sum(sp.diff(p, v, 2) for v in X) - src) == 0
    return p


def pressure(zp, zm):
    src = -sum(sp.diff(zp[i] * zm[j], X[i], X[j]) for i in range(3) for j in range(3))
    return inverse_laplacian(sp.expand(src))


def rhs(zp, zm, b0):
    p = pressure(zp, zm)
    gp = grad(p)
    dp = [sp.simplify(-sum(zm[j] * sp.diff(zp[i], X[j]) for j in range(3)) + b0 * sp.diff(zp[i], x3) - gp[i]) for i in range(3)]
    dm = [sp.simplify(-sum(zp[j] * sp.diff(zm[i], X[j]) for j in range(3)) - b0 * sp.diff(zm[i], x3) - gp[i]) for i in range(3)]
    return p, dp, dm


def values(exprs):
    f = sp.lambdify(X, exprs, "math")
    out = []
    for pt in POINTS:
        v = f(*pt)
        out.append([float(c) for c in v] if isinstance(v, (list, tuple)) else float(v))
    return out


def main():
    data = {"points": POINTS}
    a = [0, sp.sin(x1), 0]
    b = [0, 0, sp.sin(x2)]
    w = wedge(a, b)
    data["wedge_single_harmonics"] = {"a": [str(c) for c in a], "b": [str(c) for c in b],
                                      "result": [str(c) for c in w], "values": values(w)}
    zp = [sp.sin(x2), sp.sin(x3), 0]
    zm = [sp.cos(x3), sp.sin(x1), 0]
    b0 = sp.Rational(3, 2)
    p, dp, dm = rhs(zp, zm, b0)
    data["pressure_and_rhs"] = {
        "z_plus": [str(c) for c in zp], "z_minus": [str(c) for c in zm], "b0": float(b0),
        "p": str(p), "p_values": values(p),
        "rhs_plus": [str(c) for c in dp], "rhs_plus_values": values(dp),
        "rhs_minus": [str(c) for c in dm], "rhs_minus_values": values(dm),
    }
    # wedge of a field with itself (not identically zero)
    c = [sp.sin(x2) * sp.cos(x3), sp.sin(x3), sp.cos(x1)]
    wc = wedge(c, c)
    data["wedge_self"] = {"a": [str(e) for e in c], "result": [str(e) for e in wc], "values": values(wc)}
    # Leray example: v = (sin x2, 0, 0) + grad cos x1
    phi = sp.cos(x1)
    v = [sp.sin(x2) + sp.diff(phi, x1), sp.diff(phi, x2), sp.diff(phi, x3)]
    data["leray_single_mode"] = {"v": [str(e) for e in v], "result": ["sin(x2)", "0", "0"],
                                 "values": values([sp.sin(x2), sp.Integer(0), sp.Integer(0)])}
    # dispersion relation evaluated exactly
    mu, b0s = sp.Rational(1, 100), 1
    xi = (1, 0, 1)
    f = [-sp.I * mu * sum(c**2 for c in xi) + s * b0s * xi[2] for s in (1, -1)]
    data["dispersion_101"] = {"xi": list(xi), "mu": float(mu), "b0": b0s,
                              "f": [[float(sp.re(e)), float(sp.im(e))] for e in f]}
    path = Path(__file__).with_name("oracles.json")
    path.write_text(json.dumps(data, indent=1) + "\n")
    print(f"wrote {path}")


if __name__ == "__main__":
    main()
