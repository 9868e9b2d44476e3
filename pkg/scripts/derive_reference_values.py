"""Symbolic derivations for the frozen reference values used in the tests.

Everything here is computed with sympy from first principles: local element
matrices by direct integration of the P1 basis, global quadratic forms by
integrating the closed-form integrand over the square, and the verification
solution's load and flux by differentiation.  Run it to regenerate the
numbers; the tests embed the printed values as literals.
"""

import sympy as sp

x, y = sp.symbols("x y", real=True)


def local_matrices():
    # P1 basis on the reference triangle (0,0)-(1,0)-(0,1)
    basis = [1 - x - y, x, y]
    tri = lambda f: sp.integrate(sp.integrate(f, (y, 0, 1 - x)), (x, 0, 1))
    stiff = sp.Matrix(
        3,
        3,
        lambda i, j: tri(
            sp.diff(basis[i], x) * sp.diff(basis[j], x)
            + sp.diff(basis[i], y) * sp.diff(basis[j], y)
        ),
    )
    mass = sp.Matrix(3, 3, lambda i, j: tri(basis[i] * basis[j]))
    # P1 basis on the unit segment, for boundary edge mass
    s = sp.symbols("s", real=True)
    seg = [1 - s, s]
    edge = sp.Matrix(2, 2, lambda i, j: sp.integrate(seg[i] * seg[j], (s, 0, 1)))
    print("reference-triangle stiffness (area 1/2):")
    sp.pprint(stiff)
    print("reference-triangle mass (area 1/2):")
    sp.pprint(mass)
    print("mass scaled to unit area (divide by the area 1/2):")
    sp.pprint(mass * 2)
    print("unit-length edge mass:")
    sp.pprint(edge)


def quadratic_forms():
    sq = lambda f: sp.integrate(sp.integrate(f, (y, 0, 1)), (x, 0, 1))
    # linear functions are reproduced exactly by P1 interpolation, so these
    # integrals equal the discrete quadratic forms on any mesh of the square
    print("int |grad x|^2 over the square:", sq(1))
    print("int 1 over the square (mass of the constant):", sq(1))
    v = y
    print("first-order-norm^2 of y over the square:", sq(v**2 + sp.diff(v, x) ** 2 + sp.diff(v, y) ** 2))


def verification_solution():
    b = sp.symbols("b", real=True)
    u = b + sp.sin(sp.pi * x) * sp.sin(sp.pi * y)
    load = sp.simplify(-sp.diff(u, x, 2) - sp.diff(u, y, 2))
    print("minus Laplacian of the verification solution:", load)
    # outward normal flux -du/dn on the four sides of the unit square
    flux = {
        "bottom": sp.simplify(sp.diff(u, y).subs(y, 0)),
        "top": sp.simplify(-sp.diff(u, y).subs(y, 1)),
        "left": sp.simplify(sp.diff(u, x).subs(x, 0)),
        "right": sp.simplify(-sp.diff(u, x).subs(x, 1)),
    }
    for side, val in flux.items():
        print(f"flux control -du/dn on {side}:", val)
    corners = [(0, 0), (1, 0), (0, 1), (1, 1)]
    vals = set()
    for cx, cy in corners:
        for val in flux.values():
            vals.add(sp.simplify(val.subs({x: cx, y: cy})))
    print("flux values at all corners:", vals)
    print("boundary value on the whole boundary:", sp.simplify(u.subs(y, 0) - b), "+ b on bottom, likewise elsewhere")
    # squared data norms used to sanity check quadrature-based errors
    sq = lambda f: sp.integrate(sp.integrate(f, (y, 0, 1)), (x, 0, 1))
    print("L2^2 of sin(pi x) sin(pi y):", sq((u - b) ** 2))
    print("H1-seminorm^2 of the verification solution:", sp.simplify(sq(sp.diff(u, x) ** 2 + sp.diff(u, y) ** 2)))


if __name__ == "__main__":
    local_matrices()
    quadratic_forms()
    verification_solution()
