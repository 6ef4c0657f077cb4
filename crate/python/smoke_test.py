import math

import coldip_py as cd


def close(a, b, tol):
    assert abs(a - b) <= tol, f"{a} vs {b}"


def main():
    xi = 0.1
    g, om = cd.pair_coupling(xi, 0.0)
    close(om, -0.75 * math.cos(xi) / xi + 0.75 * (math.sin(xi) / xi**2 + math.cos(xi) / xi**3), 1e-9)

    _, rates, shifts = cd.eigenmodes([[0.0, 0.0, 0.0], [0.0, 0.0, xi]], [1.0, 0.0, 0.0])
    close(sorted(rates)[1], 1.0 + g, 1e-9)
    close(max(abs(s) for s in shifts), abs(om), 1e-9)

    b = cd.steady_state([[0.0, 0.0, 0.0]], [1.0, 0.0, 0.0], 0.01)
    close(b[0].imag, 0.01, 1e-12)

    q = cd.chain_quench([(30, math.pi / 2), (40, math.pi), (30, math.pi / 2)], 50, [10.0], d_factor=0.2)
    assert q["retention"][0] > 0.8

    print("chern", cd.chern_numbers("honeycomb", 0.05 * 2 * math.pi, 1.0, grid=12))

    with open("configs/eigenmodes.toml") as f:
        out = cd.run("eigenmodes", f.read())
    print("eigenmodes tables", sorted(out["tables"]))
    try:
        cd.eigenmodes([[0.0, 0.0, 0.0], [0.0, 0.0, 0.0]], [1.0, 0.0, 0.0])
    except ValueError:
        pass
    else:
        raise AssertionError("coincident atoms accepted")
    print("smoke test passed")


if __name__ == "__main__":
    main()
