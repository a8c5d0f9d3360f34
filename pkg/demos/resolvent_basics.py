"""One implicit step, taken apart.

Solves u + lam * A(u) = f for a gaussian right-hand side, first with the
linear profile (where the exact answer is a two-sided exponential kernel)
and then with a porous-medium profile, printing the solver report and the
structural bounds along the way.
"""
import numpy as np

from nfpelab.grid_field import Field, GridSpec
from nfpelab.oracles import linear_resolvent_kernel_1d
from nfpelab.profiles import RegularizedProfile, make_profile
from nfpelab.resolvent import solve_resolvent

try:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
except ImportError:
    plt = None


def gaussian(grid, width=0.5, total=1.0):
    x = grid.centers()
    vals = np.exp(-np.sum(x**2, axis=1) / (2 * width**2)).reshape(grid.shape)
    fld = Field(grid, vals)
    return Field(grid, vals * (total / fld.mass()))


def main():
    grid = GridSpec(d=1, n=512, L=8.0)
    f = gaussian(grid)
    lam = 0.25

    print("== linear profile: compare with the exact kernel ==")
    linear = RegularizedProfile(make_profile("linear"), 0.0)
    u, rep = solve_resolvent(f, linear, lam)
    x = grid.centers()[:, 0]
    # convolve f with the kernel by quadrature on the same grid
    kern = linear_resolvent_kernel_1d(lam, x[:, None] - x[None, :])
    exact = Field(grid, (kern @ f.values) * grid.h)
    err = Field(grid, u.values - exact.values).norm_l1()
    print(f"  newton iterations: {rep.newton_iters}")
    print(f"  residual (l1):     {rep.residual_l1:.3e}")
    print(f"  |u - kernel*f|_1:  {err:.3e}  (first order in h = {grid.h:.4f})")

    print("== porous medium m = 2 ==")
    pme = RegularizedProfile(make_profile("porous_medium", m=2.0), 0.0)
    u2, rep2 = solve_resolvent(f, pme, lam)
    print(f"  newton iterations: {rep2.newton_iters}")
    print(f"  mass in -> out:    {rep2.mass_in:.12f} -> {rep2.mass_out:.12f}")
    print(f"  min u:             {float(np.min(u2.values)):.3e}  (never below zero)")
    print(f"  sup u / sup f:     {u2.norm_linf() / f.norm_linf():.6f}  (at most 1)")

    if plt is not None:
        fig, ax = plt.subplots(figsize=(7, 4))
        ax.plot(x, f.values, label="data f", lw=1)
        ax.plot(x, u.values, label="linear solve", lw=1)
        ax.plot(x, u2.values, label="porous medium solve", lw=1)
        ax.legend()
        ax.set_xlabel("x")
        fig.tight_layout()
        fig.savefig("resolvent_basics.png", dpi=120)
        print("wrote resolvent_basics.png")


if __name__ == "__main__":
    main()
