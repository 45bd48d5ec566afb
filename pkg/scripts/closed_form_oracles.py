"""Closed-form reference values used by the test suite.

Every [oracle] line below is derived independently of the package: boundary
value problems for Brownian motion on (0,1) are solved in closed form and
cross-checked numerically (finite differences / quadrature / scipy special
functions).  Test files freeze these numbers as literals; rerun this script
to regenerate them.

The generator convention throughout is L = b d/dx + 1/2 sigma^2 d^2/dx^2,
so standard Brownian motion (b=0, sigma=1) has L = (1/2) d^2/dx^2.
"""

import math

import numpy as np
from scipy import linalg, special


def ptable(title, rows):
    print(f"\n== {title}")
    for k, v in rows:
        print(f"  [oracle] {k:<44s} {v}")


# ---------------------------------------------------------------------------
# 1. Exit-time moments for BM on (0,1):  (1/2) u'' = -1, u(0)=u(1)=0
#    => u(x) = x(1-x).  Second moment: (1/2) v'' = -2u => v = x(1-x)(1+x-x^2)/3...
#    derived by integration below and cross-checked with a dense FD solve.


def fd_solve(rhs_vals, n=2001):
    """Solve (1/2) y'' = rhs on (0,1), y(0)=y(1)=0, second-order FD."""
    xs = np.linspace(0.0, 1.0, n)
    h = xs[1] - xs[0]
    ab = np.zeros((3, n - 2))
    ab[0, 1:] = 0.5 / (h * h)
    ab[1, :] = -1.0 / (h * h)
    ab[2, :-1] = 0.5 / (h * h)
    y = linalg.solve_banded((1, 1), ab, rhs_vals(xs[1:-1]))
    return xs, np.concatenate([[0.0], y, [0.0]])


def mean_exit(x):
    return x * (1.0 - x)


xs, u_fd = fd_solve(lambda x: -np.ones_like(x))
err_u = np.max(np.abs(u_fd - mean_exit(xs)))

# E tau^2 solves (1/2) v'' = -2 u with v(0)=v(1)=0:
# v'' = -4x + 4x^2, v = -(2/3)x^3 + (1/3)x^4 + (1/3)x  (constants from BCs)


def second_moment(x):
    return -(2.0 / 3.0) * x**3 + (1.0 / 3.0) * x**4 + (1.0 / 3.0) * x


xs2, v_fd = fd_solve(lambda x: -2.0 * mean_exit(x))
err_v = np.max(np.abs(v_fd - second_moment(xs2)))

ptable(
    "exit-time moments, BM on (0,1)",
    [
        ("E_0.2 tau = 0.2*0.8", f"{mean_exit(0.2):.12f}"),
        ("E_0.5 tau = 0.25", f"{mean_exit(0.5):.12f}"),
        ("E_0.8 tau", f"{mean_exit(0.8):.12f}"),
        ("E_0.5 tau^2 = 5/48", f"{second_moment(0.5):.12f} = {5/48:.12f}"),
        ("FD cross-check max errors", f"{err_u:.2e}, {err_v:.2e}"),
    ],
)

# ---------------------------------------------------------------------------
# 2. Laplace transform / exponential moments:
#    (1/2) u'' + delta u = 0, u(0)=u(1)=1  =>
#    delta < 0: u(x) = cosh(s(x-1/2)) / cosh(s/2),  s = sqrt(-2 delta)
#    delta > 0: u(x) = cos(s(x-1/2)) / cos(s/2),    s = sqrt(2 delta),
#    finite iff s/2 < pi/2, i.e. delta < pi^2/2 (principal Dirichlet
#    eigenvalue of -(1/2) d^2/dx^2 on (0,1)).


def exp_moment(x, delta):
    if delta == 0.0:
        return 1.0
    if delta < 0.0:
        s = math.sqrt(-2.0 * delta)
        return math.cosh(s * (x - 0.5)) / math.cosh(s / 2.0)
    s = math.sqrt(2.0 * delta)
    assert delta < math.pi**2 / 2.0, "moment infinite"
    return math.cos(s * (x - 0.5)) / math.cos(s / 2.0)


lam1 = math.pi**2 / 2.0
ptable(
    "exponential exit moments, BM on (0,1)",
    [
        ("E_0.5 e^{-2 tau} = 1/cosh(1)", f"{exp_moment(0.5, -2.0):.12f}"),
        ("= sech(1)", f"{1/math.cosh(1.0):.12f}"),
        ("E_0.5 e^{2 tau} = 1/cos(1)", f"{exp_moment(0.5, 2.0):.12f}"),
        ("divergence threshold pi^2/2", f"{lam1:.12f}"),
        ("finite at delta in {0, 0.5, 2}; infinite at 6", f"6 > {lam1:.4f}"),
    ],
)

# ---------------------------------------------------------------------------
# 3. Green functional, beta=2, f == 1:
#    G solves (1/2) G'' - beta G = -1, G(0)=G(1)=0 => G = (1 - u_beta)/beta
#    where u_beta = E e^{-beta tau} from above.  Sample-level identity:
#    int_0^tau e^{-beta s} ds = (1 - e^{-beta tau})/beta path by path.

g_half = (1.0 - exp_moment(0.5, -2.0)) / 2.0
ptable(
    "Green functional, BM on (0,1), beta=2, f=1",
    [
        ("G_2 1 (0.5) = (1 - sech 1)/2", f"{g_half:.12f}"),
        ("per-path identity", "int e^{-beta s} ds == (1 - e^{-beta tau})/beta"),
    ],
)

# ---------------------------------------------------------------------------
# 4. Survival function by Dirichlet heat series, cross-checked against
#    Crank-Nicolson on the pde  p_t = (1/2) p_xx,  p(0,x)=1, p=0 at 0,1.


def survival_series(x, t, kmax=4001):
    k = np.arange(1, kmax, 2)
    return float(
        np.sum(4.0 / (k * np.pi) * np.sin(k * np.pi * x) * np.exp(-(k**2) * np.pi**2 * t / 2.0))
    )


def survival_cn(x, t, n=801, steps=2000):
    grid = np.linspace(0.0, 1.0, n)
    h = grid[1] - grid[0]
    dt = t / steps
    p = np.ones(n)
    p[0] = p[-1] = 0.0
    main = np.full(n - 2, -2.0) / (h * h)
    off = np.ones(n - 3) / (h * h)
    lap = np.diag(main) + np.diag(off, 1) + np.diag(off, -1)
    A = np.eye(n - 2) - 0.25 * dt * lap
    B = np.eye(n - 2) + 0.25 * dt * lap
    lu, piv = linalg.lu_factor(A)
    inner = p[1:-1]
    for _ in range(steps):
        inner = linalg.lu_solve((lu, piv), B @ inner)
    return float(np.interp(x, grid[1:-1], inner))


rows = []
for t in (0.1, 0.2, 0.4):
    s_series = survival_series(0.5, t)
    s_cn = survival_cn(0.5, t)
    rows.append((f"P_0.5(tau > {t})", f"{s_series:.10f}  (CN check {s_cn:.10f})"))
ptable("survival curve, BM on (0,1)", rows)

# ---------------------------------------------------------------------------
# 5. Harmonic measure: (1/2) u'' = 0, u(0)=0, u(1)=1 => u(x) = x.

ptable(
    "harmonic measure of the right edge, BM on (0,1)",
    [(f"P_{x}(exit at 1) = x", f"{x}") for x in (0.2, 0.5, 0.8)],
)

# ---------------------------------------------------------------------------
# 6. beta G_beta applied to the harmonic u(x)=x (beta=2):
#    beta G_beta u = u - E[e^{-beta tau} u(x_tau)],
#    E[e^{-beta tau} u(x_tau)] = v(x),  (1/2) v'' = beta v, v(0)=0, v(1)=1
#    => v = sinh(sqrt(2 beta) x)/sinh(sqrt(2 beta)).  Hence beta G_beta u < u.


def resolvent_u(x, beta=2.0):
    s = math.sqrt(2.0 * beta)
    return x - math.sinh(s * x) / math.sinh(s)


ptable(
    "resolvent bound, u(x)=x, beta=2",
    [
        (f"beta G_beta u ({x}) = x - sinh(2x)/sinh(2)", f"{resolvent_u(x):.12f}")
        for x in (0.3, 0.6)
    ],
)

# ---------------------------------------------------------------------------
# 7. Gambler's ruin on (0, n): P_x(hit n before 0) = x/n (driftless BM).

ptable(
    "gambler's ruin escape-before-exit",
    [("sup_{x<=0.1} P_x(hit 2 before 0) = 0.05", f"{0.1/2.0:.6f}")],
)

# ---------------------------------------------------------------------------
# 8. Drifted BM, b=+1: P(ever reach a point d BELOW the start) = e^{-2d}
#    (scale function s(x) = e^{-2x}; limit of (s(b)-s(x))/(s(b)-s(a)) as
#    b -> infinity for hitting a = x - d).  Hitting prob of ball(0, 0.5)
#    from 1.5 is then e^{-2}.


def drifted_hit(d, mu=1.0):
    return math.exp(-2.0 * mu * d)


ptable(
    "transient drifted BM, b=+1",
    [
        ("P_{1.5}(hit ball(0,0.5)) = e^{-2}", f"{drifted_hit(1.0):.12f}"),
        ("P_{2.0}(hit ball(0,0.5)) = e^{-3}", f"{drifted_hit(1.5):.12f}"),
    ],
)

# ---------------------------------------------------------------------------
# 9. Driftless BM hitting a level at distance d by time T: reflection
#    principle, P = 2(1 - Phi(d / sqrt(T))).  Grows to 1 but E tau = inf.


def bm_hit_by(d, T):
    return 2.0 * (1.0 - 0.5 * (1.0 + special.erf(d / math.sqrt(T) / math.sqrt(2.0))))


ptable(
    "null-recurrent BM, hit ball(0,0.5) from 1.5 (d=1)",
    [(f"P(hit by T={T})", f"{bm_hit_by(1.0, T):.10f}") for T in (25.0, 50.0, 100.0)],
)

# ---------------------------------------------------------------------------
# 10. OU process dx = -x dt + dB: stationary law N(0, 1/2)
#     (Fokker-Planck: 0 = (x p)' + p''/2 => p ~ e^{-x^2}).  Cell masses on
#     [-3, 3], 50 cells, via the error function, for L1 comparisons.


def gauss_cell_masses(lo=-3.0, hi=3.0, n=50, var=0.5):
    edges = np.linspace(lo, hi, n + 1)
    cdf = 0.5 * (1.0 + special.erf(edges / math.sqrt(2.0 * var)))
    return np.diff(cdf)


masses = gauss_cell_masses()
ptable(
    "OU stationary law N(0, 1/2)",
    [
        ("total mass on [-3,3] (50 cells)", f"{masses.sum():.12f}"),
        ("peak cell mass", f"{masses.max():.12f}"),
        ("variance", "0.5"),
    ],
)

# ---------------------------------------------------------------------------
# 11. Degenerate plane model dx1 = -x2^2 dt, dx2 = sqrt(2) dB:
#     x1 is nonincreasing (strictly decreasing off x2=0), so the right edge
#     {1} x (-1,1) of the box (-1,1)^2 is unreachable from the interior, and
#     from (1, 0) the process immediately enters the interior: the exit mass
#     P(tau_closure <= h) stays near 0 for small h.  The x2 component alone
#     is BM(sqrt 2) on (-1,1): E_0 exit time = (1 - 0^2)/2 = 1/2.
#     First-order field algebra (unit-normalized: X0 = (-x2^2, 0),
#     X1 = (0, 1)):
#       [X0, X1] = J_{X1} X0 - J_{X0} X1 = (2 x2, 0)
#       [[X0, X1], X1] = J_{X1} [X0,X1] - J_{[X0,X1]} X1 = (-2, 0)
#     which equals [X1, [X1, X0]] by antisymmetry; constant, so the pair
#     {X1, (-2,0)} spans R^2 everywhere: bracket depth 2.
#     With the raw noise column (0, sqrt 2) the same computation scales by
#     (sqrt 2)^2: [[X0, X1], X1] = (-4, 0).

# numeric spot-check of the bracket constants via finite differences
rng = np.random.default_rng(7)


def jac(F, x, h=1e-6):
    m = len(x)
    J = np.zeros((2, m))
    for j in range(m):
        e = np.zeros(m)
        e[j] = h
        J[:, j] = (np.asarray(F(x + e)) - np.asarray(F(x - e))) / (2 * h)
    return J


def bracket(F, G):
    return lambda x: jac(G, x) @ np.asarray(F(x)) - jac(F, x) @ np.asarray(G(x))


X0 = lambda x: (-x[1] ** 2, 0.0)
X1 = lambda x: (0.0, 1.0)
B1 = bracket(X0, X1)
B2 = bracket(B1, X1)
worst = max(np.max(np.abs(np.asarray(B2(p)) - (-2.0, 0.0))) for p in rng.uniform(-1, 1, (5, 2)))
ptable(
    "degenerate plane model brackets",
    [
        ("[[X0,X1],X1] (unit fields)", "(-2, 0) exactly"),
        ("FD spot-check max dev", f"{worst:.2e}"),
        ("with noise column (0, sqrt 2)", "(-4, 0)"),
        ("E_(x1,0) exit time of x2-strip", f"{0.5:.6f}"),
    ],
)

# ---------------------------------------------------------------------------
# 12. Lyapunov residuals (exact polynomial algebra, verified by hand):
#     BM: w = 1 + x^2, L w = 1       => p = Lw - w - 1 = -1 - x^2
#     OU: w = 1 + x^2, L w = 1 - 2x^2 => p = -1 - 3x^2
#     b = x^3: L w = 2x^4 + 1        => p = 2x^4 - x^2 - 1 > 0 for x^2 >= 1

ptable(
    "Lyapunov residuals p = Lw - Cw - D (C=D=1, w=1+x^2)",
    [
        ("BM residual", "-1 - x^2 (valid)"),
        ("OU residual", "-1 - 3x^2 (valid)"),
        ("b=x^3 residual", "2x^4 - x^2 - 1, positive at |x|>=1 (invalid)"),
    ],
)

print("\nall oracle values above are frozen as literals in tests/.")
