"""Grid-discretized version of the noncoercive level program, as an oracle."""
import numpy as np
import cvxpy as cp
from pipeak.pde import PDESpec, convert
from pipeak.polyalg import PolyMatrix
from pipeak.piop import Grid, discretize_on_grid

DOM = (0.0, 1.0)
transport = PDESpec(
    domain=DOM, n1=0, n2=1, n3=0,
    A1=PolyMatrix.eye(1, DOM),
    B21=PolyMatrix.from_entries(1, 1, {(0, 0, 1, 0): 1.0, (0, 0, 2, 0): -1.0}, DOM),
    Ca=PolyMatrix.eye(1, DOM),
    BC=np.array([[0.0, 1.0]]),
    name="transport",
)
pie = convert(transport)
N = 24
g = Grid.chebyshev(N, DOM)
D = np.diag(g.weights)
T = discretize_on_grid(pie.T, g)
A = discretize_on_grid(pie.A, g)
B = discretize_on_grid(pie.B1, g)   # (N, n_w)
C = discretize_on_grid(pie.C1, g)   # (n_z, N)
n_w, n_z = pie.n_w, pie.n_z

def solve_form(form):
    Q = cp.Variable((N, N))
    g2 = cp.Variable()
    cons = []
    if form == "dual":
        GT = D @ T @ Q          # bilinear form of TQ
        GA = D @ A @ Q
        lvl = cp.bmat([[g2 * np.eye(n_w), B.T @ D], [D @ B, GT.T]])
        inj = cp.bmat([[GT, (C @ Q).T], [C @ Q, np.eye(n_z)]])
    else:
        # primal: T*Q = Q*T >= 0, A*Q + Q*A <= 0,
        # [[g2 I, C],[C*, Q*T]] >= 0, [[T*Q, Q*B],[B*Q, I]] >= 0
        # bilinear form of T*Q:  <x, T*Qy> = (Tx)^T D Q y -> T^T D Q
        GT = T.T @ D @ Q
        GA = A.T @ D @ Q
        # form of C as map into R^nz against x in L2: just C
        lvl = cp.bmat([[g2 * np.eye(n_z), C @ np.eye(N)], [(C @ np.eye(N)).T, GT.T]])
        # hmm (2,2) entry Q*T: form = GT.T
        inj = cp.bmat([[GT, D @ B], [(D @ B).T, np.eye(n_w)]])
        # (1,2) entry Q*B: form <x, Q*Bv> = <Qx, Bv> = (Qx)^T D B v -> Q^T D B
        inj = cp.bmat([[GT, Q.T @ D @ B], [(Q.T @ D @ B).T, np.eye(n_w)]])
    cons += [GT == GT.T, GT >> 0, GA + GA.T << 0, lvl >> 0, inj >> 0]
    prob = cp.Problem(cp.Minimize(g2), cons)
    prob.solve(solver="SCS", eps=1e-9, max_iters=200000)
    return prob.status, g2.value

for form in ("dual", "primal"):
    st, val = solve_form(form)
    print(f"grid noncoercive {form}: status={st} g2={val} gamma={np.sqrt(val) if val and val>0 else None}")
