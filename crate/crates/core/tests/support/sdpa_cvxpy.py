"""Solve an SDPA sparse file with cvxpy and print the primal objective.

Reads the same convention as the Rust writer: minimize c'x subject to
sum_i x_i F_i - F_0 >= 0 per block.
"""
import sys

import cvxpy as cp
import numpy as np


def read(path):
    toks = []
    with open(path) as fh:
        for line in fh:
            line = line.split("*")[0].split('"')[0].strip()
            if line:
                toks.append(line.replace(",", " ").replace("{", " ").replace("}", " ").replace("(", " ").replace(")", " "))
    m = int(toks[0].split()[0])
    nb = int(toks[1].split()[0])
    sizes = [int(v) for v in toks[2].split()[:nb]]
    c = np.array([float(v) for v in toks[3].split()[:m]])
    mats = [[np.zeros((abs(s), abs(s))) for s in sizes] for _ in range(m + 1)]
    for t in toks[4:]:
        k, b, i, j, v = t.split()[:5]
        k, b, i, j, v = int(k), int(b) - 1, int(i) - 1, int(j) - 1, float(v)
        mats[k][b][i, j] = v
        mats[k][b][j, i] = v
    return c, sizes, mats


def main():
    c, sizes, mats = read(sys.argv[1])
    x = cp.Variable(len(c))
    cons = []
    for b, s in enumerate(sizes):
        expr = -mats[0][b]
        for k in range(len(c)):
            if np.any(mats[k + 1][b]):
                expr = expr + x[k] * mats[k + 1][b]
        if s < 0:
            cons.append(cp.diag(expr) >= 0)
        else:
            cons.append((expr + expr.T) / 2 >> 0)
    prob = cp.Problem(cp.Minimize(c @ x), cons)
    prob.solve(solver="CLARABEL", tol_gap_abs=1e-10, tol_gap_rel=1e-10, tol_feas=1e-10, max_iter=400)
    print(prob.status, prob.value)


if __name__ == "__main__":
    main()
