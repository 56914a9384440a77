"""Standard-form conic problems over Hermitian PSD matrix and scalar variables.

Problems are linear in trace pairings tr(A_k X_k) plus scalars, with optional
exponential-cone rows exp(s) <= affine.  Complex Hermitian PSD constraints are
realized on the real symmetric cone through the embedding

    embed(H) = [[Re H, -Im H], [Im H, Re H]],

which is PSD iff H is and satisfies tr(embed(A) embed(X)) = 2 tr(A X); all
pairing coefficients are pre-halved to absorb the factor 2.  The lowered data
goes straight to SCS (primary) or Clarabel (fallback); no modeling layer in
between.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import sparse

_HERM_TOL = 1e-10


def embed_hermitian(H: np.ndarray) -> np.ndarray:
    """Real symmetric 2n x 2n embedding of a Hermitian n x n matrix."""
    H = np.asarray(H)
    scale = max(1.0, float(np.abs(H).max()) if H.size else 0.0)
    if not np.allclose(H, H.conj().T, atol=_HERM_TOL * scale):
        raise ValueError("embed_hermitian: input is not Hermitian")
    re, im = H.real, H.imag
    return np.block([[re, -im], [im, re]])


def extract_hermitian(Y: np.ndarray) -> np.ndarray:
    """Inverse of :func:`embed_hermitian` with structure symmetrization.

    For any symmetric PSD Y this returns a Hermitian PSD X whose pairings
    tr(A X) equal tr(embed(A) Y)/2 for every Hermitian A.
    """
    m = Y.shape[0]
    if m % 2:
        raise ValueError("embedded matrix must have even dimension")
    n = m // 2
    y11, y12 = Y[:n, :n], Y[:n, n:]
    y21, y22 = Y[n:, :n], Y[n:, n:]
    X = 0.5 * (y11 + y22) + 0.5j * (y21 - y12)
    return 0.5 * (X + X.conj().T)


def principal_component(X: np.ndarray) -> tuple[float, np.ndarray]:
    """Dominant eigenpair of a Hermitian PSD matrix.

    The eigenvector phase is fixed so its first nonzero entry is real
    positive (deterministic across runs).
    """
    X = 0.5 * (X + X.conj().T)
    vals, vecs = np.linalg.eigh(X)
    lam = float(vals[-1])
    u = vecs[:, -1]
    mags = np.abs(u)
    k = int(np.argmax(mags > 1e-12 * mags.max()))
    u = u * np.exp(-1j * np.angle(u[k]))
    if abs(u[k].imag) > 0:  # force exactly real-positive pivot
        u[k] = abs(u[k])
    return lam, u


@dataclass
class LinExpr:
    """sum_k tr(K_k X_k) + sum_m a_m s_m + const with Hermitian kernels K_k."""

    matrices: dict = field(default_factory=dict)   # name -> (n, n) Hermitian
    scalars: dict = field(default_factory=dict)    # name -> float
    const: float = 0.0

    def add_matrix(self, name: str, K: np.ndarray) -> "LinExpr":
        K = np.asarray(K, dtype=complex)
        if name in self.matrices:
            self.matrices[name] = self.matrices[name] + K
        else:
            self.matrices[name] = K
        return self

    def add_scalar(self, name: str, coef: float) -> "LinExpr":
        self.scalars[name] = self.scalars.get(name, 0.0) + float(coef)
        return self

    def scaled(self, t: float) -> "LinExpr":
        return LinExpr({k: t * v for k, v in self.matrices.items()},
                       {k: t * v for k, v in self.scalars.items()},
                       t * self.const)

    def minus(self, other: "LinExpr") -> "LinExpr":
        out = LinExpr(dict(self.matrices), dict(self.scalars), self.const)
        for k, v in other.matrices.items():
            out.add_matrix(k, -v)
        for k, v in other.scalars.items():
            out.add_scalar(k, -v)
        out.const -= other.const
        return out


class ConicProblem:
    """Immutable-once-built SDP: maximize a linear functional.

    Constraints are ``expr <= 0`` / ``expr == 0``; exponential rows encode
    exp(scalar) <= expr through the exponential cone.
    """

    def __init__(self):
        self.matrix_vars: dict[str, int] = {}
        self.scalar_vars: dict[str, tuple] = {}   # name -> (lb, ub)
        self.constraints: list[tuple[LinExpr, str]] = []   # sense in {"<=", "=="}
        self.exp_constraints: list[tuple[str, LinExpr]] = []
        self.objective: LinExpr | None = None

    def add_matrix_var(self, name: str, dim: int):
        if name in self.matrix_vars or name in self.scalar_vars:
            raise ValueError(f"duplicate variable '{name}'")
        if dim < 1:
            raise ValueError("matrix variable dimension must be >= 1")
        self.matrix_vars[name] = int(dim)

    def add_scalar_var(self, name: str, lb=None, ub=None):
        if name in self.matrix_vars or name in self.scalar_vars:
            raise ValueError(f"duplicate variable '{name}'")
        self.scalar_vars[name] = (lb, ub)

    def _check_expr(self, expr: LinExpr):
        for name, K in expr.matrices.items():
            if name not in self.matrix_vars:
                raise ValueError(f"undeclared matrix variable '{name}'")
            n = self.matrix_vars[name]
            if K.shape != (n, n):
                raise ValueError(f"kernel for '{name}' has shape {K.shape}, "
                                 f"expected {(n, n)}")
            scale = max(1.0, float(np.abs(K).max()))
            if not np.allclose(K, K.conj().T, atol=_HERM_TOL * scale):
                raise ValueError(f"kernel for '{name}' is not Hermitian")
        for name in expr.scalars:
            if name not in self.scalar_vars:
                raise ValueError(f"undeclared scalar variable '{name}'")

    def add_constraint(self, expr: LinExpr, sense: str):
        if sense == ">=":
            expr, sense = expr.scaled(-1.0), "<="
        if sense not in ("<=", "=="):
            raise ValueError(f"bad sense '{sense}'")
        self._check_expr(expr)
        self.constraints.append((expr, sense))

    def add_exp_constraint(self, scalar_name: str, bound: LinExpr):
        """exp(scalar_name) <= bound."""
        if scalar_name not in self.scalar_vars:
            raise ValueError(f"undeclared scalar variable '{scalar_name}'")
        self._check_expr(bound)
        self.exp_constraints.append((scalar_name, bound))

    def set_objective(self, expr: LinExpr):
        self._check_expr(expr)
        self.objective = expr

    # -- debugging dump ---------------------------------------------------
    def dump(self, path: str):
        """Write a sparse-triplet text dump (matrix entries: name i j re im)."""
        def _triplets(fh, tag, expr):
            if expr.const:
                fh.write(f"{tag} const {expr.const!r}\n")
            for name, c in expr.scalars.items():
                fh.write(f"{tag} scalar {name} {c!r}\n")
            for name, K in expr.matrices.items():
                idx = np.argwhere(np.abs(K) > 0)
                for i, j in idx:
                    if i <= j:  # Hermitian: upper triangle only
                        fh.write(f"{tag} matrix {name} {i} {j} "
                                 f"{K[i, j].real!r} {K[i, j].imag!r}\n")

        with open(path, "w", encoding="utf-8") as fh:
            fh.write("# conic problem dump v1 (expr <= 0 / == 0 form)\n")
            for name, n in self.matrix_vars.items():
                fh.write(f"matrix_var {name} {n}\n")
            for name, (lb, ub) in self.scalar_vars.items():
                fh.write(f"scalar_var {name} {lb!r} {ub!r}\n")
            if self.objective is not None:
                _triplets(fh, "objective", self.objective)
            for k, (expr, sense) in enumerate(self.constraints):
                fh.write(f"constraint {k} {'le' if sense == '<=' else 'eq'}\n")
                _triplets(fh, f"c{k}", expr)
            for k, (s, bound) in enumerate(self.exp_constraints):
                fh.write(f"exp_constraint {k} {s}\n")
                _triplets(fh, f"e{k}", bound)


@dataclass
class ConicSolution:
    status: str                      # optimal | infeasible | numerical_failure
    matrices: dict = field(default_factory=dict)
    scalars: dict = field(default_factory=dict)
    objective: float = float("nan")
    iterations: int = 0
    solver: str = ""
    raw: tuple | None = None         # (x, y, s) for warm starts

    def value(self, name: str):
        return self.matrices.get(name, self.scalars.get(name))


# ---------------------------------------------------------------------------
# lowering
# ---------------------------------------------------------------------------

def _svec_indices(n: int, upper: bool):
    """(rows, cols, scale) of the column-major triangular svec of dim n."""
    rows, cols = [], []
    for j in range(n):
        rng = range(j + 1) if upper else range(j, n)
        for i in rng:
            rows.append(i)
            cols.append(j)
    rows = np.array(rows)
    cols = np.array(cols)
    scale = np.where(rows == cols, 1.0, np.sqrt(2.0))
    return rows, cols, scale


class _Layout:
    """Variable layout: [scalars..., svec blocks...] with backend conventions."""

    def __init__(self, problem: ConicProblem, upper: bool):
        self.scalar_names = list(problem.scalar_vars)
        self.scalar_pos = {s: k for k, s in enumerate(self.scalar_names)}
        self.mat_names = list(problem.matrix_vars)
        self.block = {}
        off = len(self.scalar_names)
        self.svec = {}
        for name in self.mat_names:
            ne = 2 * problem.matrix_vars[name]
            idx = _svec_indices(ne, upper)
            nsv = idx[0].size
            self.block[name] = (off, nsv, ne)
            self.svec[name] = idx
            off += nsv
        self.nx = off

    def row(self, expr: LinExpr) -> np.ndarray:
        r = np.zeros(self.nx)
        for s, c in expr.scalars.items():
            r[self.scalar_pos[s]] += c
        for name, K in expr.matrices.items():
            off, nsv, _ = self.block[name]
            rows, cols, scale = self.svec[name]
            E = 0.5 * embed_hermitian(K)   # pre-halved pairing
            r[off:off + nsv] += E[rows, cols] * scale
        return r

    def unsvec(self, name: str, v: np.ndarray) -> np.ndarray:
        _, _, ne = self.block[name]
        rows, cols, scale = self.svec[name]
        Y = np.zeros((ne, ne))
        Y[rows, cols] = v / scale
        Y[cols, rows] = v / scale
        return Y


def _assemble(problem: ConicProblem, upper: bool):
    """Shared standard-form assembly: rows ordered zero, nonneg, psd, exp."""
    lay = _Layout(problem, upper)
    eq_rows, eq_b = [], []
    in_rows, in_b = [], []

    def _push(expr, sense):
        r = lay.row(expr)
        scale = float(np.abs(r).max())
        if scale == 0.0:
            if sense == "<=" and expr.const <= 1e-12:
                return  # vacuous
            if sense == "==" and abs(expr.const) <= 1e-12:
                return
            raise ValueError("constraint with zero coefficients and "
                             f"infeasible constant {expr.const}")
        r /= scale
        b = -expr.const / scale
        if sense == "==":
            eq_rows.append(r)
            eq_b.append(b)
        else:
            in_rows.append(r)
            in_b.append(b)

    for expr, sense in problem.constraints:
        _push(expr, sense)
    for name, (lb, ub) in problem.scalar_vars.items():
        if lb is not None:
            _push(LinExpr(scalars={name: -1.0}, const=float(lb)), "<=")
        if ub is not None:
            _push(LinExpr(scalars={name: 1.0}, const=-float(ub)), "<=")

    blocks, psd_dims = [], []
    if eq_rows:
        blocks.append(sparse.csc_matrix(np.array(eq_rows)))
    if in_rows:
        blocks.append(sparse.csc_matrix(np.array(in_rows)))
    b = eq_b + in_b

    psd_row0 = len(b)
    for name in lay.mat_names:
        off, nsv, ne = lay.block[name]
        Ab = sparse.hstack([
            sparse.csc_matrix((nsv, off)),
            -sparse.identity(nsv, format="csc"),
            sparse.csc_matrix((nsv, lay.nx - off - nsv)),
        ])
        blocks.append(Ab)
        psd_dims.append(ne)
        b.extend([0.0] * nsv)

    n_exp = len(problem.exp_constraints)
    for sname, bound in problem.exp_constraints:
        g = lay.row(bound)
        t = 1.0 / max(1.0, float(np.abs(g).max()), abs(bound.const))
        rows = np.zeros((3, lay.nx))
        rows[0, lay.scalar_pos[sname]] = -t
        rows[2] = -t * g
        blocks.append(sparse.csc_matrix(rows))
        b.extend([0.0, t, t * bound.const])

    A = sparse.vstack(blocks, format="csc") if blocks else \
        sparse.csc_matrix((0, lay.nx))
    b = np.array(b)

    c = np.zeros(lay.nx)
    if problem.objective is not None:
        c = -lay.row(problem.objective)   # cores minimize
    return lay, A, b, c, len(eq_b), len(in_b), psd_row0, psd_dims, n_exp


def _extract(problem, lay, x, s, psd_row0, status, obj, iters, solver_name,
             raw=None):
    sol = ConicSolution(status=status, objective=obj, iterations=iters,
                        solver=solver_name, raw=raw)
    if status != "optimal":
        return sol
    for k, name in enumerate(lay.scalar_names):
        sol.scalars[name] = float(x[k])
    row = psd_row0
    for name in lay.mat_names:
        off, nsv, ne = lay.block[name]
        Y = lay.unsvec(name, s[row:row + nsv])   # cone slack: PSD by construction
        sol.matrices[name] = extract_hermitian(Y)
        row += nsv
    if problem.objective is not None:
        sol.objective = obj + problem.objective.const
    return sol


def _solve_scs(problem, tol, max_iters, verbose, warm=None):
    import scs

    lay, A, b, c, n_eq, n_in, psd_row0, psd_dims, n_exp = _assemble(problem, upper=False)
    cone = {}
    if n_eq:
        cone["z"] = n_eq
    if n_in:
        cone["l"] = n_in
    if psd_dims:
        cone["s"] = psd_dims
    if n_exp:
        cone["ep"] = n_exp
    core = scs.SCS(dict(A=A, b=b, c=c), cone, verbose=verbose,
                   eps_abs=tol, eps_rel=tol, max_iters=max_iters)
    if warm is not None and warm.raw is not None \
            and warm.raw[0].size == lay.nx and warm.raw[1].size == b.size:
        out = core.solve(warm_start=True, x=warm.raw[0], y=warm.raw[1],
                         s=warm.raw[2])
    else:
        out = core.solve(warm_start=False)
    val = out["info"]["status_val"]
    obj = -out["info"]["pobj"]
    if val == 1:
        return _extract(problem, lay, out["x"], out["s"], psd_row0,
                        "optimal", obj, out["info"]["iter"], "scs",
                        raw=(out["x"], out["y"], out["s"]))
    if val == -2:
        return ConicSolution(status="infeasible", iterations=out["info"]["iter"],
                             solver="scs")
    return ConicSolution(status="numerical_failure",
                         iterations=out["info"]["iter"], solver="scs")


def _solve_clarabel(problem, tol, max_iters, verbose, warm=None):
    import clarabel

    lay, A, b, c, n_eq, n_in, psd_row0, psd_dims, n_exp = _assemble(problem, upper=True)
    cones = []
    if n_eq:
        cones.append(clarabel.ZeroConeT(n_eq))
    if n_in:
        cones.append(clarabel.NonnegativeConeT(n_in))
    for ne in psd_dims:
        cones.append(clarabel.PSDTriangleConeT(ne))
    for _ in range(n_exp):
        cones.append(clarabel.ExponentialConeT())
    settings = clarabel.DefaultSettings()
    settings.verbose = verbose
    settings.max_iter = min(max_iters, 200)
    settings.tol_gap_abs = tol
    settings.tol_gap_rel = tol
    settings.tol_feas = tol
    P = sparse.csc_matrix((lay.nx, lay.nx))
    solver = clarabel.DefaultSolver(P, c, A, b, cones, settings)
    res = solver.solve()
    name = str(res.status)
    if name == "Solved":
        return _extract(problem, lay, np.asarray(res.x), np.asarray(res.s),
                        psd_row0, "optimal", -res.obj_val, res.iterations,
                        "clarabel")
    if name in ("PrimalInfeasible", "AlmostPrimalInfeasible"):
        return ConicSolution(status="infeasible", iterations=res.iterations,
                             solver="clarabel")
    return ConicSolution(status="numerical_failure", iterations=res.iterations,
                         solver="clarabel")


_BACKENDS = {"scs": _solve_scs, "clarabel": _solve_clarabel}

# interior-point core below this total svec size, first-order core above
_AUTO_SVEC_LIMIT = 1500


def solve(problem: ConicProblem, tol: float = 1e-8, solver: str = "auto",
          max_iters: int = 50_000, verbose: bool = False,
          warm: ConicSolution | None = None) -> ConicSolution:
    """Solve a ConicProblem; falls back to the other core on numerical failure.

    ``solver='auto'`` picks Clarabel for small cone sizes (cheap, accurate
    factorizations) and SCS for large ones (where direct KKT fill-in makes
    interior points slow); ``warm`` can carry the previous SCS solution of a
    same-shaped problem.
    """
    if problem.objective is None:
        raise ValueError("problem has no objective")
    if solver == "auto":
        svec_total = sum(n * (2 * n + 1) for n in problem.matrix_vars.values())
        solver = "clarabel" if svec_total <= _AUTO_SVEC_LIMIT else "scs"
    order = [solver] + [s for s in _BACKENDS if s != solver]
    last = None
    for name in order:
        last = _BACKENDS[name](problem, tol, max_iters, verbose, warm=warm)
        if last.status in ("optimal", "infeasible"):
            return last
    return last
