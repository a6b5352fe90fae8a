"""Log-barrier interior-point engine for small structured concave programs.

The program family is deliberately narrow: box-constrained variables, a
concave objective built from linear, negated-quadratic and entropy terms,
and three constraint atoms

* ``LINEAR``       sum_j g_j x_j <= h
* ``ENTROPY_EPI``  s >= u * ln(u)   (epigraph of x*ln(x), u > 0)
* ``LOG_HYPO``     v <= ln(u)       (hypograph of ln(x), u > 0)

which are exactly the two exponential-cone instantiations needed by the
pricing subproblems.  Everything is smooth with cheap analytic
derivatives, so a primal log-barrier method with damped Newton steps is
used: the barrier weight grows by a factor of 5 per outer stage and the
solve stops once the duality-gap proxy (number of barrier terms / t) and
the KKT residual both fall below the requested tolerance.

Programs are single-owner mutable: ``update_box`` and
``set_linear_constraint`` edit an existing model in place so that
branch-and-bound can re-solve without rebuilding, warm-starting from the
previous central point.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
MAX_ITERATIONS = "max_iterations"
NUMERIC_FAILURE = "numeric_failure"

# Width at or below which a variable counts as pinned to a constant.
_PIN_WIDTH = 1e-14
# Barrier domain floor for variables appearing inside logs.
_LOG_DOMAIN_FLOOR = 1e-12
# Strictly-interior margin demanded of a phase-one point.
_MARGIN_EPS = 1e-9

_BARRIER_GROWTH = 5.0
_REG_INIT = 1e-10
_REG_RETRIES = 3
_ARMIJO = 0.25
_NEWTON_DEC_TOL = 1e-10
_MAX_STAGES = 80
_MAX_NEWTON_PER_STAGE = 150


@dataclass
class SolveOutcome:
    status: str
    point: dict | None
    objective: float
    kkt_residual: float
    iterations: int
    x: np.ndarray | None = None


@dataclass
class PhaseOneResult:
    feasible: bool
    point: np.ndarray | None
    margin: float
    infeasibility: float


def _xlogx_range(lo: float, hi: float) -> tuple[float, float]:
    """Exact range of x*ln(x) on [lo, hi], 0 < lo <= hi."""
    ends = (lo * math.log(lo), hi * math.log(hi))
    inv_e = 1.0 / math.e
    low = -inv_e if lo <= inv_e <= hi else min(ends)
    return low, max(ends)


class ConvexProgram:
    """Mutable model: named boxed variables, concave objective, atoms."""

    def __init__(self):
        self._names: list[str] = []
        self._index: dict[str, int] = {}
        self._lo: list[float] = []
        self._hi: list[float] = []
        self._c: list[float] = []
        self._q: list[float] = []
        self._e: list[float] = []
        self._rows: list[tuple[np.ndarray, np.ndarray, float]] = []  # (idx, coef, rhs)
        self._ee: list[tuple[int, int]] = []   # (s, u)
        self._lh: list[tuple[int, int]] = []   # (v, u)
        self._warm: np.ndarray | None = None
        self._last_t: float | None = None
        self._trace: list | None = None  # set to [] to record ladder stages

    # -- construction -------------------------------------------------------

    @property
    def n_variables(self) -> int:
        return len(self._names)

    def variable_index(self, name: str) -> int:
        return self._index[name]

    def variable_names(self) -> list[str]:
        return list(self._names)

    def _resolve(self, var) -> int:
        return self._index[var] if isinstance(var, str) else int(var)

    def add_variable(self, name: str, lo: float, hi: float) -> int:
        if name in self._index:
            raise ValueError(f"variable {name!r} already exists")
        lo, hi = float(lo), float(hi)
        if not (math.isfinite(lo) and math.isfinite(hi)) or lo > hi:
            raise ValueError(f"invalid box [{lo}, {hi}] for {name!r}")
        idx = len(self._names)
        self._names.append(name)
        self._index[name] = idx
        self._lo.append(lo)
        self._hi.append(hi)
        self._c.append(0.0)
        self._q.append(0.0)
        self._e.append(0.0)
        return idx

    def update_box(self, var, new_lo: float, new_hi: float) -> None:
        """Replace a variable's box; the next solve warm-starts inside it."""
        idx = self._resolve(var)
        new_lo, new_hi = float(new_lo), float(new_hi)
        if not (math.isfinite(new_lo) and math.isfinite(new_hi)):
            raise ValueError("box bounds must be finite")
        if new_lo > new_hi:
            raise ValueError(f"empty box [{new_lo}, {new_hi}]")
        self._lo[idx] = new_lo
        self._hi[idx] = new_hi

    def box(self, var) -> tuple[float, float]:
        idx = self._resolve(var)
        return self._lo[idx], self._hi[idx]

    def set_linear_objective(self, var, coef: float) -> None:
        self._c[self._resolve(var)] = float(coef)

    def set_quadratic_objective(self, var, coef: float) -> None:
        if coef < 0:
            raise ValueError("quadratic objective coefficients must be >= 0")
        self._q[self._resolve(var)] = float(coef)

    def set_entropy_objective(self, var, coef: float) -> None:
        if coef < 0:
            raise ValueError("entropy objective coefficients must be >= 0")
        self._e[self._resolve(var)] = float(coef)

    def add_linear_constraint(self, coeffs: dict, rhs: float) -> int:
        """Add sum coeffs[var]*x <= rhs; returns the row handle."""
        idx = np.array([self._resolve(v) for v in coeffs], dtype=int)
        coef = np.array([float(c) for c in coeffs.values()], dtype=float)
        self._rows.append((idx, coef, float(rhs)))
        return len(self._rows) - 1

    def set_linear_constraint(self, row: int, coeffs: dict, rhs: float) -> None:
        """Rewrite an existing row in place (persistent-model updates)."""
        if not 0 <= row < len(self._rows):
            raise IndexError(f"no linear row {row}")
        idx = np.array([self._resolve(v) for v in coeffs], dtype=int)
        coef = np.array([float(c) for c in coeffs.values()], dtype=float)
        self._rows[row] = (idx, coef, float(rhs))

    def add_entropy_epigraph(self, s_var, u_var) -> None:
        self._ee.append((self._resolve(s_var), self._resolve(u_var)))

    def add_log_hypograph(self, v_var, u_var) -> None:
        self._lh.append((self._resolve(v_var), self._resolve(u_var)))

    def dump(self) -> str:
        """Plain-text listing of the model (for bug reports)."""
        lines = ["logitprice-convexprogram v1"]
        for i, name in enumerate(self._names):
            lines.append(
                f"var {name} lo={self._lo[i]!r} hi={self._hi[i]!r} "
                f"c={self._c[i]!r} q={self._q[i]!r} e={self._e[i]!r}"
            )
        for idx, coef, rhs in self._rows:
            terms = " ".join(f"{self._names[j]}*{c!r}" for j, c in zip(idx, coef))
            lines.append(f"linear rhs={rhs!r} {terms}")
        for s, u in self._ee:
            lines.append(f"entropy_epi s={self._names[s]} u={self._names[u]}")
        for v, u in self._lh:
            lines.append(f"log_hypo v={self._names[v]} u={self._names[u]}")
        return "\n".join(lines) + "\n"

    # -- compiled views ------------------------------------------------------

    def _arrays(self):
        n = self.n_variables
        lo = np.array(self._lo, dtype=float)
        hi = np.array(self._hi, dtype=float)
        # Barrier-domain floor for variables inside logarithms.
        log_vars = set(u for _, u in self._ee) | set(u for _, u in self._lh)
        log_vars |= {i for i in range(n) if self._e[i] > 0}
        for i in log_vars:
            lo[i] = max(lo[i], _LOG_DOMAIN_FLOOR)
        c = np.array(self._c, dtype=float)
        q = np.array(self._q, dtype=float)
        e = np.array(self._e, dtype=float)
        R = len(self._rows)
        G = np.zeros((R, n))
        h = np.zeros(R)
        for r, (idx, coef, rhs) in enumerate(self._rows):
            np.add.at(G[r], idx, coef)
            h[r] = rhs
        ee = np.array(self._ee, dtype=int).reshape(-1, 2)
        lh = np.array(self._lh, dtype=int).reshape(-1, 2)
        return lo, hi, c, q, e, G, h, ee, lh

    # -- solve ----------------------------------------------------------------

    def solve(self, tol: float = 1e-8, start=None, max_stages: int = _MAX_STAGES,
              _no_phase1: bool = False) -> SolveOutcome:
        """Maximize the objective; returns a SolveOutcome.

        ``status="optimal"`` certifies primal feasibility plus a KKT
        residual below ``tol``, which for this concave family is a global
        optimality certificate.  ``start`` may supply a warm point; it is
        used only if, clipped into the boxes, it is strictly feasible.
        """
        if tol <= 0:
            raise ValueError("tol must be positive")
        lo, hi, c, q, e, G, h, ee, lh = self._arrays()
        n = lo.size
        if np.any(lo > hi):
            return SolveOutcome(INFEASIBLE, None, -math.inf, math.inf, 0)
        width = hi - lo
        free = width > _PIN_WIDTH
        x_template = 0.5 * (lo + hi)

        # Rows supported entirely on pinned variables are constant: check.
        if G.shape[0]:
            row_free = (G[:, free] != 0.0).any(axis=1)
            const_slack = h - G @ x_template
            if np.any(~row_free & (const_slack < -1e-9 * (1.0 + np.abs(h)))):
                return SolveOutcome(INFEASIBLE, None, -math.inf, math.inf, 0)
        else:
            row_free = np.zeros(0, dtype=bool)
        act_rows = np.flatnonzero(row_free)
        Ga, ha = G[act_rows], h[act_rows]

        free_idx = np.flatnonzero(free)
        lof, hif = lo[free_idx], hi[free_idx]
        n_ee, n_lh = ee.shape[0], lh.shape[0]
        ee_s = ee[:, 0] if n_ee else None
        ee_u = ee[:, 1] if n_ee else None
        lh_v = lh[:, 0] if n_lh else None
        lh_u = lh[:, 1] if n_lh else None
        ent_idx = np.flatnonzero(e > 0)
        e_ent = e[ent_idx]
        has_quad = bool(np.any(q != 0.0))

        def objective_value(x):
            val = float(c @ x)
            if has_quad:
                val -= float(q @ (x * x))
            if ent_idx.size:
                xe = x[ent_idx]
                val -= float(e_ent @ (xe * np.log(xe)))
            return val

        def slack_vec(x):
            """All barrier arguments concatenated, or None if out of domain.

            Each atom carries the standard 2-self-concordant barrier for its
            set: -log(slack) - log(u).  The extra -log(u) term is what makes
            Newton-decrement theory (and the nu/t gap bound) sound here.
            """
            xf = x[free_idx]
            parts = [xf - lof, hif - xf]
            if Ga.shape[0]:
                parts.append(ha - Ga @ x)
            if n_ee:
                u = x[ee_u]
                if u.min() <= 0.0:
                    return None
                parts.append(x[ee_s] - u * np.log(u))
                parts.append(u)
            if n_lh:
                u = x[lh_u]
                if u.min() <= 0.0:
                    return None
                parts.append(np.log(u) - x[lh_v])
                parts.append(u)
            return np.concatenate(parts)

        def strictly_feasible(x):
            if ent_idx.size and x[ent_idx].min() <= 0.0:
                return False
            sv = slack_vec(x)
            return sv is not None and (sv.size == 0 or sv.min() > 0.0)

        def psi(x, t):
            if ent_idx.size and x[ent_idx].min() <= 0.0:
                return math.inf
            sv = slack_vec(x)
            if sv is None or (sv.size and sv.min() <= 0.0):
                return math.inf
            val = -t * objective_value(x)
            if sv.size:
                val -= float(np.log(sv).sum())
            return val

        def grad_hess(x, t):
            g = np.zeros(n)
            H = np.zeros((n, n))
            # objective (minimize -f)
            gF = -c.copy()
            hF = np.zeros(n)
            if has_quad:
                gF += 2.0 * q * x
                hF += 2.0 * q
            if ent_idx.size:
                xe = x[ent_idx]
                gF[ent_idx] += e_ent * (np.log(xe) + 1.0)
                hF[ent_idx] += e_ent / xe
            g += t * gF
            H[np.diag_indices(n)] += t * hF
            # box barrier
            inv_lo = 1.0 / (x[free_idx] - lof)
            inv_hi = 1.0 / (hif - x[free_idx])
            g[free_idx] += -inv_lo + inv_hi
            H[free_idx, free_idx] += inv_lo ** 2 + inv_hi ** 2
            # linear rows
            if Ga.shape[0]:
                w = ha - Ga @ x
                iw = 1.0 / w
                g += Ga.T @ iw
                H += (Ga * (iw ** 2)[:, None]).T @ Ga
            # entropy epigraphs: barrier -log(s - u ln u) - log(u)
            if n_ee:
                u = x[ee_u]
                lnu = np.log(u)
                w = x[ee_s] - u * lnu
                iw = 1.0 / w
                gu = lnu + 1.0
                np.add.at(g, ee_s, -iw)
                np.add.at(g, ee_u, gu * iw - 1.0 / u)
                iw2 = iw ** 2
                np.add.at(H, (ee_s, ee_s), iw2)
                np.add.at(H, (ee_s, ee_u), -gu * iw2)
                np.add.at(H, (ee_u, ee_s), -gu * iw2)
                np.add.at(H, (ee_u, ee_u), gu ** 2 * iw2 + iw / u + 1.0 / u ** 2)
            # log hypographs: barrier -log(ln u - v) - log(u)
            if n_lh:
                u = x[lh_u]
                w = np.log(u) - x[lh_v]
                iw = 1.0 / w
                np.add.at(g, lh_v, iw)
                np.add.at(g, lh_u, -iw / u - 1.0 / u)
                iw2 = iw ** 2
                np.add.at(H, (lh_v, lh_v), iw2)
                np.add.at(H, (lh_v, lh_u), -iw2 / u)
                np.add.at(H, (lh_u, lh_v), -iw2 / u)
                np.add.at(H, (lh_u, lh_u), iw2 / u ** 2 + iw / u ** 2 + 1.0 / u ** 2)
            return g, H

        n_free = free_idx.size
        nu = 2 * n_free + Ga.shape[0] + 2 * (n_ee + n_lh)
        n_relax = Ga.shape[0] + n_ee + n_lh

        # start point
        x0 = None
        if start is not None:
            cand = np.asarray(start, dtype=float).copy()
            cand[~free] = x_template[~free]
            margin = np.maximum(1e-6 * width[free], 1e-12)
            cand[free] = np.clip(cand[free], lo[free] + margin, hi[free] - margin)
            # Push atom slack variables off their faces: a warm point from a
            # tighter solve sits in a steep barrier well, which cripples the
            # first Newton stages; re-approaching a face later is cheap.
            if n_ee:
                uvals = cand[ee_u]
                target = uvals * np.log(uvals) + 1e-3 * (1.0 + np.abs(uvals * np.log(uvals)))
                lifted = np.maximum(cand[ee_s], np.minimum(target, hi[ee_s] - 1e-9))
                cand[ee_s] = np.where(free[ee_s], lifted, cand[ee_s])
            if n_lh:
                uvals = cand[lh_u]
                target = np.log(uvals) - 1e-3 * (1.0 + np.abs(np.log(uvals)))
                lowered = np.minimum(cand[lh_v], np.maximum(target, lo[lh_v] + 1e-9))
                cand[lh_v] = np.where(free[lh_v], lowered, cand[lh_v])
            if strictly_feasible(cand):
                x0 = cand
        warm_accepted = x0 is not None
        if x0 is None:
            if n_relax == 0 or n_free == 0:
                cand = x_template.copy()
                sv = slack_vec(cand)
                if strictly_feasible(cand) or (
                        n_free == 0 and sv is not None
                        and (sv.size == 0 or sv.min() >= -1e-9)):
                    x0 = cand
                else:
                    return SolveOutcome(INFEASIBLE, None, -math.inf, math.inf, 0)
            elif _no_phase1:
                return SolveOutcome(NUMERIC_FAILURE, None, -math.inf, math.inf, 0)
            else:
                ph = self._interior_point(tol)
                if not ph.feasible:
                    return SolveOutcome(INFEASIBLE, None, -math.inf, math.inf, 0)
                x0 = ph.point

        if n_free == 0:
            obj = objective_value(x0)
            out = SolveOutcome(OPTIMAL, self._point_dict(x0), obj, 0.0, 0, x=x0)
            self._warm = x0
            return out

        ixf = np.ix_(free_idx, free_idx)
        eye_f = np.eye(n_free)

        def center(x, t):
            # Centering error in objective units is dec2/(2t); stopping on an
            # absolute psi-space decrement would chase float noise once
            # t * |objective| approaches 1/eps_machine.  The 0.01 cap keeps
            # the final decrement inside the certificate's validity region.
            dec_stop = max(_NEWTON_DEC_TOL, min(0.01, 0.05 * tol * t))
            steps = 0
            stalled = False
            dec2 = math.inf
            for _ in range(_MAX_NEWTON_PER_STAGE):
                g, H = grad_hess(x, t)
                gf = g[free_idx]
                Hf = H[ixf]
                # Jacobi scaling keeps the system near unit diagonal; barrier
                # Hessians otherwise span ~1e16 across variables and break
                # float64 solves.  The lam*I regularization acts in the
                # scaled space.
                dg = np.sqrt(np.maximum(np.diag(Hf), 1e-300))
                Hs = Hf / dg / dg[:, None]
                gs = gf / dg
                gsnorm = float(np.abs(gs).max(initial=0.0))
                lam = _REG_INIT
                d = None
                near_opt = None
                for _retry in range(_REG_RETRIES + 1):
                    try:
                        ds = -np.linalg.solve(Hs + lam * eye_f, gs)
                    except np.linalg.LinAlgError:
                        lam *= 10.0
                        continue
                    if not np.all(np.isfinite(ds)):
                        lam *= 10.0
                        continue
                    cand = ds / dg
                    dec2_cand = float(-gf @ cand)
                    near_opt = 0.5 * dec2_cand <= 10.0 * dec_stop
                    if near_opt:
                        # A convergence claim needs a trustworthy solve; a
                        # garbage direction from a singular system must not
                        # masquerade as a tiny Newton decrement.
                        res = float(np.abs(Hs @ ds + lam * ds + gs).max(initial=0.0))
                        if res > 1e-8 * max(gsnorm, 1e-300):
                            lam *= 10.0
                            continue
                    elif dec2_cand <= 0.0:
                        lam *= 10.0
                        continue
                    d = cand
                    break
                if d is None:
                    return x, steps, "numeric_failure", dec2
                dec2 = max(float(-gf @ d), 0.0)
                if 0.5 * dec2 <= dec_stop:
                    return x, steps, "converged", dec2
                # Step safeguard: near-singular barrier Hessians can emit
                # absurdly long directions along flat subspaces; cap the
                # length so line search works at a sane scale.
                dmax = float(np.abs(d).max())
                cap = 1e5 * (1.0 + float(np.abs(x).max()))
                if dmax > cap:
                    d *= cap / dmax
                psi0 = psi(x, t)
                gd = float(gf @ d)
                alpha = 1.0
                moved = False
                while alpha > 1e-18:
                    xn = x.copy()
                    xn[free_idx] += alpha * d
                    if psi(xn, t) <= psi0 + _ARMIJO * alpha * gd:
                        x = xn
                        moved = True
                        break
                    alpha *= 0.5
                steps += 1
                if not moved:
                    if stalled:
                        return x, steps, "stall", dec2
                    stalled = True
                else:
                    stalled = False
            return x, steps, "max_steps", dec2

        # The gap proxy nu/t plus the centering error dec2/(2t) bounds the
        # objective suboptimality, so stop the ladder a shade below tol.
        gap_target = 0.9 * tol
        t_target = nu / gap_target if nu else 1.0

        def residual(dec2, t):
            # Self-concordance certifies the centering error only for small
            # Newton decrements; an uncentered point must not pass as optimal.
            if not dec2 <= 0.1:
                return math.inf
            return (nu + 0.5 * dec2) / t

        def run_ladder(x, t):
            """Follow the central path from (x, t); honest about health.

            A stage that fails to reach a small Newton decrement taints the
            run: ill-conditioned barrier Hessians at large t can fake tiny
            decrements, so only fully converged path-following is trusted.
            """
            iterations = 0
            status = OPTIMAL
            healthy = True
            stage = 0
            dec2 = math.inf
            while True:
                x, steps, state, dec2 = center(x, t)
                iterations += steps
                stage += 1
                if self._trace is not None:
                    self._trace.append((t, state, steps, dec2, objective_value(x)))
                if state == "numeric_failure":
                    return x, t, NUMERIC_FAILURE, iterations, False, dec2
                if state != "converged":
                    healthy = False
                if nu / t <= gap_target:
                    break
                if stage >= max_stages:
                    status = MAX_ITERATIONS
                    break
                t *= _BARRIER_GROWTH
            kkt = residual(dec2, t)
            extra = 0
            while status == OPTIMAL and kkt > tol and extra < 6:
                t *= _BARRIER_GROWTH
                x, steps, state, dec2 = center(x, t)
                iterations += steps
                extra += 1
                if state == "numeric_failure":
                    return x, t, NUMERIC_FAILURE, iterations, False, dec2
                if state != "converged":
                    healthy = False
                kkt = residual(dec2, t)
            if status == OPTIMAL and (kkt > tol or not healthy):
                status = MAX_ITERATIONS
            return x, t, status, iterations, healthy, dec2

        def cold_t0(xs):
            # Start the ladder where the barrier and the objective balance:
            # if t0 is far too small the duality target needs extra stages,
            # far too large and the first centering must cover a psi gap of
            # t * (objective range), which damped Newton crosses at O(1) per
            # step.  Estimate the range from the gradient over the boxes.
            gF = -c + 2.0 * q * xs
            if ent_idx.size:
                gF[ent_idx] += e_ent * (np.log(xs[ent_idx]) + 1.0)
            span = float(np.abs(gF[free_idx]) @ width[free_idx])
            scale = 1.0 + abs(objective_value(xs)) + span
            return min(max(nu / scale, 1e-8), max(1.0, t_target))

        # A warm point lies near the previous central path, so the ladder may
        # restart a few stages below where it ended; any sign of trouble
        # falls back to a cold run from scratch, which stays on-path.
        total_iterations = 0
        x, t, status, dec2 = x0, 1.0, OPTIMAL, math.inf
        tried_warm_ladder = False
        if warm_accepted and self._last_t is not None:
            t_warm = min(max(1.0, self._last_t / _BARRIER_GROWTH ** 3),
                         max(1.0, t_target / _BARRIER_GROWTH ** 2))
            if t_warm > 1.0:
                tried_warm_ladder = True
                x, t, status, its, healthy, dec2 = run_ladder(x0.copy(), t_warm)
                total_iterations += its
        if not tried_warm_ladder or status != OPTIMAL:
            cold = x0
            if warm_accepted and n_relax > 0 and tried_warm_ladder:
                # Discard the warm point entirely for the retry.
                cand = x_template.copy()
                if strictly_feasible(cand):
                    cold = cand
                elif not _no_phase1:
                    ph = self._interior_point(tol)
                    if ph.feasible:
                        cold = ph.point
            elif warm_accepted and n_relax == 0 and tried_warm_ladder:
                cold = x_template.copy()
            x, t, status, its, healthy, dec2 = run_ladder(cold.copy(), cold_t0(cold))
            total_iterations += its

        kkt = residual(dec2, t)
        obj = objective_value(x)
        self._warm = x
        self._last_t = t if status == OPTIMAL else None
        return SolveOutcome(status, self._point_dict(x), obj, kkt,
                            total_iterations, x=x)

    def _point_dict(self, x) -> dict:
        return {name: float(x[i]) for i, name in enumerate(self._names)}

    # -- phase one -------------------------------------------------------------

    def phase_one(self, tol: float = 1e-7) -> PhaseOneResult:
        """Find a strictly interior point or report aggregate infeasibility.

        The interior search maximizes a uniform slack margin across all
        linear rows and atoms.  If no positive margin exists, a second
        pass minimizes the sum of per-constraint violations and reports
        that sum (so contradictory rows x<=1, x>=2 yield residual 1).
        """
        res = self._interior_point(tol)
        if res.feasible:
            return res
        infeas = self._aggregate_infeasibility(tol)
        return PhaseOneResult(False, None, res.margin, infeas)

    def _relaxable(self):
        lo, hi, c, q, e, G, h, ee, lh = self._arrays()
        return lo, hi, G, h, ee, lh

    def _interior_point(self, tol: float) -> PhaseOneResult:
        lo, hi, G, h, ee, lh = self._relaxable()
        n = lo.size
        if np.any(lo > hi):
            return PhaseOneResult(False, None, -math.inf, math.inf)
        x0 = 0.5 * (lo + hi)
        n_relax = G.shape[0] + ee.shape[0] + lh.shape[0]
        if n_relax == 0:
            margin = float(np.min(0.5 * (hi - lo), initial=math.inf))
            return PhaseOneResult(True, x0, margin, 0.0)

        aux = ConvexProgram()
        for i in range(n):
            aux.add_variable(f"x{i}", lo[i], hi[i])
        # Collect base slacks (constraint value at the start minus rhs form).
        bases = []
        start_vals = list(x0)
        u_mid = x0

        span = 10.0 + float(np.max(np.abs(h), initial=0.0)) + float(np.max(np.abs(x0), initial=0.0))
        rows = []
        for r in range(G.shape[0]):
            bases.append(h[r] - float(G[r] @ x0))
        ee_aux = []
        for j, (s, u) in enumerate(ee):
            u0 = u_mid[u]
            s_aux0 = u0 * math.log(u0) + 1.0
            xl_lo, xl_hi = _xlogx_range(lo[u], hi[u])
            ee_aux.append((s, u, s_aux0, xl_lo, xl_hi))
            bases.append(x0[s] - s_aux0)
        lh_aux = []
        for j, (v, u) in enumerate(lh):
            u0 = u_mid[u]
            v_aux0 = math.log(u0) - 1.0
            lh_aux.append((v, u, v_aux0))
            bases.append(v_aux0 - x0[v])
        cap = 1.0
        sigma0 = min(min(bases) - 1.0, cap - 0.5)
        sig = aux.add_variable("_sigma", sigma0 - 1.0, cap)
        aux.set_linear_objective(sig, 1.0)
        for r in range(G.shape[0]):
            idx, coef, rhs = self._rows_active(G, h, r)
            coeffs = {f"x{j}": cj for j, cj in zip(idx, coef)}
            coeffs["_sigma"] = 1.0
            aux.add_linear_constraint(coeffs, rhs)
        pad = abs(sigma0) + span
        for j, (s, u, s_aux0, xl_lo, xl_hi) in enumerate(ee_aux):
            name = f"_ee{j}"
            aux.add_variable(name, min(xl_lo, lo[s]) - pad,
                             max(xl_hi, hi[s], s_aux0) + pad)
            aux.add_entropy_epigraph(name, f"x{u}")
            aux.add_linear_constraint({name: 1.0, f"x{s}": -1.0, "_sigma": 1.0}, 0.0)
            start_vals.append(s_aux0)
        for j, (v, u, v_aux0) in enumerate(lh_aux):
            name = f"_lh{j}"
            lnlo = math.log(max(lo[u], _LOG_DOMAIN_FLOOR))
            lnhi = math.log(max(hi[u], _LOG_DOMAIN_FLOOR))
            aux.add_variable(name, min(lnlo, lo[v], v_aux0) - pad,
                             max(lnhi, hi[v]) + pad)
            aux.add_log_hypograph(name, f"x{u}")
            aux.add_linear_constraint({f"x{v}": 1.0, name: -1.0, "_sigma": 1.0}, 0.0)
            start_vals.append(v_aux0)
        start = np.array(start_vals[:n] + [sigma0] + start_vals[n:], dtype=float)
        out = aux.solve(tol=max(tol, 1e-8), start=start, _no_phase1=True)
        if out.status not in (OPTIMAL, MAX_ITERATIONS) or out.x is None:
            return PhaseOneResult(False, None, -math.inf, math.inf)
        sigma_hat = out.x[sig]
        point = out.x[:n].copy()
        if sigma_hat > _MARGIN_EPS:
            point = self._blend_toward_mid(point, x0, lo, hi, G, h, ee, lh,
                                           float(sigma_hat))
            return PhaseOneResult(True, point, float(sigma_hat), 0.0)
        return PhaseOneResult(False, None, float(sigma_hat), max(0.0, -float(sigma_hat)))

    @staticmethod
    def _min_slack(x, lo, hi, G, h, ee, lh):
        vals = []
        if G.shape[0]:
            vals.append(float(np.min(h - G @ x)))
        if ee.size:
            u = x[ee[:, 1]]
            if np.any(u <= 0):
                return -math.inf
            vals.append(float(np.min(x[ee[:, 0]] - u * np.log(u))))
        if lh.size:
            u = x[lh[:, 1]]
            if np.any(u <= 0):
                return -math.inf
            vals.append(float(np.min(np.log(u) - x[lh[:, 0]])))
        return min(vals) if vals else math.inf

    def _blend_toward_mid(self, x, mid, lo, hi, G, h, ee, lh, margin):
        """Pull a phase-one point off box faces while keeping half its slack."""
        width = hi - lo
        for lam in (0.5, 0.25, 0.125, 0.0625):
            cand = (1.0 - lam) * x + lam * mid
            inside = np.all(cand >= lo + 1e-9 * width) and np.all(cand <= hi - 1e-9 * width)
            if inside and self._min_slack(cand, lo, hi, G, h, ee, lh) >= 0.45 * margin:
                return cand
        return x

    def _rows_active(self, G, h, r):
        idx = np.flatnonzero(G[r])
        return idx, G[r, idx], h[r]

    def _aggregate_infeasibility(self, tol: float) -> float:
        lo, hi, G, h, ee, lh = self._relaxable()
        n = lo.size
        x0 = 0.5 * (lo + hi)
        aux = ConvexProgram()
        for i in range(n):
            aux.add_variable(f"x{i}", lo[i], hi[i])
        start_vals = list(x0)
        tau_starts = []
        span = 10.0 + float(np.max(np.abs(h), initial=0.0)) + float(np.max(np.abs(x0), initial=0.0))

        def new_tau(violation):
            t0 = max(violation, 0.0) + 1.0
            k = len(tau_starts)
            aux.add_variable(f"_tau{k}", 0.0, t0 + span)
            tau_starts.append(t0)
            return f"_tau{k}"

        extra_starts = []
        for r in range(G.shape[0]):
            idx, coef, rhs = self._rows_active(G, h, r)
            tau = new_tau(float(G[r] @ x0) - rhs)
            coeffs = {f"x{j}": cj for j, cj in zip(idx, coef)}
            coeffs[tau] = -1.0
            aux.add_linear_constraint(coeffs, rhs)
        for j, (s, u) in enumerate(ee):
            u0 = x0[u]
            s_aux0 = u0 * math.log(u0) + 1.0
            xl_lo, xl_hi = _xlogx_range(lo[u], hi[u])
            name = f"_ees{j}"
            aux.add_variable(name, min(xl_lo, lo[s]) - span,
                             max(xl_hi, hi[s], s_aux0) + span)
            aux.add_entropy_epigraph(name, f"x{u}")
            tau = new_tau(s_aux0 - x0[s])
            aux.add_linear_constraint({name: 1.0, f"x{s}": -1.0, tau: -1.0}, 0.0)
            extra_starts.append(s_aux0)
        for j, (v, u) in enumerate(lh):
            u0 = x0[u]
            v_aux0 = math.log(u0) - 1.0
            name = f"_lhs{j}"
            lnlo = math.log(max(lo[u], _LOG_DOMAIN_FLOOR))
            lnhi = math.log(max(hi[u], _LOG_DOMAIN_FLOOR))
            aux.add_variable(name, min(lnlo, lo[v], v_aux0) - span,
                             max(lnhi, hi[v]) + span)
            aux.add_log_hypograph(name, f"x{u}")
            tau = new_tau(x0[v] - v_aux0)
            aux.add_linear_constraint({f"x{v}": 1.0, name: -1.0, tau: -1.0}, 0.0)
            extra_starts.append(v_aux0)
        for k in range(len(tau_starts)):
            aux.set_linear_objective(f"_tau{k}", -1.0)
        # Interleave start values to match variable creation order.
        start = []
        xi = iter(start_vals)
        names = aux.variable_names()
        ee_iter = iter(extra_starts[:len(ee)])
        lh_iter = iter(extra_starts[len(ee):])
        tau_iter = iter(tau_starts)
        for name in names:
            if name.startswith("_tau"):
                start.append(next(tau_iter))
            elif name.startswith("_ees"):
                start.append(next(ee_iter))
            elif name.startswith("_lhs"):
                start.append(next(lh_iter))
            else:
                start.append(next(xi))
        out = aux.solve(tol=max(tol, 1e-8), start=np.array(start), _no_phase1=True)
        if out.x is None:
            return math.inf
        total = sum(max(float(out.x[aux.variable_index(f"_tau{k}")]), 0.0)
                    for k in range(len(tau_starts)))
        return total
