"""Relaxed-energy oracle, counterexample catalog, and falsification harness.

The transformed energy H(u) = sigma TV(u) + int tau_hat(x, Tr u) is the
candidate value of the relaxed contact energy.  Whether it is attained is a
geometric question: on the unit square with tau = lam * p the corner-jump
family shows the relaxation drops below H(0) = 0 exactly when
|lam| > sigma / sqrt(2), matching the corner admissibility product
L * q = |lam| * sqrt(2) crossing sigma.  The catalog reproduces the three
classical families in closed form:

  E1(lam):  corner jumps n * 1_{x1 + x2 < 1/n} on the square; each member has
            energy sigma * sqrt(2) + 2 * lam, negative iff lam < -sigma/sqrt(2).
  E2(lam):  radial tents min(|x|, (n-1)(1-|x|)) on the disk; energies increase
            to 3 pi sigma while the limit cone |x| has sigma pi + 2 pi lam, so
            semicontinuity fails iff lam > sigma.
  LOG1D:    truncated logarithms on (0, 1) with tau(x, p) = p; every member
            has energy exactly 0 while the L1 limit log leaves BV.

Printed constants elsewhere for the first two gaps are sqrt(2) - 2 lam and
2 (1 - lam); direct evaluation of the defining sequences gives
sqrt(2) + 2 lam and 2 pi (1 - lam), which are the values reported here (the
sign/factor discrepancy is flagged in the reports, not silently resolved).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import density as density_mod
from .density import YosidaContext
from .errors import SchemaError
from .extension import _recovery_with_sharpness, optimal_boundary_values
from .geometry import (LineDomain, PolygonalDomain, admissibility_check,
                       regular_ngon, unit_square)
from .grid import (GridField, TraceSample, constant_field, energy_F, energy_H,
                   field_from_function, line_grid, trace_extract)


@dataclass
class SequenceSpec:
    """One member of a named sequence family: grid realization plus the
    closed-form energy when the family has one."""

    family: str
    n: int
    realization: GridField
    closed_form_energy: float | None = None
    jump_set: list | None = None
    exact_trace: TraceSample | None = None


@dataclass
class ViolationReport:
    """Semicontinuity audit of a family: is liminf F(u_n) below F(limit)?

    gap = limit_energy_F - liminf_energy is positive exactly for violations.
    limit_energy_H is reported for context (it is the claimed relaxed value
    when the configuration is admissible).
    """

    family: str
    liminf_energy: float
    limit_energy_F: float
    limit_energy_H: float
    violated: bool
    gap: float
    notes: dict = field(default_factory=dict)


class CounterexampleFamily:
    """Shared protocol: closed-form member energies + grid realizations."""

    name = "?"

    def member_energy(self, n: int) -> float:
        raise NotImplementedError

    def sequence_limit(self) -> float:
        raise NotImplementedError

    def limit_energy_F(self) -> float:
        raise NotImplementedError

    def limit_energy_H(self) -> float:
        raise NotImplementedError

    def member(self, n: int, h: float) -> SequenceSpec:
        raise NotImplementedError

    def limit_field(self, h: float) -> GridField:
        raise NotImplementedError


class E1Family(CounterexampleFamily):
    """Corner jumps n * 1_{x1+x2 < 1/n} on the unit square, tau = lam * p."""

    def __init__(self, lam: float, sigma: float = 1.0):
        self.lam = float(lam)
        self.sigma = float(sigma)
        self.dom = unit_square()
        self.density = density_mod.linear(lam)
        self.name = f"E1(lam={lam})"

    def member_energy(self, n):
        # jump height n across the diagonal of length sqrt(2)/n, trace n on
        # two boundary legs of length 1/n each
        return self.sigma * math.sqrt(2.0) + 2.0 * self.lam

    def sequence_limit(self):
        return self.member_energy(1)

    def limit_energy_F(self):
        return 0.0

    def limit_energy_H(self):
        return 0.0  # |lam| <= sigma needed for tau_hat = tau; at p = 0 both vanish

    def member(self, n, h):
        g = self.dom.grid(h)
        c = 1.0 / n
        vals_fn = lambda X, Y: np.where(X + Y < c, float(n), 0.0)
        f = field_from_function(g, vals_fn)
        jump = [((c, 0.0), (0.0, c), float(n))]
        f.jump_set = jump
        exact = _legs_trace(self.dom, [(0.0, c, float(n)),
                                       (4.0 - c, 4.0, float(n))])
        return SequenceSpec(self.name, n, f, self.member_energy(n), jump, exact)

    def limit_field(self, h):
        return constant_field(self.dom.grid(h), 0.0)

    def l1_to_limit(self, n):
        return float(n) * 0.5 / n ** 2


def _legs_trace(dom, segments) -> TraceSample:
    """Minimal exact trace: piecewise-constant in arc length, value v on each
    (s_lo, s_hi, v) segment and 0 elsewhere."""
    cuts = sorted({0.0, dom.perimeter} | {s for lo, hi, _ in segments for s in (lo, hi)})
    s_mid, w, vals = [], [], []
    for lo, hi in zip(cuts, cuts[1:]):
        if hi - lo <= 0:
            continue
        mid = 0.5 * (lo + hi)
        v = 0.0
        for a, b, val in segments:
            if a <= mid < b:
                v = val
                break
        s_mid.append(mid)
        w.append(hi - lo)
        vals.append(v)
    s_mid = np.asarray(s_mid)
    pts = dom.boundary_point(s_mid)
    _, _, eid = dom.boundary_distance(pts)
    return TraceSample(s=s_mid, x=pts, normal=np.zeros_like(pts), w=np.asarray(w),
                       values=np.asarray(vals), edge_id=eid, perimeter=dom.perimeter,
                       dom=dom)


class E2Family(CounterexampleFamily):
    """Radial tents min(|x|, (n-1)(1-|x|)) on the disk surrogate, tau = lam |p|."""

    def __init__(self, lam: float, sigma: float = 1.0, ngon: int = 256):
        self.lam = float(lam)
        self.sigma = float(sigma)
        self.dom = regular_ngon(ngon)
        self.density = density_mod.absolute(lam)
        self.name = f"E2(lam={lam})"

    def member_energy(self, n):
        # gradient 1 inside radius r_n = (n-1)/n, slope n-1 on the outer
        # annulus, zero trace
        r = (n - 1.0) / n
        return self.sigma * (math.pi * r * r + (n - 1.0) * math.pi * (1.0 - r * r))

    def sequence_limit(self):
        return 3.0 * math.pi * self.sigma

    def limit_energy_F(self):
        return self.sigma * math.pi + self.lam * 2.0 * math.pi

    def limit_energy_H(self):
        return self.sigma * math.pi + min(self.lam, self.sigma) * 2.0 * math.pi

    def member(self, n, h):
        g = self.dom.grid(h)
        fn = lambda X, Y: np.minimum(np.hypot(X, Y), (n - 1.0) * (1.0 - np.hypot(X, Y)))
        f = field_from_function(g, fn)
        exact = _legs_trace(self.dom, [])  # trace identically zero
        return SequenceSpec(self.name, n, f, self.member_energy(n), None, exact)

    def limit_field(self, h):
        return field_from_function(self.dom.grid(h), lambda X, Y: np.hypot(X, Y))

    def gap_limit(self):
        """Limit of F(u_n) - F(u): 2 pi (1 - lam) (for sigma = 1)."""
        return self.sequence_limit() - self.limit_energy_F()


class Log1DFamily(CounterexampleFamily):
    """Truncated logarithms on (0, 1), tau(x, p) = p at both endpoints."""

    def __init__(self, n_cells: int = 10_000):
        self.dom = LineDomain(0.0, 1.0)
        self.n_cells = n_cells
        self.sigma = 1.0
        self.density = density_mod.linear(1.0)
        self.name = "LOG1D"

    def member_energy(self, n):
        # TV = log(n), contact = u(1) + u(0) = 0 - log(n); exact cancellation
        ln = math.log(n)
        return ln + (0.0 - ln)

    def sequence_limit(self):
        return 0.0

    def limit_energy_F(self):
        return math.inf  # the limit log leaves BV(0, 1): TV sentinel

    def limit_energy_H(self):
        return math.inf

    def member(self, n, h=None):
        g = line_grid(self.dom.a, self.dom.b, self.n_cells)
        f = field_from_function(g, lambda x: np.log(np.maximum(x, 1.0 / n)))
        return SequenceSpec(self.name, n, f, self.member_energy(n))

    def limit_field(self, h=None):
        g = line_grid(self.dom.a, self.dom.b, self.n_cells)
        return field_from_function(g, lambda x: np.log(x))


def family_by_name(name, lam=None, sigma=1.0, **kw):
    if name.upper() == "E1":
        return E1Family(lam, sigma)
    if name.upper() == "E2":
        return E2Family(lam, sigma, **kw)
    if name.upper() == "LOG1D":
        return Log1DFamily(**kw)
    raise SchemaError(f"unknown counterexample family {name!r}")


@dataclass
class CatalogReport:
    family: str
    n_values: list
    per_n: list
    limit_of_sequence: float
    energy_of_limit: float
    energy_of_limit_H: float
    grid_checks: dict = field(default_factory=dict)


def counterexample_energy(fam: CounterexampleFamily, n_values=(4, 8, 16, 32),
                          grid_check_n=None, h=1 / 512) -> CatalogReport:
    """Closed-form member energies, their limit, the energy of the L1 limit,
    and an optional grid confirmation at one member."""
    per_n = [fam.member_energy(n) for n in n_values]
    checks = {}
    if grid_check_n is not None:
        spec = fam.member(grid_check_n, h)
        rep = energy_F(spec.realization, fam.density, fam.sigma,
                       exact_jump_set=spec.jump_set, exact_trace=spec.exact_trace)
        grid_rep = energy_F(spec.realization, fam.density, fam.sigma)
        checks = {"n": grid_check_n, "h": h,
                  "exact_mode_total": rep.total,
                  "grid_mode_total": grid_rep.total,
                  "closed_form": spec.closed_form_energy}
    return CatalogReport(
        family=fam.name, n_values=list(n_values), per_n=per_n,
        limit_of_sequence=fam.sequence_limit(),
        energy_of_limit=fam.limit_energy_F(),
        energy_of_limit_H=fam.limit_energy_H(),
        grid_checks=checks)


def detect_lsc_violation(fam: CounterexampleFamily, budget: int = 64,
                         tol: float = 1e-9) -> ViolationReport:
    """Compare liminf of the family's energies with the energy of its limit.

    Catalog families carry closed-form limits, so liminf is exact; the tail
    minimum over n in [budget/2, budget] is recorded as a consistency check
    (member energies are constant or monotone in n).  A limit outside BV
    reports infinite limit energy and counts as a violation of
    semicontinuity at that limit.
    """
    liminf = fam.sequence_limit()
    tail = [fam.member_energy(n) for n in range(max(2, budget // 2), budget + 1)]
    limit_F = fam.limit_energy_F()
    limit_H = fam.limit_energy_H()
    gap = limit_F - liminf
    violated = bool(gap > tol)
    notes = {"tail_min": min(tail), "tail_max": max(tail)}
    if math.isinf(limit_F):
        notes["limit"] = "outside BV; TV sentinel inf"
    return ViolationReport(family=fam.name, liminf_energy=liminf,
                           limit_energy_F=limit_F, limit_energy_H=limit_H,
                           violated=violated, gap=gap, notes=notes)


# -- the relaxed-energy oracle -------------------------------------------------------


def representation_claimed(dom, d, sigma: float):
    """The transformed energy represents the relaxation when the boundary is
    smooth-flagged with sup L <= sigma, or when sup L(x) q(x) < sigma strictly
    (some eps0 > 0 exists)."""
    rep = admissibility_check(dom, d, sigma, epsilon0=0.0)
    if rep.verdict == "C2_clause":
        return True, rep
    if rep.verdict == "almost_C1_clause" and rep.min_slack > 1e-12:
        return True, rep
    rep.verdict = "inadmissible"
    return False, rep


def relaxed_energy(u: GridField, d, ctx: YosidaContext,
                   dom: PolygonalDomain | None = None):
    """H(u) annotated with the admissibility verdict.

    Outside the admissible regime the value is still returned but flagged:
    no representation of the relaxation is claimed there.
    """
    dom = dom if dom is not None else u.dom
    claimed, adm = representation_claimed(dom, d, ctx.sigma)
    rep = energy_H(u, d, ctx)
    rep.notes["admissibility"] = adm.verdict
    rep.notes["representation_claimed"] = claimed
    if not claimed:
        rep.notes["warning"] = ("admissibility fails: the returned value is H(u), "
                                "not a certified relaxation")
    return rep


@dataclass
class RepresentationReport:
    upper_gap: float
    lower_gap: float
    H_value: float
    upper_detail: dict
    lower_detail: dict


def _corner_wedge_tail(u, d, sigma, base_F, budget):
    """Exact-increment energies of corner-jump perturbations of u.

    Adding a jump of height n on the triangle with legs a0/n at a convex
    corner changes TV by 2 a0 sin(theta/2) (independent of n) and the contact
    term by about (2 a0 / n) * [tau(x_c, t_c + n) - tau(x_c, t_c)]; the
    subadditive estimate upper-bounds the true energy, so any value below
    H - tol is a genuine violation witness.
    """
    dom = u.dom
    out = []
    tr = trace_extract(u)
    for rec in dom.corner_records:
        if rec.theta >= math.pi:
            continue
        v = dom.vertices[rec.index]
        e_prev = dom.edge_lengths[rec.index - 1]
        e_next = dom.edge_lengths[rec.index]
        a0 = min(e_prev, e_next)
        dists = np.hypot(tr.x[:, 0] - v[0], tr.x[:, 1] - v[1])
        t_c = float(tr.values[int(np.argmin(dists))])
        dtv = sigma * 2.0 * a0 * math.sin(rec.theta / 2.0)
        energies = []
        for n in (max(2, budget // 2), budget):
            shift = d.eval_many(tuple(v), np.array([t_c + n]))[0] \
                - d.eval_many(tuple(v), np.array([t_c]))[0]
            energies.append(base_F + dtv + (2.0 * a0 / n) * float(shift))
        out.append((f"corner_wedge(v{rec.index})", energies[0], energies[1]))
    return out


def _bump_tail(u, d, ctx, budget, seed):
    """Grid energies of shrinking boundary bumps added to u."""
    rng = np.random.default_rng(seed)
    dom, g = u.dom, u.grid
    b = g.boundary()
    out = []
    n_pts = min(4, max(1, len(b.s) // 64))
    picks = rng.choice(len(b.s), size=n_pts, replace=False)
    X, Y = g.cell_centers()
    for j in picks:
        x0, y0 = b.x[j]
        for amp in (-1.5, 0.75):
            energies = []
            for n in (max(2, budget // 2), budget):
                width = max(0.5 / n, 4 * g.h)
                bump = amp * np.exp(-((X - x0) ** 2 + (Y - y0) ** 2) / (2 * width ** 2))
                un = GridField(g, u.values + np.where(g.mask, bump, 0.0))
                energies.append(energy_F(un, d, ctx.sigma).total)
            out.append((f"bump({x0:.2f},{y0:.2f},A={amp})", energies[0], energies[1]))
    return out


def _shift_tail(u, d, ctx, budget):
    out = []
    for c in (-1.0, 1.0):
        energies = []
        for n in (max(2, budget // 2), budget):
            un = GridField(u.grid, u.values + c / n)
            energies.append(energy_F(un, d, ctx.sigma).total)
        out.append((f"shift({c:+.0f}/n)", energies[0], energies[1]))
    return out


def verify_representation(u: GridField, d, ctx: YosidaContext,
                          dom: PolygonalDomain | None = None, budget: int = 64,
                          seed: int = 0) -> RepresentationReport:
    """Two-sided desk check of the representation at a single field.

    upper_gap: best recovery-sequence energy minus H(u); small for admissible
    configurations (the constructive half).  lower_gap: most violating
    candidate-sequence tail energy minus H(u); values below -tol falsify the
    representation (negative findings are reported, not raised).
    """
    dom = dom if dom is not None else u.dom
    H = energy_H(u, d, ctx).total
    eps_opt = 0.005 * (1.0 + abs(H)) / dom.perimeter
    p = optimal_boundary_values(u, d, ctx, eps=eps_opt)
    ladder = sorted({n for n in (4, 8, 16, 32, 64, budget)})
    best = math.inf
    best_n = None
    rec_tail = []   # (effective eps, energy) for the two largest ladder rungs
    for n in ladder:
        un, eps_eff = _recovery_with_sharpness(u, p, n)
        e = energy_F(un, d, ctx.sigma).total
        rec_tail.append((eps_eff, e))
        if e < best:
            best, best_n = e, n
    base_F = energy_F(u, d, ctx.sigma).total
    # liminf estimates by two-point extrapolation: the recovery tail is linear
    # in its layer sharpness (corner savings ~ delta), the other families are
    # e + a/n with n doubling across the pair
    candidates = [("identity", base_F, base_F)]
    # keep the last energy seen at each distinct sharpness: rungs clamped to
    # the resolvability floor all share one eps and carry no slope information
    by_eps = {}
    for eps_eff, e in rec_tail:
        by_eps[round(eps_eff, 15)] = e
    pts = sorted(by_eps.items(), reverse=True)[-2:]
    if len(pts) == 2 and abs(pts[0][0] - pts[1][0]) > 1e-15:
        (eps1, e1), (eps2, e2) = pts
        rec_lim = e2 + (e1 - e2) * (0.0 - eps2) / (eps1 - eps2)
    else:
        rec_lim = pts[-1][1]
    candidates.append(("recovery_tail", rec_lim, min(e for _, e in rec_tail)))
    for name, e_half, e_full in (_corner_wedge_tail(u, d, ctx.sigma, base_F, budget)
                                 + _bump_tail(u, d, ctx, budget, seed)
                                 + _shift_tail(u, d, ctx, budget)):
        candidates.append((name, 2.0 * e_full - e_half, min(e_half, e_full)))
    lower_name, lower_energy, lower_raw = min(candidates, key=lambda kv: kv[1])
    return RepresentationReport(
        upper_gap=best - H,
        lower_gap=lower_energy - H,
        H_value=H,
        upper_detail={"n": best_n, "energy": best, "eps_opt": eps_opt,
                      "ladder": ladder},
        lower_detail={"worst_candidate": lower_name, "energy": lower_energy,
                      "tail_min": lower_raw, "n_candidates": len(candidates)},
    )
