"""Scenario orchestration: build flows from a config, emit artifacts, certify."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from .config import ScenarioConfig
from .errors import ConfigError, NumericalError, RiccilabError
from .flow import evolve_backward, flow_residual, write_history
from .lgeodesic import LSolver, identity_residuals, reduced_field
from .models import (GaussianStatic, HomogeneousFlat, HomogeneousRound, MetricSnapshot,
                     ShrinkingSphere, flat_profile, load_profile, radial_curvature,
                     save_profile, sphere_profile)
from .monitor import (blowdown, gaussian_density_limit, local_bound_witness,
                      monotonicity_certificate, reduced_volume, reduced_volume_series,
                      stage_residuals, weighted_gradient_bound)
from .report import write_csv, write_json
from .splice import (BreatherSpec, Diffeo, base_points, junction_certificate, splice,
                     tau_sandwich, test_curve_bounds)

log = logging.getLogger(__name__)

__all__ = ["Scenario", "Certificate", "VERDICT_KEYS"]

VERDICT_KEYS = (
    "flow_eq", "breather_identity", "junction_smoothness", "tau_sandwich", "l_base_bound",
    "eq_l_1", "eq_l_4", "eq_l_5", "grad_l_law", "rvol_le_1", "rvol_monotone",
    "prop51_l_bound", "prop51_grad_bound", "weighted_grad_bound", "soliton_residual_trend",
    "conjheat_trend", "v_nonpositive", "density_limit",
)


@dataclass
class Certificate:
    passed: bool
    value: float = math.nan
    tol: float = math.nan
    detail: dict = field(default_factory=dict)
    error: Optional[str] = None
    numerical: bool = False

    def as_dict(self):
        out = {"passed": bool(self.passed), "value": self.value, "tol": self.tol,
               "detail": self.detail}
        if self.error is not None:
            out["error"] = self.error
        return out


def _trend(values, floor):
    """Non-increasing within an absolute floor (noise level of flat stages)."""
    v = np.asarray(values, float)
    return bool(np.all(np.isfinite(v)) and np.all(v[1:] <= v[:-1] + floor))


class Scenario:
    """Everything a run needs, built lazily from a validated config."""

    def __init__(self, cfg: ScenarioConfig, stages=None):
        self.cfg = cfg
        self.stages = tuple(sorted(set(stages))) if stages else cfg.blowdown.stages
        bad = [i for i in self.stages if i > cfg.breather.i_max - 1]
        if bad:
            raise ConfigError(f"--stages: stage {bad[0]} exceeds breather.i_max - 1")

    # -- flows ---------------------------------------------------------------

    @cached_property
    def initial(self) -> MetricSnapshot:
        m = self.cfg.model
        if m.kind == "flat":
            return MetricSnapshot(0.0, HomogeneousFlat(m.n), 1.0)
        if m.kind == "sphere":
            return MetricSnapshot(0.0, HomogeneousRound(m.n), 2.0 * (m.n - 1) * m.c)
        if m.profile is not None:
            return MetricSnapshot(0.0, load_profile(m.profile, m.n))
        if m.shape == "flat":
            geo = flat_profile(m.n, m.grid.h, m.grid.r_max)
        else:
            geo = sphere_profile(m.n, m.grid.h, m.grid.r_max, m.radius)
        return MetricSnapshot(0.0, geo)

    def _evolve(self, tau_end):
        m = self.cfg.model
        if m.kind != "profile" and m.source == "exact":
            if m.kind == "flat":
                return GaussianStatic(m.n)
            return ShrinkingSphere(m.n, m.c)
        return evolve_backward(self.initial, tau_end, rtol=m.rtol, atol=m.atol)

    @cached_property
    def history(self):
        """The model flow on ``[0, model.horizon]``."""
        return self._evolve(self.cfg.model.horizon)

    @cached_property
    def base_flow(self):
        """The breather period ``g0`` on ``[0, 1]``."""
        if self.cfg.model.horizon >= 1.0:
            return self.history
        return self._evolve(1.0)

    @cached_property
    def breather(self) -> BreatherSpec:
        b = self.cfg.breather
        phi = Diffeo(b.phi.kind, b.phi.lam)
        return BreatherSpec(self.base_flow, b.alpha * self.cfg.faults.alpha_scale, phi, b.tol)

    @cached_property
    def spliced(self):
        # forced so that a corrupted breather still reaches the downstream checks
        return splice(self.breather, self.cfg.breather.i_max, force=True)

    def solver(self, flow) -> LSolver:
        g = self.cfg.lgeo
        return LSolver(flow, rtol=g.rtol, atol=g.atol, v_range=g.v_range,
                       fan_size=g.fan_size)

    @cached_property
    def lattice_field(self):
        g = self.cfg.lgeo
        taus = np.linspace(*g.tau_range, g.n_tau)
        xs = np.linspace(*g.r_range, g.n_r)
        f = reduced_field(self.spliced, taus, xs, h=g.h, h_tau=g.h_tau,
                          solver=self.solver(self.spliced))
        if self.cfg.faults.l_scale != 1.0:
            f = f.scaled(self.cfg.faults.l_scale)
        return f

    @cached_property
    def lbounds(self):
        """Test-curve upper bounds for ``l(x_i, tau_i)``, i = 1..lbound_last."""
        last = self.cfg.blowdown.lbound_last
        return test_curve_bounds(self.spliced, self.cfg.breather.p0, last - 1)

    @cached_property
    def l_at_bases(self):
        sp = self.spliced
        p0 = self.cfg.breather.p0
        last = self.cfg.blowdown.lbound_last
        xs = base_points(self.breather, p0, last)[1:]
        q = sp.distance(xs - p0) if sp.homogeneous else np.abs(xs)
        taus = sp.junctions[1:last + 1]
        return self.solver(sp).reduced_distance(q, taus).l

    def _stages(self, ids):
        b = self.cfg.blowdown
        g = self.cfg.lgeo
        kw = dict(rtol=g.rtol, atol=g.atol, v_range=g.v_range, fan_size=g.fan_size)
        return blowdown(self.spliced, self.cfg.breather.p0, ids, r=b.r, solver_kw=kw)

    @cached_property
    def stage_list(self):
        return self._stages(self.stages)

    @cached_property
    def stage_fields(self):
        b = self.cfg.blowdown
        g = self.cfg.lgeo
        taus = np.linspace(1 + b.eps, 2 - b.eps, b.n_tau)
        return [stage_residuals(s, taus, b.n_r, h=2 * g.h, h_tau=g.h_tau,
                                l_scale=self.cfg.faults.l_scale) for s in self.stage_list]

    @cached_property
    def density_stage_list(self):
        return self._stages(self.cfg.blowdown.density_stages)

    # -- artifact writers ----------------------------------------------------

    def write_model(self, out: Path):
        snap = self.initial
        geo = snap.geometry
        n = geo.n
        if geo.kind == "rotsym":
            save_profile(out / "profile.csv", geo)
            r = geo.r
            k = radial_curvature(n, geo.r, geo.psi, geo.a)
            rows = zip(r, k["R"], k["ric_rad"], k["ric_tan"])
        else:
            flow = self.base_flow
            half = math.pi if geo.kind == "round" else 4.0
            r = np.linspace(0.0, half, 65)
            G = flow.geom(np.zeros_like(r), r)
            rows = zip(r, G.R, G.ric_rad, G.ric_tan)
        write_csv(out / "curvature.csv", ["r", "R", "ric_rad", "ric_tan"], rows)

    def write_evolve(self, out: Path):
        flow = self.history
        m = self.cfg.model
        taus = getattr(flow, "times", None)
        if taus is None:
            taus = np.linspace(0.0, m.horizon, 11)
        write_history(out / "history.csv", flow, taus,
                      tolerances={"rtol": m.rtol, "atol": m.atol})
        rows = []
        for t in np.linspace(0.0, m.horizon, 5):
            fr = flow_residual(flow, float(t))
            rows.append((t, fr.value, fr.one_sided))
        write_csv(out / "flowres.csv", ["tau", "residual", "one_sided"], rows)

    def write_splice(self, out: Path):
        rep = self.junction_report
        write_csv(out / "junctions.csv", ["i", "tau_i", "gap0", "gap1", "gap2"],
                  ((i, t, *g) for i, (t, g) in enumerate(zip(rep.taus, rep.gaps))))
        write_csv(out / "lbound.csv", ["i", "upper_bound"],
                  ((i + 1, b) for i, b in enumerate(self.lbounds)))

    @cached_property
    def junction_report(self):
        return junction_certificate(self.spliced, 2, self.cfg.tolerances.junction)

    def write_lgeo(self, out: Path):
        f = self.lattice_field
        res = identity_residuals(f)
        write_csv(out / "lfield.csv", ["tau", "r", "l", "grad_l", "lap_l", "smooth"],
                  zip(f.tau, f.x, f.l, f.grad, f.lap, f.smooth))
        write_csv(out / "residuals.csv", ["tau", "r", "res1", "res2", "res3"],
                  zip(f.tau, f.x, res.res1, res.res2, res.res3))

    @cached_property
    def base_series(self):
        r = self.cfg.rvol
        taus = np.linspace(*r.tau_range, r.samples)
        return reduced_volume_series(self.spliced, taus, solver=self.solver(self.spliced),
                                     nodes=r.nodes, cutoff_level=r.cutoff)

    def _stage_volumes(self, stages):
        r = self.cfg.rvol
        rows = []
        for s in stages:
            for t in r.stage_taus:
                v = reduced_volume(s.flow, t, solver=s.solver, nodes=r.nodes,
                                   cutoff_level=r.cutoff)
                rows.append((s.i, t, v.V, v.tail))
        return rows

    @cached_property
    def stage_volume_rows(self):
        seen = {}
        for row in self._stage_volumes(self.stage_list) + \
                self._stage_volumes(self.density_stage_list):
            seen[(row[0], row[1])] = row
        return [seen[k] for k in sorted(seen)]

    def write_rvol(self, out: Path, stages: bool):
        s = self.base_series
        rows = [(-1, t, v, tl) for t, v, tl in zip(s.taus, s.V, s.tail)]
        if stages:
            rows += self.stage_volume_rows
        write_csv(out / "rvol.csv", ["i", "tau", "V", "tail"], rows)

    def write_blowdown(self, out: Path):
        write_csv(out / "stages.csv", ["i", "tau_i", "l_at_base", "curv_bound", "K_i",
                                       "inj_proxy"],
                  ((s.i, s.tau_i, s.l_at_base, s.curv_bound, s.K_i, s.inj_proxy)
                   for s in self.stage_list))
        for s, r in zip(self.stage_list, self.stage_fields):
            mask = np.where(r.smooth, 1.0, np.nan)
            write_csv(out / f"residuals_{s.i}.csv",
                      ["tau", "r", "soliton", "conjheat", "v", "lll1", "lll2"],
                      zip(r.tau, r.x, r.soliton * mask, r.conjheat * mask, r.v * mask,
                          r.lll1 * mask, r.lll2 * mask))

    # -- certificates --------------------------------------------------------

    def certificates(self) -> dict:
        tol = self.cfg.tolerances
        checks: dict[str, Callable[[], Certificate]] = {
            "flow_eq": self._c_flow,
            "breather_identity": self._c_breather,
            "junction_smoothness": lambda: Certificate(
                self.junction_report.passed, self.junction_report.max_gap, tol.junction,
                {"orders": [0, 1, 2], "junctions": int(self.junction_report.taus.size)}),
            "tau_sandwich": lambda: Certificate(
                tau_sandwich(self.breather.alpha, self.spliced.junctions)),
            "l_base_bound": self._c_lbound,
            "eq_l_1": lambda: self._c_identity("res1"),
            "eq_l_4": lambda: self._c_identity("res2_min"),
            "eq_l_5": lambda: self._c_identity("res3_max"),
            "grad_l_law": self._c_grad,
            "rvol_le_1": self._c_rvol_bound,
            "rvol_monotone": self._c_monotone,
            "prop51_l_bound": lambda: self._c_witness("l_max"),
            "prop51_grad_bound": lambda: self._c_witness("grad_max"),
            "weighted_grad_bound": self._c_weighted,
            "soliton_residual_trend": self._c_soliton,
            "conjheat_trend": self._c_conjheat,
            "v_nonpositive": self._c_vsign,
            "density_limit": self._c_density,
        }
        out = {}
        for key in VERDICT_KEYS:
            try:
                out[key] = checks[key]()
            except NumericalError as exc:
                log.warning("%s: numerical failure: %s", key, exc)
                out[key] = Certificate(False, error=f"{type(exc).__name__}: {exc}",
                                       numerical=True)
            except RiccilabError as exc:
                log.warning("%s: %s", key, exc)
                out[key] = Certificate(False, error=f"{type(exc).__name__}: {exc}")
        return out

    def _c_flow(self):
        t = self.cfg.tolerances.flow
        g0 = self.base_flow
        vals = [flow_residual(g0, float(s)).value for s in np.linspace(0.0, 1.0, 5)]
        J = self.spliced.junctions
        mids = [0.5 * (J[i - 1] + J[i]) for i in range(1, min(6, J.size))]
        vals_s = [flow_residual(self.spliced, float(s)).value for s in mids]
        worst = max(vals + vals_s)
        return Certificate(worst <= t, worst, t, {"g0": max(vals), "spliced": max(vals_s)})

    def _c_breather(self):
        b = self.breather
        return Certificate(b.certified, b.residual, b.tolerance)

    def _c_lbound(self):
        t = self.cfg.tolerances
        lb = np.asarray(self.lbounds)
        l = np.asarray(self.l_at_bases)
        C2 = float(np.max(lb))
        half = max(1, l.size // 2)
        ratio = float(np.max(l) / np.max(l[:half]))
        # on the sphere the constant test curve is the minimiser, so equality is expected
        below = bool(np.all(l <= lb * (1 + 1e-9)) and np.all(l <= C2 * (1 + 1e-9)))
        return Certificate(below and ratio <= t.lbound_ratio, float(np.max(l)), C2,
                           {"C2": C2, "ratio": ratio, "ratio_tol": t.lbound_ratio,
                            "stages": int(l.size)})

    @cached_property
    def _identity(self):
        return identity_residuals(self.lattice_field).worst()

    def _c_identity(self, key):
        t = self.cfg.tolerances.identity
        v = self._identity[key]
        if key == "res1":
            ok = v <= t
        elif key == "res2_min":
            ok = v >= -t
        else:
            ok = v <= t
        return Certificate(bool(ok), v, t, {"nodes": int(self.lattice_field.x.size),
                                            "smooth": int(np.sum(self.lattice_field.smooth))})

    def _c_grad(self):
        f = self.lattice_field
        s = f.smooth
        err = float(np.max(np.abs(f.grad_fd[s] - f.grad[s])))
        t = self.cfg.tolerances.grad
        return Certificate(err <= t, err, t)

    def _c_rvol_bound(self):
        t = self.cfg.tolerances.rvol_bound
        s = self.base_series
        vals = list(s.V) + [row[2] for row in self.stage_volume_rows]
        vmax = float(max(vals))
        ok = vmax <= 1 + t and min(vals) > 0
        return Certificate(bool(ok), vmax, 1 + t)

    def _c_monotone(self):
        t = self.cfg.tolerances
        rep = monotonicity_certificate(self.base_series, t.monotone, t.rvol_bound)
        ups = [rep.max_uphill]
        rows = self.stage_volume_rows
        for i in sorted({r[0] for r in rows}):
            V = [r[2] for r in rows if r[0] == i]
            if len(V) > 1:
                ups.append(max(0.0, float(np.max(np.diff(V)))))
        worst = max(ups)
        return Certificate(worst <= t.monotone, worst, t.monotone,
                           {"base_series": rep.max_uphill})

    @cached_property
    def _witnesses(self):
        C2 = float(np.max(self.lbounds))
        return [local_bound_witness(s, r, C2, self.cfg.blowdown.eps)
                for s, r in zip(self.stage_list, self.stage_fields)]

    def _c_witness(self, which):
        t = self.cfg.tolerances.witness_spread
        ws = self._witnesses
        Cs = np.array([w.C for w in ws])
        meas = np.array([getattr(w, which) for w in ws])
        spread = float(Cs.max() / Cs.min() - 1.0)
        ok = bool(np.all(meas <= Cs) and spread <= t)
        return Certificate(ok, float(np.max(meas)), float(Cs.min()),
                           {"stages": list(self.stages), "C": Cs.tolist(),
                            "measured": meas.tolist(), "spread": spread,
                            "spread_tol": t})

    def _c_weighted(self):
        ws = [weighted_gradient_bound(s, 1.0, nodes=self.cfg.rvol.nodes,
                                      cutoff_level=self.cfg.rvol.cutoff)
              for s in self.stage_list]
        C0 = ws[0].C0
        ok = all(w.passed for w in ws)
        return Certificate(ok, max(w.value for w in ws), C0,
                           {"values": [w.value for w in ws], "bounds": [w.bound for w in ws]})

    def _maxima(self, name):
        return [r.max_abs(name) for r in self.stage_fields]

    def _c_soliton(self):
        t = self.cfg.tolerances
        series = {k: self._maxima(k) for k in ("soliton", "v", "v_evolution", "lll1", "lll2")}
        trends = {k: _trend(v, t.trend_floor) for k, v in series.items()}
        final = max(series["soliton"][-1], series["v"][-1])
        ok = all(trends.values()) and final <= t.final_residual
        return Certificate(ok, final, t.final_residual,
                           {"stages": list(self.stages), "maxima": series, "trends": trends})

    def _c_conjheat(self):
        t = self.cfg.tolerances
        vals = self._maxima("conjheat")
        ok = _trend(vals, t.trend_floor) and vals[-1] <= t.final_residual
        return Certificate(ok, vals[-1], t.final_residual,
                           {"stages": list(self.stages), "maxima": vals})

    def _c_vsign(self):
        t = self.cfg.tolerances.v_sign
        vmax = max(float(np.max(r.v[r.smooth])) for r in self.stage_fields)
        return Certificate(vmax <= t, vmax, t)

    def _c_density(self):
        t = self.cfg.tolerances.density
        stages = self.density_stage_list
        r = self.cfg.rvol
        vals = [reduced_volume(s.flow, 1.0, solver=s.solver, nodes=r.nodes,
                               cutoff_level=r.cutoff).V for s in stages]
        kind = self.spliced.kind
        if kind not in ("flat", "round"):
            return Certificate(False, error="no limit density for profile splices")
        d = gaussian_density_limit([s.i for s in stages], vals, [s.tau_i for s in stages],
                                   kind=kind, n=self.spliced.n, flat_tol=t)
        ok = (d.verdict == "converged" and abs(d.fatou_gap) <= t
              and d.static_euclidean == (kind == "flat"))
        return Certificate(ok, d.V_inf, t,
                           {"verdict": d.verdict, "static_euclidean": d.static_euclidean,
                            "soliton_density": d.soliton_density, "gap": d.fatou_gap,
                            "stages": list(d.stages), "values": list(d.values)})

    def write_verdict(self, out: Path, certs: dict):
        write_json(out / "verdict.json", {k: certs[k].as_dict() for k in VERDICT_KEYS})
