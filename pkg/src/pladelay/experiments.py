"""Scenario assembly: from a :class:`ScenarioFile` to bounds, rates and simulations."""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Optional

import numpy as np

from . import snc
from .attacks import FrameResourceModel, disassoc_block_prob, sybil_success_dist, tagged_schedule
from .channel import Deployment, db_to_linear, device_stats, position_from_polar, snr_moments
from .config import ConfigError, ScenarioFile, build_deployment, validate
from .pla import (
    PlaDecisionModel,
    false_alarm_rate,
    impersonation_params,
    md_l2_bounds,
    missed_detection_rate,
    chernoff_pd,
)
from .sim import SimConfig, detection_mc, run_replications

DELAY_COLUMNS = ("sweep_var", "w_epsilon", "bound_at_w", "s_star", "stable", "sim_p", "sim_ci")
DETECT_COLUMNS = (
    "sweep_var",
    "device_id",
    "p_fa",
    "p_md",
    "chernoff_pd",
    "md_l2_lower",
    "md_l2_upper",
    "mc_estimate",
    "mc_stderr",
)


@dataclass
class Experiment:
    """Derived objects for one scenario; everything is computed lazily."""

    scenario: ScenarioFile

    def __post_init__(self):
        errors = validate(self.scenario, getattr(self.scenario, "_lines", None), self.deployment.ids)
        if errors:
            raise ConfigError(errors)
        FrameResourceModel(self.scenario.n_frame, tuple(self.scenario.active), tuple(self.sybil_ids))

    @cached_property
    def deployment(self) -> Deployment:
        return build_deployment(self.scenario.deployment)

    @property
    def n_rx(self) -> int:
        return self.deployment.array.n_rx

    @cached_property
    def pla(self) -> PlaDecisionModel:
        spec = self.scenario.pla
        if not spec.enabled:
            return PlaDecisionModel.disabled(self.n_rx)
        if spec.threshold is not None:
            return PlaDecisionModel(spec.threshold, self.n_rx)
        return PlaDecisionModel.from_false_alarm(spec.p_fa, self.n_rx)

    @cached_property
    def protected_pla(self) -> PlaDecisionModel:
        """The PLA setting of the scenario even when it is switched off."""
        spec = self.scenario.pla
        if spec.threshold is not None:
            return PlaDecisionModel(spec.threshold, self.n_rx)
        return PlaDecisionModel.from_false_alarm(spec.p_fa, self.n_rx)

    def stats(self, device_id):
        return self.deployment.stats(device_id)

    @cached_property
    def attacker(self):
        eve = self.scenario.attack.eve
        dep = self.deployment
        k_e = dep.rice_k if eve.rice_k_db is None else db_to_linear(eve.rice_k_db)
        if eve.device is not None:
            pos = dep.devices[eve.device]
        elif eve.position is not None:
            pos = tuple(eve.position)
        elif eve.distance is not None:
            pos = position_from_polar(eve.distance, eve.aoa, dep.array)
        elif dep.attacker is not None:
            pos, k_e = dep.attacker.position, dep.attacker.rice_k
        else:
            return None
        return device_stats(pos, k_e, dep.array, dep.pathloss, dep.corr)

    @cached_property
    def sybil_pool(self) -> list:
        """Inactive ids Eve may claim, in deployment order (her own id excluded)."""
        sc = self.scenario
        if sc.attack.sybil_ids is not None:
            return list(sc.attack.sybil_ids)
        skip = set(sc.active) | ({sc.attack.eve.device} if sc.attack.eve.device else set())
        return [d for d in self.deployment.ids if d not in skip]

    @property
    def sybil_ids(self) -> list:
        if self.scenario.attack.type != "sybil":
            return []
        n = self.scenario.attack.n_sybil
        if n > len(self.sybil_pool):
            raise ConfigError([{"field": "attack.n_sybil", "line": None, "message": f"only {len(self.sybil_pool)} Sybil ids available"}])
        return self.sybil_pool[:n]

    def sybil_md_rates(self, ids, pla: PlaDecisionModel) -> list:
        if not pla.enabled:
            return [1.0] * len(ids)
        return [missed_detection_rate(pla.threshold, impersonation_params(self.stats(j), self.attacker)) for j in ids]

    @cached_property
    def snr_law(self):
        st = self.stats(self.scenario.target)
        moments = snr_moments(st, exact=self.scenario.snc.variance == "exact")
        return snc.snr_law(moments, offset_variant=self.scenario.snc.moment_match == "offset")

    def service(self, pla: PlaDecisionModel, sybil_ids=()) -> snc.ServiceModel:
        sybil_pmf = sybil_success_dist(self.sybil_md_rates(sybil_ids, pla)) if sybil_ids else None
        sched = tagged_schedule(len(self.scenario.active), pla.p_fa, sybil_pmf, self.scenario.n_frame)
        return snc.ServiceModel(pla.p_fa, sched.nk_pmf, self.snr_law)

    @cached_property
    def point_service(self) -> snc.ServiceModel:
        return self.service(self.pla, self.sybil_ids)

    @cached_property
    def alpha(self) -> float:
        spec = self.scenario.snc
        if spec.alpha is not None:
            return spec.alpha
        if spec.u_reference == "point":
            ref = self.point_service
        elif spec.u_reference == "protected-full-attack":
            ref = self.service(self.protected_pla, self.sybil_pool if self.scenario.attack.type == "sybil" else ())
        else:
            ref = self.service(self.pla)
        return snc.utilization_arrival_rate(spec.u, ref)

    @cached_property
    def attack_success(self) -> float:
        """Per-attack disassociation success probability used by the bound."""
        if not self.pla.enabled:
            return 0.5
        params = impersonation_params(self.stats(self.scenario.target), self.attacker)
        return md_l2_bounds(self.pla.threshold, params)[1]

    @cached_property
    def p_block(self) -> float:
        a = self.scenario.attack
        return disassoc_block_prob(self.attack_success, a.p_attack, a.k_rc)

    @cached_property
    def snc_scenario(self) -> snc.SncScenario:
        if self.scenario.attack.type == "disassociation":
            return snc.disassoc_scenario(self.point_service, self.alpha, self.p_block, self.scenario.attack.k_rc)
        return snc.baseline_scenario(self.point_service, self.alpha, name=self.scenario.attack.type)

    @cached_property
    def kernel_table(self) -> snc.KernelTable:
        return snc.KernelTable(self.snc_scenario)

    def bound_frames(self, w_frames) -> snc.DelayBoundResult:
        """Bound on ``P(W > w)`` with ``w`` in frames (rounded down to whole kernel steps)."""
        step = self.snc_scenario.timescale
        return self.kernel_table.bound(math.floor(w_frames / step))

    def delay_guarantee(self) -> float:
        return snc.delay_guarantee(self.scenario.snc.epsilon, self.snc_scenario, self.kernel_table)

    def sim_config(self, seed: Optional[int] = None) -> SimConfig:
        sc = self.scenario
        kind = sc.attack.type
        if not self.pla.enabled and kind in ("baseline", "disassociation"):
            kind = "no-pla-" + kind
        return SimConfig(
            scenario=kind,
            tagged=self.stats(sc.target),
            alpha=self.alpha,
            threshold=self.pla.threshold,
            n_active=len(sc.active),
            n_frame=sc.n_frame,
            n_frames=sc.sim.frames,
            warmup=sc.sim.warmup,
            seed=sc.sim.seed if seed is None else seed,
            sybil=tuple(self.stats(j) for j in self.sybil_ids),
            attacker=self.attacker,
            p_attack=sc.attack.p_attack,
            k_rc=sc.attack.k_rc,
            max_w=sc.sim.max_w,
        )

    def simulate(self, seed: Optional[int] = None):
        return run_replications(self.sim_config(seed), self.scenario.sim.replications)


def delay_row(scenario: ScenarioFile, sweep_value=None, seed: Optional[int] = None) -> dict:
    """One ``delay`` CSV row for a scenario (already carrying any sweep override)."""
    ex = Experiment(scenario)
    w_eps = ex.delay_guarantee()
    res = ex.bound_frames(scenario.snc.w)
    row = {
        "sweep_var": sweep_value,
        "w_epsilon": w_eps,
        "bound_at_w": res.bound,
        "s_star": res.s_star,
        "stable": res.stable,
        "sim_p": None,
        "sim_ci": None,
    }
    if scenario.sim.enabled:
        trace = ex.simulate(seed)
        w = min(int(scenario.snc.w), scenario.sim.max_w)
        row["sim_p"] = float(trace.empirical_p[w])
        row["sim_ci"] = float(trace.ci_halfwidth[w])
    return row


def detect_rows(scenario: ScenarioFile, sweep_value=None, seed: Optional[int] = None) -> list:
    """``detect`` CSV rows, one per target device."""
    ex = Experiment(scenario)
    if ex.attacker is None:
        raise ConfigError([{"field": "attack.eve", "line": None, "message": "detection needs an attacker"}])
    pla = ex.protected_pla if not scenario.pla.enabled else ex.pla
    targets = scenario.detect.targets or [scenario.target]
    seeds = np.random.SeedSequence(scenario.sim.seed if seed is None else seed).spawn(len(targets))
    rows = []
    for dev, ss in zip(targets, seeds):
        legit = ex.stats(dev)
        params = impersonation_params(legit, ex.attacker)
        lower, upper = md_l2_bounds(pla.threshold, params)
        mc = detection_mc(legit, pla.threshold, scenario.detect.mc_samples, np.random.default_rng(ss), ex.attacker)
        key = "p_md_l2" if scenario.detect.mc_metric == "md_l2" else "p_md"
        rows.append(
            {
                "sweep_var": sweep_value,
                "device_id": dev,
                "p_fa": false_alarm_rate(pla.threshold, pla.n_rx),
                "p_md": missed_detection_rate(pla.threshold, params),
                "chernoff_pd": chernoff_pd(params),
                "md_l2_lower": lower,
                "md_l2_upper": upper,
                "mc_estimate": mc[key].estimate,
                "mc_stderr": mc[key].std_error,
            }
        )
    return rows


def simulate_with_bound(scenario: ScenarioFile, seed: Optional[int] = None):
    """Simulated violation curve and the matching analytical bound per ``w``."""
    ex = Experiment(scenario)
    trace = ex.simulate(seed)
    bound = np.array([ex.bound_frames(w).bound for w in trace.w])
    return trace, bound
