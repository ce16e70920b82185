"""Experiment plans over the library API and their run configuration.

Each experiment returns an :class:`ExperimentResult` holding CSV rows, named
assertions and the cutoff deltas used to accept its numbers. No physics lives
here beyond wiring.
"""

from __future__ import annotations

import random
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable, Optional

import numpy as np

from .basis import PhononBasis, all_sectors, enumerate_sector, phonon_truncation_series, sector_range
from .diagnostics import (
    ConeBasis,
    correlation_signs,
    ergodicity_certificate,
    ground_multiplet_spin,
    positivity_audit,
)
from .lattice import (
    AssumptionViolation,
    LatticeGraph,
    ModelParams,
    check_biconnected_not_long_loop,
    check_connected,
    from_edges,
    parse_generator,
    uniform_onsite,
)
from .operators import build_H, build_H_tilde, build_NT_hamiltonian
from .spectral import ground_states, magnetization_from_spectra, sector_spectra
from .strong_coupling import (
    decompose,
    effective_hamiltonian,
    j_sweep,
    nt_label_basis,
    nt_unitary_check,
    separation_coefficient,
)

EXPERIMENTS = ("ground-state", "correlations", "j-sweep", "nt-check", "magnetization", "positivity", "ergodicity")


class ConfigError(ValueError):
    """The configuration does not parse or is internally inconsistent."""


# -- configuration -------------------------------------------------------------


@dataclass
class RunConfig:
    lattice: LatticeGraph
    params: ModelParams
    cutoffs: list
    policy: str = "total"
    experiment: Optional[str] = None
    options: dict = field(default_factory=dict)
    seed: int = 0
    output: Optional[str] = None
    raw: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.lattice.site_count

    def phonon_series(self) -> list[PhononBasis]:
        return phonon_truncation_series(self.cutoffs, self.n, self.policy)

    def option(self, key: str, default=None):
        return self.options.get(key, default)


_TOP_KEYS = {"experiment", "lattice", "params", "coupling", "phonons", "options", "seed", "output"}


def _lattice_from(spec: Any) -> LatticeGraph:
    if isinstance(spec, str):
        return parse_generator(spec)
    if not isinstance(spec, dict):
        raise ConfigError("lattice must be a generator string or an object")
    t = float(spec.get("t", 1.0))
    if "generator" in spec:
        return parse_generator(spec["generator"], t)
    if "edges" in spec and "sites" in spec:
        return from_edges(int(spec["sites"]), spec["edges"], t, name="edges")
    raise ConfigError("lattice needs 'generator' or 'sites' + 'edges'")


def _coupling_from(spec: Any, n: int) -> Optional[np.ndarray]:
    if spec is None:
        return None
    if isinstance(spec, (int, float)):
        return uniform_onsite(n, float(spec))
    if isinstance(spec, dict) and "uniform_onsite" in spec:
        return uniform_onsite(n, float(spec["uniform_onsite"]))
    if isinstance(spec, str) and spec.startswith("uniform-onsite(") and spec.endswith(")"):
        return uniform_onsite(n, float(spec[len("uniform-onsite(") : -1]))
    g = np.asarray(spec, dtype=float)
    if g.shape != (n, n):
        raise ConfigError(f"coupling matrix must be {n}x{n}")
    return g


def parse_config(raw: dict) -> RunConfig:
    """Validate a JSON document. Assumption violations propagate as such."""
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    unknown = set(raw) - _TOP_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    if "lattice" not in raw:
        raise ConfigError("config needs a 'lattice'")
    try:
        g = _lattice_from(raw["lattice"])
        p = dict(raw.get("params", {}))
        extra = set(p) - {"J", "h", "omega"}
        if extra:
            raise ConfigError(f"unknown params: {sorted(extra)}")
        params = ModelParams(
            J=float(p.get("J", 1.0)), h=float(p.get("h", 0.0)), omega=float(p.get("omega", 1.0)),
            coupling=_coupling_from(raw.get("coupling"), g.site_count),
        )
        ph = raw.get("phonons", {})
        cutoffs = list(ph.get("cutoffs", [0]))
        policy = ph.get("policy", "total")
        phonon_truncation_series(cutoffs, g.site_count, policy)
        options = dict(raw.get("options", {}))
        for key, val in options.items():
            if "tol" in key and not float(val) > 0:
                raise ConfigError(f"tolerance {key} must be positive")
        exp = raw.get("experiment")
        if exp is not None and exp not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {exp!r}")
        return RunConfig(g, params, cutoffs, policy, exp, options, int(raw.get("seed", 0)), raw.get("output"), raw)
    except AssumptionViolation:
        raise
    except ConfigError:
        raise
    except (TypeError, ValueError, KeyError) as err:
        raise ConfigError(str(err)) from err


def check_assumptions(cfg: RunConfig, experiment: str) -> None:
    """(A.1) is enforced by the lattice; (A.2) and (A.3) per experiment."""
    needs_a3 = experiment == "magnetization" or (experiment == "ground-state" and cfg.option("model") == "nt")
    if not check_connected(cfg.lattice):
        raise AssumptionViolation("(A.2)", f"{cfg.lattice.name} is not connected")
    if needs_a3 and not check_biconnected_not_long_loop(cfg.lattice):
        raise AssumptionViolation("(A.3)", f"{cfg.lattice.name} is not biconnected or is a loop on more than four sites")


# -- results -------------------------------------------------------------------


@dataclass
class ExperimentResult:
    name: str
    columns: list
    rows: list
    assertions: dict = field(default_factory=dict)
    summary: dict = field(default_factory=dict)
    cutoff_deltas: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(self.assertions.values())


def parallel_map(fn: Callable, items, threads: int = 1) -> list:
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def _expected_spin(cfg: RunConfig, model: str) -> tuple[int, float]:
    n = cfg.n
    if model == "nt" or cfg.params.J > 0:
        return n, (n - 1) / 2
    return n + 2, (n + 1) / 2


# -- experiments ---------------------------------------------------------------


def ground_state(cfg: RunConfig, threads: int = 1) -> ExperimentResult:
    model = cfg.option("model", "kondo")
    gap_tol = float(cfg.option("gap_tol", 1e-6))
    spin_tol = float(cfg.option("spin_tol", 1e-6))
    energy_tol = float(cfg.option("energy_tol", 1e-4))
    deg_want, S_want = _expected_spin(cfg, model)
    deg_want = int(cfg.option("expected_degeneracy", deg_want))
    S_want = float(cfg.option("expected_spin", S_want))
    b_matrix = cfg.lattice.hopping * float(cfg.option("b_scale", 0.5))
    rows, deltas, ok_deg, ok_spin = [], [], True, True
    prev = None
    for ph in cfg.phonon_series():
        kind = "nt" if model == "nt" else "kondo"

        def block(basis):
            if kind == "nt":
                return basis, build_NT_hamiltonian(basis, cfg.lattice, cfg.params, b_matrix)
            return basis, build_H(basis, cfg.lattice, cfg.params)

        blocks = parallel_map(block, all_sectors(cfg.lattice, ph, kind), threads)
        rep = ground_multiplet_spin(blocks, gap_tol=gap_tol)
        dE = None if prev is None else rep.ground_energy - prev
        prev = rep.ground_energy
        if dE is not None:
            deltas.append({"cutoff": ph.label, "delta_E": dE})
        ok_deg &= rep.degeneracy == deg_want
        ok_spin &= max(abs(s2 - S_want * (S_want + 1)) for s2 in rep.s2_values) < spin_tol
        rows.append({
            "cutoff": ph.label, "ground_energy": rep.ground_energy, "delta_E": dE, "degeneracy": rep.degeneracy,
            "S": rep.S, "gap": rep.gap,
            "sectors": ";".join(f"{M:g}:{c}" for M, c in sorted(rep.sectors.items())),
        })
    assertions = {"degeneracy": ok_deg, "spin": ok_spin}
    if deltas:
        assertions["energy_converged"] = abs(deltas[-1]["delta_E"]) < energy_tol
    cols = ["cutoff", "ground_energy", "delta_E", "degeneracy", "S", "gap", "sectors"]
    return ExperimentResult("ground-state", cols, rows, assertions,
                            {"degeneracy": rows[-1]["degeneracy"], "S": rows[-1]["S"], "model": model}, deltas)


def correlations(cfg: RunConfig, threads: int = 1) -> ExperimentResult:
    ph = cfg.phonon_series()[-1]
    n = cfg.n
    Ms = cfg.option("M", [m for m in sector_range(n) if abs(m) <= (n - 1) / 2])
    rows = []

    def one(M):
        basis = enumerate_sector(cfg.lattice, M, ph)
        res = ground_states(build_H(basis, cfg.lattice, cfg.params), min(2, basis.dim))
        return M, correlation_signs(res.eigenvectors[:, 0], basis, cfg.params.J)

    for M, entries in parallel_map(one, Ms, threads):
        for e in entries:
            rows.append({
                "M": M, "x": e.x, "y": e.y, "operator": e.operator, "re": e.value.real, "im": e.value.imag,
                "expected": e.expected, "classification": e.classification, "match": e.matches,
            })
    indet = sum(r["classification"] == "indeterminate" for r in rows)
    return ExperimentResult(
        "correlations", ["M", "x", "y", "operator", "re", "im", "expected", "classification", "match"], rows,
        {"signs": all(r["match"] for r in rows)}, {"entries": len(rows), "indeterminate": indet, "cutoff": ph.label},
    )


def j_sweep_experiment(cfg: RunConfig, threads: int = 1) -> ExperimentResult:
    J_list = [float(j) for j in cfg.option("J_list", [10 * 2**k for k in range(8)])]
    kappa = float(cfg.option("kappa", 10.0))
    M = cfg.option("M")
    rows, assertions, deltas = [], {}, []
    prev = None
    for ph in cfg.phonon_series():
        basis = enumerate_sector(cfg.lattice, M, ph)
        sweep = j_sweep(basis, cfg.lattice, cfg.params, J_list, kappa)
        gaps = np.array([r.gap for r in sweep])
        for r in sweep:
            rows.append({
                "J": r.J, "gap": r.gap, "separation_energy": r.separation_energy, "cutoff": r.cutoff,
                "z_imag": r.z.imag, "norm_H01": r.norm_H01, "hermiticity_defect": r.hermiticity_defect,
            })
        if prev is not None:
            deltas.append({"cutoff": ph.label, "max_delta_gap": float(np.max(np.abs(gaps - prev)))})
        prev = gaps
    assertions["monotone"] = bool(np.all(np.diff(prev) <= 1e-12 * prev[:-1]))
    if len(prev) > 1:
        assertions["decay"] = bool(prev[-1] < prev[0] / float(cfg.option("decay_factor", 50.0)))
        ratio = prev[-1] / prev[-2]
        lo, hi = cfg.option("ratio_window", [0.4, 0.6])
        assertions["ratio"] = bool(lo <= ratio <= hi)
    cols = ["J", "gap", "separation_energy", "cutoff", "z_imag", "norm_H01", "hermiticity_defect"]
    return ExperimentResult("j-sweep", cols, rows, assertions,
                            {"final_ratio": float(prev[-1] / prev[-2]) if len(prev) > 1 else None,
                             "separation_coefficient": separation_coefficient()}, deltas)


def nt_check(cfg: RunConfig, threads: int = 1) -> ExperimentResult:
    tol = float(cfg.option("defect_tol", 1e-10))
    control_scale = float(cfg.option("control_b_scale", 1.0 / 3.0))
    density = cfg.option("density", "electron")
    rows = []
    for ph in cfg.phonon_series():
        for basis in all_sectors(cfg.lattice, ph):
            if abs(basis.M) > (cfg.n - 1) / 2:
                continue
            H_inf = effective_hamiltonian(decompose(basis, cfg.lattice, cfg.params))
            nb = nt_label_basis(basis)
            rows.append({
                "cutoff": ph.label, "M": basis.M,
                "defect": nt_unitary_check(H_inf, nb, cfg.lattice, cfg.params, density=density),
                "defect_hole_density": nt_unitary_check(H_inf, nb, cfg.lattice, cfg.params, density="hole"),
                "control_defect": nt_unitary_check(H_inf, nb, cfg.lattice, cfg.params,
                                                   cfg.lattice.hopping * control_scale, density=density),
            })
    cols = ["cutoff", "M", "defect", "defect_hole_density", "control_defect"]
    return ExperimentResult("nt-check", cols, rows, {
        "equivalence": all(r["defect"] < tol for r in rows),
        "negative_control": all(r["control_defect"] > 1e-3 for r in rows),
    }, {"max_defect": max(r["defect"] for r in rows), "density": density})


def magnetization_experiment(cfg: RunConfig, threads: int = 1) -> ExperimentResult:
    betas = [float(b) for b in cfg.option("beta", [0.5, 1.0, 2.0])]
    hs = [float(h) for h in cfg.option("h", [0.1, 0.5, 1.0])]
    conv_tol = float(cfg.option("convergence_tol", 1e-4))
    b_matrix = cfg.lattice.hopping * float(cfg.option("b_scale", 0.5))
    params0 = cfg.params.replace(h=0.0)
    n = cfg.n
    rows, deltas = [], []
    prev = None
    deriv_ok = True
    for ph in cfg.phonon_series():
        spectra = sector_spectra(
            parallel_map(lambda b: (b.M, build_NT_hamiltonian(b, cfg.lattice, params0, b_matrix)),
                         all_sectors(cfg.lattice, ph, "nt"), threads)
        )
        vals = {}
        for beta in betas:
            for h in hs:
                r = magnetization_from_spectra(spectra, beta, h)
                vals[(beta, h)] = r.magnetization
                deriv_ok &= abs(r.derivative_check - r.magnetization) <= 1e-6 * max(1.0, abs(r.magnetization))
                d = None if prev is None else r.magnetization - prev[(beta, h)]
                rows.append({
                    "beta": beta, "h": h, "cutoff": ph.label, "magnetization": r.magnetization,
                    "bound": (n - 1) * np.tanh(beta * h), "delta": d, "derivative_check": r.derivative_check,
                })
        if prev is not None:
            deltas.append({"cutoff": ph.label, "max_delta_M": max(abs(vals[k] - prev[k]) for k in vals)})
        prev = vals
        last_spectra = spectra
    final = [r for r in rows if r["cutoff"] == cfg.phonon_series()[-1].label]
    assertions = {
        "bound": all(r["magnetization"] >= r["bound"] - 1e-8 for r in final),
        "derivative": deriv_ok,
    }
    if deltas:
        assertions["converged"] = deltas[-1]["max_delta_M"] < conv_tol
    sat = cfg.option("saturation")
    summary = {}
    if sat is not None:
        m_sat = magnetization_from_spectra(last_spectra, float(sat.get("beta", 50.0)), float(sat.get("h", 1.0)))
        summary["saturation"] = m_sat.magnetization
        assertions["saturation"] = abs(m_sat.magnetization - (n - 1)) < float(sat.get("tol", 1e-3))
    cols = ["beta", "h", "cutoff", "magnetization", "bound", "delta", "derivative_check"]
    return ExperimentResult("magnetization", cols, rows, assertions, summary, deltas)


def positivity(cfg: RunConfig, threads: int = 1) -> ExperimentResult:
    betas = [float(b) for b in cfg.option("beta", [0.5, 1.0, 2.0])]
    g_zero = not np.any(cfg.params.g(cfg.n))
    representation = cfg.option("representation", "fock_g0" if g_zero else "position_grid")
    ph = cfg.phonon_series()[-1]
    rows, passed = [], True
    for basis in all_sectors(cfg.lattice, ph):
        cone = ConeBasis.build(basis, representation, cfg.params)
        rep = positivity_audit(build_H_tilde(basis, cfg.lattice, cfg.params), cone, betas)
        passed &= rep.passed
        for i, beta in enumerate(betas):
            rows.append({
                "M": basis.M, "beta": beta, "representation": representation, "offdiag_max": rep.offdiag_max,
                "check_a": rep.check_a, "heat_min_rel": rep.heat_min[i], "check_b": rep.check_b[i],
                "check_c": rep.check_c[i], "ground_min_rel": rep.ground_min, "check_d": rep.check_d,
            })
    cols = ["M", "beta", "representation", "offdiag_max", "check_a", "heat_min_rel", "check_b", "check_c",
            "ground_min_rel", "check_d"]
    return ExperimentResult("positivity", cols, rows, {"audit": passed}, {"representation": representation})


def ergodicity(cfg: RunConfig, threads: int = 1) -> ExperimentResult:
    trials = int(cfg.option("trials", 100))
    rng = random.Random(cfg.seed)
    sectors = {b.twice_m: b for b in all_sectors(cfg.lattice)}
    states = [s for b in sectors.values() for s in b.electron_states]
    J = abs(cfg.params.J) or 1.0
    rows = []
    for _ in range(trials):
        src = rng.choice(states)
        basis = sectors[src.twice_m(cfg.n)]
        tgt = rng.choice(basis.electron_states)
        cert = ergodicity_certificate(src, tgt, cfg.lattice, basis, J)
        rows.append({
            "source": f"{src.x}:{src.spin:+d}:{src.fconfig}", "target": f"{tgt.x}:{tgt.spin:+d}:{tgt.fconfig}",
            "steps": " ".join(f"{s.kind}{s.sites}".replace(" ", "") for s in cert.steps),
            "value": cert.value, "expected": cert.expected, "positive": cert.positive,
        })
    cols = ["source", "target", "steps", "value", "expected", "positive"]
    return ExperimentResult("ergodicity", cols, rows, {"certificates": all(r["positive"] for r in rows)},
                            {"trials": trials, "seed": cfg.seed})


RUNNERS = {
    "ground-state": ground_state,
    "correlations": correlations,
    "j-sweep": j_sweep_experiment,
    "nt-check": nt_check,
    "magnetization": magnetization_experiment,
    "positivity": positivity,
    "ergodicity": ergodicity,
}
