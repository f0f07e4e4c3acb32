"""Configuration, orchestration, and reproducible outputs.

Four pipelines: `branch` (continuation + scaling fits), `evolve` (full NLS
with modulation tracking and decay fits), `linprobe` (linearized-propagator
decay probes), `appendix` (commutator/wave-operator bounds, envelopes, the
Fourier-L1 checks), plus `all`.

Config is INI-style key = value sections, one per module; every value can be
overridden on the command line with --override section.key=value. All
randomness flows from one seeded SplitMix64 generator recorded in the
manifest; a fixed seed reproduces outputs byte for byte. Every output file
carries the sha256 manifest hash of its resolved config.

Exit codes: 0 pass, 1 invariant failure, 2 config error.
"""
from __future__ import annotations

import argparse
import configparser
import hashlib
import json
import math
import os
import sys

import numpy as np

from nlslab.branch import (Branch, check_envelopes, fit_branch_scalings,
                           solve_branch_point, write_branch_csv)
from nlslab.dynamics import (AbsorberSpec, EvolverConfig, WindowNotFoundError,
                             evolve_nls, extract_asymptotics,
                             write_trajectory_csv)
from nlslab.grid import RadialField, RadialGrid
from nlslab.hamiltonian import (PotentialSpec, build_spectral,
                                project_continuous, tune_depth_one_bound_state)
from nlslab.nonlinearity import (FOURIER_CONVENTION, NonlinearitySpec,
                                 check_H2)
from nlslab.probes import (default_fit_window, fit_decay_exponent, jss_probe,
                           omega_decay_probe, predicted_exponents,
                           wave_operator_probe)
from nlslab.rng import SplitMix64


class ConfigError(ValueError):
    pass


DEFAULTS = {
    "grid": {"node_count": "2048", "radius_max": "120.0"},
    "potential": {"shape": "gaussian_well", "width": "2.0", "depth": "auto",
                  "fraction": "0.5"},
    "nonlinearity": {"alpha1": "1.0", "alpha2": "1.0", "lambda1": "-1.0",
                     "lambda2": "0.0"},
    "branch": {"a_min": "1e-3", "a_max": "1e-2", "count": "9"},
    "evolve": {"a0": "0.01", "epsilon": "0.01", "dt": "0.005",
               "t_final": "40.0", "record_stride": "50", "kinetic": "fd",
               "absorber": "off", "absorber_strength": "0.05",
               "absorber_onset": "auto", "perturbation_width": "2.5",
               "perturbation_center": "4.0", "snapshot_times": ""},
    "linprobe": {"kinds": "weighted,lp_lp,lq_l2", "p": "inf", "samples": "6",
                 "t_final": "40.0", "dt": "0.1", "branch_a": "0.01"},
    "appendix": {"t_max": "1.0", "samples": "100", "p_list": "2,4",
                 "envelope_a_factor": "0.9", "h2_alpha1_list": "0.3,1.0",
                 "branch_a": "0.01"},
    "run": {"seed": "12345", "outdir": "out"},
}


class RunConfig:
    """Resolved configuration with typed access and a canonical manifest."""

    def __init__(self, sections: dict):
        self.sections = sections

    @classmethod
    def load(cls, path: str | None, overrides=()) -> "RunConfig":
        sections = {s: dict(kv) for s, kv in DEFAULTS.items()}
        if path is not None:
            cp = configparser.ConfigParser()
            if not cp.read(path):
                raise ConfigError(f"config file {path!r} not readable")
            for s in cp.sections():
                if s not in sections:
                    raise ConfigError(f"unknown config section [{s}]")
                for k, v in cp.items(s):
                    if k not in sections[s]:
                        raise ConfigError(f"unknown key {k!r} in section [{s}]")
                    sections[s][k] = v
        for ov in overrides:
            try:
                key, value = ov.split("=", 1)
                sec, k = key.split(".", 1)
            except ValueError:
                raise ConfigError(f"override {ov!r} is not section.key=value")
            if sec not in sections or k not in sections[sec]:
                raise ConfigError(f"unknown override target {sec}.{k}")
            sections[sec][k] = value
        return cls(sections)

    def get(self, sec, key):
        return self.sections[sec][key]

    def getfloat(self, sec, key):
        try:
            return float(self.get(sec, key))
        except ValueError:
            raise ConfigError(f"{sec}.{key} = {self.get(sec, key)!r} is not a number")

    def getint(self, sec, key):
        try:
            return int(self.get(sec, key))
        except ValueError:
            raise ConfigError(f"{sec}.{key} = {self.get(sec, key)!r} is not an integer")

    def getlist(self, sec, key):
        raw = self.get(sec, key).strip()
        return [x.strip() for x in raw.split(",") if x.strip()] if raw else []

    def manifest(self) -> dict:
        return {"config": self.sections, "fourier_convention": FOURIER_CONVENTION}

    def manifest_hash(self) -> str:
        # the output directory is plumbing, not physics: runs into different
        # directories with the same config and seed hash identically
        cfg = {s: {k: v for k, v in kv.items() if (s, k) != ("run", "outdir")}
               for s, kv in self.sections.items()}
        blob = json.dumps({"config": cfg, "fourier_convention": FOURIER_CONVENTION},
                          sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


# -- shared construction -------------------------------------------------------

def _build_contexts(cfg: RunConfig):
    g = RadialGrid(cfg.getint("grid", "node_count"),
                   cfg.getfloat("grid", "radius_max"))
    shape = cfg.get("potential", "shape")
    width = cfg.getfloat("potential", "width")
    if cfg.get("potential", "depth") == "auto":
        pot = tune_depth_one_bound_state(g, width=width, shape=shape,
                                         fraction=cfg.getfloat("potential", "fraction"))
    else:
        pot = PotentialSpec(shape, cfg.getfloat("potential", "depth"), width)
    rho = pot.tail_fit_rho(g)
    if rho <= 3.0:
        raise ConfigError(f"potential tail exponent {rho:.2f} <= 3 violates (H1)(i)")
    S = build_spectral(pot, g)
    spec = NonlinearitySpec(cfg.getfloat("nonlinearity", "alpha1"),
                            cfg.getfloat("nonlinearity", "alpha2"),
                            cfg.getfloat("nonlinearity", "lambda1"),
                            cfg.getfloat("nonlinearity", "lambda2"))
    return g, pot, S, spec


def _write_json(path, payload, mhash):
    payload = dict(payload)
    payload["manifest"] = mhash
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=1, sort_keys=True, default=_json_default)
        fh.write("\n")


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, complex):
        return [o.real, o.imag]
    raise TypeError(f"not JSON serializable: {type(o)}")


def _outdir(cfg):
    out = cfg.get("run", "outdir")
    os.makedirs(out, exist_ok=True)
    return out


# -- pipelines -----------------------------------------------------------------

def run_branch(cfg: RunConfig) -> int:
    g, pot, S, spec = _build_contexts(cfg)
    out, mh = _outdir(cfg), cfg.manifest_hash()
    a_min, a_max = cfg.getfloat("branch", "a_min"), cfg.getfloat("branch", "a_max")
    count = cfg.getint("branch", "count")
    if not (0 < a_min < a_max) or count < 1:
        raise ConfigError("branch needs 0 < a_min < a_max and count >= 1")
    B = Branch(S, spec).compute(np.geomspace(a_min, a_max, count))
    scal = fit_branch_scalings(B)
    scal.update({
        "predicted_slope_E": 1.0 + spec.alpha1,
        "predicted_slope_h": 2.0 + spec.alpha1,
        "E0": S.ground_energy,
        "potential": pot.to_manifest(S.ground_energy),
        "nonlinearity": spec.to_manifest(),
    })
    write_branch_csv(B, os.path.join(out, "branch.csv"), mh)
    _write_json(os.path.join(out, "scalings.json"), scal, mh)
    bad = [abs(bp.a) for bp in B.points if bp.residual > 1e-10]
    if bad:
        print(f"branch: residual invariant failed at |a| in {bad}", file=sys.stderr)
        return 1
    print(f"branch: slopes E {scal['slope_E']:.3f} h {scal['slope_h']:.3f} "
          f"-> {out}/branch.csv")
    return 0


def _perturbation(g, S, rng, center, width, epsilon):
    u = np.exp(-(((g.r - center) / width) ** 2)).astype(complex)
    f = project_continuous(RadialField.from_u(g, u), S)
    f.w *= epsilon / g.l2_w(f.w)
    return f


def run_evolve(cfg: RunConfig) -> int:
    g, pot, S, spec = _build_contexts(cfg)
    out, mh = _outdir(cfg), cfg.manifest_hash()
    rng = SplitMix64(cfg.getint("run", "seed"))
    a0 = cfg.getfloat("evolve", "a0")
    eps = cfg.getfloat("evolve", "epsilon")
    bp = solve_branch_point(a0, S, spec)
    u0 = RadialField(g, bp.psi_E.w.copy())
    if eps > 0:
        pert = _perturbation(g, S, rng, cfg.getfloat("evolve", "perturbation_center"),
                             cfg.getfloat("evolve", "perturbation_width"), eps)
        u0.w += pert.w
    absorber = None
    if cfg.get("evolve", "absorber") == "cap":
        onset = cfg.get("evolve", "absorber_onset")
        absorber = AbsorberSpec(cfg.getfloat("evolve", "absorber_strength"),
                                None if onset == "auto" else float(onset))
    snaps = tuple(float(x) for x in cfg.getlist("evolve", "snapshot_times"))
    ecfg = EvolverConfig(dt=cfg.getfloat("evolve", "dt"),
                         t_final=cfg.getfloat("evolve", "t_final"),
                         absorber=absorber,
                         record_stride=cfg.getint("evolve", "record_stride"),
                         kinetic=cfg.get("evolve", "kinetic"),
                         snapshot_times=snaps)
    snapdir = os.path.join(out, "snapshots")
    if snaps:
        os.makedirs(snapdir, exist_ok=True)
    rec = evolve_nls(u0, ecfg, S, spec, snapshot_dir=snapdir if snaps else None)

    pred = predicted_exponents(spec)
    window = (5.0, min(0.6 * g.radius_max / 2.0, ecfg.t_final))
    fits = {"predicted": pred, "window": window, "gaps": rec.gaps}
    ok = rec.valid()
    for tag, series, target in (("p1", rec.eta_p1, pred["exp_p1"]),
                                ("p2", rec.eta_p2, pred["exp_p2"])):
        try:
            model = "power_log" if (tag == "p2" and pred["log_correction"]) else "power"
            fit = fit_decay_exponent(rec.times[ok], series[ok], window=window,
                                     model=model, predicted=target,
                                     case_label=pred["case_label"])
            fits[f"eta_{tag}"] = {"measured_exponent": fit.exponent,
                                  "predicted_exponent": target,
                                  "r_squared": fit.r_squared,
                                  "log_correction": fit.log_correction,
                                  "flagged": fit.flagged}
        except Exception as e:  # degenerate series (e.g. eps = 0)
            fits[f"eta_{tag}"] = {"error": str(e)}
    try:
        asym = extract_asymptotics(rec)
        fits["E_inf"] = asym["E_inf"]
        fits["theta_converged"] = asym["converged"]
    except WindowNotFoundError as e:
        fits["asymptotics_error"] = str(e)
    write_trajectory_csv(rec, os.path.join(out, "trajectory.csv"), mh)
    _write_json(os.path.join(out, "decay_fits.json"), fits, mh)

    status = 0
    if absorber is None:
        m = rec.mass
        drift = float(np.nanmax(np.abs(m - m[0])) / m[0])
        if drift > 1e-8:
            print(f"evolve: mass drift {drift:.2e} > 1e-8", file=sys.stderr)
            status = 1
    print(f"evolve: case {pred['case_label']}, fits -> {out}/decay_fits.json")
    return status


def run_linprobe(cfg: RunConfig) -> int:
    g, pot, S, spec = _build_contexts(cfg)
    out, mh = _outdir(cfg), cfg.manifest_hash()
    rng = SplitMix64(cfg.getint("run", "seed"))
    kinds = cfg.getlist("linprobe", "kinds")
    p_raw = cfg.get("linprobe", "p")
    p = math.inf if p_raw in ("inf", "infinity") else float(p_raw)
    ecfg = EvolverConfig(dt=cfg.getfloat("linprobe", "dt"),
                         t_final=cfg.getfloat("linprobe", "t_final"))
    branch_a = cfg.getfloat("linprobe", "branch_a")
    samples = cfg.getint("linprobe", "samples")
    reports = {}
    csv_lines = ["# manifest=" + mh, "kind,t,max_ratio"]
    status = 0
    for kind in kinds:
        rep, fit, ts, worst = omega_decay_probe(kind, p, samples, S, spec,
                                                branch_a, ecfg, rng.spawn())
        reports[kind] = {"report": rep.__dict__, "fit": fit.__dict__}
        for t, v in zip(ts, worst):
            csv_lines.append(f"{kind},{t:.6e},{v:.12e}")
        if kind == "lq_l2" and abs(fit.exponent) > 0.1:
            status = 1
        if kind in ("weighted", "lp_lp") and fit.flagged:
            status = 1
    with open(os.path.join(out, "omega_decay.csv"), "w") as fh:
        fh.write("\n".join(csv_lines) + "\n")
    _write_json(os.path.join(out, "probe_report.json"), reports, mh)
    print(f"linprobe: {', '.join(kinds)} -> {out}/probe_report.json")
    return status


def run_appendix(cfg: RunConfig) -> int:
    g, pot, S, spec = _build_contexts(cfg)
    out, mh = _outdir(cfg), cfg.manifest_hash()
    rng = SplitMix64(cfg.getint("run", "seed"))
    branch_a = cfg.getfloat("appendix", "branch_a")
    t_max = cfg.getfloat("appendix", "t_max")
    nsamp = cfg.getint("appendix", "samples")
    p_list = [float(x) for x in cfg.getlist("appendix", "p_list")]
    bp = solve_branch_point(branch_a, S, spec)
    status = 0

    W = RadialField(g, spec.gprime(np.abs(bp.psi_real) / g.r) * g.r)
    jss = jss_probe(W, t_max, p_list, S, rng.spawn(), sample_count=nsamp)
    wav = wave_operator_probe(t_max, p_list[-1], S, rng.spawn(), sample_count=nsamp)
    _write_json(os.path.join(out, "jss_report.json"),
                {"jss": jss.__dict__, "wave_operator": wav.__dict__}, mh)
    if jss.violations or wav.violations:
        status = 1

    env = check_envelopes(bp, A=cfg.getfloat("appendix", "envelope_a_factor")
                          * abs(bp.E))
    _write_json(os.path.join(out, "envelope_report.json"), env.__dict__, mh)
    if not (env.upper_ok and env.gradient_ok and env.lower_ok):
        status = 1

    h2 = {}
    for a1 in (float(x) for x in cfg.getlist("appendix", "h2_alpha1_list")):
        sp = NonlinearitySpec(a1, max(a1, spec.alpha2), spec.lambda1, spec.lambda2)
        bp1 = solve_branch_point(branch_a, S, sp)
        h2[f"alpha1={a1}"] = check_H2(RadialField(g, bp1.psi_real.astype(complex)), sp)
        if not h2[f"alpha1={a1}"]["finite"]:
            status = 1
    _write_json(os.path.join(out, "h2_report.json"), h2, mh)
    print(f"appendix: jss violations {jss.violations}, waveop {wav.violations}, "
          f"envelopes ok={env.upper_ok and env.gradient_ok and env.lower_ok} "
          f"-> {out}/")
    return status


PIPELINES = {"branch": run_branch, "evolve": run_evolve,
             "linprobe": run_linprobe, "appendix": run_appendix}


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="nlslab",
                                 description="ground-state NLS laboratory")
    ap.add_argument("command", choices=[*PIPELINES, "all"])
    ap.add_argument("--config", default=None, help="INI config path")
    ap.add_argument("--seed", type=int, default=None)
    ap.add_argument("--out", default=None, help="output directory")
    ap.add_argument("--override", action="append", default=[],
                    metavar="SEC.KEY=VALUE")
    args = ap.parse_args(argv)
    try:
        cfg = RunConfig.load(args.config, args.override)
        if args.seed is not None:
            cfg.sections["run"]["seed"] = str(args.seed)
        if args.out is not None:
            cfg.sections["run"]["outdir"] = args.out
        out = _outdir(cfg)
        _write_json(os.path.join(out, "manifest.json"), cfg.manifest(),
                    cfg.manifest_hash())
        if args.command == "all":
            return max(fn(cfg) for fn in PIPELINES.values())
        return PIPELINES[args.command](cfg)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except ValueError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
