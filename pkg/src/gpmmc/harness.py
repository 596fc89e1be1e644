"""Experiment harness: config files in, result files out.

A run writes into its output directory:

  histogram.csv   one row per (iteration, bin) with the weights in force,
                  the tallied counts, and the per-iteration density estimate;
                  the final iteration's rows are the run's result
  summary.json    scalar results and diagnostics, deterministic for a fixed
                  config and seed except for the runtime_seconds entry
  steps.csv       per-step kernel log (only when step logging is on)
  store.csv       the exact-evaluation store (surrogate runs only)

Config files are flat ``key = value`` text with ``#`` comments; see
CONFIG_KEYS for the schema. Identical config and seed reproduce identical
output files byte for byte, runtime_seconds aside.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .binning import Binning, Histogram
from .engine import (MmcConfig, MmcResult, PlainMcResult, estimate_moments,
                     run_mmc, run_plain_mc)
from .errors import ConfigError
from .gp import EvaluationStore, calibrate_lengthscales
from .mcmc import ExactKernel, Proposal
from .problem import EvalLedger, build_model, evaluate, sample_prior
from .surrogate import SurrogateKernel, SurrogateKernelConfig
from .benchmarks import pilot_output_range  # noqa: F401  (registers models)

__all__ = ["RunConfig", "parse_config", "run_experiment", "ComparisonReport",
           "compare_pdfs", "read_histogram_csv", "CONFIG_KEYS"]

_INT = "int"
_FLOAT = "float"
_BOOL = "bool"
_STR = "str"
_VEC = "vector"
_CENTERS = "centers"

CONFIG_KEYS = {
    # what to run
    "model": _STR,                  # min_distance | beam | poisson_kl
    "method": _STR,                 # mc | mmc | gpmmc
    "seed": _INT,                   # required
    "out": _STR,                    # output directory
    # output binning
    "bins": _INT,
    "range_lo": _FLOAT,
    "range_hi": _FLOAT,
    "range": _STR,                  # "auto": pilot-sample the output range
    # sampling effort
    "iterations": _INT,
    "samples_per_iteration": _INT,
    "burn_in": _INT,                # default: samples_per_iteration // 10
    "proposal_scale": _VEC,         # scalar or one value per coordinate
    "log_steps": _BOOL,
    # surrogate policy (gpmmc)
    "gamma": _FLOAT,
    "beta_max": _FLOAT,
    "kernel_p": _INT,
    "initial_design": _INT,
    # model parameters
    "dimension": _INT,              # min_distance
    "centers": _CENTERS,            # min_distance, "x1,y1 ; x2,y2"
    "e_mean": _FLOAT,               # beam
    "grid_nodes": _INT,             # poisson_kl
    "corr_delta": _FLOAT,           # poisson_kl
    "kl_modes": _INT,               # poisson_kl
    "kl_cache": _STR,               # poisson_kl, directory for the basis file
}

_MODEL_KEYS = {
    "min_distance": {"dimension", "centers"},
    "beam": {"e_mean"},
    "poisson_kl": {"grid_nodes", "corr_delta", "kl_modes", "kl_cache"},
}


@dataclass
class RunConfig:
    """Parsed, validated run description."""

    model: str
    method: str
    seed: int
    bins: int
    iterations: int
    samples_per_iteration: int
    out: str | None = None
    range_lo: float | None = None
    range_hi: float | None = None
    auto_range: bool = False
    burn_in: int | None = None
    proposal_scale: float | np.ndarray = 0.5
    log_steps: bool = False
    gamma: float = 1e-4
    beta_max: float = 0.05
    kernel_p: int = 1
    initial_design: int = 50
    model_params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.method not in ("mc", "mmc", "gpmmc"):
            raise ConfigError(f"unknown method {self.method!r}")
        if not self.auto_range and (self.range_lo is None or self.range_hi is None):
            raise ConfigError("give range_lo and range_hi, or range = auto")


def _convert(key: str, raw: str):
    kind = CONFIG_KEYS[key]
    try:
        if kind == _INT:
            return int(raw)
        if kind == _FLOAT:
            return float(raw)
        if kind == _BOOL:
            if raw.lower() in ("true", "1", "yes"):
                return True
            if raw.lower() in ("false", "0", "no"):
                return False
            raise ValueError(raw)
        if kind == _VEC:
            parts = [float(p) for p in raw.split(",")]
            return parts[0] if len(parts) == 1 else np.array(parts)
        if kind == _CENTERS:
            return np.array([[float(v) for v in grp.split(",")]
                             for grp in raw.split(";")])
        return raw
    except ValueError:
        raise ConfigError(f"bad value for {key!r}: {raw!r}") from None


def parse_config(path: str | Path, overrides: dict | None = None) -> RunConfig:
    """Read a flat key = value config file into a RunConfig.

    overrides (already-typed values keyed like the file) win over the file;
    the CLI uses this for --seed, --out, and --log-steps.
    """
    values: dict = {}
    with open(path) as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{line_no}: expected key = value")
            key, raw = (part.strip() for part in line.split("=", 1))
            if key not in CONFIG_KEYS:
                known = ", ".join(sorted(CONFIG_KEYS))
                raise ConfigError(f"{path}:{line_no}: unknown key {key!r} "
                                  f"(known: {known})")
            values[key] = _convert(key, raw)
    if overrides:
        values.update(overrides)
    return _config_from_values(values, source=str(path))


def _config_from_values(values: dict, source: str) -> RunConfig:
    for req in ("model", "method", "seed", "bins", "iterations",
                "samples_per_iteration"):
        if req not in values:
            raise ConfigError(f"{source}: missing required key {req!r}")
    auto = values.get("range") == "auto"
    if "range" in values and not auto:
        raise ConfigError(f"{source}: range must be 'auto' "
                          f"(or use range_lo / range_hi)")
    model = values["model"]
    allowed = _MODEL_KEYS.get(model, set())
    model_params = {}
    for key in list(values):
        owner = next((m for m, ks in _MODEL_KEYS.items() if key in ks), None)
        if owner is not None:
            if key not in allowed:
                raise ConfigError(f"{source}: key {key!r} does not apply to "
                                  f"model {model!r}")
            model_params[key] = values.pop(key)
    kwargs = {k: v for k, v in values.items()
              if k in ("seed", "bins", "iterations", "samples_per_iteration",
                       "out", "range_lo", "range_hi", "burn_in",
                       "proposal_scale", "log_steps", "gamma", "beta_max",
                       "kernel_p", "initial_design")}
    return RunConfig(model=model, method=values["method"], auto_range=auto,
                     model_params=model_params, **kwargs)


def _build_model_from_config(cfg: RunConfig):
    p = dict(cfg.model_params)
    if cfg.model == "min_distance":
        return build_model("min_distance",
                           dimension=p.get("dimension", 2),
                           centers=p.get("centers"))
    if cfg.model == "beam":
        return build_model("beam", e_mean=p.get("e_mean", 2.9e7))
    if cfg.model == "poisson_kl":
        return build_model("poisson_kl",
                           nodes=p.get("grid_nodes", 65),
                           corr_delta=p.get("corr_delta", 0.6),
                           n_modes=p.get("kl_modes", 10),
                           cache_dir=p.get("kl_cache"))
    return build_model(cfg.model, **p)


def _proposal_for(cfg: RunConfig, dimension: int) -> Proposal:
    scale = cfg.proposal_scale
    if np.isscalar(scale):
        return Proposal.isotropic(float(scale), dimension)
    scale = np.asarray(scale, dtype=float)
    if scale.shape != (dimension,):
        raise ConfigError(f"proposal_scale has {scale.size} entries, "
                          f"model dimension is {dimension}")
    return Proposal(scale)


def _fmt(v: float) -> str:
    return repr(float(v))


def _write_histogram_csv(path: Path, binning: Binning,
                         iterations: list[tuple[np.ndarray, Histogram]]) -> None:
    """iterations: (theta, histogram) pairs in run order."""
    centers = binning.centers
    edges = binning.edges
    with open(path, "w") as fh:
        fh.write("iter,bin,center,lo,hi,count,H_hat,theta,P_i,pdf\n")
        for k, (theta, hist) in enumerate(iterations):
            h = hist.counts / hist.total if hist.total > 0 else np.zeros(binning.m)
            raw = h * theta
            total = raw.sum()
            p = raw / total if total > 0 else raw
            pdf = p / binning.delta
            for i in range(binning.m):
                row = [str(k), str(i), _fmt(centers[i]), _fmt(edges[i]),
                       _fmt(edges[i + 1]), str(int(hist.counts[i])),
                       _fmt(h[i]), _fmt(theta[i]), _fmt(p[i]), _fmt(pdf[i])]
                fh.write(",".join(row) + "\n")


def read_histogram_csv(path: str | Path) -> dict:
    """Parse a histogram.csv back into binning, counts, and densities.

    Returns a dict with the reconstructed Binning, the per-iteration count
    and theta arrays, and the final iteration's P_i and pdf columns.
    """
    rows = []
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        expected = "iter,bin,center,lo,hi,count,H_hat,theta,P_i,pdf".split(",")
        if header != expected:
            raise ConfigError(f"{path}: not a histogram file")
        for line in fh:
            line = line.strip()
            if line:
                rows.append(line.split(","))
    if not rows:
        raise ConfigError(f"{path}: empty histogram file")
    iters = sorted({int(r[0]) for r in rows})
    m = max(int(r[1]) for r in rows) + 1
    lo = min(float(r[3]) for r in rows)
    hi = max(float(r[4]) for r in rows)
    binning = Binning(lo, hi, m)
    counts = {k: np.zeros(m, dtype=np.int64) for k in iters}
    thetas = {k: np.zeros(m) for k in iters}
    p_i = np.zeros(m)
    pdf = np.zeros(m)
    last = iters[-1]
    for r in rows:
        k, i = int(r[0]), int(r[1])
        counts[k][i] = int(r[5])
        thetas[k][i] = float(r[7])
        if k == last:
            p_i[i] = float(r[8])
            pdf[i] = float(r[9])
    return {"binning": binning, "iterations": iters,
            "counts": [counts[k] for k in iters],
            "thetas": [thetas[k] for k in iters],
            "final_p": p_i, "final_pdf": pdf}


def run_experiment(cfg: RunConfig, out_dir: str | Path | None = None) -> dict:
    """Execute one configured run and write its result files.

    Returns the summary dict (also written to summary.json). The output
    directory comes from out_dir or cfg.out and is created if missing.
    """
    out = Path(out_dir if out_dir is not None else (cfg.out or ""))
    if str(out) in ("", "."):
        raise ConfigError("no output directory: set out in the config or "
                          "pass --out")
    out.mkdir(parents=True, exist_ok=True)

    t0 = time.perf_counter()
    model = _build_model_from_config(cfg)
    ledger = EvalLedger()
    pilot_before = 0
    if cfg.auto_range:
        lo, hi = pilot_output_range(model, cfg.seed, ledger=ledger)
        pilot_before = ledger.true_evals
    else:
        lo, hi = cfg.range_lo, cfg.range_hi
    binning = Binning(lo, hi, cfg.bins)

    summary = {
        "method": cfg.method,
        "model": cfg.model,
        "seed": cfg.seed,
        "binning": {"lo": lo, "hi": hi, "bins": cfg.bins},
        "iterations": cfg.iterations,
        "samples_per_iteration": cfg.samples_per_iteration,
    }

    if cfg.method == "mc":
        n_total = cfg.iterations * cfg.samples_per_iteration
        result = run_plain_mc(model, binning, n_total, cfg.seed, ledger)
        _write_histogram_csv(out / "histogram.csv", binning,
                             [(np.ones(binning.m), result.histogram)])
        summary["burn_in"] = 0
        summary["true_evals"] = ledger.true_evals
        summary["surrogate_evals"] = 0
        summary["eval_breakdown"] = {"pilot": pilot_before, "samples": n_total}
        summary["in_range_fraction"] = result.in_range_fraction
        summary["moments"] = estimate_moments(result.pdf, binning) \
            if result.histogram.in_range > 0 else None
        expected = pilot_before + n_total
    else:
        mmc_cfg = MmcConfig(iterations=cfg.iterations,
                            samples_per_iteration=cfg.samples_per_iteration,
                            proposal_scale=cfg.proposal_scale,
                            burn_in=cfg.burn_in, seed=cfg.seed)
        prop = _proposal_for(cfg, model.dimension)
        design_evals = 0
        store = None
        if cfg.method == "mmc":
            kernel = ExactKernel(model, prop, ledger)
        else:
            if cfg.initial_design < 2:
                raise ConfigError("gpmmc needs initial_design >= 2")
            design_rng = np.random.default_rng([cfg.seed, 1])
            store = EvaluationStore(model.dimension)
            for x in sample_prior(model, design_rng, cfg.initial_design):
                store.insert(x, evaluate(model, x, ledger))
            design_evals = cfg.initial_design
            lengths = calibrate_lengthscales(store.points, store.values,
                                             cfg.kernel_p)
            sk_cfg = SurrogateKernelConfig(gamma=cfg.gamma,
                                           beta_max=cfg.beta_max,
                                           lengths=lengths, p=cfg.kernel_p,
                                           prop=prop)
            kernel = SurrogateKernel(model, store, binning, sk_cfg, ledger)

        step_file = None
        on_step = None
        if cfg.log_steps:
            step_file = open(out / "steps.csv", "w")
            step_file.write("step,used_surrogate,beta,refined,accepted\n")

            def on_step(index, rec, _fh=step_file):
                beta = "" if rec.beta is None else repr(rec.beta)
                _fh.write(f"{index},{int(rec.used_surrogate)},{beta},"
                          f"{int(rec.refined)},{int(rec.accepted)}\n")

        try:
            result = run_mmc(model, binning, mmc_cfg, kernel, on_step=on_step)
        finally:
            if step_file is not None:
                step_file.close()

        _write_histogram_csv(out / "histogram.csv", binning,
                             [(w.theta, h) for w, h in
                              zip(result.weights, result.histograms)])
        summary["burn_in"] = mmc_cfg.effective_burn_in
        summary["true_evals"] = ledger.true_evals
        summary["surrogate_evals"] = ledger.surrogate_evals
        chain_steps = cfg.iterations * (cfg.samples_per_iteration
                                        + mmc_cfg.effective_burn_in)
        breakdown = {"pilot": pilot_before,
                     "initial_design": design_evals,
                     "start_draws": result.start_draws}
        if cfg.method == "mmc":
            breakdown["chain"] = chain_steps
            expected = pilot_before + design_evals + result.start_draws + chain_steps
        else:
            counters = kernel.counters()
            breakdown.update({k: counters[k] for k in
                              ("refine_random", "refine_beta",
                               "refine_fallback")})
            expected = (pilot_before + design_evals + result.start_draws
                        + counters["refine_random"] + counters["refine_beta"]
                        + counters["refine_fallback"])
        summary["eval_breakdown"] = breakdown
        summary["acceptance"] = result.acceptance
        summary["flatness"] = result.flatness
        summary["moments"] = result.moments
        if store is not None:
            store.save_csv(out / "store.csv")
            summary["store_size"] = store.size

    if summary["true_evals"] != expected:
        raise RuntimeError(
            f"ledger mismatch: {summary['true_evals']} true evaluations, "
            f"breakdown accounts for {expected}")

    summary["runtime_seconds"] = time.perf_counter() - t0
    with open(out / "summary.json", "w") as fh:
        json.dump(summary, fh, indent=2)
        fh.write("\n")
    return summary


@dataclass
class ComparisonReport:
    """Per-bin relative error of a candidate density against a baseline.

    Bins where the baseline reports zero density carry no information about
    relative error and are left out; compared_bins counts the rest."""

    compared_bins: int
    max_rel_err: float
    avg_rel_err: float
    baseline_moments: dict
    candidate_moments: dict

    def to_dict(self) -> dict:
        return {
            "compared_bins": self.compared_bins,
            "max_rel_err": self.max_rel_err,
            "avg_rel_err": self.avg_rel_err,
            "baseline_moments": self.baseline_moments,
            "candidate_moments": self.candidate_moments,
        }


def compare_pdfs(baseline_path: str | Path,
                 candidate_path: str | Path) -> ComparisonReport:
    """Compare two histogram.csv files bin by bin.

    Both files must use the identical binning; the comparison reads each
    file's final iteration."""
    base = read_histogram_csv(baseline_path)
    cand = read_histogram_csv(candidate_path)
    b1, b2 = base["binning"], cand["binning"]
    if (b1.lo, b1.hi, b1.m) != (b2.lo, b2.hi, b2.m):
        raise ConfigError(
            f"binnings differ: [{b1.lo}, {b1.hi}] x {b1.m} vs "
            f"[{b2.lo}, {b2.hi}] x {b2.m}")
    p_base = base["final_pdf"]
    p_cand = cand["final_pdf"]
    mask = p_base > 0
    if not mask.any():
        raise ConfigError(f"{baseline_path}: baseline density is all zero")
    rel = np.abs(p_cand[mask] - p_base[mask]) / p_base[mask]
    return ComparisonReport(
        compared_bins=int(mask.sum()),
        max_rel_err=float(rel.max()),
        avg_rel_err=float(rel.mean()),
        baseline_moments=estimate_moments(p_base, b1),
        candidate_moments=estimate_moments(p_cand, b1),
    )
