"""Multicanonical iteration: reweighted sampling, weight updates, and the
final density estimate.

The engine samples the biased density q(x) = p(x) / theta_i(y(x)) restricted
to inputs whose output falls in the binned range, updates the per-bin weights
from each iteration's histogram, and reads the output density off the final
iteration's histogram and weights. The weights converge toward bin mass times
bin count, which makes the sampled histogram flat and spreads samples evenly
across the whole output range instead of concentrating them near the mode.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .binning import Binning, Histogram, tally
from .mcmc import ChainState, StepRecord
from .problem import EvalLedger, PerformanceModel, evaluate, log_prior_density, sample_prior

__all__ = ["WeightTable", "MmcConfig", "MmcResult", "PlainMcResult",
           "log_bias_density", "update_weights", "estimate_pdf",
           "estimate_moments", "flatness_cv", "run_mmc", "run_plain_mc"]

MAX_START_DRAWS = 1000


@dataclass
class WeightTable:
    """Positive per-bin weights theta, with the iteration that produced them."""

    theta: np.ndarray
    iteration: int = 0

    def __post_init__(self):
        self.theta = np.asarray(self.theta, dtype=float)
        if self.theta.ndim != 1 or self.theta.size < 1:
            raise ValueError("theta must be a non-empty 1-D array")
        if np.any(self.theta <= 0) or not np.all(np.isfinite(self.theta)):
            raise ValueError("weights must be positive and finite")

    @staticmethod
    def flat(m: int) -> "WeightTable":
        return WeightTable(np.ones(m), iteration=0)


@dataclass(frozen=True)
class MmcConfig:
    """Run parameters for the multicanonical iteration.

    burn_in defaults to a tenth of the per-iteration sample count and is
    discarded at the start of every iteration.
    """

    iterations: int
    samples_per_iteration: int
    proposal_scale: float | np.ndarray = 0.5
    burn_in: int | None = None
    seed: int = 0

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError("need at least one iteration")
        if self.samples_per_iteration < 1:
            raise ValueError("need at least one sample per iteration")
        if self.effective_burn_in < 0 or self.effective_burn_in >= self.samples_per_iteration:
            raise ValueError("burn_in must lie in [0, samples_per_iteration)")

    @property
    def effective_burn_in(self) -> int:
        if self.burn_in is None:
            return self.samples_per_iteration // 10
        return self.burn_in


@dataclass
class MmcResult:
    """Everything a run produced, in iteration order.

    weights[k] is the table in force while iteration k sampled; final_weights
    is the table produced by the last update and never sampled from. The
    density estimate uses the final iteration's histogram with weights[-1].
    """

    weights: list[WeightTable]
    final_weights: WeightTable
    histograms: list[Histogram]
    flatness: list[float]
    acceptance: list[float]
    pdf: np.ndarray
    bin_probability: np.ndarray
    moments: dict
    ledger: dict
    start_draws: int


@dataclass
class PlainMcResult:
    """Baseline estimate from independent prior draws."""

    histogram: Histogram
    pdf: np.ndarray
    in_range_fraction: float


def log_bias_density(weights: WeightTable, binning: Binning,
                     model: PerformanceModel, x: np.ndarray, y: float) -> float:
    """log of the biased target q(x) = p(x) / theta_i at output bin i.

    Returns -inf when y falls outside the binned range; the chain treats
    such states as forbidden.
    """
    i = binning.index(y)
    if i is None:
        return -math.inf
    return log_prior_density(model, x) - math.log(weights.theta[i])


def update_weights(weights: WeightTable, hist: Histogram) -> WeightTable:
    """One multicanonical weight update from an iteration's histogram.

    Visited bins move toward the estimated bin probability theta_i * H_i.
    Unvisited bins drop to the smallest updated weight of any visited bin:
    nothing is known about them beyond "rarer than everything seen", and a
    larger weight would suppress the sampler's only route into them. The
    whole table is then rescaled to preserve its total, pinning the sum to
    its iteration-zero value for the life of the run.
    """
    if hist.total <= 0:
        raise RuntimeError("cannot update weights from an empty histogram")
    if hist.counts.size != weights.theta.size:
        raise ValueError("histogram and weight table sizes differ")
    h = hist.counts / hist.total
    visited = hist.counts > 0
    floor = np.min(weights.theta[visited] * h[visited])
    pre = np.where(visited, h * weights.theta, floor)
    scale = weights.theta.sum() / pre.sum()
    return WeightTable(pre * scale, iteration=weights.iteration + 1)


def estimate_pdf(weights: WeightTable, hist: Histogram,
                 binning: Binning) -> np.ndarray:
    """Density estimate from one iteration's histogram and its weights.

    pdf[i] is proportional to H_i * theta_i / delta, normalized so the
    estimate integrates to one over the binned range. Bins with no samples
    report zero density.
    """
    if hist.total <= 0:
        raise RuntimeError("cannot estimate a density from an empty histogram")
    if hist.counts.size != binning.m or weights.theta.size != binning.m:
        raise ValueError("histogram, weights, and binning sizes differ")
    raw = (hist.counts / hist.total) * weights.theta
    total = raw.sum()
    if total <= 0:
        raise RuntimeError("no in-range samples; density undefined")
    return raw / (total * binning.delta)


def estimate_moments(pdf: np.ndarray, binning: Binning) -> dict:
    """Mean and central moments 2..5 by midpoint quadrature over the bins.

    Accepts any nonnegative density table; the bin masses are renormalized
    before integrating, so an unnormalized estimate gains no bias here.
    """
    pdf = np.asarray(pdf, dtype=float)
    if pdf.shape != (binning.m,):
        raise ValueError("pdf length does not match the binning")
    if np.any(pdf < 0):
        raise ValueError("pdf entries must be nonnegative")
    mass = pdf * binning.delta
    total = mass.sum()
    if total <= 0:
        raise RuntimeError("cannot take moments of an all-zero density")
    mass = mass / total
    centers = binning.centers
    mean = float(centers @ mass)
    dev = centers - mean
    out = {"mean": mean}
    out["variance"] = float((dev**2) @ mass)
    out["central3"] = float((dev**3) @ mass)
    out["central4"] = float((dev**4) @ mass)
    out["central5"] = float((dev**5) @ mass)
    return out


def flatness_cv(hist: Histogram) -> float:
    """Coefficient of variation of the nonzero bin counts."""
    nz = hist.counts[hist.counts > 0]
    if nz.size == 0:
        return 0.0
    return float(nz.std() / nz.mean())


def _find_start(model: PerformanceModel, binning: Binning,
                rng: np.random.Generator, ledger: EvalLedger) -> tuple[np.ndarray, float, int]:
    """Prior draw whose output lands in the binned range, with the number of
    draws it took. Gives up after MAX_START_DRAWS."""
    for attempt in range(1, MAX_START_DRAWS + 1):
        x = sample_prior(model, rng, 1)[0]
        y = evaluate(model, x, ledger)
        if binning.index(y) is not None:
            return x, y, attempt
    raise RuntimeError(
        f"no prior draw landed in the binned range after {MAX_START_DRAWS} tries; "
        "the range is likely far from the prior mass")


def run_mmc(model: PerformanceModel, binning: Binning, config: MmcConfig,
            kernel, on_step: Callable[[int, StepRecord], None] | None = None) -> MmcResult:
    """Run the full multicanonical iteration with the given step kernel.

    The kernel must expose step(rng, state, target) -> (state, record) and a
    ledger attribute. The chain starts from an in-range prior draw, keeps its
    state across iterations, and discards config.effective_burn_in steps at
    the start of each one. Samples are tallied from the y values the kernel
    reports, so nothing is ever re-evaluated. A fixed seed makes the result
    bit-identical across runs.
    """
    if binning.m > config.samples_per_iteration:
        warnings.warn(
            f"samples per iteration ({config.samples_per_iteration}) below bin "
            f"count ({binning.m}); histograms will be sparse", stacklevel=2)
    rng = np.random.default_rng([config.seed, 0])
    ledger = kernel.ledger
    x0, y0, start_draws = _find_start(model, binning, rng, ledger)

    weights = WeightTable.flat(binning.m)
    tables: list[WeightTable] = []
    hists: list[Histogram] = []
    flatness: list[float] = []
    acceptance: list[float] = []
    burn = config.effective_burn_in
    n = config.samples_per_iteration
    step_index = 0
    state: ChainState | None = None

    for _ in range(config.iterations):
        def target(x, y, _w=weights):
            return log_bias_density(_w, binning, model, x, y)

        if state is None:
            state = ChainState(x0, y0, target(x0, y0))
        else:
            # same point, new weights: refresh the cached log density
            state = ChainState(state.x, state.y, target(state.x, state.y))

        accepted = 0
        for _ in range(burn):
            state, rec = kernel.step(rng, state, target)
            if on_step is not None:
                on_step(step_index, rec)
            step_index += 1
        ys = np.empty(n)
        for t in range(n):
            state, rec = kernel.step(rng, state, target)
            if on_step is not None:
                on_step(step_index, rec)
            step_index += 1
            accepted += rec.accepted
            ys[t] = state.y

        hist = tally(binning, ys)
        tables.append(weights)
        hists.append(hist)
        flatness.append(flatness_cv(hist))
        acceptance.append(accepted / n)
        weights = update_weights(weights, hist)

    pdf = estimate_pdf(tables[-1], hists[-1], binning)
    return MmcResult(
        weights=tables,
        final_weights=weights,
        histograms=hists,
        flatness=flatness,
        acceptance=acceptance,
        pdf=pdf,
        bin_probability=pdf * binning.delta,
        moments=estimate_moments(pdf, binning),
        ledger=ledger.snapshot(),
        start_draws=start_draws,
    )


def run_plain_mc(model: PerformanceModel, binning: Binning, n: int,
                 seed: int, ledger: EvalLedger) -> PlainMcResult:
    """Histogram density from n independent prior draws.

    The pdf is counts / (n * delta), so it integrates to the in-range
    fraction rather than one; with a binned range that covers essentially
    all the output mass the two coincide.
    """
    if n < 1:
        raise ValueError("need at least one sample")
    rng = np.random.default_rng([seed, 0])
    xs = sample_prior(model, rng, n)
    ys = np.empty(n)
    for i in range(n):
        ys[i] = evaluate(model, xs[i], ledger)
    hist = tally(binning, ys)
    pdf = hist.counts / (n * binning.delta)
    return PlainMcResult(histogram=hist, pdf=pdf,
                         in_range_fraction=hist.in_range / n)
