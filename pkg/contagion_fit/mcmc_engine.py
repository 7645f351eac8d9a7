"""
Random-walk Metropolis-Hastings over (log beta, log gamma, log r, logit i0).

The chain targets the posterior over (beta, 1/gamma, r, i0), the scale the priors are
stated on: the log-Jacobian from the working point to that scale is added to the
log-posterior before the accept test.
Step sizes adapt during burn-in only and are frozen for the retained draws.
"""

import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Union

import numpy as np
import pandas as pd
from scipy.special import expit, log_expit, logit

from contagion_fit.errors import InputError, SamplerError
from contagion_fit.observation_model import (
    DEFAULT_BOUNDS,
    GammaPrior,
    ParameterBounds,
    log_posterior,
)
from contagion_fit.sir_dynamics import DEFAULT_INTEGRATOR, IntegratorSettings, SirParams
from contagion_fit.trends_ingest import ObservationWindow

logger = logging.getLogger(__name__)

PARAM_NAMES = ("beta", "gamma", "r", "i0")
POSTERIOR_COLUMNS = ["iteration", *PARAM_NAMES, "log_posterior", "chain"]

# Starting-point heuristics: R0 of 2, peak incidence of 1% of the population.
START_R0 = 2.0
START_PEAK_INCIDENCE = 0.01
START_I0 = 1e-3
MIN_DIAGNOSTIC_DRAWS = 10


@dataclass(frozen=True)
class McmcConfig:
    seed: int
    burn_in: int = 10_000
    samples: int = 40_000
    thin: int = 1
    step_sizes: tuple = (0.05, 0.05, 0.05, 0.1)
    adapt: bool = True
    adapt_interval: int = 500
    target_acceptance: float = 0.25
    max_init_attempts: int = 100

    def __post_init__(self) -> None:
        if self.burn_in < 0:
            raise InputError(f"burn_in must be >= 0, got {self.burn_in}")
        if self.samples < 1:
            raise InputError(f"samples must be >= 1, got {self.samples}")
        if self.thin < 1:
            raise InputError(f"thin must be >= 1, got {self.thin}")
        if self.samples < self.thin:
            raise InputError(f"samples ({self.samples}) must be at least thin ({self.thin})")
        if any(not step > 0 for step in self.step_sizes):
            raise InputError(f"step sizes must be positive, got {self.step_sizes}")
        if self.adapt_interval < 1:
            raise InputError(f"adapt_interval must be >= 1, got {self.adapt_interval}")

    @property
    def retained(self) -> int:
        return self.samples // self.thin

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "burn_in": self.burn_in,
            "samples": self.samples,
            "thin": self.thin,
            "step_sizes": list(self.step_sizes),
            "adapt": self.adapt,
            "adapt_interval": self.adapt_interval,
            "target_acceptance": self.target_acceptance,
        }


# Working-scale transform


def to_working(params: SirParams) -> np.ndarray:
    return np.array(
        [math.log(params.beta), math.log(params.gamma), math.log(params.r), float(logit(params.i0))]
    )


def from_working(point) -> SirParams:
    log_beta, log_gamma, log_r, logit_i0 = point
    return SirParams(
        beta=math.exp(log_beta),
        gamma=math.exp(log_gamma),
        r=math.exp(log_r),
        i0=float(expit(logit_i0)),
    )


def log_jacobian(point) -> float:
    """log |d(beta, 1/gamma, r, i0) / d(working point)|; 1/gamma = exp(-log gamma)."""
    log_beta, log_gamma, log_r, logit_i0 = point
    return float(log_beta - log_gamma + log_r + log_expit(logit_i0) + log_expit(-logit_i0))


# Metropolis-Hastings primitives


def propose(current, steps, rng: np.random.Generator) -> np.ndarray:
    """Symmetric Gaussian random-walk proposal, independent per coordinate."""
    current = np.asarray(current, dtype=float)
    return current + rng.standard_normal(current.shape) * np.asarray(steps, dtype=float)


def accept(log_ratio: float, rng: np.random.Generator) -> bool:
    """Metropolis rule: accept with probability min(1, exp(log_ratio)); NaN rejects."""
    u = rng.random()
    if log_ratio >= 0:
        return True
    return u > 0 and math.log(u) < log_ratio


def mh_step(
    current,
    current_log_target: float,
    log_target: Callable[[np.ndarray], float],
    steps,
    rng: np.random.Generator,
):
    """One Metropolis-Hastings transition. Returns (point, log target, accepted)."""
    proposal = propose(current, steps, rng)
    proposal_log_target = log_target(proposal)
    if accept(proposal_log_target - current_log_target, rng):
        return proposal, proposal_log_target, True
    return current, current_log_target, False


@dataclass
class ChainTrace:
    points: np.ndarray
    log_target: np.ndarray
    iterations: np.ndarray
    acceptance_rate: float
    steps: np.ndarray


class PosteriorSampler:
    """Runs one adaptive random-walk chain against any log-density on R^d."""

    def __init__(self, config: McmcConfig, logger=None) -> None:
        self.config = config

        if logger:
            self.logger = logger
        else:
            self._set_logger()

    def _set_logger(self):
        self.logger = logging.getLogger(__name__)

    def _rescale(self, scale: float, window_rate: float) -> float:
        factor = math.exp(2.0 * (window_rate - self.config.target_acceptance))
        return scale * min(max(factor, 0.5), 2.0)

    def sample(
        self,
        log_target: Callable[[np.ndarray], float],
        initial,
        rng: Optional[np.random.Generator] = None,
    ) -> ChainTrace:
        config = self.config
        rng = rng if rng is not None else np.random.default_rng(config.seed)
        current = np.asarray(initial, dtype=float)
        dim = current.size
        current_value = log_target(current)
        if not math.isfinite(current_value):
            raise SamplerError("Initial point has a non-finite log-density")

        shape = np.resize(np.asarray(config.step_sizes, dtype=float), dim)
        scale = 1.0
        adapting = config.adapt and config.burn_in > 0
        burn_trace = np.empty((config.burn_in, dim)) if adapting else None
        window_accepts = 0

        for it in range(config.burn_in):
            current, current_value, accepted = mh_step(
                current, current_value, log_target, shape * scale, rng
            )
            if not adapting:
                continue
            burn_trace[it] = current
            window_accepts += accepted
            if (it + 1) % config.adapt_interval == 0:
                rate = window_accepts / config.adapt_interval
                scale = self._rescale(scale, rate)
                window_accepts = 0
                if it + 1 >= 2 * config.adapt_interval:
                    # Per-coordinate shape from the later half of the burn-in history.
                    sd = burn_trace[(it + 1) // 2 : it + 1].std(axis=0)
                    shape = np.where(sd > 0, sd * 2.38 / math.sqrt(dim), shape)
                self.logger.debug(
                    f"Burn-in {it + 1}: window acceptance {rate:.3f}, steps {shape * scale}"
                )

        steps = shape * scale
        points = np.empty((config.retained, dim))
        values = np.empty(config.retained)
        iterations = np.empty(config.retained, dtype=int)
        accepted_total = 0
        kept = 0
        for k in range(config.samples):
            current, current_value, accepted = mh_step(
                current, current_value, log_target, steps, rng
            )
            accepted_total += accepted
            if (k + 1) % config.thin == 0 and kept < config.retained:
                points[kept] = current
                values[kept] = current_value
                iterations[kept] = config.burn_in + k + 1
                kept += 1

        return ChainTrace(
            points=points,
            log_target=values,
            iterations=iterations,
            acceptance_rate=accepted_total / config.samples,
            steps=steps,
        )


# Posterior draws


@dataclass
class PosteriorSamples:
    """Retained draws on the natural scale; `log_posterior` excludes the Jacobian."""

    draws: np.ndarray
    log_posterior: np.ndarray
    iterations: np.ndarray
    chains: np.ndarray
    config: Optional[McmcConfig] = None
    acceptance_rate: Optional[float] = None
    chain_acceptance: List[float] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.log_posterior)

    def column(self, name: str) -> np.ndarray:
        return self.draws[:, PARAM_NAMES.index(name)]

    @property
    def r0(self) -> np.ndarray:
        return self.column("beta") / self.column("gamma")

    @property
    def generation_time(self) -> np.ndarray:
        return 1.0 / self.column("gamma")

    def params(self, index: int) -> SirParams:
        return SirParams.from_array(self.draws[index])

    def split_chains(self) -> List["PosteriorSamples"]:
        out = []
        for chain_id in np.unique(self.chains):
            mask = self.chains == chain_id
            out.append(
                PosteriorSamples(
                    draws=self.draws[mask],
                    log_posterior=self.log_posterior[mask],
                    iterations=self.iterations[mask],
                    chains=self.chains[mask],
                    config=self.config,
                )
            )
        return out

    @classmethod
    def concatenate(cls, chains: Sequence["PosteriorSamples"]) -> "PosteriorSamples":
        rates = [c.acceptance_rate for c in chains if c.acceptance_rate is not None]
        return cls(
            draws=np.vstack([c.draws for c in chains]),
            log_posterior=np.concatenate([c.log_posterior for c in chains]),
            iterations=np.concatenate([c.iterations for c in chains]),
            chains=np.concatenate([c.chains for c in chains]),
            config=chains[0].config,
            acceptance_rate=float(np.mean(rates)) if rates else None,
            chain_acceptance=rates,
        )

    def to_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame(self.draws, columns=list(PARAM_NAMES))
        frame.insert(0, "iteration", self.iterations.astype(int))
        frame["log_posterior"] = self.log_posterior
        frame["chain"] = self.chains.astype(int)
        return frame

    def to_csv(self, path) -> None:
        self.to_frame().to_csv(path, index=False, lineterminator="\n")


def read_posterior_csv(path) -> PosteriorSamples:
    if not os.path.exists(path):
        raise InputError(f"Posterior file not found: {path}")
    try:
        frame = pd.read_csv(path, float_precision="round_trip")
    except (pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        raise InputError(f"Malformed posterior file {path}: {e}")

    required = ["iteration", *PARAM_NAMES, "log_posterior"]
    missing = [name for name in required if name not in frame.columns]
    if missing:
        raise InputError(f"Posterior file {path} is missing columns: {', '.join(missing)}")
    if frame.empty:
        raise InputError(f"Posterior file {path} has no draws")

    numeric = frame[required].apply(pd.to_numeric, errors="coerce")
    if numeric[list(PARAM_NAMES)].isna().any().any():
        raise InputError(f"Posterior file {path} contains non-numeric parameter values")
    draws = numeric[list(PARAM_NAMES)].to_numpy(dtype=float)
    for k, row in enumerate(draws):
        try:
            SirParams.from_array(row)
        except ValueError as e:
            raise InputError(f"Posterior file {path}, draw {k + 1}: {e}")

    chains = frame["chain"].to_numpy(dtype=int) if "chain" in frame.columns else np.zeros(len(frame), dtype=int)
    return PosteriorSamples(
        draws=draws,
        log_posterior=numeric["log_posterior"].to_numpy(dtype=float),
        iterations=numeric["iteration"].to_numpy(dtype=int),
        chains=chains,
    )


# Fitting


class _LogTarget:
    """Log-posterior plus log-Jacobian as a function of the working point."""

    def __init__(self, window, prior, bounds, settings) -> None:
        self.window = window
        self.prior = prior
        self.bounds = bounds
        self.settings = settings

    def __call__(self, point) -> float:
        if not np.all(np.isfinite(point)):
            return -math.inf
        try:
            params = from_working(point)
        except (ValueError, OverflowError):
            return -math.inf
        value = log_posterior(self.window, params, self.prior, self.bounds, self.settings)
        if not math.isfinite(value):
            return -math.inf
        return value + log_jacobian(point)


def initial_point(
    window: ObservationWindow,
    prior: GammaPrior,
    log_target: Callable[[np.ndarray], float],
    rng: np.random.Generator,
    max_attempts: int = 100,
) -> np.ndarray:
    """Infectious period from the prior, R0 of 2, r scaled to the observed peak."""
    r_start = float(window.values.max()) / (100.0 * START_PEAK_INCIDENCE)
    for attempt in range(max_attempts):
        gamma = 1.0 / float(prior.sample(rng))
        try:
            params = SirParams(beta=START_R0 * gamma, gamma=gamma, r=r_start, i0=START_I0)
        except ValueError:
            continue
        point = to_working(params)
        if math.isfinite(log_target(point)):
            return point
        logger.debug(f"Start attempt {attempt + 1} gave a non-finite posterior: {params}")
    raise SamplerError(f"No finite starting point after {max_attempts} attempts")


def run_chain(
    window: ObservationWindow,
    prior: GammaPrior,
    config: McmcConfig,
    bounds: ParameterBounds = DEFAULT_BOUNDS,
    settings: IntegratorSettings = DEFAULT_INTEGRATOR,
    rng: Optional[np.random.Generator] = None,
    chain: int = 0,
    logger=None,
) -> PosteriorSamples:
    log = logger or logging.getLogger(__name__)
    rng = rng if rng is not None else np.random.default_rng(config.seed)
    target = _LogTarget(window, prior, bounds, settings)
    start = initial_point(window, prior, target, rng, config.max_init_attempts)
    log.info(f"Chain {chain}: starting at {from_working(start)}")

    trace = PosteriorSampler(config, logger=log).sample(target, start, rng)
    jacobians = np.array([log_jacobian(p) for p in trace.points])
    draws = np.array([from_working(p).as_array() for p in trace.points])
    log.info(
        f"Chain {chain}: {len(draws)} draws retained, acceptance rate {trace.acceptance_rate:.3f}"
    )
    return PosteriorSamples(
        draws=draws,
        log_posterior=trace.log_target - jacobians,
        iterations=trace.iterations,
        chains=np.full(len(draws), chain, dtype=int),
        config=config,
        acceptance_rate=trace.acceptance_rate,
        chain_acceptance=[trace.acceptance_rate],
    )


def _chain_job(args) -> PosteriorSamples:
    window, prior, config, bounds, settings, seed_sequence, chain = args
    return run_chain(
        window, prior, config, bounds, settings, rng=np.random.default_rng(seed_sequence), chain=chain
    )


def run_chains(
    window: ObservationWindow,
    prior: GammaPrior,
    config: McmcConfig,
    n_chains: int = 1,
    workers: int = 1,
    bounds: ParameterBounds = DEFAULT_BOUNDS,
    settings: IntegratorSettings = DEFAULT_INTEGRATOR,
) -> List[PosteriorSamples]:
    """Independent chains seeded from one SeedSequence; results are in chain order."""
    if n_chains < 1:
        raise InputError(f"At least one chain is required, got {n_chains}")
    seeds = np.random.SeedSequence(config.seed).spawn(n_chains)
    jobs = [(window, prior, config, bounds, settings, seeds[k], k) for k in range(n_chains)]
    if workers <= 1 or n_chains == 1:
        return [_chain_job(job) for job in jobs]
    with ProcessPoolExecutor(max_workers=min(workers, n_chains)) as executor:
        return list(executor.map(_chain_job, jobs))


def map_estimate(samples: PosteriorSamples) -> SirParams:
    """Draw with the highest recorded log-posterior; the earliest draw wins ties."""
    if len(samples) == 0:
        raise InputError("Cannot take a MAP estimate of an empty posterior")
    return samples.params(int(np.argmax(samples.log_posterior)))


# Diagnostics


def effective_sample_size(x) -> float:
    """
    Effective sample size with Geyer's initial monotone sequence estimator.

    A constant chain returns 1.0.
    """
    x = np.asarray(x, dtype=float)
    n = x.size
    if n < MIN_DIAGNOSTIC_DRAWS:
        raise InputError(f"Need at least {MIN_DIAGNOSTIC_DRAWS} draws, got {n}")
    centered = x - x.mean()
    if not np.any(centered):
        return 1.0

    nfft = 1 << (2 * n - 1).bit_length()
    spectrum = np.fft.rfft(centered, nfft)
    acov = np.fft.irfft(spectrum * np.conj(spectrum), nfft)[:n]
    rho = acov / acov[0]

    n_pairs = n // 2
    pair_sums = rho[0 : 2 * n_pairs : 2] + rho[1 : 2 * n_pairs : 2]
    non_positive = np.flatnonzero(pair_sums <= 0)
    if non_positive.size:
        pair_sums = pair_sums[: non_positive[0]]
    pair_sums = np.minimum.accumulate(pair_sums)
    tau = max(-1.0 + 2.0 * pair_sums.sum(), 1.0 / math.log10(n))
    return float(n / tau)


def split_rhat(chains: Sequence[np.ndarray]) -> float:
    """Split-chain potential scale reduction; NaN when every half is constant."""
    halves = []
    for chain in chains:
        chain = np.asarray(chain, dtype=float)
        half = chain.size // 2
        halves.extend([chain[:half], chain[chain.size - half :]])
    n = min(h.size for h in halves)
    halves = np.array([h[:n] for h in halves])
    within = halves.var(axis=1, ddof=1).mean()
    if within == 0:
        return math.nan
    between = n * halves.mean(axis=1).var(ddof=1)
    var_plus = (n - 1) / n * within + between / n
    return float(math.sqrt(var_plus / within))


@dataclass
class Diagnostics:
    acceptance_rate: Optional[float]
    ess: dict
    rhat: Optional[dict]
    degenerate: List[str]

    def to_dict(self) -> dict:
        return {
            "acceptance_rate": self.acceptance_rate,
            "ess": self.ess,
            "rhat": self.rhat,
            "degenerate": self.degenerate,
        }


def diagnostics(samples: Union[PosteriorSamples, Sequence[PosteriorSamples]]) -> Diagnostics:
    """ESS summed over chains and split-R-hat (only with two or more chains)."""
    chains = list(samples) if isinstance(samples, (list, tuple)) else samples.split_chains()
    if isinstance(samples, PosteriorSamples):
        rates = [samples.acceptance_rate] if samples.acceptance_rate is not None else []
    else:
        rates = [c.acceptance_rate for c in chains if c.acceptance_rate is not None]
    for chain in chains:
        if len(chain) < MIN_DIAGNOSTIC_DRAWS:
            raise InputError(
                f"Diagnostics need at least {MIN_DIAGNOSTIC_DRAWS} draws per chain, got {len(chain)}"
            )

    ess = {}
    degenerate = []
    for name in PARAM_NAMES:
        columns = [chain.column(name) for chain in chains]
        if all(np.ptp(column) == 0 for column in columns):
            degenerate.append(name)
        ess[name] = float(sum(effective_sample_size(column) for column in columns))

    rhat = None
    if len(chains) >= 2:
        rhat = {name: split_rhat([chain.column(name) for chain in chains]) for name in PARAM_NAMES}

    return Diagnostics(
        acceptance_rate=float(np.mean(rates)) if rates else None,
        ess=ess,
        rhat=rhat,
        degenerate=degenerate,
    )
