"""
Standalone SVG renderings of the fit artifacts.
"""

import logging

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
import pandas as pd  # noqa: E402

from contagion_fit.mcmc_engine import PosteriorSamples  # noqa: E402

logger = logging.getLogger(__name__)

DEFAULT_BINS = 40
# Stable element ids so re-rendering the same data gives the same file.
plt.rcParams["svg.hashsalt"] = "contagion-fit"

_SVG_METADATA = {"Date": None}


def _save(fig, path) -> None:
    fig.savefig(path, format="svg", metadata=_SVG_METADATA)
    plt.close(fig)
    logger.info(f"Wrote {path}")


def plot_fit(envelope: pd.DataFrame, path, title: str = "") -> None:
    """Observed interest as dots, simulated median as a line, 95% band shaded."""
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.fill_between(envelope["day"], envelope["lo95"], envelope["hi95"], color="tab:blue", alpha=0.25)
    ax.plot(envelope["day"], envelope["median"], color="tab:blue", label="model median")
    ax.scatter(envelope["day"], envelope["obs"], color="black", s=12, label="observed")
    ax.set_xlabel("day")
    ax.set_ylabel("interest")
    ax.set_title(title)
    ax.legend()
    _save(fig, path)


def plot_effective_r(envelope: pd.DataFrame, path, title: str = "") -> None:
    fig, ax = plt.subplots(figsize=(7, 3))
    ax.fill_between(envelope["day"], envelope["Rt_lo"], envelope["Rt_hi"], color="tab:blue", alpha=0.25)
    ax.plot(envelope["day"], envelope["Rt_median"], color="tab:blue")
    ax.axhline(1.0, color="grey", linestyle="--", linewidth=1)
    ax.set_xlabel("day")
    ax.set_ylabel("R(t)")
    ax.set_title(title)
    _save(fig, path)


def histogram_data(samples: PosteriorSamples, bins: int = DEFAULT_BINS) -> dict:
    """Counts and edges per quantity, each spanning the min/max of its draws."""
    quantities = {
        "beta": samples.column("beta"),
        "gamma": samples.column("gamma"),
        "r": samples.column("r"),
        "i0": samples.column("i0"),
        "R0": samples.r0,
        "generation_time": samples.generation_time,
    }
    return {
        name: np.histogram(values, bins=bins, range=(values.min(), values.max()))
        for name, values in quantities.items()
    }


def plot_posterior_histograms(samples: PosteriorSamples, path, bins: int = DEFAULT_BINS) -> None:
    fig, axes = plt.subplots(2, 3, figsize=(10, 6))
    for ax, (name, (counts, edges)) in zip(axes.flat, histogram_data(samples, bins).items()):
        ax.stairs(counts, edges, fill=True, color="tab:blue", alpha=0.6)
        ax.set_title(name)
    fig.tight_layout()
    _save(fig, path)
