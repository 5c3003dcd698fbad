"""Interference channel generation and the weighted sum-rate objective.

A network instance is M device-to-device pairs dropped in a d x d square.
``G[k, m]`` is the complex amplitude gain from transmitter k to receiver m.
Power variables are real amplitudes in ``[0, p_max]`` that enter the SINR
inside the squared magnitude:

    gamma_m = |g_mm p_m|^2 / (sum_{k != m} |g_km p_k|^2 + sigma2_m)

and the objective is ``sum_m alpha_m log2(1 + gamma_m)`` in bps/Hz.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

DATASET_VERSION = 1

# Default drop geometry and link constants, overridable through configs.
DEFAULT_PAIRS = 4
DEFAULT_AREA_SIDE = 100.0
DEFAULT_MIN_RANGE = 2.0
DEFAULT_MAX_RANGE = 10.0
DEFAULT_PATHLOSS_EXP = 3.0
DEFAULT_NOISE_POWER = 1e-2
DEFAULT_WEIGHT = 1.0
DEFAULT_P_MAX = 1.0


class GeometryError(ValueError):
    """Raised when drop geometry constraints are unsatisfiable."""


class DimensionError(ValueError):
    """Raised when a vector does not match the instance size."""


@dataclass(eq=False)
class Scenario:
    """Transmitter/receiver positions for one drop of M pairs."""

    M: int
    d: float
    d_min: float
    d_max: float
    seed: int
    tx_pos: np.ndarray  # (M, 2) meters
    rx_pos: np.ndarray  # (M, 2) meters


@dataclass(eq=False)
class ChannelRealization:
    """One fading draw over a scenario, plus the link constants."""

    G: np.ndarray       # (M, M) complex, G[k, m] = gain tx k -> rx m
    sigma2: np.ndarray  # (M,) receiver noise power, > 0
    alpha: np.ndarray   # (M,) objective weights, >= 0
    p_max: float

    def __post_init__(self):
        self.G = np.asarray(self.G, dtype=complex)
        m = self.G.shape[0]
        if self.G.shape != (m, m):
            raise DimensionError(f"G must be square, got {self.G.shape}")
        self.sigma2 = np.broadcast_to(np.asarray(self.sigma2, dtype=float), (m,)).copy()
        self.alpha = np.broadcast_to(np.asarray(self.alpha, dtype=float), (m,)).copy()
        if not np.all(np.isfinite(self.G.view(float))):
            raise ValueError("G contains non-finite entries")
        if np.any(self.sigma2 <= 0):
            raise ValueError("sigma2 must be positive")
        if np.any(self.alpha < 0):
            raise ValueError("alpha must be non-negative")
        if not self.p_max > 0:
            raise ValueError("p_max must be positive")

    @property
    def M(self) -> int:
        return self.G.shape[0]


def pathloss(r, exponent: float):
    """Distance gain (1 + r)^(-exponent); finite at r = 0."""
    return (1.0 + np.asarray(r, dtype=float)) ** (-exponent)


def generate_scenario(M: int, d: float, d_min: float, d_max: float, seed: int) -> Scenario:
    """Drop M transmitters uniformly in the square and each receiver at a
    uniform range/bearing from its transmitter, rejection-sampled into the square."""
    if M < 1:
        raise GeometryError("M must be >= 1")
    if not (0 < d_min <= d_max <= d):
        raise GeometryError(f"need 0 < d_min <= d_max <= d, got {d_min}, {d_max}, {d}")
    rng = np.random.default_rng(seed)
    tx = rng.uniform(0.0, d, size=(M, 2))
    rx = np.empty((M, 2))
    for i in range(M):
        while True:
            r = rng.uniform(d_min, d_max)
            phi = rng.uniform(0.0, 2.0 * np.pi)
            cand = tx[i] + r * np.array([np.cos(phi), np.sin(phi)])
            if 0.0 <= cand[0] <= d and 0.0 <= cand[1] <= d:
                rx[i] = cand
                break
    return Scenario(M=M, d=d, d_min=d_min, d_max=d_max, seed=seed, tx_pos=tx, rx_pos=rx)


def realize_channels(
    scenario: Scenario,
    pathloss_exp: float = DEFAULT_PATHLOSS_EXP,
    sigma2: float | np.ndarray = DEFAULT_NOISE_POWER,
    alpha: float | np.ndarray = DEFAULT_WEIGHT,
    p_max: float = DEFAULT_P_MAX,
    seed: int = 0,
    fading: bool = True,
) -> ChannelRealization:
    """Draw complex gains over a scenario.

    Amplitude gain = sqrt(pathloss(distance)) times unit-variance complex
    Gaussian fading. With ``fading=False`` the fading factor is exactly 1,
    so pathloss_exp = 0 gives |g_km| = 1 for every link.
    """
    m = scenario.M
    diff = scenario.tx_pos[:, None, :] - scenario.rx_pos[None, :, :]
    dist = np.sqrt((diff ** 2).sum(axis=2))  # dist[k, m] = tx k to rx m
    amp = np.sqrt(pathloss(dist, pathloss_exp))
    if fading:
        rng = np.random.default_rng(seed)
        fade = (rng.standard_normal((m, m)) + 1j * rng.standard_normal((m, m))) / np.sqrt(2.0)
    else:
        fade = np.ones((m, m), dtype=complex)
    return ChannelRealization(G=amp * fade, sigma2=sigma2, alpha=alpha, p_max=p_max)


def _check_power(channels: ChannelRealization, p) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    if p.shape != (channels.M,):
        raise DimensionError(f"power vector has shape {p.shape}, expected ({channels.M},)")
    return p


def sinr(channels: ChannelRealization, p) -> np.ndarray:
    """Per-receiver SINR; the amplitude p_k scales the gain inside |.|^2."""
    p = _check_power(channels, p)
    received = np.abs(channels.G * p[:, None]) ** 2  # received[k, m] = |g_km p_k|^2
    direct = np.diagonal(received).copy()
    interference = received.sum(axis=0) - direct
    return direct / (interference + channels.sigma2)


def weighted_sum_rate(gamma, alpha) -> float:
    """sum_m alpha_m log2(1 + gamma_m) in bps/Hz."""
    gamma = np.asarray(gamma, dtype=float)
    alpha = np.asarray(alpha, dtype=float)
    if gamma.shape != alpha.shape:
        raise DimensionError(f"gamma {gamma.shape} vs alpha {alpha.shape}")
    if np.any(gamma < 0):
        raise ValueError("gamma must be non-negative")
    return float(np.sum(alpha * np.log2(1.0 + gamma)))


def sum_rate(channels: ChannelRealization, p) -> float:
    """Objective value of a power vector on one instance."""
    return weighted_sum_rate(sinr(channels, p), channels.alpha)


def sum_rate_batch(channels: ChannelRealization, P: np.ndarray) -> np.ndarray:
    """Objective for a batch of power vectors, P of shape (B, M)."""
    P = np.asarray(P, dtype=float)
    if P.ndim != 2 or P.shape[1] != channels.M:
        raise DimensionError(f"batch has shape {P.shape}, expected (B, {channels.M})")
    B2 = np.abs(channels.G) ** 2
    received = (P ** 2) @ B2                       # (B, M), col m sums over tx k
    direct = (P ** 2) * np.diagonal(B2)[None, :]
    gamma = direct / (received - direct + channels.sigma2[None, :])
    return (channels.alpha[None, :] * np.log2(1.0 + gamma)).sum(axis=1)


def weighted_sum_rate_grad(channels: ChannelRealization, p) -> np.ndarray:
    """Analytic d(weighted sum rate)/dp at a power vector."""
    p = _check_power(channels, p)
    B2 = np.abs(channels.G) ** 2
    bdiag = np.diagonal(B2)
    direct = bdiag * p ** 2
    denom = (B2 * (p ** 2)[:, None]).sum(axis=0) - direct + channels.sigma2
    gamma = direct / denom
    pref = channels.alpha / (np.log(2.0) * (1.0 + gamma))  # d obj / d gamma_m
    grad = pref * 2.0 * bdiag * p / denom
    cross = pref * direct / denom ** 2  # weight on each interference term
    grad -= 2.0 * p * ((B2 * cross[None, :]).sum(axis=1) - bdiag * cross)
    return grad


def _encode_complex_matrix(G: np.ndarray) -> list:
    return [[[float(z.real), float(z.imag)] for z in row] for row in G]


def _decode_complex_matrix(rows: list) -> np.ndarray:
    return np.array([[complex(re, im) for re, im in row] for row in rows])


def save_dataset(
    path,
    train: list[ChannelRealization],
    test: list[ChannelRealization],
    meta: dict | None = None,
) -> None:
    """Write a line-delimited dataset: one header object, then one record per
    realization with the complex gains as [re, im] pairs. All realizations in
    a file share M, sigma2, alpha and p_max, which live in the header."""
    items = list(train) + list(test)
    if not items:
        raise ValueError("dataset must contain at least one realization")
    first = items[0]
    for ch in items:
        if ch.M != first.M or not np.array_equal(ch.sigma2, first.sigma2) \
                or not np.array_equal(ch.alpha, first.alpha) or ch.p_max != first.p_max:
            raise ValueError("all realizations in a dataset must share link constants")
    header = {
        "version": DATASET_VERSION,
        "kind": "d2d-dataset",
        "M": first.M,
        "sigma2": [float(x) for x in first.sigma2],
        "alpha": [float(x) for x in first.alpha],
        "p_max": float(first.p_max),
        "seed": int((meta or {}).get("seed", 0)),
        "train": len(train),
        "test": len(test),
    }
    if meta:
        for key, val in meta.items():
            if key not in header:
                header[key] = val
    lines = [json.dumps(header, sort_keys=True, separators=(",", ":"))]
    for split, group in (("train", train), ("test", test)):
        for idx, ch in enumerate(group):
            rec = {"split": split, "idx": idx, "G": _encode_complex_matrix(ch.G)}
            lines.append(json.dumps(rec, sort_keys=True, separators=(",", ":")))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_dataset(path) -> tuple[list[ChannelRealization], list[ChannelRealization], dict]:
    """Read a dataset file written by save_dataset; returns (train, test, header)."""
    text = Path(path).read_text(encoding="utf-8")
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise ValueError(f"empty dataset file: {path}")
    header = json.loads(lines[0])
    if header.get("version") != DATASET_VERSION or header.get("kind") != "d2d-dataset":
        raise ValueError(f"unrecognized dataset header in {path}")
    sigma2 = np.asarray(header["sigma2"], dtype=float)
    alpha = np.asarray(header["alpha"], dtype=float)
    p_max = float(header["p_max"])
    train: list[ChannelRealization] = []
    test: list[ChannelRealization] = []
    for ln in lines[1:]:
        rec = json.loads(ln)
        ch = ChannelRealization(
            G=_decode_complex_matrix(rec["G"]), sigma2=sigma2, alpha=alpha, p_max=p_max
        )
        if rec["split"] == "train":
            train.append(ch)
        elif rec["split"] == "test":
            test.append(ch)
        else:
            raise ValueError(f"unknown split tag {rec['split']!r}")
    if len(train) != header["train"] or len(test) != header["test"]:
        raise ValueError("record counts do not match dataset header")
    return train, test, header
