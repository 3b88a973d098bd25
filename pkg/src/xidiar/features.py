"""LFCC front-end with per-conversation cepstral mean normalization."""
from __future__ import annotations

import enum
import wave
import warnings
from dataclasses import dataclass, replace

import numpy as np
from scipy.fft import dct, rfft

from .errors import ConfigError, EmptyInputError, FormatError, DiarizationWarning


class FeatureKind(str, enum.Enum):
    LFCC = "LFCC"
    LFCC_CMN = "LFCC_CMN"


@dataclass(frozen=True)
class AudioBuffer:
    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        if int(self.sample_rate) <= 0:
            raise ConfigError(f"sample rate must be positive, got {self.sample_rate}")
        object.__setattr__(self, "samples", np.asarray(self.samples, dtype=np.float64).ravel())

    @property
    def duration(self) -> float:
        return len(self.samples) / self.sample_rate


@dataclass(frozen=True)
class FeatureMatrix:
    frames: np.ndarray
    frame_shift: float = 0.010
    frame_length: float = 0.025
    kind: FeatureKind = FeatureKind.LFCC

    def __post_init__(self):
        frames = np.asarray(self.frames, dtype=np.float64)
        if frames.ndim != 2:
            frames = frames.reshape(len(frames), -1)
        object.__setattr__(self, "frames", frames)
        object.__setattr__(self, "kind", FeatureKind(self.kind))

    @property
    def num_frames(self) -> int:
        return self.frames.shape[0]

    @property
    def dim(self) -> int:
        return self.frames.shape[1]

    def frame_centers(self) -> np.ndarray:
        return np.arange(self.num_frames) * self.frame_shift + self.frame_length / 2

    @property
    def cell_offset(self) -> float:
        """Start time of the cell of frame 0 when frames tile the timeline by centers."""
        return self.frame_length / 2 - self.frame_shift / 2


@dataclass(frozen=True)
class LfccConfig:
    frame_length: float = 0.025
    frame_shift: float = 0.010
    num_filters: int = 30
    num_ceps: int = 20
    preemphasis: float = 0.97
    log_floor: float = 1e-10
    low_freq: float = 0.0
    high_freq: float | None = None  # None means Nyquist

    def validate(self, sample_rate: int):
        if sample_rate <= 0:
            raise ConfigError(f"sample rate must be positive, got {sample_rate}")
        if self.frame_length <= 0 or self.frame_shift <= 0:
            raise ConfigError("frame length and shift must be positive")
        if self.num_ceps > self.num_filters:
            raise ConfigError("num_ceps cannot exceed num_filters")
        if self.log_floor <= 0:
            raise ConfigError("log_floor must be positive")
        high = self.high_freq if self.high_freq is not None else sample_rate / 2
        if not 0 <= self.low_freq < high <= sample_rate / 2:
            raise ConfigError(f"bad filterbank band [{self.low_freq}, {high}]")


def num_frames(num_samples: int, sample_rate: int, frame_length: float, frame_shift: float) -> int:
    win = int(round(frame_length * sample_rate))
    hop = int(round(frame_shift * sample_rate))
    if num_samples < win:
        return 0
    return (num_samples - win) // hop + 1


def linear_filterbank(num_filters: int, nfft: int, sample_rate: int, low: float = 0.0, high: float | None = None) -> np.ndarray:
    """Triangular filters with linearly spaced centers; shape (num_filters, nfft // 2 + 1)."""
    high = sample_rate / 2 if high is None else high
    edges = np.linspace(low, high, num_filters + 2)
    freqs = np.arange(nfft // 2 + 1) * sample_rate / nfft
    bank = np.zeros((num_filters, len(freqs)))
    for m in range(num_filters):
        lo, mid, hi = edges[m], edges[m + 1], edges[m + 2]
        rise = (freqs - lo) / (mid - lo)
        fall = (hi - freqs) / (hi - mid)
        bank[m] = np.clip(np.minimum(rise, fall), 0.0, None)
    return bank


def extract_lfcc(audio: AudioBuffer, config: LfccConfig | None = None) -> FeatureMatrix:
    config = config or LfccConfig()
    config.validate(audio.sample_rate)
    rate = audio.sample_rate
    win = int(round(config.frame_length * rate))
    hop = int(round(config.frame_shift * rate))
    n = num_frames(len(audio.samples), rate, config.frame_length, config.frame_shift)
    if n <= 0:
        raise EmptyInputError(
            f"audio of {len(audio.samples)} samples is shorter than one {win}-sample frame"
        )

    x = audio.samples
    if config.preemphasis:
        x = np.concatenate([x[:1], x[1:] - config.preemphasis * x[:-1]])

    idx = np.arange(win)[None, :] + hop * np.arange(n)[:, None]
    frames = x[idx] * np.hamming(win)[None, :]
    nfft = 1 << (win - 1).bit_length()
    spectrum = np.abs(rfft(frames, n=nfft, axis=1))
    bank = linear_filterbank(config.num_filters, nfft, rate, config.low_freq, config.high_freq)
    energies = spectrum @ bank.T
    logfb = np.log(np.maximum(energies, config.log_floor))
    ceps = dct(logfb, type=2, norm="ortho", axis=1)[:, : config.num_ceps]
    return FeatureMatrix(ceps, config.frame_shift, config.frame_length, FeatureKind.LFCC)


def apply_cmn(features: FeatureMatrix) -> FeatureMatrix:
    """Subtract the whole-conversation mean from every cepstral column."""
    if features.kind is not FeatureKind.LFCC:
        raise ConfigError(f"CMN expects raw LFCC features, got {features.kind.value}")
    if features.num_frames == 0:
        warnings.warn("CMN on empty feature matrix is a no-op", DiarizationWarning, stacklevel=2)
        return features
    frames = features.frames - features.frames.mean(axis=0, keepdims=True)
    return replace(features, frames=frames, kind=FeatureKind.LFCC_CMN)


def read_wav(path) -> AudioBuffer:
    """Read 16-bit linear PCM mono WAV into [-1, 1] floats."""
    with wave.open(str(path), "rb") as w:
        if w.getsampwidth() != 2:
            raise FormatError(f"{path}: expected 16-bit PCM, got {8 * w.getsampwidth()}-bit")
        if w.getnchannels() != 1:
            raise FormatError(f"{path}: expected mono, got {w.getnchannels()} channels")
        rate = w.getframerate()
        data = w.readframes(w.getnframes())
    samples = np.frombuffer(data, dtype="<i2").astype(np.float64) / 32768.0
    return AudioBuffer(samples, rate)


def write_wav(path, audio: AudioBuffer):
    pcm = np.clip(np.round(audio.samples * 32768.0), -32768, 32767).astype("<i2")
    with wave.open(str(path), "wb") as w:
        w.setnchannels(1)
        w.setsampwidth(2)
        w.setframerate(audio.sample_rate)
        w.writeframes(pcm.tobytes())
