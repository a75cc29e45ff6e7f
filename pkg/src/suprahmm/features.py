"""MFCC and prosodic feature extraction for speech utterances.

The acoustic front-end turns a mono PCM waveform into per-frame cepstral
vectors (static coefficients plus their time deltas).  The prosodic
front-end tracks pitch, voicing, and energy per frame and summarizes them
over arbitrary frame segments for the suprasegmental layer.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np
import scipy.fft
from scipy.io import wavfile

# Filterbank energies below this are clipped before the log stage so that
# silence stays representable.
LOG_ENERGY_FLOOR = 1e-10

# Frame mean-square floor for the prosodic log-energy track.
FRAME_ENERGY_FLOOR = 1e-12

# Autocorrelation peak threshold for the voiced/unvoiced decision.
VOICING_THRESHOLD = 0.3

F0_MIN_HZ = 60.0
F0_MAX_HZ = 400.0

PROSODY_DIM = 6


@dataclass(frozen=True)
class AudioClip:
    """A mono waveform with amplitudes in [-1, 1]."""

    samples: np.ndarray
    sample_rate_hz: int

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1 or samples.size == 0:
            raise ValueError("audio clip must be a non-empty 1-D sample array")
        if not np.all(np.isfinite(samples)):
            raise ValueError("audio clip contains non-finite samples")
        if self.sample_rate_hz <= 0:
            raise ValueError("sample rate must be positive")
        object.__setattr__(self, "samples", samples)

    def __len__(self) -> int:
        return self.samples.size


@dataclass(frozen=True)
class MfccConfig:
    """Front-end settings.  Defaults: 25 ms frames with a 10 ms shift,
    0.97 preemphasis, 512-point FFT, 26 mel filters, 16 cepstra, delta
    window of 2 frames."""

    preemphasis_coeff: float = 0.97
    frame_length_ms: float = 25.0
    frame_shift_ms: float = 10.0
    fft_size: int = 512
    num_mel_filters: int = 26
    num_cepstra: int = 16
    delta_window: int = 2

    def __post_init__(self):
        if not 0.0 <= self.preemphasis_coeff < 1.0:
            raise ValueError("preemphasis coefficient must lie in [0, 1)")
        if self.frame_length_ms <= 0 or self.frame_shift_ms <= 0:
            raise ValueError("frame length and shift must be positive")
        if self.frame_shift_ms > self.frame_length_ms:
            raise ValueError("frame shift must not exceed frame length")
        if self.fft_size < 1 or self.fft_size & (self.fft_size - 1):
            raise ValueError("fft_size must be a power of two")
        if self.num_mel_filters < 1:
            raise ValueError("need at least one mel filter")
        if not 1 <= self.num_cepstra <= self.num_mel_filters:
            raise ValueError("num_cepstra must lie in [1, num_mel_filters]")
        if self.delta_window < 1:
            raise ValueError("delta window must be >= 1")

    def frame_length_samples(self, sample_rate_hz: int) -> int:
        return int(round(self.frame_length_ms * sample_rate_hz / 1000.0))

    def frame_shift_samples(self, sample_rate_hz: int) -> int:
        return int(round(self.frame_shift_ms * sample_rate_hz / 1000.0))


@dataclass(frozen=True)
class FeatureSequence:
    """Per-utterance T x D frame matrix; static half followed by delta half."""

    frames: np.ndarray
    frame_shift_ms: float = 10.0

    def __post_init__(self):
        frames = np.asarray(self.frames, dtype=np.float64)
        if frames.ndim != 2 or frames.shape[0] < 1:
            raise ValueError("feature matrix must be 2-D with at least one frame")
        if frames.shape[1] % 2 != 0:
            raise ValueError("feature dimension must be even (static + delta halves)")
        if not np.all(np.isfinite(frames)):
            raise ValueError("feature matrix contains non-finite entries")
        object.__setattr__(self, "frames", frames)

    def __len__(self) -> int:
        return self.frames.shape[0]

    @property
    def dim(self) -> int:
        return self.frames.shape[1]


PROSODY_FIELDS = (
    "mean_log_f0",
    "std_log_f0",
    "voiced_ratio",
    "mean_log_energy",
    "energy_range",
    "duration_frames",
)


@dataclass(frozen=True)
class ProsodySegmentVector:
    """Fixed-length prosodic summary of a frame segment.

    Unvoiced-only segments carry the sentinel convention:
    mean_log_f0 = std_log_f0 = 0 with voiced_ratio = 0.
    """

    mean_log_f0: float
    std_log_f0: float
    voiced_ratio: float
    mean_log_energy: float
    energy_range: float
    duration_frames: float

    def __post_init__(self):
        if not 0.0 <= self.voiced_ratio <= 1.0:
            raise ValueError("voiced_ratio must lie in [0, 1]")
        if self.duration_frames < 1:
            raise ValueError("segment duration must be >= 1 frame")
        if not all(np.isfinite(getattr(self, f)) for f in PROSODY_FIELDS):
            raise ValueError("prosody vector contains non-finite fields")

    def as_array(self) -> np.ndarray:
        return np.array([getattr(self, f) for f in PROSODY_FIELDS], dtype=np.float64)

    @classmethod
    def from_array(cls, values: np.ndarray) -> "ProsodySegmentVector":
        values = np.asarray(values, dtype=np.float64)
        if values.shape != (PROSODY_DIM,):
            raise ValueError("prosody vector must have %d entries" % PROSODY_DIM)
        return cls(*values.tolist())


def preemphasize(clip: AudioClip, coeff: float) -> AudioClip:
    """First-order high-pass: out[n] = in[n] - coeff * in[n-1], out[0] = in[0]."""
    if not 0.0 <= coeff < 1.0:
        raise ValueError("preemphasis coefficient must lie in [0, 1)")
    x = clip.samples
    out = np.empty_like(x)
    out[0] = x[0]
    out[1:] = x[1:] - coeff * x[:-1]
    return AudioClip(out, clip.sample_rate_hz)


def _frame_signal(samples: np.ndarray, frame_len: int, shift: int) -> np.ndarray:
    if samples.size < frame_len:
        raise ValueError(
            "clip of %d samples is shorter than one %d-sample frame"
            % (samples.size, frame_len)
        )
    num_frames = 1 + (samples.size - frame_len) // shift
    idx = shift * np.arange(num_frames)[:, None] + np.arange(frame_len)[None, :]
    return samples[idx]


def frame_and_window(clip: AudioClip, cfg: MfccConfig) -> np.ndarray:
    """Split into overlapping frames and apply a Hamming window.

    Frame t covers samples [t*shift, t*shift + length); a trailing partial
    frame is dropped.  Returns an array of shape (num_frames, frame_len).
    """
    frame_len = cfg.frame_length_samples(clip.sample_rate_hz)
    shift = cfg.frame_shift_samples(clip.sample_rate_hz)
    frames = _frame_signal(clip.samples, frame_len, shift)
    return frames * np.hamming(frame_len)


def hz_to_mel(freq_hz):
    return 2595.0 * np.log10(1.0 + np.asarray(freq_hz, dtype=np.float64) / 700.0)


def mel_to_hz(mel):
    return 700.0 * (10.0 ** (np.asarray(mel, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(num_filters: int, fft_size: int, sample_rate_hz: int):
    """Triangular filters evenly spaced on the mel scale from 0 Hz to Nyquist.

    Returns (weights, centers_hz) where weights has shape
    (num_filters, fft_size // 2 + 1) and is evaluated on the continuous
    frequency of each FFT bin, so adjacent triangles cross-fade to 1.
    """
    nyquist = sample_rate_hz / 2.0
    mel_points = np.linspace(0.0, hz_to_mel(nyquist), num_filters + 2)
    hz_points = mel_to_hz(mel_points)
    bin_freqs = np.arange(fft_size // 2 + 1) * (sample_rate_hz / fft_size)
    weights = np.zeros((num_filters, bin_freqs.size))
    for k in range(num_filters):
        lo, mid, hi = hz_points[k], hz_points[k + 1], hz_points[k + 2]
        rising = (bin_freqs - lo) / (mid - lo)
        falling = (hi - bin_freqs) / (hi - mid)
        weights[k] = np.maximum(0.0, np.minimum(rising, falling))
    return weights, hz_points[1:-1]


def filterbank_energies(clip: AudioClip, cfg: MfccConfig) -> np.ndarray:
    """Per-frame mel filterbank energies of the power spectrum, shape (T, K)."""
    frames = frame_and_window(clip, cfg)
    if frames.shape[1] > cfg.fft_size:
        raise ValueError(
            "fft_size %d is smaller than the %d-sample frame"
            % (cfg.fft_size, frames.shape[1])
        )
    spectrum = np.fft.rfft(frames, n=cfg.fft_size, axis=1)
    power = spectrum.real**2 + spectrum.imag**2
    weights, _ = mel_filterbank(cfg.num_mel_filters, cfg.fft_size, clip.sample_rate_hz)
    return power @ weights.T


def mfcc(clip: AudioClip, cfg: MfccConfig) -> FeatureSequence:
    """Static cepstra per frame; the delta half of the output is zero.

    Chain: preemphasis, framing, Hamming window, power spectrum, mel
    filterbank, log (floored at LOG_ENERGY_FLOOR), DCT-II.  The DCT
    convention is c_k = sum_n log(E_n) cos(pi k (2n+1) / (2K)), so c_0 of
    silence equals K * log(LOG_ENERGY_FLOOR).
    """
    pre = preemphasize(clip, cfg.preemphasis_coeff)
    energies = filterbank_energies(pre, cfg)
    if not np.all(np.isfinite(energies)):
        raise ValueError("non-finite values in the spectrum")
    log_energies = np.log(np.maximum(energies, LOG_ENERGY_FLOOR))
    cepstra = scipy.fft.dct(log_energies, type=2, axis=1)[:, : cfg.num_cepstra] / 2.0
    frames = np.hstack([cepstra, np.zeros_like(cepstra)])
    return FeatureSequence(frames, cfg.frame_shift_ms)


def append_deltas(seq: FeatureSequence, delta_window: int) -> FeatureSequence:
    """Fill the delta half with regression deltas of the static half.

    delta[t] = sum_{k=1..W} k * (static[t+k] - static[t-k]) / (2 * sum k^2),
    with frame indices clamped at the edges.
    """
    if delta_window < 1:
        raise ValueError("delta window must be >= 1")
    num_static = seq.dim // 2
    static = seq.frames[:, :num_static]
    num_frames = static.shape[0]
    denom = 2.0 * sum(k * k for k in range(1, delta_window + 1))
    delta = np.zeros_like(static)
    for k in range(1, delta_window + 1):
        fwd = np.clip(np.arange(num_frames) + k, 0, num_frames - 1)
        bwd = np.clip(np.arange(num_frames) - k, 0, num_frames - 1)
        delta += k * (static[fwd] - static[bwd])
    delta /= denom
    return FeatureSequence(np.hstack([static, delta]), seq.frame_shift_ms)


def extract_features(clip: AudioClip, cfg: MfccConfig | None = None) -> FeatureSequence:
    """Full acoustic front-end: static cepstra plus deltas."""
    cfg = cfg or MfccConfig()
    return append_deltas(mfcc(clip, cfg), cfg.delta_window)


# ---------------------------------------------------------------------------
# Prosody
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FrameProsody:
    """Per-frame pitch, voicing, and log-energy tracks.

    f0_hz is 0 on unvoiced frames.  Segment summaries aggregate these
    tracks into ProsodySegmentVector rows.
    """

    f0_hz: np.ndarray
    voiced: np.ndarray
    log_energy: np.ndarray

    def __post_init__(self):
        f0 = np.asarray(self.f0_hz, dtype=np.float64)
        voiced = np.asarray(self.voiced, dtype=bool)
        log_e = np.asarray(self.log_energy, dtype=np.float64)
        if not (f0.shape == voiced.shape == log_e.shape) or f0.ndim != 1 or f0.size == 0:
            raise ValueError("prosody tracks must be non-empty 1-D arrays of equal length")
        object.__setattr__(self, "f0_hz", f0)
        object.__setattr__(self, "voiced", voiced)
        object.__setattr__(self, "log_energy", log_e)

    def __len__(self) -> int:
        return self.f0_hz.size

    def _summarize(self, idx: np.ndarray) -> np.ndarray:
        f0 = self.f0_hz[idx]
        voiced = self.voiced[idx]
        log_e = self.log_energy[idx]
        if voiced.any():
            log_f0 = np.log(f0[voiced])
            mean_log_f0 = float(log_f0.mean())
            std_log_f0 = float(log_f0.std())
        else:
            mean_log_f0 = 0.0
            std_log_f0 = 0.0
        return np.array(
            [
                mean_log_f0,
                std_log_f0,
                float(voiced.mean()),
                float(log_e.mean()),
                float(log_e.max() - log_e.min()),
                float(idx.size),
            ]
        )

    def segment_vectors(self, segment_ids: np.ndarray) -> np.ndarray:
        """Summarize each segment; returns an (S, 6) matrix.

        segment_ids maps every frame to a segment and must use contiguous
        ids 0..S-1; an id with no frames raises a degenerate-segment error.
        """
        segment_ids = np.asarray(segment_ids)
        if segment_ids.shape != (len(self),):
            raise ValueError("alignment must cover all %d frames" % len(self))
        num_segments = int(segment_ids.max()) + 1 if segment_ids.size else 0
        rows = []
        for seg in range(num_segments):
            idx = np.flatnonzero(segment_ids == seg)
            if idx.size == 0:
                raise ValueError("segment %d is empty" % seg)
            rows.append(self._summarize(idx))
        return np.vstack(rows)

    def utterance_vector(self) -> np.ndarray:
        """The whole utterance summarized as a single segment."""
        return self._summarize(np.arange(len(self)))


def frame_prosody(clip: AudioClip, cfg: MfccConfig | None = None) -> FrameProsody:
    """Track F0 (autocorrelation peak in 60-400 Hz), voicing, and log-energy.

    Uses the same framing grid as the cepstral front-end but raw
    (unwindowed, unpreemphasized) frames.
    """
    cfg = cfg or MfccConfig()
    rate = clip.sample_rate_hz
    frame_len = cfg.frame_length_samples(rate)
    shift = cfg.frame_shift_samples(rate)
    frames = _frame_signal(clip.samples, frame_len, shift)

    energy = (frames**2).mean(axis=1)
    log_energy = np.log(np.maximum(energy, FRAME_ENERGY_FLOOR))

    lag_min = max(1, int(np.ceil(rate / F0_MAX_HZ)))
    lag_max = min(frame_len - 1, int(np.floor(rate / F0_MIN_HZ)))
    if lag_max <= lag_min:
        raise ValueError("frames too short for the 60-400 Hz pitch search")

    nfft = 1
    while nfft < 2 * frame_len:
        nfft *= 2
    spectrum = np.fft.rfft(frames, n=nfft, axis=1)
    acf = np.fft.irfft(spectrum.real**2 + spectrum.imag**2, n=nfft, axis=1)
    r0 = acf[:, 0]
    window = acf[:, lag_min : lag_max + 1]
    peak_lag = lag_min + np.argmax(window, axis=1)
    peak_val = window.max(axis=1) / np.where(r0 > 0, r0, 1.0)

    voiced = (r0 > 0) & (peak_val >= VOICING_THRESHOLD)
    f0 = np.where(voiced, rate / peak_lag, 0.0)
    return FrameProsody(f0, voiced, log_energy)


def extract_prosody(
    clip: AudioClip,
    segment_ids: np.ndarray,
    cfg: MfccConfig | None = None,
) -> list[ProsodySegmentVector]:
    """Per-segment prosodic summaries for a frame-to-segment alignment."""
    track = frame_prosody(clip, cfg)
    matrix = track.segment_vectors(segment_ids)
    return [ProsodySegmentVector.from_array(row) for row in matrix]


# ---------------------------------------------------------------------------
# I/O
# ---------------------------------------------------------------------------


def load_wav(path, expected_sample_rate_hz: int | None = None) -> AudioClip:
    """Read a mono 16-bit PCM RIFF WAV and normalize samples to [-1, 1]."""
    rate, data = wavfile.read(path)
    if data.dtype != np.int16:
        raise ValueError("%s: only 16-bit PCM WAV input is supported" % path)
    if data.ndim != 1:
        raise ValueError("%s: only mono WAV input is supported" % path)
    if expected_sample_rate_hz is not None and rate != expected_sample_rate_hz:
        raise ValueError(
            "%s: sample rate %d does not match expected %d (resampling is not supported)"
            % (path, rate, expected_sample_rate_hz)
        )
    return AudioClip(data.astype(np.float64) / 32768.0, int(rate))


def save_features(path, seq: FeatureSequence) -> None:
    """Binary feature dump: little-endian u32 T, u32 D, then T*D float64 row-major."""
    frames = np.ascontiguousarray(seq.frames, dtype="<f8")
    with open(path, "wb") as fh:
        fh.write(struct.pack("<II", frames.shape[0], frames.shape[1]))
        fh.write(frames.tobytes())


def load_features(path, frame_shift_ms: float = 10.0) -> FeatureSequence:
    with open(path, "rb") as fh:
        header = fh.read(8)
        if len(header) != 8:
            raise ValueError("%s: truncated feature file header" % path)
        num_frames, dim = struct.unpack("<II", header)
        payload = fh.read(8 * num_frames * dim)
    if len(payload) != 8 * num_frames * dim:
        raise ValueError("%s: truncated feature payload" % path)
    frames = np.frombuffer(payload, dtype="<f8").reshape(num_frames, dim)
    return FeatureSequence(frames.copy(), frame_shift_ms)


def save_features_csv(path, seq: FeatureSequence) -> None:
    """Equivalent CSV export for debugging; one row per frame."""
    header = ",".join("f%02d" % d for d in range(seq.dim))
    np.savetxt(path, seq.frames, delimiter=",", header=header, comments="")
