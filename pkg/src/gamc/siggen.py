"""Synthetic I/Q frame generation for 24 modulation classes.

Produces 1024-sample complex baseband frames with configurable channel
impairments (carrier frequency offset, phase offset, optional flat Rayleigh
fading, AWGN at a calibrated SNR). Digital schemes draw random symbols from
unit-average-power constellations and are root-raised-cosine shaped; analog
schemes modulate a band-limited random multitone message; GMSK follows a
Gaussian-filtered MSK phase trajectory.

Determinism contract: every frame derives its own counter-based RNG stream
from (master_seed, class, snr, frame index), so serial and parallel
generation agree bit-exactly.

Note on the class list: the 24 classes below follow the public RadioML
2018.01A release. Published descriptions of that dataset sometimes
enumerate only 23 names while stating a count of 24; OQPSK is the member
such lists omit. We keep all 24 and do not hide the discrepancy.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    EmptyConfig,
    InsufficientLength,
    InvalidConfig,
    UnsupportedModulation,
)
from .validation import check_frame

FRAME_LEN = 1024

#: SNR grid used by the reference dataset regime: -10 dB to 20 dB in 2 dB steps.
DEFAULT_SNR_GRID_DB = tuple(range(-10, 22, 2))


class ModClass(enum.Enum):
    """The 24 modulation identities, in canonical label-id order."""

    OOK = "OOK"
    ASK4 = "ASK4"
    ASK8 = "ASK8"
    BPSK = "BPSK"
    QPSK = "QPSK"
    OQPSK = "OQPSK"
    PSK8 = "PSK8"
    PSK16 = "PSK16"
    PSK32 = "PSK32"
    APSK16 = "APSK16"
    APSK32 = "APSK32"
    APSK64 = "APSK64"
    APSK128 = "APSK128"
    QAM16 = "QAM16"
    QAM32 = "QAM32"
    QAM64 = "QAM64"
    QAM128 = "QAM128"
    QAM256 = "QAM256"
    GMSK = "GMSK"
    AM_SSB_WC = "AM-SSB-WC"
    AM_SSB_SC = "AM-SSB-SC"
    AM_DSB_WC = "AM-DSB-WC"
    AM_DSB_SC = "AM-DSB-SC"
    FM = "FM"

    def __str__(self) -> str:  # pragma: no cover - cosmetic
        return self.value


#: Canonical ordering; index in this tuple is the on-disk label id (0..23).
MOD_CLASSES: tuple[ModClass, ...] = tuple(ModClass)

_NAME_TO_CLASS = {m.value: m for m in MOD_CLASSES}
_CLASS_TO_ID = {m: i for i, m in enumerate(MOD_CLASSES)}

ANALOG_CLASSES = frozenset(
    {ModClass.AM_SSB_WC, ModClass.AM_SSB_SC, ModClass.AM_DSB_WC, ModClass.AM_DSB_SC, ModClass.FM}
)


def mod_class(scheme) -> ModClass:
    """Accept a ModClass or its canonical string name."""
    if isinstance(scheme, ModClass):
        return scheme
    try:
        return _NAME_TO_CLASS[str(scheme)]
    except KeyError:
        raise UnsupportedModulation(
            f"unknown modulation {scheme!r}; expected one of {[m.value for m in MOD_CLASSES]}"
        ) from None


def class_id(scheme) -> int:
    return _CLASS_TO_ID[mod_class(scheme)]


@dataclass(frozen=True)
class ChannelParams:
    """Per-frame synthesis and channel settings.

    cfo_norm is the carrier frequency offset as a fraction of the sample
    rate; rolloff is the RRC roll-off factor; sps the samples per symbol.
    ``shaping=False`` disables pulse shaping (rectangular hold), which keeps
    PSK-family waveforms constant-envelope for analytic checks.
    """

    snr_db: float = math.inf
    cfo_norm: float = 0.0
    phase_offset: float = 0.0
    rolloff: float = 0.25
    sps: int = 8
    fading: bool = False
    seed: int = 0
    shaping: bool = True

    def __post_init__(self):
        if self.sps < 2:
            raise InvalidConfig(f"sps must be >= 2, got {self.sps}")
        if not -0.05 <= self.cfo_norm <= 0.05:
            raise InvalidConfig(f"cfo_norm must lie in [-0.05, 0.05], got {self.cfo_norm}")
        if not 0.0 < self.rolloff <= 1.0:
            raise InvalidConfig(f"rolloff must lie in (0, 1], got {self.rolloff}")


@dataclass
class IQFrame:
    """One 1024-sample complex baseband frame with its label and SNR tag."""

    samples: np.ndarray
    label: ModClass
    snr_db: float

    def __post_init__(self):
        self.samples = check_frame(self.samples, FRAME_LEN)


def normalize_power(x: np.ndarray) -> np.ndarray:
    """Scale a complex vector to unit mean power. All-zero input is returned
    unchanged."""
    p = float(np.mean(np.abs(x) ** 2))
    if p <= 0.0:
        return np.asarray(x, dtype=np.complex128)
    return np.asarray(x, dtype=np.complex128) / math.sqrt(p)


# ---------------------------------------------------------------------------
# constellations
# ---------------------------------------------------------------------------

def _unit_power(points) -> np.ndarray:
    pts = np.asarray(points, dtype=np.complex128)
    return pts / math.sqrt(float(np.mean(np.abs(pts) ** 2)))


def _psk(order: int, offset: float = 0.0) -> np.ndarray:
    k = np.arange(order)
    return np.exp(1j * (2.0 * np.pi * k / order + offset))


def _square_qam(side: int) -> np.ndarray:
    levels = np.arange(-(side - 1), side, 2, dtype=float)
    grid = levels[:, None] + 1j * levels[None, :]
    return _unit_power(grid.ravel())


def _cross_qam(side: int, cut: int) -> np.ndarray:
    # side x side grid with cut x cut blocks removed from each corner.
    levels = np.arange(-(side - 1), side, 2, dtype=float)
    pts = []
    corner = levels[-cut] if cut else None
    for i in levels:
        for q in levels:
            if cut and abs(i) >= abs(corner) and abs(q) >= abs(corner):
                continue
            pts.append(i + 1j * q)
    return _unit_power(pts)


def _apsk(ring_sizes, radii, offsets=None) -> np.ndarray:
    # Default phase offset pi/n per ring staggers adjacent rings.
    if offsets is None:
        offsets = [np.pi / n for n in ring_sizes]
    pts = []
    for n, r, off in zip(ring_sizes, radii, offsets):
        k = np.arange(n)
        pts.append(r * np.exp(1j * (2.0 * np.pi * k / n + off)))
    return _unit_power(np.concatenate(pts))


def _build_constellations() -> dict[ModClass, np.ndarray]:
    c: dict[ModClass, np.ndarray] = {}
    c[ModClass.OOK] = _unit_power([0.0, 1.0])  # -> {0, sqrt(2)}
    c[ModClass.ASK4] = _unit_power([-3.0, -1.0, 1.0, 3.0])
    c[ModClass.ASK8] = _unit_power(np.arange(-7.0, 8.0, 2.0))
    c[ModClass.BPSK] = _psk(2)
    c[ModClass.QPSK] = _psk(4, offset=np.pi / 4)
    c[ModClass.OQPSK] = _psk(4, offset=np.pi / 4)  # offsetting happens at waveform level
    c[ModClass.PSK8] = _psk(8)
    c[ModClass.PSK16] = _psk(16)
    c[ModClass.PSK32] = _psk(32)
    # DVB-S2 ring geometries for 16/32-APSK; the larger two follow the same
    # ring construction with radii extended in the DVB-S2X style.
    c[ModClass.APSK16] = _apsk((4, 12), (1.0, 2.57), (np.pi / 4, np.pi / 12))
    c[ModClass.APSK32] = _apsk((4, 12, 16), (1.0, 2.53, 4.30), (np.pi / 4, np.pi / 12, 0.0))
    c[ModClass.APSK64] = _apsk((4, 12, 20, 28), (1.0, 2.2, 3.6, 5.2))
    c[ModClass.APSK128] = _apsk((8, 16, 24, 36, 44), (1.0, 1.9, 2.8, 3.7, 4.6))
    c[ModClass.QAM16] = _square_qam(4)
    c[ModClass.QAM32] = _cross_qam(6, 1)
    c[ModClass.QAM64] = _square_qam(8)
    c[ModClass.QAM128] = _cross_qam(12, 2)
    c[ModClass.QAM256] = _square_qam(16)
    return c


CONSTELLATIONS = _build_constellations()


def constellation(scheme) -> np.ndarray:
    """Unit-average-power constellation points for a digital scheme."""
    m = mod_class(scheme)
    if m not in CONSTELLATIONS:
        raise UnsupportedModulation(f"{m.value} has no symbol constellation")
    return CONSTELLATIONS[m].copy()


# ---------------------------------------------------------------------------
# pulse shaping
# ---------------------------------------------------------------------------

RRC_SPAN_SYMBOLS = 8


def rrc_taps(sps: int, rolloff: float, span: int = RRC_SPAN_SYMBOLS) -> np.ndarray:
    """Root-raised-cosine impulse response over ``span`` symbols."""
    beta = float(rolloff)
    n = np.arange(-span * sps // 2, span * sps // 2 + 1, dtype=float)
    t = n / sps
    taps = np.empty_like(t)
    for i, ti in enumerate(t):
        if abs(ti) < 1e-12:
            taps[i] = 1.0 - beta + 4.0 * beta / np.pi
        elif beta > 0 and abs(abs(ti) - 1.0 / (4.0 * beta)) < 1e-9:
            taps[i] = (beta / math.sqrt(2.0)) * (
                (1.0 + 2.0 / np.pi) * math.sin(np.pi / (4.0 * beta))
                + (1.0 - 2.0 / np.pi) * math.cos(np.pi / (4.0 * beta))
            )
        else:
            num = math.sin(np.pi * ti * (1.0 - beta)) + 4.0 * beta * ti * math.cos(
                np.pi * ti * (1.0 + beta)
            )
            den = np.pi * ti * (1.0 - (4.0 * beta * ti) ** 2)
            taps[i] = num / den
    return taps / math.sqrt(float(np.sum(taps**2)))


def _shape_impulses(symbols: np.ndarray, sps: int, rolloff: float) -> np.ndarray:
    train = np.zeros(len(symbols) * sps, dtype=np.complex128)
    train[::sps] = symbols
    taps = rrc_taps(sps, rolloff)
    return np.convolve(train, taps, mode="same")


def _hold(symbols: np.ndarray, sps: int) -> np.ndarray:
    return np.repeat(np.asarray(symbols, dtype=np.complex128), sps)


def waveform_from_symbols(scheme, symbols, sps: int, rolloff: float = 0.25,
                          shaping: bool = True) -> np.ndarray:
    """Deterministic symbol-stream to waveform mapping (no cropping, no
    normalization). ``symbols`` are constellation points for digital schemes
    or +/-1 for GMSK."""
    m = mod_class(scheme)
    symbols = np.asarray(symbols, dtype=np.complex128)
    if m is ModClass.GMSK:
        return _gmsk_waveform(np.where(symbols.real >= 0, 1.0, -1.0), sps)
    if m in ANALOG_CLASSES:
        raise UnsupportedModulation(f"{m.value} is not symbol-based")
    if m is ModClass.OQPSK:
        i_wave = (
            _shape_impulses(symbols.real.astype(complex), sps, rolloff)
            if shaping
            else _hold(symbols.real, sps)
        )
        q_wave = (
            _shape_impulses(1j * symbols.imag, sps, rolloff)
            if shaping
            else 1j * _hold(symbols.imag, sps)
        )
        return i_wave + np.roll(q_wave, sps // 2)
    if shaping:
        return _shape_impulses(symbols, sps, rolloff)
    return _hold(symbols, sps)


_GMSK_BT = 0.3


def _gmsk_waveform(bits: np.ndarray, sps: int) -> np.ndarray:
    """Gaussian-filtered MSK: each +/-1 symbol advances the phase by +/-pi/2."""
    sigma = math.sqrt(math.log(2.0)) / (2.0 * np.pi * _GMSK_BT)
    span = 4 * sps
    n = np.arange(-span, span + 1, dtype=float) / sps
    kernel = np.exp(-0.5 * (n / sigma) ** 2)
    kernel /= kernel.sum()
    nrz = np.repeat(np.asarray(bits, dtype=float), sps)
    smoothed = np.convolve(nrz, kernel, mode="same")
    phase = np.cumsum(smoothed) * (np.pi / 2.0) / sps
    return np.exp(1j * phase)


# ---------------------------------------------------------------------------
# analog message model
# ---------------------------------------------------------------------------

_N_TONES = 3
_MSG_BAND = (0.01, 0.10)  # message content below 10% of the sample rate


def _message(n: int, rng: np.random.Generator) -> np.ndarray:
    """Band-limited random message: sum of 3 random-phase sinusoids,
    normalized to unit peak."""
    t = np.arange(n, dtype=float)
    m = np.zeros(n, dtype=float)
    for _ in range(_N_TONES):
        f = rng.uniform(*_MSG_BAND)
        amp = rng.uniform(0.5, 1.0)
        phi = rng.uniform(0.0, 2.0 * np.pi)
        m += amp * np.cos(2.0 * np.pi * f * t + phi)
    return m / float(np.max(np.abs(m)))


def _analytic(m: np.ndarray) -> np.ndarray:
    """Analytic signal m + j*Hilbert(m) via the FFT one-sided window."""
    n = len(m)
    spec = np.fft.fft(m)
    w = np.zeros(n)
    w[0] = 1.0
    if n % 2 == 0:
        w[n // 2] = 1.0
        w[1 : n // 2] = 2.0
    else:
        w[1 : (n + 1) // 2] = 2.0
    return np.fft.ifft(spec * w)


_FM_DEVIATION = 0.05  # peak frequency deviation as a fraction of sample rate
_AM_INDEX = 0.7


def _analog_waveform(m: ModClass, n: int, rng: np.random.Generator) -> np.ndarray:
    msg = _message(n, rng)
    if m is ModClass.FM:
        phase = 2.0 * np.pi * _FM_DEVIATION * np.cumsum(msg)
        return np.exp(1j * phase)
    if m is ModClass.AM_DSB_SC:
        return msg.astype(np.complex128)
    if m is ModClass.AM_DSB_WC:
        return (1.0 + _AM_INDEX * msg).astype(np.complex128)
    if m is ModClass.AM_SSB_SC:
        return _analytic(msg)
    if m is ModClass.AM_SSB_WC:
        return 1.0 + _AM_INDEX * _analytic(msg)
    raise UnsupportedModulation(m.value)  # pragma: no cover


# ---------------------------------------------------------------------------
# frame synthesis
# ---------------------------------------------------------------------------

def modulate(scheme, n_symbols: int, params: ChannelParams, rng_seed: int) -> IQFrame:
    """Synthesize one clean (pre-channel) unit-power frame.

    For analog schemes ``n_symbols * sps`` is simply the sample budget.
    The central 1024 samples are kept so filter edge transients fall away.
    """
    m = mod_class(scheme)
    n_total = n_symbols * params.sps
    if n_total < FRAME_LEN:
        raise InsufficientLength(
            f"n_symbols * sps = {n_total} < {FRAME_LEN}; need at least a full frame"
        )
    rng = np.random.default_rng(rng_seed)
    if m in ANALOG_CLASSES:
        wave = _analog_waveform(m, n_total, rng)
    elif m is ModClass.GMSK:
        bits = rng.integers(0, 2, size=n_symbols) * 2.0 - 1.0
        wave = _gmsk_waveform(bits, params.sps)
    else:
        points = CONSTELLATIONS[m]
        symbols = points[rng.integers(0, len(points), size=n_symbols)]
        wave = waveform_from_symbols(m, symbols, params.sps, params.rolloff, params.shaping)
    start = (len(wave) - FRAME_LEN) // 2
    frame = normalize_power(wave[start : start + FRAME_LEN])
    return IQFrame(samples=frame, label=m, snr_db=math.inf)


def apply_channel(frame: IQFrame, params: ChannelParams) -> IQFrame:
    """Impair a frame: flat Rayleigh gain (optional), CFO rotation, phase
    offset, then AWGN scaled to hit the requested SNR exactly as measured
    over the frame."""
    x = check_frame(frame.samples).copy()
    rng = np.random.default_rng(params.seed)
    if params.fading:
        gain = complex(rng.standard_normal(), rng.standard_normal()) / math.sqrt(2.0)
        x *= gain
    if params.cfo_norm != 0.0:
        x *= np.exp(2j * np.pi * params.cfo_norm * np.arange(FRAME_LEN))
    if params.phase_offset != 0.0:
        x *= np.exp(1j * params.phase_offset)
    if math.isfinite(params.snr_db):
        sig_power = float(np.mean(np.abs(x) ** 2))
        if sig_power > 0.0:
            noise = rng.standard_normal(FRAME_LEN) + 1j * rng.standard_normal(FRAME_LEN)
            target = sig_power * 10.0 ** (-params.snr_db / 10.0)
            noise *= math.sqrt(target / float(np.mean(np.abs(noise) ** 2)))
            x = x + noise
    return IQFrame(samples=x, label=frame.label, snr_db=params.snr_db)


def measured_snr_db(clean: np.ndarray, noisy: np.ndarray) -> float:
    """Empirical SNR of ``noisy`` against the known clean frame."""
    noise = np.asarray(noisy) - np.asarray(clean)
    ps = float(np.mean(np.abs(clean) ** 2))
    pn = float(np.mean(np.abs(noise) ** 2))
    if pn == 0.0:
        return math.inf
    return 10.0 * math.log10(ps / pn)


# ---------------------------------------------------------------------------
# dataset generation
# ---------------------------------------------------------------------------

@dataclass
class FrameSet:
    """Column-oriented frame collection (complex64 storage, matching the
    on-disk format)."""

    samples: np.ndarray  # (n, 1024) complex64
    labels: np.ndarray  # (n,) int16 label ids
    snr_db: np.ndarray  # (n,) float32

    def __len__(self) -> int:
        return self.samples.shape[0]

    def subset(self, index) -> "FrameSet":
        return FrameSet(self.samples[index], self.labels[index], self.snr_db[index])

    @staticmethod
    def concat(parts: list["FrameSet"]) -> "FrameSet":
        return FrameSet(
            np.concatenate([p.samples for p in parts]),
            np.concatenate([p.labels for p in parts]),
            np.concatenate([p.snr_db for p in parts]),
        )


_SNR_KEY_OFFSET = 1 << 20


def _frame_seeds(master_seed: int, cls_id: int, snr_db: float, index: int) -> tuple[int, int, int]:
    key = int(round(snr_db * 100.0)) + _SNR_KEY_OFFSET
    ss = np.random.SeedSequence([int(master_seed), cls_id, key, index])
    state = ss.generate_state(3, dtype=np.uint64)
    return int(state[0]), int(state[1]), int(state[2])


def synthesize_frame(scheme, snr_db: float, master_seed: int, index: int,
                     sps: int = 8, fading: bool = False) -> IQFrame:
    """One dataset frame with per-frame randomized impairments, addressed by
    (master_seed, class, snr, index)."""
    m = mod_class(scheme)
    cid = _CLASS_TO_ID[m]
    mod_seed, chan_seed, imp_seed = _frame_seeds(master_seed, cid, snr_db, index)
    imp = np.random.default_rng(imp_seed)
    params = ChannelParams(
        snr_db=float(snr_db),
        cfo_norm=float(imp.uniform(-0.01, 0.01)),
        phase_offset=float(imp.uniform(-np.pi, np.pi)),
        rolloff=float(imp.uniform(0.1, 0.4)),
        sps=sps,
        fading=fading,
        seed=chan_seed,
    )
    n_symbols = FRAME_LEN // sps + 2 * RRC_SPAN_SYMBOLS
    clean = modulate(m, n_symbols, params, mod_seed)
    return apply_channel(clean, params)


def iter_cells(classes, snr_grid_db, frames_per_cell: int, master_seed: int,
               sps: int = 8, fading: bool = False):
    """Yield (class_id, snr_db, samples[frames_per_cell, 1024] complex64) per
    (class, SNR) cell, in deterministic order."""
    classes = [mod_class(c) for c in classes]
    if not classes:
        raise EmptyConfig("class list is empty")
    snrs = list(snr_grid_db)
    if not snrs:
        raise EmptyConfig("SNR grid is empty")
    if frames_per_cell < 1:
        raise InvalidConfig(f"frames_per_cell must be >= 1, got {frames_per_cell}")
    for m in classes:
        for snr in snrs:
            block = np.empty((frames_per_cell, FRAME_LEN), dtype=np.complex64)
            for i in range(frames_per_cell):
                block[i] = synthesize_frame(m, snr, master_seed, i, sps=sps, fading=fading)\
                    .samples.astype(np.complex64)
            yield _CLASS_TO_ID[m], float(snr), block


def generate_dataset(classes, snr_grid_db, frames_per_cell: int, master_seed: int,
                     sps: int = 8, fading: bool = False) -> FrameSet:
    """Materialize the full |classes| x |snrs| x frames_per_cell collection."""
    parts = []
    for cid, snr, block in iter_cells(classes, snr_grid_db, frames_per_cell,
                                      master_seed, sps=sps, fading=fading):
        n = block.shape[0]
        parts.append(FrameSet(
            block,
            np.full(n, cid, dtype=np.int16),
            np.full(n, snr, dtype=np.float32),
        ))
    return FrameSet.concat(parts)
