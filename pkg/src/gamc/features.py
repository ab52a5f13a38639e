"""Engineered feature vector for one I/Q frame: 1730 real dimensions.

Fixed block layout (name, size), in order:

    amp_phase_hist      248   amplitude + phase histograms, bins 4/8/16/32/64
    amp_hist_refined    130   128-bin amplitude histogram + amp mean + amp std
    phase_diff_hist     124   consecutive-sample phase increments, same bin set
    fft_hist            248   FFT magnitude + FFT phase histograms, same bin set
    hist_stats           40   skew/kurtosis/entropy/variance of 10 histograms
    circular_stats        3   resultant length, circular variance, circ. skewness
    cumulants            40   C20..C80: re, im, |.|, |.| / C21^(order/2)
    rotational_moments   18   E[e^{jM phi}] and E[x^M]/E[|x|^M], M = 8/16/32
    eigen_structure       2   normalized eigenvalues of the 2x2 I/Q covariance
    bispectrum            4   mean/max/var/entropy of a 16x16 bispectrum grid
    cyclostationary      16   |cyclic mean of |x|^2| at alpha = m/256, m=1..16
    wavelet_energy       16   4-level Haar packet leaf energies (sum to 1)
    amplitude_cdf         9   amplitude quantiles at 0.1..0.9
    phase_diff_fft      128   first 128 FFT magnitude bins of the phase diffs
    sparse_residual     384   max-pooled residual sparse codes (module sparse)
    sparse_global       320   global sparse codes (module sparse)

All histograms are normalized to sum 1 over fixed ranges (values clipped
into range): amplitude [0, 4] after unit-power normalization, phases
[-pi, pi], FFT magnitude [0, 4 * mean]. Frames are power-normalized before
extraction. Every output is finite for any finite input, including the
all-zero frame.
"""

from __future__ import annotations

import hashlib
import json
import math
from functools import lru_cache

import numpy as np

from .errors import LayoutViolation
from .base import BaseEstimator, TransformerMixin, check_is_fitted
from .siggen import FRAME_LEN, normalize_power
from .sparse import DictionarySet, PyramidConfig, SparsePyramid, sparse_features
from .validation import check_frame

HIST_BINS = (4, 8, 16, 32, 64)
AMP_RANGE = (0.0, 4.0)
PHASE_RANGE = (-np.pi, np.pi)
_EPS = 1e-12


def feature_blocks(cfg: PyramidConfig | None = None) -> list[tuple[str, int]]:
    cfg = cfg or PyramidConfig()
    return [
        ("amp_phase_hist", 2 * sum(HIST_BINS)),
        ("amp_hist_refined", 130),
        ("phase_diff_hist", sum(HIST_BINS)),
        ("fft_hist", 2 * sum(HIST_BINS)),
        ("hist_stats", 40),
        ("circular_stats", 3),
        ("cumulants", 40),
        ("rotational_moments", 18),
        ("eigen_structure", 2),
        ("bispectrum", 4),
        ("cyclostationary", 16),
        ("wavelet_energy", 16),
        ("amplitude_cdf", 9),
        ("phase_diff_fft", 128),
        ("sparse_residual", cfg.n_residual),
        ("sparse_global", cfg.n_global),
    ]


def feature_layout(cfg: PyramidConfig | None = None) -> dict[str, tuple[int, int]]:
    """Block name -> (start, stop) index ranges."""
    layout = {}
    pos = 0
    for name, size in feature_blocks(cfg):
        layout[name] = (pos, pos + size)
        pos += size
    return layout


def layout_hash(cfg: PyramidConfig | None = None) -> str:
    payload = json.dumps(feature_blocks(cfg)).encode()
    return hashlib.sha256(payload).hexdigest()[:16]


FEATURE_LAYOUT = feature_layout()
N_FEATURES = sum(size for _, size in feature_blocks())


# ---------------------------------------------------------------------------
# shared per-frame intermediates
# ---------------------------------------------------------------------------

class _FrameContext:
    """Quantities several blocks share, computed once per frame."""

    def __init__(self, x: np.ndarray):
        self.x = x
        self.amp = np.abs(x)
        self.phase = np.angle(x)
        # wrapped phase increment between consecutive samples
        self.dphi = np.angle(x[1:] * np.conj(x[:-1]))
        spec = np.fft.fft(x)
        self.fft_mag = np.abs(spec)
        self.fft_phase = np.angle(spec)
        mean_mag = float(self.fft_mag.mean())
        self.fft_mag_range = (0.0, 4.0 * mean_mag if mean_mag > 0.0 else 1.0)
        self._hists: dict[tuple[str, int], np.ndarray] = {}

    _FAMILIES = ("amp", "phase", "dphi", "fft_mag", "fft_phase")
    _BASE_BINS = {"amp": 128, "phase": 64, "dphi": 64, "fft_mag": 64, "fft_phase": 64}

    def _family(self, name):
        return {
            "amp": (self.amp, AMP_RANGE),
            "phase": (self.phase, PHASE_RANGE),
            "dphi": (self.dphi, PHASE_RANGE),
            "fft_mag": (self.fft_mag, self.fft_mag_range),
            "fft_phase": (self.fft_phase, PHASE_RANGE),
        }[name]

    def hist(self, family: str, bins: int) -> np.ndarray:
        """Normalized histogram over the family's fixed range, values clipped
        into range. Computed once at the finest bin count and folded down
        (bin counts are nested powers of two, so folding is exact)."""
        key = (family, bins)
        if key not in self._hists:
            base = self._BASE_BINS[family]
            base_key = (family, base)
            if base_key not in self._hists:
                values, (lo, hi) = self._family(family)
                idx = ((values - lo) * (base / (hi - lo))).astype(np.int64)
                np.clip(idx, 0, base - 1, out=idx)
                counts = np.bincount(idx, minlength=base).astype(np.float64)
                self._hists[base_key] = counts / max(len(values), 1)
            if bins != base:
                self._hists[key] = self._hists[base_key].reshape(bins, -1).sum(axis=1)
        return self._hists[key]


def _context(frame) -> _FrameContext:
    x = check_frame(getattr(frame, "samples", frame))
    return _FrameContext(normalize_power(x))


# ---------------------------------------------------------------------------
# histogram blocks
# ---------------------------------------------------------------------------

def _hist_block(ctx: _FrameContext) -> np.ndarray:
    parts = [ctx.hist("amp", b) for b in HIST_BINS] + [ctx.hist("phase", b) for b in HIST_BINS]
    return np.concatenate(parts)


def _refined_amp_block(ctx: _FrameContext) -> np.ndarray:
    return np.concatenate([ctx.hist("amp", 128), [ctx.amp.mean(), ctx.amp.std()]])


def _phase_diff_block(ctx: _FrameContext) -> np.ndarray:
    return np.concatenate([ctx.hist("dphi", b) for b in HIST_BINS])


def _fft_hist_block(ctx: _FrameContext) -> np.ndarray:
    parts = [ctx.hist("fft_mag", b) for b in HIST_BINS] + [
        ctx.hist("fft_phase", b) for b in HIST_BINS
    ]
    return np.concatenate(parts)


def histogram_features(frame) -> np.ndarray:
    """Blocks 1-4 (750 dims): amplitude/phase, refined amplitude,
    phase-difference, and FFT histograms."""
    ctx = _context(frame)
    return np.concatenate(
        [_hist_block(ctx), _refined_amp_block(ctx), _phase_diff_block(ctx), _fft_hist_block(ctx)]
    )


def _hist_moments(p: np.ndarray) -> tuple[float, float, float, float]:
    """(skewness, kurtosis, entropy, variance) of a bin-mass vector.

    Entropy uses natural log with the 0*log0 = 0 convention; skewness and
    excess kurtosis of a zero-variance mass vector are defined as 0.
    """
    mu = p.mean()
    centered = p - mu
    var = float(np.mean(centered**2))
    if var < _EPS * _EPS:
        skew, kurt = 0.0, 0.0
    else:
        skew = float(np.mean(centered**3)) / var**1.5
        kurt = float(np.mean(centered**4)) / var**2 - 3.0
    nz = p[p > 0]
    entropy = float(-(nz * np.log(nz)).sum()) if nz.size else 0.0
    return skew, kurt, entropy, float(var)


_STATS_HISTS = [(family, bins) for family in _FrameContext._FAMILIES for bins in (64, 32)]


def _hist_stats_block(ctx: _FrameContext) -> np.ndarray:
    out = np.empty(4 * len(_STATS_HISTS))
    for i, (family, bins) in enumerate(_STATS_HISTS):
        out[4 * i : 4 * i + 4] = _hist_moments(ctx.hist(family, bins))
    return out


def _circular_block(ctx: _FrameContext) -> np.ndarray:
    """Mean resultant length, circular variance, circular skewness of the
    sample phase sequence."""
    z1 = np.mean(np.exp(1j * ctx.phase))
    z2 = np.mean(np.exp(2j * ctx.phase))
    rbar = float(np.abs(z1))
    circ_var = 1.0 - rbar
    if circ_var > _EPS:
        mu1 = float(np.angle(z1))
        skew = float(np.abs(z2)) * math.sin(float(np.angle(z2)) - 2.0 * mu1) / circ_var**1.5
    else:
        skew = 0.0
    return np.array([rbar, circ_var, skew])


def histogram_stats(frame) -> np.ndarray:
    """Blocks 5-6 (43 dims): four statistics of the ten designated
    histograms (64- and 32-bin variants of the five families) plus circular
    statistics of the raw phase."""
    ctx = _context(frame)
    return np.concatenate([_hist_stats_block(ctx), _circular_block(ctx)])


# ---------------------------------------------------------------------------
# high-order cumulants
# ---------------------------------------------------------------------------

CUMULANT_ORDERS = ((2, 0), (2, 1), (4, 0), (4, 1), (4, 2),
                   (6, 0), (6, 1), (6, 2), (6, 3), (8, 0))


def _set_partitions(items):
    if len(items) == 1:
        yield [items]
        return
    first, rest = items[0], items[1:]
    for part in _set_partitions(rest):
        for i in range(len(part)):
            yield part[:i] + [[first] + part[i]] + part[i + 1 :]
        yield [[first]] + part


@lru_cache(maxsize=None)
def cumulant_formula(p: int, q: int) -> tuple[tuple[int, tuple[tuple[int, int], ...]], ...]:
    """Moment expansion of the (p, q) complex cumulant for a zero-mean
    variable, via the partition inversion formula. Terms are
    (integer coefficient, multiset of (order, n_conjugated) moment factors);
    partitions containing singleton blocks vanish under zero mean.
    """
    slots = list(range(p))  # slots p-q .. p-1 carry the conjugate
    terms: dict[tuple, int] = {}
    for part in _set_partitions(slots):
        if any(len(block) == 1 for block in part):
            continue
        m = len(part)
        coef = (-1) ** (m - 1) * math.factorial(m - 1)
        key = tuple(sorted((len(b), sum(1 for s in b if s >= p - q)) for b in part))
        terms[key] = terms.get(key, 0) + coef
    return tuple((c, k) for k, c in sorted(terms.items()) if c != 0)


def complex_cumulants(x: np.ndarray) -> dict[tuple[int, int], complex]:
    """Sample cumulants C_pq of a complex signal (centered first)."""
    x = np.asarray(x, dtype=np.complex128)
    x = x - x.mean()
    xc = np.conj(x)
    needed = set()
    for p, q in CUMULANT_ORDERS:
        for _, factors in cumulant_formula(p, q):
            needed.update(factors)
    moments = {}
    for order, conj in sorted(needed):
        moments[(order, conj)] = complex(np.mean(x ** (order - conj) * xc**conj))
    out = {}
    for p, q in CUMULANT_ORDERS:
        total = 0j
        for coef, factors in cumulant_formula(p, q):
            term = complex(coef)
            for f in factors:
                term *= moments[f]
            total += term
        out[(p, q)] = total
    return out


def high_order_cumulants(frame) -> np.ndarray:
    """Block 7 (40 dims): per cumulant, real part, imaginary part,
    magnitude, and magnitude normalized by C21^(order/2)."""
    x = check_frame(getattr(frame, "samples", frame))
    x = normalize_power(x)
    cums = complex_cumulants(x)
    c21 = abs(cums[(2, 1)])
    out = np.empty(4 * len(CUMULANT_ORDERS))
    for i, (p, q) in enumerate(CUMULANT_ORDERS):
        c = cums[(p, q)]
        mag = abs(c)
        scale = c21 ** (p / 2.0)
        out[4 * i : 4 * i + 4] = (c.real, c.imag, mag, mag / scale if scale > _EPS else 0.0)
    return out


# ---------------------------------------------------------------------------
# geometric blocks
# ---------------------------------------------------------------------------

_ROTATION_ORDERS = (8, 16, 32)


def _rotational_block(ctx: _FrameContext) -> np.ndarray:
    out = np.empty(6 * len(_ROTATION_ORDERS))
    power = float(np.mean(ctx.amp**2))
    for i, m in enumerate(_ROTATION_ORDERS):
        if power > _EPS:
            zp = complex(np.mean(np.exp(1j * m * ctx.phase)))
            denom = float(np.mean(ctx.amp**m))
            zx = complex(np.mean(ctx.x**m)) / denom if denom > _EPS else 0j
        else:
            zp, zx = 0j, 0j
        out[6 * i : 6 * i + 6] = (zp.real, zp.imag, abs(zp), zx.real, zx.imag, abs(zx))
    return out


def _eigen_block(ctx: _FrameContext) -> np.ndarray:
    iq = np.stack([ctx.x.real, ctx.x.imag])
    c = np.cov(iq, bias=True)
    tr = c[0, 0] + c[1, 1]
    if tr <= _EPS:
        return np.array([0.5, 0.5])
    disc = math.sqrt(max((c[0, 0] - c[1, 1]) ** 2 / 4.0 + c[0, 1] ** 2, 0.0))
    lam1 = tr / 2.0 + disc
    lam2 = max(tr / 2.0 - disc, 0.0)
    return np.array([lam1 / tr, lam2 / tr])


def _amp_cdf_block(ctx: _FrameContext) -> np.ndarray:
    return np.quantile(ctx.amp, np.arange(1, 10) / 10.0)


def geometric_features(frame) -> np.ndarray:
    """Blocks 8-9 and 13 (29 dims): rotational moments, eigen structure,
    amplitude CDF."""
    ctx = _context(frame)
    return np.concatenate([_rotational_block(ctx), _eigen_block(ctx), _amp_cdf_block(ctx)])


# ---------------------------------------------------------------------------
# spectral blocks
# ---------------------------------------------------------------------------

_BISPEC_SEGMENTS = 8
_BISPEC_GRID = 16


def _bispectrum_block(ctx: _FrameContext) -> np.ndarray:
    seg = ctx.x.reshape(_BISPEC_SEGMENTS, -1)
    spec = np.fft.fft(seg, axis=1)
    low = spec[:, :_BISPEC_GRID]
    f = np.arange(_BISPEC_GRID)
    prod = low[:, :, None] * low[:, None, :] * np.conj(spec[:, f[:, None] + f[None, :]])
    mag = np.abs(prod.mean(axis=0)).ravel()
    total = mag.sum()
    if total > _EPS:
        pmf = mag / total
        nz = pmf[pmf > 0]
        entropy = float(-(nz * np.log(nz)).sum())
    else:
        entropy = 0.0
    return np.array([mag.mean(), mag.max(), mag.var(), entropy])


_N_CYCLIC = 16
_CYCLIC_BASE = 256  # cyclic frequencies alpha = m / 256 of the sample rate


def _cyclostationary_block(ctx: _FrameContext) -> np.ndarray:
    p = ctx.amp**2
    spec = np.fft.fft(p)
    stride = FRAME_LEN // _CYCLIC_BASE
    bins = stride * np.arange(1, _N_CYCLIC + 1)
    return np.abs(spec[bins]) / FRAME_LEN


_WAVELET_LEVELS = 4


def _wavelet_block(ctx: _FrameContext) -> np.ndarray:
    """Normalized leaf energies of the 4-level orthonormal Haar wavelet
    packet; they sum to 1 (uniform 1/16 for a zero frame)."""
    leaves = [ctx.x]
    for _ in range(_WAVELET_LEVELS):
        nxt = []
        for node in leaves:
            pairs = node.reshape(-1, 2)
            s = math.sqrt(0.5)
            nxt.append((pairs[:, 0] + pairs[:, 1]) * s)
            nxt.append((pairs[:, 0] - pairs[:, 1]) * s)
        leaves = nxt
    energies = np.array([float(np.sum(np.abs(leaf) ** 2)) for leaf in leaves])
    total = energies.sum()
    if total <= _EPS:
        return np.full(len(energies), 1.0 / len(energies))
    return energies / total


_PHASE_FFT_BINS = 128


def _phase_diff_fft_block(ctx: _FrameContext) -> np.ndarray:
    spec = np.fft.fft(ctx.dphi)
    return np.abs(spec[:_PHASE_FFT_BINS]) / FRAME_LEN


def spectral_features(frame) -> np.ndarray:
    """Blocks 10-12 and 14 (164 dims): bispectrum summary, cyclostationary
    magnitudes, wavelet packet energies, phase-difference FFT."""
    ctx = _context(frame)
    return np.concatenate(
        [_bispectrum_block(ctx), _cyclostationary_block(ctx), _wavelet_block(ctx),
         _phase_diff_fft_block(ctx)]
    )


# ---------------------------------------------------------------------------
# full vector
# ---------------------------------------------------------------------------

def extract_all(frame, dicts: DictionarySet, cfg: PyramidConfig | None = None) -> np.ndarray:
    """Full feature vector in the fixed block order. Raises LayoutViolation
    if any block comes out with the wrong dimension."""
    cfg = cfg or PyramidConfig()
    x = check_frame(getattr(frame, "samples", frame))
    x = normalize_power(x)
    ctx = _FrameContext(x)
    sparse_vec = sparse_features(x, dicts, cfg)
    blocks = {
        "amp_phase_hist": _hist_block(ctx),
        "amp_hist_refined": _refined_amp_block(ctx),
        "phase_diff_hist": _phase_diff_block(ctx),
        "fft_hist": _fft_hist_block(ctx),
        "hist_stats": _hist_stats_block(ctx),
        "circular_stats": _circular_block(ctx),
        "cumulants": high_order_cumulants(x),
        "rotational_moments": _rotational_block(ctx),
        "eigen_structure": _eigen_block(ctx),
        "bispectrum": _bispectrum_block(ctx),
        "cyclostationary": _cyclostationary_block(ctx),
        "wavelet_energy": _wavelet_block(ctx),
        "amplitude_cdf": _amp_cdf_block(ctx),
        "phase_diff_fft": _phase_diff_fft_block(ctx),
        "sparse_residual": sparse_vec[: cfg.n_residual],
        "sparse_global": sparse_vec[cfg.n_residual :],
    }
    spec = feature_blocks(cfg)
    for name, size in spec:
        if blocks[name].shape != (size,):
            raise LayoutViolation(
                f"block {name!r} has shape {blocks[name].shape}, expected ({size},)"
            )
    out = np.concatenate([blocks[name] for name, _ in spec])
    assert np.isfinite(out).all(), "non-finite feature value"
    return out


def feature_extraction_flops(cfg: PyramidConfig | None = None) -> int:
    """Order-of-magnitude FLOP estimate for extracting one frame's feature
    vector; used by the complexity report to separate classifier-only from
    pipeline-total cost. Counts multiply/adds plus ~10 flops per
    transcendental call."""
    cfg = cfg or PyramidConfig()
    n = FRAME_LEN
    fft = int(5 * n * math.log2(n))
    amp_phase = 14 * n + 16 * (n - 1)  # |x|, angle, wrapped phase diffs
    hist_passes = 26  # five bin counts x five families, plus the 128-bin pass
    hists = 3 * n * hist_passes
    stats = 10 * 4 * 5 * 64 + 6 * n  # histogram moments + circular stats
    cumulants = 15 * 8 * n
    rotational = 2 * len(_ROTATION_ORDERS) * 12 * n
    eigen_cdf = 6 * n + 10 * n  # covariance + quantile sort
    bispec = _BISPEC_SEGMENTS * int(5 * (n // _BISPEC_SEGMENTS) * 7) \
        + 6 * _BISPEC_SEGMENTS * _BISPEC_GRID**2
    cyclo = 3 * n + fft
    wavelet = 4 * _WAVELET_LEVELS * n
    phase_fft = fft
    # OMP: correlation against every atom per selection step, small solves
    omp = 0
    kmax_g = max(cfg.sparsity_set_global)
    omp += kmax_g * 2 * cfg.global_dim * cfg.atom_count
    kmax_r = max(cfg.sparsity_set_residual)
    for length, wsize in cfg.residual_levels:
        omp += (length // wsize) * kmax_r * 2 * (2 * wsize) * cfg.atom_count
    return (2 * fft + amp_phase + hists + stats + cumulants + rotational
            + eigen_cdf + bispec + cyclo + wavelet + phase_fft + omp)


class FeatureExtractor(BaseEstimator, TransformerMixin):
    """fit() learns the sparse-coding dictionaries from training frames;
    transform() maps (n, 1024) complex frames to (n, 1730) features."""

    def __init__(self, config: PyramidConfig | None = None, iterations: int = 12,
                 seed: int = 0, max_dict_frames: int = 2000):
        self.config = config
        self.iterations = iterations
        self.seed = seed
        self.max_dict_frames = max_dict_frames

    def fit(self, frames, y=None) -> "FeatureExtractor":
        frames = np.ascontiguousarray(frames, dtype=np.complex128)
        if frames.ndim == 1:
            frames = frames[None, :]
        if frames.shape[0] > self.max_dict_frames:
            rng = np.random.default_rng(self.seed)
            keep = rng.choice(frames.shape[0], size=self.max_dict_frames, replace=False)
            frames = frames[np.sort(keep)]
        pyramid = SparsePyramid(config=self.config, iterations=self.iterations, seed=self.seed)
        pyramid.fit(frames)
        self.pyramid_ = pyramid
        self.dictionaries_ = pyramid.dictionaries_
        return self

    @property
    def cfg(self) -> PyramidConfig:
        return self.config if self.config is not None else PyramidConfig()

    def transform(self, frames) -> np.ndarray:
        check_is_fitted(self, "dictionaries_")
        frames = np.ascontiguousarray(frames, dtype=np.complex128)
        if frames.ndim == 1:
            frames = frames[None, :]
        out = np.empty((frames.shape[0], sum(s for _, s in feature_blocks(self.cfg))))
        for i in range(frames.shape[0]):
            out[i] = extract_all(frames[i], self.dictionaries_, self.cfg)
        return out

    def layout(self) -> dict[str, tuple[int, int]]:
        return feature_layout(self.cfg)

    def layout_hash(self) -> str:
        return layout_hash(self.cfg)
