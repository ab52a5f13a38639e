"""Sparse-coding representation of I/Q frames.

A frame is decomposed into an inverse pyramid of block-averaged
multi-resolution signals. The coarsest (global) signal is encoded against a
learned dictionary at several sparsity budgets; the inter-level residual
signals are cropped into non-overlapping windows, encoded per window, and
max-pooled per atom across windows (largest absolute projection), capturing
transition patterns. Global and residual codes together give 704 feature
dimensions (320 global + 384 residual).

Encoding solves the L0-constrained reconstruction greedily with orthogonal
matching pursuit; dictionary learning alternates batch OMP with a full
least-squares dictionary update and enforces unit-norm-bounded atoms. Both
steps are constructed so the total reconstruction error never increases:
re-encoding falls back to the previous support whenever greedy selection
would be worse, and atom renormalization rescales coefficient rows to leave
the reconstruction unchanged.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigMismatch, InsufficientData, InvalidConfig, InvalidSparsity
from .base import BaseEstimator, TransformerMixin, check_is_fitted
from .siggen import FRAME_LEN, normalize_power

_NORM_TOL = 1e-9
_RESIDUAL_STOP = 1e-8
_DEAD_ATOM = 1e-12


@dataclass
class Dictionary:
    """Learned atom matrix; columns are atoms with L2 norm <= 1."""

    atoms: np.ndarray  # (d, n) float64

    def __post_init__(self):
        self.atoms = np.ascontiguousarray(self.atoms, dtype=np.float64)
        if self.atoms.ndim != 2:
            raise InvalidConfig(f"atom matrix must be 2-d, got shape {self.atoms.shape}")
        norms = np.linalg.norm(self.atoms, axis=0)
        if norms.size and float(norms.max()) > 1.0 + _NORM_TOL:
            raise InvalidConfig(
                f"atom norms must be <= 1 (max found {float(norms.max()):.12f})"
            )

    @property
    def d(self) -> int:
        return self.atoms.shape[0]

    @property
    def n(self) -> int:
        return self.atoms.shape[1]


@dataclass
class SparseCode:
    """OMP result for one window."""

    coefficients: np.ndarray  # (n,) float64, exactly zero off support
    support: np.ndarray  # selected atom indices, in selection order
    residual_norm: float


@dataclass
class LearnHistory:
    """Per-iteration reconstruction error and max column norm."""

    errors: list[float] = field(default_factory=list)
    max_col_norms: list[float] = field(default_factory=list)


# ---------------------------------------------------------------------------
# orthogonal matching pursuit
# ---------------------------------------------------------------------------

def _batch_omp(X: np.ndarray, D: np.ndarray, k: int, snapshot_ks=()):
    """OMP over the rows of X (windows) against dictionary D.

    Returns (R, rnorm2, supports, slen, snapshots) where R is the dense
    (n_windows, n_atoms) coefficient matrix, rnorm2 the squared residual
    norms, and snapshots maps each requested sparsity level to a copy of R
    taken after that many selection steps (nested greedy path, so the k=1
    code is step one of the k=3 run).
    """
    X = np.ascontiguousarray(X, dtype=np.float64)
    W, d = X.shape
    n = D.shape[1]
    G = D.T @ D
    DTx = D.T @ X.T  # (n, W)
    col_norms = np.sqrt(np.diag(G))
    usable = col_norms > _DEAD_ATOM
    inv_norms = np.where(usable, 1.0 / np.maximum(col_norms, _DEAD_ATOM), 0.0)

    R = np.zeros((W, n))
    xnorm2 = np.einsum("wd,wd->w", X, X)
    rnorm2 = xnorm2.copy()
    supports = np.full((W, k), -1, dtype=np.int64)
    slen = np.zeros(W, dtype=np.int64)
    active = rnorm2 > _RESIDUAL_STOP**2
    snapshots = {}

    for step in range(k):
        act = np.flatnonzero(active)
        if act.size:
            corr = DTx[:, act] - G @ R[act].T  # (n, |act|)
            scores = np.abs(corr) * inv_norms[:, None]
            scores[~usable] = -1.0
            sel = np.argmax(scores, axis=0)
            supports[act, step] = sel
            slen[act] = step + 1
            ssub = supports[act, : step + 1]
            A = G[ssub[:, :, None], ssub[:, None, :]]
            b = np.take_along_axis(DTx.T[act], ssub, axis=1)
            try:
                coef = np.linalg.solve(A, b[:, :, None])[:, :, 0]
            except np.linalg.LinAlgError:
                coef = np.stack(
                    [np.linalg.lstsq(A[i], b[i], rcond=None)[0] for i in range(len(act))]
                )
            R[act] = 0.0
            R[act[:, None], ssub] = coef
            rnorm2[act] = np.maximum(xnorm2[act] - np.einsum("ws,ws->w", b, coef), 0.0)
            active[act] = rnorm2[act] > _RESIDUAL_STOP**2
        if (step + 1) in snapshot_ks:
            snapshots[step + 1] = R.copy()
    # the incremental norm update cancels catastrophically near zero;
    # recompute the final residuals explicitly
    resid = X - R @ D.T
    rnorm2 = np.einsum("wd,wd->w", resid, resid)
    return R, rnorm2, supports, slen, snapshots


def omp_encode(window, dictionary: Dictionary, k: int) -> SparseCode:
    """Greedy OMP: repeatedly pick the atom with the largest normalized
    absolute correlation to the residual, least-squares refit on the
    support, stop after k atoms or once the residual norm drops below 1e-8.
    """
    if k < 1 or k > dictionary.n:
        raise InvalidSparsity(f"k must lie in [1, {dictionary.n}], got {k}")
    x = np.ascontiguousarray(window, dtype=np.float64).reshape(1, -1)
    if x.shape[1] != dictionary.d:
        raise ConfigMismatch(
            f"window has {x.shape[1]} dims but dictionary atoms have {dictionary.d}"
        )
    R, rnorm2, supports, slen, _ = _batch_omp(x, dictionary.atoms, k)
    m = int(slen[0])
    return SparseCode(
        coefficients=R[0],
        support=supports[0, :m].copy(),
        residual_norm=float(np.sqrt(rnorm2[0])),
    )


# ---------------------------------------------------------------------------
# dictionary learning
# ---------------------------------------------------------------------------

def _refit_supports(X, D, supports, slen):
    """Least-squares coefficients on fixed supports; returns (R, rnorm2)."""
    W, _ = X.shape
    n = D.shape[1]
    G = D.T @ D
    DTx = D.T @ X.T
    R = np.zeros((W, n))
    xnorm2 = np.einsum("wd,wd->w", X, X)
    rnorm2 = xnorm2.copy()
    for m in np.unique(slen):
        if m == 0:
            continue
        rows = np.flatnonzero(slen == m)
        ssub = supports[rows, :m]
        A = G[ssub[:, :, None], ssub[:, None, :]]
        b = np.take_along_axis(DTx.T[rows], ssub, axis=1)
        try:
            coef = np.linalg.solve(A, b[:, :, None])[:, :, 0]
        except np.linalg.LinAlgError:
            coef = np.stack(
                [np.linalg.lstsq(A[i], b[i], rcond=None)[0] for i in range(len(rows))]
            )
        R[rows[:, None], ssub] = coef
        rnorm2[rows] = np.maximum(xnorm2[rows] - np.einsum("ws,ws->w", b, coef), 0.0)
    return R, rnorm2


def learn_dictionary(windows, n_atoms: int, k: int, iterations: int, seed: int,
                     ) -> tuple[Dictionary, LearnHistory]:
    """Alternating minimization: batch OMP encode, full least-squares
    dictionary update, column renorm to norm <= 1 (coefficient rows rescaled
    inversely so the reconstruction is untouched), unused atoms reseeded
    from the worst-reconstructed windows.

    Returns the dictionary and the per-iteration error/norm history. The
    error trace is non-increasing by construction.
    """
    X = np.ascontiguousarray(windows, dtype=np.float64)
    if X.ndim != 2:
        raise InvalidConfig(f"windows must be (count, dim), got shape {X.shape}")
    if iterations < 1:
        raise InvalidConfig(f"iterations must be >= 1, got {iterations}")
    W, d = X.shape
    norms = np.linalg.norm(X, axis=1)
    candidates = np.flatnonzero(norms > _DEAD_ATOM)
    if candidates.size < n_atoms:
        raise InsufficientData(
            f"need at least {n_atoms} nonzero training windows, got {candidates.size}"
        )
    if k > n_atoms:
        raise InvalidSparsity(f"k={k} exceeds atom count {n_atoms}")

    rng = np.random.default_rng(seed)
    pick = rng.choice(candidates, size=n_atoms, replace=False)
    D = (X[pick] / norms[pick, None]).T.copy()

    history = LearnHistory()
    prev_supports = None
    prev_slen = None

    for _ in range(iterations):
        # --- encode (greedy, with fallback to the previous supports) ---
        R, rnorm2, supports, slen, _ = _batch_omp(X, D, k)
        if prev_supports is not None:
            R_old, rn2_old = _refit_supports(X, D, prev_supports, prev_slen)
            worse = rnorm2 > rn2_old
            if np.any(worse):
                R[worse] = R_old[worse]
                rnorm2[worse] = rn2_old[worse]
                supports[worse] = prev_supports[worse]
                slen[worse] = prev_slen[worse]

        # --- dictionary update: min_D ||X - R D^T||_F ---
        Dt, *_ = np.linalg.lstsq(R, X, rcond=None)
        D = Dt.T

        # --- renormalize without moving the reconstruction ---
        col = np.linalg.norm(D, axis=0)
        over = col > 1.0
        if np.any(over):
            D[:, over] /= col[over]
            R[:, over] *= col[over]

        # --- reseed dead atoms from the worst-reconstructed windows ---
        resid2 = np.einsum("wd,wd->w", X - R @ D.T, X - R @ D.T)
        dead = np.flatnonzero(np.linalg.norm(D, axis=0) <= _DEAD_ATOM)
        if dead.size:
            worst = np.argsort(-resid2, kind="stable")
            for j, w in zip(dead, worst[: dead.size]):
                wn = np.linalg.norm(X[w])
                if wn > _DEAD_ATOM:
                    D[:, j] = X[w] / wn
                R[:, j] = 0.0

        history.errors.append(float(resid2.sum()))
        history.max_col_norms.append(float(np.linalg.norm(D, axis=0).max()))
        prev_supports, prev_slen = supports, slen

    return Dictionary(atoms=D), history


# ---------------------------------------------------------------------------
# inverse pyramid
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PyramidConfig:
    """Multi-resolution layout of the sparse representation.

    The frame is repeatedly block-averaged by ``decimation``; the signal at
    ``global_length`` provides global codes, and each (length, window_size)
    residual level encodes the difference between that resolution and the
    hold-upsampled next-coarser one.
    """

    global_length: int = 64
    residual_levels: tuple[tuple[int, int], ...] = ((256, 16), (64, 16))
    sparsity_set_global: tuple[int, ...] = (1, 2, 3, 4, 5)
    sparsity_set_residual: tuple[int, ...] = (1, 2, 3)
    atom_count: int = 64
    decimation: int = 4

    def __post_init__(self):
        for length, wsize in self.residual_levels:
            if length % wsize:
                raise InvalidConfig(
                    f"window size {wsize} must divide level length {length}"
                )
            if length % self.decimation:
                raise InvalidConfig(
                    f"decimation {self.decimation} must divide level length {length}"
                )
        if FRAME_LEN % self.global_length:
            raise InvalidConfig("global_length must divide the frame length")

    @property
    def n_global(self) -> int:
        return len(self.sparsity_set_global) * self.atom_count

    @property
    def n_residual(self) -> int:
        return len(self.residual_levels) * len(self.sparsity_set_residual) * self.atom_count

    @property
    def n_features(self) -> int:
        return self.n_global + self.n_residual

    def window_dim(self, level_length: int) -> int:
        for length, wsize in self.residual_levels:
            if length == level_length:
                return 2 * wsize
        raise InvalidConfig(f"no residual level of length {level_length}")

    @property
    def global_dim(self) -> int:
        return 2 * self.global_length


@dataclass
class Pyramid:
    """Decimated signals and inter-level residuals for one frame."""

    signals: dict[int, np.ndarray]  # length -> complex array of that length
    residuals: dict[int, np.ndarray]  # level length -> complex residual
    global_signal: np.ndarray


def _block_mean(x: np.ndarray, factor: int) -> np.ndarray:
    return x.reshape(-1, factor).mean(axis=1)


def build_pyramid(frame, cfg: PyramidConfig) -> Pyramid:
    """Block-average decimation chain plus residuals.

    residual(L) = signal(L) - repeat(signal(L / decimation)); the chain is
    exactly reconstructive: signal(L) == repeat(coarser) + residual(L).
    """
    x = np.ascontiguousarray(getattr(frame, "samples", frame), dtype=np.complex128)
    if x.shape != (FRAME_LEN,):
        raise InvalidConfig(f"expected a {FRAME_LEN}-sample frame, got shape {x.shape}")
    needed = {cfg.global_length}
    for length, _ in cfg.residual_levels:
        needed.add(length)
        needed.add(length // cfg.decimation)
    signals = {FRAME_LEN: x}
    current = x
    length = FRAME_LEN
    while length > min(needed):
        current = _block_mean(current, cfg.decimation)
        length //= cfg.decimation
        signals[length] = current
    missing = needed - set(signals)
    if missing:
        raise InvalidConfig(f"pyramid chain never reaches lengths {sorted(missing)}")
    residuals = {}
    for length, _ in cfg.residual_levels:
        coarse = signals[length // cfg.decimation]
        residuals[length] = signals[length] - np.repeat(coarse, cfg.decimation)
    return Pyramid(signals=signals, residuals=residuals,
                   global_signal=signals[cfg.global_length])


def interleave_iq(x: np.ndarray) -> np.ndarray:
    """Map w complex samples to a 2w real vector [I0, Q0, I1, Q1, ...]."""
    out = np.empty(2 * len(x), dtype=np.float64)
    out[0::2] = x.real
    out[1::2] = x.imag
    return out


def _windows(x: np.ndarray, wsize: int) -> np.ndarray:
    """Crop a complex signal into non-overlapping windows of wsize complex
    samples, I/Q interleaved -> (n_windows, 2 * wsize) real matrix."""
    blocks = x.reshape(-1, wsize)
    out = np.empty((blocks.shape[0], 2 * wsize), dtype=np.float64)
    out[:, 0::2] = blocks.real
    out[:, 1::2] = blocks.imag
    return out


# ---------------------------------------------------------------------------
# feature assembly
# ---------------------------------------------------------------------------

@dataclass
class DictionarySet:
    """Per-level trained dictionaries matching one PyramidConfig."""

    global_dict: Dictionary
    residual_dicts: tuple[Dictionary, ...]  # one per cfg.residual_levels entry

    def validate(self, cfg: PyramidConfig) -> None:
        if self.global_dict.d != cfg.global_dim or self.global_dict.n != cfg.atom_count:
            raise ConfigMismatch(
                f"global dictionary is {self.global_dict.d}x{self.global_dict.n}, "
                f"config expects {cfg.global_dim}x{cfg.atom_count}"
            )
        if len(self.residual_dicts) != len(cfg.residual_levels):
            raise ConfigMismatch(
                f"{len(self.residual_dicts)} residual dictionaries for "
                f"{len(cfg.residual_levels)} levels"
            )
        for dic, (length, wsize) in zip(self.residual_dicts, cfg.residual_levels):
            if dic.d != 2 * wsize or dic.n != cfg.atom_count:
                raise ConfigMismatch(
                    f"residual-{length} dictionary is {dic.d}x{dic.n}, "
                    f"config expects {2 * wsize}x{cfg.atom_count}"
                )


def sparse_features(frame, dicts: DictionarySet, cfg: PyramidConfig) -> np.ndarray:
    """704-dim sparse representation of one frame.

    Layout: residual block first (levels in config order, sparsity ascending
    within a level, atoms within that), then the global block (sparsity
    ascending). Residual entries are max-pooled absolute coefficients across
    the level's windows; global entries are signed coefficients.
    """
    dicts.validate(cfg)
    pyr = build_pyramid(frame, cfg)
    out = np.empty(cfg.n_features, dtype=np.float64)
    pos = 0
    kmax_r = max(cfg.sparsity_set_residual)
    for dic, (length, wsize) in zip(dicts.residual_dicts, cfg.residual_levels):
        win = _windows(pyr.residuals[length], wsize)
        _, _, _, _, snaps = _batch_omp(win, dic.atoms, kmax_r,
                                       snapshot_ks=set(cfg.sparsity_set_residual))
        for k in cfg.sparsity_set_residual:
            pooled = np.abs(snaps[k]).max(axis=0)
            out[pos : pos + cfg.atom_count] = pooled
            pos += cfg.atom_count
    gwin = interleave_iq(pyr.global_signal).reshape(1, -1)
    kmax_g = max(cfg.sparsity_set_global)
    _, _, _, _, snaps = _batch_omp(gwin, dicts.global_dict.atoms, kmax_g,
                                   snapshot_ks=set(cfg.sparsity_set_global))
    for k in cfg.sparsity_set_global:
        out[pos : pos + cfg.atom_count] = snaps[k][0]
        pos += cfg.atom_count
    assert pos == cfg.n_features
    return out


class SparsePyramid(BaseEstimator, TransformerMixin):
    """Estimator facade: fit() learns the per-level dictionaries from
    training frames, transform() emits the 704-dim representation per frame.

    Frames are power-normalized before decomposition so codes are comparable
    across SNRs.
    """

    def __init__(self, config: PyramidConfig | None = None, iterations: int = 12,
                 seed: int = 0, max_train_windows: int = 100_000):
        self.config = config
        self.iterations = iterations
        self.seed = seed
        self.max_train_windows = max_train_windows

    def _cfg(self) -> PyramidConfig:
        return self.config if self.config is not None else PyramidConfig()

    def fit(self, frames, y=None) -> "SparsePyramid":
        cfg = self._cfg()
        frames = np.ascontiguousarray(frames, dtype=np.complex128)
        if frames.ndim == 1:
            frames = frames[None, :]
        rng = np.random.default_rng(self.seed)

        global_rows = []
        residual_rows: list[list[np.ndarray]] = [[] for _ in cfg.residual_levels]
        for row in frames:
            pyr = build_pyramid(normalize_power(row), cfg)
            global_rows.append(interleave_iq(pyr.global_signal))
            for i, (length, wsize) in enumerate(cfg.residual_levels):
                residual_rows[i].append(_windows(pyr.residuals[length], wsize))

        def cap(mat):
            if mat.shape[0] > self.max_train_windows:
                sel = rng.choice(mat.shape[0], size=self.max_train_windows, replace=False)
                return mat[np.sort(sel)]
            return mat

        kg = max(cfg.sparsity_set_global)
        kr = max(cfg.sparsity_set_residual)
        gmat = cap(np.asarray(global_rows))
        gdic, ghist = learn_dictionary(gmat, cfg.atom_count, kg, self.iterations,
                                       seed=self.seed)
        rdics = []
        histories = {"global": ghist}
        for i, (length, _) in enumerate(cfg.residual_levels):
            rmat = cap(np.concatenate(residual_rows[i]))
            dic, hist = learn_dictionary(rmat, cfg.atom_count, kr, self.iterations,
                                         seed=self.seed + 1 + i)
            rdics.append(dic)
            histories[f"residual_{length}"] = hist
        self.dictionaries_ = DictionarySet(global_dict=gdic, residual_dicts=tuple(rdics))
        self.histories_ = histories
        return self

    def transform(self, frames) -> np.ndarray:
        check_is_fitted(self, "dictionaries_")
        cfg = self._cfg()
        frames = np.ascontiguousarray(frames, dtype=np.complex128)
        if frames.ndim == 1:
            frames = frames[None, :]
        out = np.empty((frames.shape[0], cfg.n_features))
        for i, row in enumerate(frames):
            out[i] = sparse_features(normalize_power(row), self.dictionaries_, cfg)
        return out
