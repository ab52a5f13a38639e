import numpy as np
import pytest

from gamc.errors import ConfigMismatch, InsufficientData, InvalidConfig, InvalidSparsity
from gamc.siggen import synthesize_frame
from gamc.sparse import (
    Dictionary,
    DictionarySet,
    PyramidConfig,
    SparsePyramid,
    build_pyramid,
    learn_dictionary,
    omp_encode,
    sparse_features,
)
from gamc.sparse import _batch_omp


@pytest.fixture(scope="module")
def random_dict():
    rng = np.random.default_rng(1)
    atoms = rng.standard_normal((16, 64))
    atoms /= np.linalg.norm(atoms, axis=0)
    return Dictionary(atoms)


# ---------------------------------------------------------------------------
# OMP
# ---------------------------------------------------------------------------

def test_omp_canonical_basis():
    dic = Dictionary(np.eye(5))
    code = omp_encode(3.0 * np.eye(5)[2], dic, k=1)
    assert list(code.support) == [2]
    assert code.coefficients[2] == pytest.approx(3.0)
    assert code.residual_norm == pytest.approx(0.0, abs=1e-12)
    assert np.count_nonzero(code.coefficients) == 1


def test_omp_planted_two_sparse(random_dict):
    rng = np.random.default_rng(3)
    D = random_dict.atoms
    hits = 0
    for _ in range(300):
        sup = rng.choice(64, 2, replace=False)
        window = 1.0 * D[:, sup[0]] - 0.5 * D[:, sup[1]]
        code = omp_encode(window, random_dict, k=2)
        if set(code.support.tolist()) == set(sup.tolist()):
            hits += 1
            assert code.residual_norm < 1e-10
    assert hits >= 297  # >= 99%


def test_omp_k1_matches_exhaustive_correlation(random_dict):
    rng = np.random.default_rng(5)
    D = random_dict.atoms
    norms = np.linalg.norm(D, axis=0)
    for _ in range(100):
        window = rng.standard_normal(16)
        code = omp_encode(window, random_dict, k=1)
        oracle = int(np.argmax(np.abs(D.T @ window) / norms))
        assert code.support[0] == oracle


def test_omp_zero_window(random_dict):
    code = omp_encode(np.zeros(16), random_dict, k=3)
    assert code.residual_norm == 0.0
    assert np.all(code.coefficients == 0.0)
    assert len(code.support) == 0


def test_omp_invalid_sparsity(random_dict):
    with pytest.raises(InvalidSparsity):
        omp_encode(np.ones(16), random_dict, k=65)
    with pytest.raises(InvalidSparsity):
        omp_encode(np.ones(16), random_dict, k=0)


def test_omp_dimension_mismatch(random_dict):
    with pytest.raises(ConfigMismatch):
        omp_encode(np.ones(10), random_dict, k=1)


def test_omp_residual_nonincreasing_in_k(random_dict):
    rng = np.random.default_rng(8)
    window = rng.standard_normal(16)
    prev = np.inf
    for k in range(1, 9):
        rn = omp_encode(window, random_dict, k).residual_norm
        assert rn <= prev + 1e-12
        prev = rn


def test_omp_full_rank_square_reconstructs():
    rng = np.random.default_rng(9)
    atoms = rng.standard_normal((12, 12))
    atoms /= np.maximum(np.linalg.norm(atoms, axis=0), 1.0)
    dic = Dictionary(atoms)
    window = rng.standard_normal(12)
    code = omp_encode(window, dic, k=12)
    assert code.residual_norm < 1e-8 * np.linalg.norm(window)


def test_omp_greedy_path_is_nested(random_dict):
    rng = np.random.default_rng(10)
    window = rng.standard_normal(16)
    s2 = omp_encode(window, random_dict, 2).support
    s4 = omp_encode(window, random_dict, 4).support
    assert list(s4[:2]) == list(s2)


def test_batch_omp_snapshots_match_individual_k(random_dict):
    rng = np.random.default_rng(11)
    X = rng.standard_normal((7, 16))
    _, _, _, _, snaps = _batch_omp(X, random_dict.atoms, 3, snapshot_ks={1, 2, 3})
    for k in (1, 2, 3):
        for i in range(7):
            ref = omp_encode(X[i], random_dict, k)
            np.testing.assert_allclose(snaps[k][i], ref.coefficients, atol=1e-10)


# ---------------------------------------------------------------------------
# dictionary learning
# ---------------------------------------------------------------------------

def test_learn_orthonormal_training_set_exact():
    rng = np.random.default_rng(12)
    basis = np.linalg.qr(rng.standard_normal((16, 16)))[0]
    dic, hist = learn_dictionary(basis, n_atoms=16, k=1, iterations=5, seed=0)
    assert hist.errors[-1] < 1e-8


def test_learn_error_trace_monotone():
    rng = np.random.default_rng(13)
    X = rng.standard_normal((400, 20))
    _, hist = learn_dictionary(X, n_atoms=40, k=3, iterations=20, seed=1)
    errors = np.array(hist.errors)
    assert len(errors) == 20
    assert np.all(np.diff(errors) <= 1e-6 * errors[0])


def test_learn_unit_norm_every_iteration():
    rng = np.random.default_rng(14)
    X = rng.standard_normal((300, 12))
    _, hist = learn_dictionary(X, n_atoms=24, k=2, iterations=10, seed=2)
    assert max(hist.max_col_norms) <= 1.0 + 1e-9


def test_learn_insufficient_data():
    with pytest.raises(InsufficientData):
        learn_dictionary(np.random.default_rng(0).standard_normal((10, 8)),
                         n_atoms=16, k=2, iterations=3, seed=0)


# ---------------------------------------------------------------------------
# pyramid
# ---------------------------------------------------------------------------

def test_pyramid_constant_signal_zero_residuals():
    pyr = build_pyramid(np.full(1024, 1.5 - 0.5j), PyramidConfig())
    for res in pyr.residuals.values():
        np.testing.assert_allclose(res, 0.0, atol=1e-12)


def test_pyramid_residual64_has_four_windows():
    cfg = PyramidConfig()
    frame = synthesize_frame("QAM16", 20.0, 4, 0).samples
    pyr = build_pyramid(frame, cfg)
    assert pyr.residuals[64].shape == (64,)
    assert pyr.residuals[64].reshape(-1, 16).shape == (4, 16)
    assert pyr.residuals[256].reshape(-1, 16).shape == (16, 16)


def test_pyramid_perfect_reconstruction():
    cfg = PyramidConfig()
    frame = synthesize_frame("PSK8", 10.0, 4, 1).samples
    pyr = build_pyramid(frame, cfg)
    for length in (256, 64):
        coarse = pyr.signals[length // 4]
        rebuilt = np.repeat(coarse, 4) + pyr.residuals[length]
        finer = pyr.signals[length]
        energy_rebuilt = np.sum(np.abs(rebuilt) ** 2)
        energy_finer = np.sum(np.abs(finer) ** 2)
        assert energy_rebuilt == pytest.approx(energy_finer, rel=1e-6)
        np.testing.assert_allclose(rebuilt, finer, atol=1e-12)


def test_pyramid_config_validation():
    with pytest.raises(InvalidConfig):
        PyramidConfig(residual_levels=((256, 15),))
    with pytest.raises(InvalidConfig):
        PyramidConfig(global_length=100)


# ---------------------------------------------------------------------------
# sparse feature assembly
# ---------------------------------------------------------------------------

def test_dimensions_704(dictionaries):
    cfg = PyramidConfig()
    assert cfg.n_residual == 384
    assert cfg.n_global == 320
    assert cfg.n_features == 704
    frame = synthesize_frame("QAM64", 16.0, 5, 0).samples
    vec = sparse_features(frame, dictionaries, cfg)
    assert vec.shape == (704,)
    assert np.isfinite(vec).all()


def test_zero_frame_gives_zero_features(dictionaries):
    vec = sparse_features(np.zeros(1024, dtype=complex), dictionaries, PyramidConfig())
    np.testing.assert_array_equal(vec, np.zeros(704))


def test_max_pool_definition():
    # window codes (per atom) [0.2, 0, 0.9] and [0.5, 0.1, 0.3]
    codes = np.array([[0.2, 0.0, 0.9], [0.5, 0.1, 0.3]])
    pooled = np.abs(codes).max(axis=0)
    np.testing.assert_allclose(pooled, [0.5, 0.1, 0.9])


def test_residual_pooling_window_order_invariant(random_dict):
    rng = np.random.default_rng(20)
    windows = rng.standard_normal((6, 16))
    R1, *_ = _batch_omp(windows, random_dict.atoms, 3)
    R2, *_ = _batch_omp(windows[::-1], random_dict.atoms, 3)
    np.testing.assert_allclose(np.abs(R1).max(axis=0), np.abs(R2).max(axis=0), atol=1e-12)


def test_config_mismatch_detected(dictionaries):
    bad_cfg = PyramidConfig(atom_count=32)
    with pytest.raises(ConfigMismatch):
        sparse_features(np.zeros(1024, complex), dictionaries, bad_cfg)


def test_pyramid_estimator_transform_shape(pyramid, training_frames):
    out = pyramid.transform(training_frames[:3])
    assert out.shape == (3, 704)
    # purity: same input, same output
    out2 = pyramid.transform(training_frames[:3])
    np.testing.assert_array_equal(out, out2)


def test_pyramid_estimator_histories_monotone(pyramid):
    for hist in pyramid.histories_.values():
        errors = np.array(hist.errors)
        assert np.all(np.diff(errors) <= 1e-6 * errors[0])
        assert max(hist.max_col_norms) <= 1.0 + 1e-9


def test_get_params_roundtrip():
    est = SparsePyramid(iterations=9, seed=3)
    params = est.get_params()
    est2 = SparsePyramid().set_params(**params)
    assert est2.iterations == 9 and est2.seed == 3
