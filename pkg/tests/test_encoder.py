import math

import numpy as np
import pytest

from conplan.clusterer import ClusterParams
from conplan.constraints import SystemSpec, residual_norm, sample_on_manifold
from conplan.dataset import ConfigDataset, ConfigRecord, generate_dataset
from conplan.embedder import EmbedParams
from conplan.encoder import (
    EncoderModel,
    TrainConfig,
    _backward_batch,
    _batch_pos_sets,
    _forward_batch,
    _loss_nce_impl,
    augment,
    batch_features,
    forward,
    init_model,
    load_model,
    loss_nce,
    save_model,
    train,
)
from conplan.errors import (
    DatasetHashMismatchError,
    DimensionMismatchError,
    InvalidArgumentError,
    ModelIOError,
)
from conplan.kinematics import nullspace_basis, jacobian
from conplan.pseudolabels import PseudoLabelMatrix, ScaleSchedule, default_schedule

from conftest import make_chain


def toy_model(n=3, h=5, d=4, p=3, seed=0):
    return init_model(n, h, d, p, seed=seed)


class TestForward:
    def test_zero_weights_zero_output(self):
        m = toy_model()
        for k, (W, b) in enumerate(m.layers):
            m.layers[k] = (np.zeros_like(W), np.zeros_like(b))
        f, z = forward(m, np.array([1.0, -2.0, 3.0]))
        assert np.all(f == 0.0)
        assert np.all(z == 0.0)

    def test_hand_computed_single_path(self):
        # 1-unit layers, weight 2 / bias -1 each; input 2
        m = EncoderModel(layers=[(np.array([[2.0]]), np.array([-1.0]))
                                 for _ in range(6)],
                         n_in=1, hidden_dim=1, feature_dim=1, projector_dim=1)
        # chain: relu(2x-1) three times then affine, then relu affine, affine
        x = 2.0
        a = x
        for k in range(6):
            z = 2.0 * a - 1.0
            a = max(z, 0.0) if k in (0, 1, 2, 4) else z
        f, z_out = forward(m, np.array([x]))
        # feature is the 4th affine output: relu chain 3,5,9 -> feature 17
        assert f[0] == pytest.approx(17.0)
        assert z_out[0] == pytest.approx(a)

    def test_batch_equals_single(self):
        m = toy_model(seed=3)
        rng = np.random.default_rng(0)
        X = rng.normal(size=(7, 3))
        F, Z = _forward_batch(m, X)
        for i in range(7):
            f, z = forward(m, X[i])
            assert np.allclose(f, F[i], rtol=1e-12, atol=1e-14)
            assert np.allclose(z, Z[i], rtol=1e-12, atol=1e-14)

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatchError):
            forward(toy_model(), np.zeros(4))


class TestLossNce:
    def test_identical_pair_zero_loss(self):
        z = np.array([[0.3, 0.4], [0.3, 0.4]])
        assert loss_nce(z, [np.array([1])], tau=0.5) == pytest.approx(0.0, abs=1e-12)

    def test_three_anchor_instance_matches_oracle(self):
        # frozen value from an independent scalar evaluation of the ratio
        Z = np.array([[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0]])
        sets = [np.array([1]), np.array([0, 2]), np.array([1])]
        assert loss_nce(Z, sets, tau=0.5) == pytest.approx(0.25385602208594527,
                                                           abs=1e-12)

    def test_scale_invariance(self):
        rng = np.random.default_rng(1)
        Z = rng.normal(size=(6, 4))
        sets = [np.array([2, 3]), np.array([0]), np.array([5])]
        assert loss_nce(Z * 5.0, sets, 0.7) == pytest.approx(
            loss_nce(Z, sets, 0.7), rel=1e-12)

    def test_empty_positive_set_skipped(self):
        rng = np.random.default_rng(2)
        Z = rng.normal(size=(4, 3))
        assert loss_nce(Z, [np.array([], dtype=int)], 0.5) == 0.0

    def test_zero_norm_projection_defined(self):
        Z = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
        val = loss_nce(Z, [np.array([1])], 0.5)
        assert math.isfinite(val)

    def test_nonnegative(self):
        rng = np.random.default_rng(3)
        for _ in range(20):
            Z = rng.normal(size=(8, 5))
            sets = [rng.choice(np.arange(1, 8), size=2, replace=False)
                    for _ in range(4)]
            assert loss_nce(Z, sets, 0.5) >= -1e-12


class TestGradients:
    def _random_instance(self, rng):
        m = toy_model(seed=int(rng.integers(1 << 30)))
        X = rng.normal(size=(10, 3))
        n_anchors = 5
        sets = []
        for a in range(n_anchors):
            others = [b for b in range(10) if b != a]
            k = int(rng.integers(1, 4))
            sets.append(np.array(sorted(rng.choice(others, size=k, replace=False))))
        lams = rng.dirichlet(np.ones(2))
        tau = float(rng.uniform(0.3, 1.0))
        return m, X, sets, lams, tau

    def _loss(self, m, X, sets_by_scale, lams, tau):
        _f, Z = _forward_batch(m, X)
        return sum(lam * loss_nce(Z, sets, tau)
                   for lam, sets in zip(lams, sets_by_scale))

    @pytest.mark.parametrize("draw", range(20))
    def test_full_parameter_gradcheck(self, draw):
        rng = np.random.default_rng(500 + draw)
        while True:
            m, X, sets, lams, tau = self._random_instance(rng)
            _f, Z, cache = _forward_batch(m, X, want_cache=True)
            _acts, zs = cache
            margin = min(np.abs(zs[k]).min() for k in (0, 1, 2, 4))
            if margin > 1e-6 and np.linalg.norm(Z, axis=1).min() > 1e-6:
                break
        sets2 = [s[:1] for s in sets]
        sets_by_scale = [sets, sets2]
        dproj = np.zeros_like(Z)
        for lam, ss in zip(lams, sets_by_scale):
            _l, dZ = _loss_nce_impl(Z, ss, tau, want_grad=True)
            dproj += lam * dZ
        grads = _backward_batch(m, cache, dproj)
        step = 1e-5
        worst = 0.0
        for li, (gW, gb) in enumerate(grads):
            W, b = m.layers[li]
            for arr, g in ((W, gW), (b, gb)):
                flat = arr.reshape(-1)
                gflat = g.reshape(-1)
                for pos in range(0, flat.size, max(1, flat.size // 6)):
                    orig = flat[pos]
                    flat[pos] = orig + step
                    up = self._loss(m, X, sets_by_scale, lams, tau)
                    flat[pos] = orig - step
                    dn = self._loss(m, X, sets_by_scale, lams, tau)
                    flat[pos] = orig
                    fd = (up - dn) / (2 * step)
                    scale = max(abs(fd), abs(gflat[pos]))
                    if scale < 1e-5:
                        # central differences at this step bottom out near
                        # eps*|L|/step ~ 1e-10; compare absolutely there
                        assert abs(fd - gflat[pos]) < 1e-9
                        continue
                    worst = max(worst, abs(fd - gflat[pos]) / scale)
        assert worst < 1e-4


@pytest.fixture(scope="module")
def arm_3r_system():
    chain = make_chain([1.0, 1.0, 1.0], limit=2.9)
    return SystemSpec(chains=(chain,))


class TestAugment:
    def test_no_redundancy_identity(self, two_link):
        sys = SystemSpec(chains=(two_link,))
        q = np.array([0.3, 0.4])
        B = nullspace_basis(jacobian(two_link, q)[:2])
        assert B.shape[1] == 0
        out = augment(sys, q, sigma=0.1, seed=0, basis=B)
        assert np.array_equal(out.q_tilde, q)
        assert not out.degenerate

    def test_sigma_zero_identity(self, arm_3r_system):
        q = np.array([0.2, 0.5, -0.3])
        out = augment(arm_3r_system, q, sigma=0.0, seed=0)
        assert np.array_equal(out.q_tilde, q)

    def test_redundant_arm_moves_on_manifold(self, dual_4r):
        q = sample_on_manifold(dual_4r, rng_seed=2, n=1)[0]
        out = augment(dual_4r, q, sigma=0.05, seed=3)
        assert np.linalg.norm(out.q_tilde - q) > 0.0
        assert residual_norm(dual_4r, out.q_tilde) <= 1e-8
        m = 2  # one self-motion direction per arm
        assert np.linalg.norm(out.q_tilde - q) <= 3 * 0.05 * math.sqrt(m)

    def test_deterministic(self, dual_4r):
        q = sample_on_manifold(dual_4r, rng_seed=2, n=1)[0]
        a = augment(dual_4r, q, sigma=0.05, seed=9)
        b = augment(dual_4r, q, sigma=0.05, seed=9)
        assert np.array_equal(a.q_tilde, b.q_tilde)


def toy_two_cluster_dataset(seed=0, n=200):
    """Unconstrained 2R system with two joint-space blobs."""
    chain = make_chain([1.0, 1.0], limit=2.9)
    sys = SystemSpec(chains=(chain,))
    rng = np.random.default_rng(seed)
    centers = np.array([[-1.0, -1.0], [1.0, 1.0]])
    records = []
    labels = np.empty((n, 1), dtype=np.int64)
    for i in range(n):
        c = i % 2
        q = np.clip(centers[c] + rng.normal(scale=0.2, size=2), -2.8, 2.8)
        records.append(ConfigRecord(q=q, pose_id=i, nullspace=np.zeros((2, 0))))
        labels[i, 0] = c
    ds = ConfigDataset(system=sys, records=records, meta={})
    sched = default_schedule([(5, 0.1)], ClusterParams(5, 3), seed=0)
    lm = PseudoLabelMatrix(labels=labels, schedule=sched,
                           dataset_hash=ds.content_hash())
    return ds, lm


class TestTrain:
    @pytest.fixture(scope="class")
    def trained(self):
        ds, lm = toy_two_cluster_dataset()
        cfg = TrainConfig(lr=1e-3, batch_size=64, epochs=200, tau=0.5,
                          aug_sigma=0.0, seed=0, hidden_dim=32,
                          feature_dim=16, projector_dim=8)
        model, history = train(ds, lm, cfg)
        return ds, lm, model, history

    def test_cluster_separation_in_feature_space(self, trained):
        ds, lm, model, _h = trained
        F = batch_features(model, ds.joint_matrix())
        lab = lm.labels[:, 0]
        within = []
        between = []
        for i in range(0, len(F), 5):
            for j in range(i + 1, len(F), 5):
                d = np.linalg.norm(F[i] - F[j])
                (within if lab[i] == lab[j] else between).append(d)
        assert np.mean(within) < 0.5 * np.mean(between)

    def test_loss_decreases(self, trained):
        *_ds, history = trained[3],
        history = trained[3]
        assert history[-1] < 0.5 * history[0]

    def test_hash_mismatch_refused(self):
        ds, lm = toy_two_cluster_dataset()
        lm.dataset_hash = "deadbeef00000000"
        with pytest.raises(DatasetHashMismatchError):
            train(ds, lm, TrainConfig(epochs=1))

    def test_zero_lambda_scale_is_inert(self):
        ds, lm = toy_two_cluster_dataset()
        rng = np.random.default_rng(7)
        junk = rng.integers(0, 3, size=(len(ds.records), 1)).astype(np.int64)
        two_col = np.hstack([lm.labels, junk])
        sched2 = default_schedule([(5, 0.1), (8, 0.1)], ClusterParams(5, 3), seed=0)
        lm2 = PseudoLabelMatrix(labels=two_col, schedule=sched2,
                                dataset_hash=lm.dataset_hash)
        cfg1 = TrainConfig(lr=1e-3, batch_size=64, epochs=3, seed=1,
                           hidden_dim=16, feature_dim=8, projector_dim=4,
                           aug_sigma=0.0)
        cfg2 = TrainConfig(lr=1e-3, batch_size=64, epochs=3, seed=1,
                           hidden_dim=16, feature_dim=8, projector_dim=4,
                           aug_sigma=0.0, lambdas=(1.0, 0.0))
        m1, _ = train(ds, lm, cfg1)
        m2, _ = train(ds, lm2, cfg2)
        for (Wa, ba), (Wb, bb) in zip(m1.layers, m2.layers):
            assert np.array_equal(Wa, Wb)
            assert np.array_equal(ba, bb)

    def test_bit_deterministic(self):
        ds, lm = toy_two_cluster_dataset()
        cfg = TrainConfig(lr=1e-3, batch_size=64, epochs=5, seed=4,
                          hidden_dim=16, feature_dim=8, projector_dim=4,
                          aug_sigma=0.0)
        m1, h1 = train(ds, lm, cfg)
        m2, h2 = train(ds, lm, cfg)
        assert h1 == h2
        for (Wa, ba), (Wb, bb) in zip(m1.layers, m2.layers):
            assert np.array_equal(Wa, Wb)
            assert np.array_equal(ba, bb)

    def test_loss_decrease_across_seeds(self):
        for seed in range(5):
            ds, lm = toy_two_cluster_dataset(seed=seed)
            cfg = TrainConfig(lr=1e-3, batch_size=64, epochs=200, tau=0.5,
                              aug_sigma=0.0, seed=seed, hidden_dim=32,
                              feature_dim=16, projector_dim=8)
            _m, history = train(ds, lm, cfg)
            assert history[-1] < 0.5 * history[0]


class TestModelIO:
    def test_round_trip_bit_identical(self, tmp_path):
        m = toy_model(seed=11)
        path = tmp_path / "model.bin"
        save_model(m, path)
        back = load_model(path)
        assert (back.n_in, back.hidden_dim, back.feature_dim, back.projector_dim) \
            == (m.n_in, m.hidden_dim, m.feature_dim, m.projector_dim)
        x = np.array([0.1, -0.2, 0.3])
        fa, za = forward(m, x)
        fb, zb = forward(back, x)
        assert np.array_equal(fa, fb)
        assert np.array_equal(za, zb)

    def test_corrupted_file_is_error(self, tmp_path):
        m = toy_model()
        path = tmp_path / "model.bin"
        save_model(m, path)
        blob = bytearray(path.read_bytes())
        with pytest.raises(ModelIOError):
            load_model_from(tmp_path / "short.bin", blob[:40])
        with pytest.raises(ModelIOError):
            load_model_from(tmp_path / "pad.bin", blob + b"\x00" * 8)
        blob[0] = ord("X")
        with pytest.raises(ModelIOError):
            load_model_from(tmp_path / "magic.bin", blob)

    def test_wrong_input_dim_fails_at_forward(self, tmp_path):
        m = toy_model(n=3)
        path = tmp_path / "model.bin"
        save_model(m, path)
        back = load_model(path)
        with pytest.raises(DimensionMismatchError):
            forward(back, np.zeros(8))


def load_model_from(path, blob):
    path.write_bytes(bytes(blob))
    return load_model(path)
