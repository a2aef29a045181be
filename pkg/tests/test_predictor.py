import numpy as np
import pytest

from smpltrack.errors import DimensionMismatch, ParseError
from smpltrack.predictor import (PAYLOAD_DIM, LayerWeights, PredictorWeights,
                                 TrackHistory, TrackSlot, baseline_predict, impute,
                                 load_weights, predict, save_weights,
                                 sinusoidal_encoding)
from smpltrack.rotation import identity_rot6d, rot6d_to_rotmat_batch


def make_slot(frame, observed=True, seed=None):
    rng = np.random.default_rng(frame if seed is None else seed)
    return TrackSlot(frame, identity_rot6d(24) + rng.normal(size=(24, 6)) * 0.1,
                     rng.normal(size=3) + [0, 0, 5], observed)


@pytest.fixture(scope="module")
def weights():
    return PredictorWeights.random(0)


class TestHistory:
    def test_rolling_window(self):
        history = TrackHistory(t_max=3)
        for f in range(5):
            history.append(make_slot(f))
        assert len(history) == 3
        assert [s.frame for s in history.slots] == [2, 3, 4]

    def test_rejects_non_increasing_frames(self):
        history = TrackHistory([make_slot(3)])
        with pytest.raises(ValueError):
            history.append(make_slot(3))
        with pytest.raises(ValueError):
            TrackHistory([make_slot(2), make_slot(1)])


class TestMaskingSemantics:
    def test_masked_positions_ignore_their_payloads(self, weights):
        rng = np.random.default_rng(1)
        for trial in range(100):
            base = [make_slot(0, seed=trial), make_slot(1, observed=False, seed=trial + 1000),
                    make_slot(2, seed=trial + 2000)]
            garbage = TrackSlot(1, rng.normal(size=(24, 6)) + identity_rot6d(24),
                                rng.normal(size=3), observed=False)
            h1 = TrackHistory(list(base))
            h2 = TrackHistory([base[0], garbage, base[2]])
            p1, p2 = predict(h1, weights, 2), predict(h2, weights, 2)
            assert np.array_equal(p1.poses, p2.poses)
            assert np.array_equal(p1.locations, p2.locations)
            i1, i2 = impute(h1, weights), impute(h2, weights)
            assert np.array_equal(i1.poses, i2.poses)
            assert np.array_equal(i1.locations, i2.locations)

    def test_impute_returns_empty_without_gaps(self, weights):
        history = TrackHistory([make_slot(0), make_slot(1)])
        out = impute(history, weights)
        assert out.frames.size == 0

    def test_impute_targets_unobserved_frames(self, weights):
        history = TrackHistory([make_slot(0), make_slot(1, observed=False),
                                make_slot(2), make_slot(3, observed=False)])
        out = impute(history, weights)
        assert list(out.frames) == [1, 3]

    def test_payload_permutation_changes_output(self, weights):
        a = [make_slot(0, seed=10), make_slot(1, seed=11), make_slot(2, observed=False)]
        swapped = [TrackSlot(0, a[1].pose6d, a[1].location, True),
                   TrackSlot(1, a[0].pose6d, a[0].location, True), a[2]]
        out_a = impute(TrackHistory(a), weights)
        out_b = impute(TrackHistory(swapped), weights)
        assert not np.allclose(out_a.locations, out_b.locations)


class TestForwardPass:
    def test_determinism(self, weights):
        history = TrackHistory([make_slot(0), make_slot(1)])
        p1, p2 = predict(history, weights, 3), predict(history, weights, 3)
        assert np.array_equal(p1.poses, p2.poses)
        assert np.array_equal(p1.locations, p2.locations)

    def test_decoded_rotations_valid_for_random_weights(self):
        history = TrackHistory([make_slot(0), make_slot(1)])
        for seed in range(100):
            w = PredictorWeights.random(seed, scale=0.8)
            pred = predict(history, w, 2)
            gram = np.einsum("hkab,hkcb->hkac", pred.poses, pred.poses)
            assert np.max(np.abs(gram - np.eye(3))) < 1e-9

    def test_zero_weight_closed_form(self):
        # Zeroed value/output/feed-forward weights leave the residual stream
        # at (token + positional encoding); an identity readout then returns
        # mask_token + encoding at every queried position.
        rng = np.random.default_rng(5)
        d = PAYLOAD_DIM

        def layer():
            return LayerWeights(
                ln1_gain=np.ones(d), ln1_bias=np.zeros(d),
                wq=rng.normal(size=(d, d)), bq=np.zeros(d),
                wk=rng.normal(size=(d, d)), bk=np.zeros(d),
                wv=np.zeros((d, d)), bv=np.zeros(d),
                wo=np.zeros((d, d)), bo=np.zeros(d),
                ln2_gain=np.ones(d), ln2_bias=np.zeros(d),
                ff1_w=rng.normal(size=(d, 2 * d)), ff1_b=np.zeros(2 * d),
                ff2_w=np.zeros((2 * d, d)), ff2_b=np.zeros(d))

        mask_token = rng.normal(size=d)
        w = PredictorWeights(d_model=d, n_heads=3, d_ff=2 * d, pe_base=10000.0,
                             embed_w=rng.normal(size=(d, d)), embed_b=np.zeros(d),
                             mask_token=mask_token, layers=[layer(), layer()],
                             readout_w=np.eye(d), readout_b=np.zeros(d))
        history = TrackHistory([make_slot(0), make_slot(1)])
        pred = predict(history, w, 2)
        expected = mask_token + sinusoidal_encoding(np.array([2.0, 3.0]), d)
        assert np.max(np.abs(pred.locations - expected[:, 144:])) < 1e-12
        expected_rots = rot6d_to_rotmat_batch(expected[:, :144].reshape(-1, 6),
                                              degenerate_to_identity=True)
        assert np.array_equal(pred.poses.reshape(-1, 3, 3), expected_rots)

    def test_horizon_limits(self, weights):
        history = TrackHistory([make_slot(0)])
        with pytest.raises(ValueError):
            predict(history, weights, 5)
        with pytest.raises(ValueError):
            predict(TrackHistory(), weights, 1)

    def test_weight_shape_validation(self):
        w = PredictorWeights.random(0)
        with pytest.raises(DimensionMismatch):
            PredictorWeights(d_model=w.d_model, n_heads=w.n_heads, d_ff=w.d_ff,
                             pe_base=w.pe_base, embed_w=w.embed_w[:, :-1],
                             embed_b=w.embed_b, mask_token=w.mask_token,
                             layers=w.layers, readout_w=w.readout_w,
                             readout_b=w.readout_b)


class TestBaseline:
    def test_linear_extrapolation(self):
        history = TrackHistory([TrackSlot(0, identity_rot6d(24), np.array([0.0, 0, 2])),
                                TrackSlot(1, identity_rot6d(24), np.array([0.0, 0, 3]))])
        pred = baseline_predict(history, 1)
        assert np.allclose(pred.locations[0], [0, 0, 4])

    def test_single_slot_holds_location(self):
        history = TrackHistory([make_slot(7)])
        pred = baseline_predict(history, 3)
        assert np.array_equal(pred.locations[0], pred.locations[2])
        assert list(pred.frames) == [8, 9, 10]

    def test_identity_history_gives_identity_poses(self):
        history = TrackHistory([TrackSlot(0, identity_rot6d(24), np.zeros(3) + [0, 0, 4])])
        pred = baseline_predict(history, 2)
        assert np.array_equal(pred.poses, np.tile(np.eye(3), (2, 24, 1, 1)))

    def test_skips_unobserved_slots(self):
        history = TrackHistory([
            TrackSlot(0, identity_rot6d(24), np.array([0.0, 0, 2])),
            TrackSlot(1, identity_rot6d(24), np.array([0.0, 0, 3])),
            TrackSlot(2, identity_rot6d(24), np.array([9.0, 9, 9]), observed=False),
        ])
        pred = baseline_predict(history, 1)
        # Extrapolates from the two observed slots to frame 3: (0, 0, 5).
        assert np.allclose(pred.locations[0], [0, 0, 5])


class TestWeightsIO:
    def test_round_trip(self, tmp_path, weights):
        path = tmp_path / "weights.json"
        save_weights(weights, path)
        loaded = load_weights(path)
        history = TrackHistory([make_slot(0), make_slot(1)])
        a, b = predict(history, weights, 2), predict(history, loaded, 2)
        assert np.array_equal(a.poses, b.poses)
        assert np.array_equal(a.locations, b.locations)

    def test_truncated_file_raises(self, tmp_path, weights):
        path = tmp_path / "weights.json"
        save_weights(weights, path)
        path.write_text(path.read_text()[:200])
        with pytest.raises(ParseError):
            load_weights(path)
