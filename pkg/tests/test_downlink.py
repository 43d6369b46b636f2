import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.optimize import minimize_scalar

from nomaisac.channel import (
    ArrayGeometry,
    ChannelSet,
    CorrelationSpec,
    draw_rayleigh_channels,
    steering_matrix,
    steering_vector,
)
from nomaisac.downlink import (
    BeamformerSet,
    PenalizedObjective,
    SensingMetricSpec,
    default_decoding_order,
    evaluate_design,
    rates_noma_empowered,
    rates_noma_inspired,
    rates_sdma,
    region_sweep_downlink,
    sensing_metric,
    sic_rate_matrix,
    tradeoff_point,
    transmit_covariance,
)
from nomaisac.errors import (
    DesignMismatch,
    DimensionMismatch,
    InfeasibleConstraint,
    InvalidPermutation,
)
from nomaisac.numerics import OptimizerSettings, RngSeed, finite_difference_gradient, realify

import oracles

GAIN = SensingMetricSpec()
FAST = OptimizerSettings(restarts=4)
DESIGNS = ["noma_empowered", "sdma_baseline", "noma_inspired", "ideal_senic", "no_senic"]
SENSING_DESIGNS = ["noma_inspired", "ideal_senic", "no_senic"]


def random_complex(rng, *shape):
    return rng.normal(size=shape) + 1j * rng.normal(size=shape)


def random_beamformers(rng, K, M, with_v, power=None):
    W = random_complex(rng, K + int(with_v), M)
    if power is not None:
        W *= math.sqrt(power) / np.linalg.norm(W)
    return BeamformerSet.from_stacked(W, K)


class TestCovariance:
    def test_rank_one(self):
        R = transmit_covariance(BeamformerSet([[1, 0]]))
        np.testing.assert_array_equal(R, [[1, 0], [0, 0]])

    def test_orthonormal_sum(self):
        R = transmit_covariance(BeamformerSet([[1, 0], [0, 1]]))
        np.testing.assert_array_equal(R, np.eye(2))

    @given(st.integers(1, 4), st.integers(1, 4), st.booleans(), st.integers(0, 2**32 - 1))
    @settings(max_examples=50, deadline=None)
    def test_trace_and_psd(self, K, M, with_v, s):
        b = random_beamformers(np.random.default_rng(s), K, M, with_v)
        R = transmit_covariance(b)
        assert abs(np.trace(R).real - b.total_power) <= 1e-9 * max(1.0, b.total_power)
        np.testing.assert_allclose(R, R.conj().T, atol=0)
        assert np.linalg.eigvalsh(R).min() >= -1e-9 * max(1.0, b.total_power)


class TestSensingMetric:
    def test_steered_gain_is_max(self):
        geo, P = ArrayGeometry(4), 10.0
        a = steering_vector(geo, 0.3)
        R = P / 4 * np.outer(a, a.conj())
        spec = SensingMetricSpec(target_angle=0.3)
        assert sensing_metric(R, spec, geo) == pytest.approx(P * 4, rel=1e-12)

    def test_zero(self):
        assert sensing_metric(np.zeros((3, 3)), GAIN, ArrayGeometry(3)) == 0.0

    def test_mse_perfect_match(self):
        spec = SensingMetricSpec(kind="beampattern_mse", mainlobe_halfwidth=math.pi)
        assert sensing_metric([[7.0]], spec, ArrayGeometry(1)) == pytest.approx(0.0, abs=1e-20)

    def test_mse_against_scalar_minimization(self):
        rng = np.random.default_rng(5)
        geo = ArrayGeometry(4)
        spec = SensingMetricSpec(kind="beampattern_mse", target_angle=0.2, num_angles=61)
        A = steering_matrix(geo, spec.angle_grid)
        d = spec.desired_pattern
        for _ in range(5):
            R = transmit_covariance(random_beamformers(rng, 2, 4, False))
            p = np.real(np.einsum("lm,mn,ln->l", A.conj(), R, A))
            res = minimize_scalar(lambda eta: np.mean((eta * d - p) ** 2),
                                  bounds=(0, 1e3), method="bounded",
                                  options={"xatol": 1e-10})
            assert sensing_metric(R, spec, geo) == pytest.approx(res.fun, rel=1e-7)

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatch):
            sensing_metric(np.eye(2), GAIN, ArrayGeometry(3))

    @given(st.integers(1, 6), st.floats(0.1, 20), st.integers(0, 2**32 - 1),
           st.floats(-1.5, 1.5))
    @settings(max_examples=50, deadline=None)
    def test_gain_bound(self, M, P, s, theta):
        b = random_beamformers(np.random.default_rng(s), 2, M, True, power=P)
        spec = SensingMetricSpec(target_angle=theta)
        assert sensing_metric(transmit_covariance(b), spec, ArrayGeometry(M)) <= P * M + 1e-6


class TestSdma:
    def test_orthogonal(self):
        ch = ChannelSet([[1, 0], [0, 1]])
        b = BeamformerSet([[math.sqrt(5), 0], [0, math.sqrt(5)]])
        np.testing.assert_allclose(rates_sdma(ch, b), [math.log2(6)] * 2, rtol=1e-12)

    def test_zero_precoders(self):
        ch = ChannelSet(np.ones((2, 2)))
        np.testing.assert_array_equal(rates_sdma(ch, BeamformerSet(np.zeros((2, 2)))), [0, 0])

    def test_single_user_mrt(self):
        h = np.array([1 + 1j, 0.5 - 2j, 1.0])
        w = 0.7 * h
        r = rates_sdma(ChannelSet(h), BeamformerSet(w))
        assert r[0] == pytest.approx(math.log2(1 + np.linalg.norm(h) ** 2 * np.linalg.norm(w) ** 2))

    def test_rejects_sensing_precoder(self):
        with pytest.raises(DesignMismatch):
            rates_sdma(ChannelSet([[1]]), BeamformerSet([[1]], [1]))


class TestNomaEmpowered:
    def test_scalar_example(self):
        ch = ChannelSet([[2.0], [1.0]])
        b = BeamformerSet([[math.sqrt(0.2)], [math.sqrt(0.8)]])
        assert default_decoding_order(ch) == [1, 0]
        r = rates_noma_empowered(ch, b)
        r2 = min(math.log2(1 + 0.8 / 1.2), math.log2(1 + 3.2 / 1.8))
        assert r[1] == pytest.approx(r2, abs=1e-12)
        assert r[1] == pytest.approx(0.7370, abs=1e-4)
        assert r[0] == pytest.approx(math.log2(1.8), abs=1e-12)
        assert r[0] == pytest.approx(0.8480, abs=1e-4)

    def test_orthogonal_channels(self):
        # the last-decoded user sees no residual streams, so its rate matches
        # SDMA; the other stream is unobservable at the user obliged to
        # cancel it, which caps that stream at zero under the min rule
        h = np.array([[1, 1j], [1j, 1]]) / math.sqrt(2)
        ch = ChannelSet(h)
        b = BeamformerSet(h * 1.5)
        first, last = default_decoding_order(ch)
        noma, sdma = rates_noma_empowered(ch, b), rates_sdma(ch, b)
        assert noma[last] == pytest.approx(sdma[last], abs=1e-12)
        assert noma[first] == 0.0

    @given(st.integers(1, 5), st.integers(0, 2**32 - 1))
    @settings(max_examples=30, deadline=None)
    def test_single_user_equals_sdma(self, M, s):
        rng = np.random.default_rng(s)
        ch = ChannelSet(random_complex(rng, 1, M))
        b = random_beamformers(rng, 1, M, False)
        np.testing.assert_allclose(rates_noma_empowered(ch, b), rates_sdma(ch, b), rtol=1e-12)

    @given(st.integers(2, 4), st.integers(1, 3), st.integers(0, 2**32 - 1))
    @settings(max_examples=50, deadline=None)
    def test_sic_consistency(self, K, M, s):
        rng = np.random.default_rng(s)
        ch = ChannelSet(random_complex(rng, K, M))
        b = random_beamformers(rng, K, M, False)
        order = list(rng.permutation(K))
        rates = rates_noma_empowered(ch, b, order)
        table = sic_rate_matrix(ch, b, order)
        pos = {u: p for p, u in enumerate(order)}
        for k in range(K):
            for i in range(K):
                if pos[i] >= pos[k]:
                    assert rates[k] <= table[i, k]
                else:
                    assert np.isnan(table[i, k])

    def test_invalid_permutation(self):
        ch = ChannelSet(np.ones((2, 1)))
        with pytest.raises(InvalidPermutation):
            rates_noma_empowered(ch, BeamformerSet(np.ones((2, 1))), [0, 0])


class TestNomaInspired:
    def test_scalar_example(self):
        ch = ChannelSet([[1.0]])
        b = BeamformerSet([[1.0]], [1.0])
        private, mc = rates_noma_inspired(ch, b)
        assert mc == pytest.approx(math.log2(1.5), abs=1e-12)
        assert mc == pytest.approx(0.58496, abs=1e-5)
        assert private[0] == pytest.approx(1.0, abs=1e-12)

    def test_zero_sensing_precoder(self):
        rng = np.random.default_rng(0)
        ch = ChannelSet(random_complex(rng, 3, 2))
        b = BeamformerSet(random_complex(rng, 3, 2), np.zeros(2))
        outs = [rates_noma_inspired(ch, b, m) for m in SENSING_DESIGNS]
        for private, mc in outs:
            assert mc == 0.0
            np.testing.assert_array_equal(private, outs[0][0])

    @given(st.integers(1, 4), st.integers(1, 4), st.integers(0, 2**32 - 1))
    @settings(max_examples=50, deadline=None)
    def test_fixed_beamformer_dominance(self, K, M, s):
        rng = np.random.default_rng(s)
        ch = ChannelSet(random_complex(rng, K, M))
        b = random_beamformers(rng, K, M, True)
        p_in, mc = rates_noma_inspired(ch, b, "noma_inspired")
        p_id, _ = rates_noma_inspired(ch, b, "ideal_senic")
        p_no, _ = rates_noma_inspired(ch, b, "no_senic")
        assert mc >= 0
        np.testing.assert_array_equal(p_in, p_id)
        assert np.all(p_no <= p_in)
        c = {d: evaluate_design(d, ch, b)[2] for d in SENSING_DESIGNS}
        assert c["noma_inspired"] >= c["no_senic"]
        assert c["noma_inspired"] >= c["ideal_senic"]

    def test_requires_sensing_precoder(self):
        with pytest.raises(DesignMismatch):
            rates_noma_inspired(ChannelSet([[1]]), BeamformerSet([[1]]))


class TestPenalizedObjective:
    @pytest.mark.parametrize("design", DESIGNS)
    @pytest.mark.parametrize("metric", ["gain_at_target", "beampattern_mse"])
    def test_gradient_matches_oracle_and_finite_differences(self, design, metric):
        rng = np.random.default_rng(hash((design, metric)) % 2**32)
        K, M = 3, 2
        geo = ArrayGeometry(M)
        spec = SensingMetricSpec(kind=metric, target_angle=0.2, num_angles=31)
        ch = ChannelSet(random_complex(rng, K, M), noise_power=0.7)
        N = K + int(design in SENSING_DESIGNS)
        tau = 15.0 if metric == "gain_at_target" else 0.5
        obj = PenalizedObjective(design, ch, geo, spec, tau, penalty=3.0, temperature=0.05)
        order = default_decoding_order(ch)
        A = steering_matrix(geo, spec.angle_grid) if metric == "beampattern_mse" \
            else steering_vector(geo, spec.target_angle)[None, :]
        d = spec.desired_pattern if metric == "beampattern_mse" else None
        for _ in range(3):
            W = random_complex(rng, N, M)
            x = realify(W)
            ref_val, ref_grad = oracles.penalized_value_and_grad(
                design, ch.user_channels, W, 0.7, A, d, tau, 3.0, obj.scale, 0.05, order)
            assert obj(x) == pytest.approx(ref_val, rel=1e-10)
            np.testing.assert_allclose(obj.gradient(x), ref_grad, rtol=1e-9,
                                       atol=1e-9 * np.abs(ref_grad).max())
            fd = finite_difference_gradient(obj, x, 1e-6)
            assert np.linalg.norm(fd - ref_grad) <= 1e-5 * np.linalg.norm(ref_grad)


def single_user(h, M=1):
    return ChannelSet(np.asarray(h, dtype=complex).reshape(1, M))


class TestTradeoffPoint:
    @pytest.mark.parametrize("design", ["noma_empowered", "sdma_baseline"])
    def test_scalar_slack_constraint(self, design):
        pt = tradeoff_point(design, single_user([1.0]), ArrayGeometry(1), GAIN, 10.0, 5.0,
                            FAST, RngSeed(1))
        assert pt.comm_value == pytest.approx(math.log2(11), rel=1e-6)
        assert pt.beamformers.total_power == pytest.approx(10.0, rel=1e-6)

    def test_full_steering_boundary(self):
        rng = np.random.default_rng(3)
        geo, P = ArrayGeometry(4), 10.0
        h = random_complex(rng, 4)
        a = steering_vector(geo, 0.0)
        closed = math.log2(1 + P * abs(np.vdot(h, a)) ** 2 / 4)
        pt = tradeoff_point("sdma_baseline", single_user(h, 4), geo, GAIN, P, P * 4,
                            FAST, RngSeed(1))
        assert pt.comm_value == pytest.approx(closed, rel=0.02)
        assert pt.constraint_violation < 1e-6

    def test_no_sensing_is_mrt(self):
        rng = np.random.default_rng(4)
        geo, P = ArrayGeometry(3), 10.0
        h = random_complex(rng, 3)
        pt = tradeoff_point("noma_empowered", single_user(h, 3), geo, GAIN, P, 0.0,
                            FAST, RngSeed(1))
        assert pt.comm_value == pytest.approx(math.log2(1 + np.linalg.norm(h) ** 2 * P),
                                              rel=0.01)

    @pytest.mark.parametrize("design", DESIGNS)
    def test_feasibility_and_consistency(self, design):
        geo, P = ArrayGeometry(2), 5.0
        ch = draw_rayleigh_channels(geo, 2, CorrelationSpec(0.3), RngSeed(8))
        pt = tradeoff_point(design, ch, geo, GAIN, P, 6.0, FAST, RngSeed(2))
        assert pt.beamformers.total_power <= P + 1e-9
        assert pt.sensing_value >= 6.0 - 1e-6
        assert (pt.beamformers.sensing_precoder is not None) == (design in SENSING_DESIGNS)
        rates, mc, value = evaluate_design(design, ch, pt.beamformers)
        assert value == pt.comm_value
        np.testing.assert_array_equal(rates, pt.per_user_rates)
        assert mc == pt.multicast_rate >= 0

    def test_mse_constraint(self):
        geo, P = ArrayGeometry(4), 4.0
        spec = SensingMetricSpec(kind="beampattern_mse", num_angles=61)
        ch = draw_rayleigh_channels(geo, 2, CorrelationSpec(0.0), RngSeed(8))
        pt = tradeoff_point("noma_inspired", ch, geo, spec, P, 0.2, FAST, RngSeed(2))
        assert -pt.sensing_value <= 0.2 + 1e-6
        assert pt.beamformers.total_power <= P + 1e-9
        # silence matches any pattern once the scale is free, so only a
        # negative level is out of reach
        with pytest.raises(InfeasibleConstraint):
            tradeoff_point("noma_inspired", ch, geo, spec, P, -1e-3, FAST, RngSeed(2))

    def test_infeasible_gain(self):
        with pytest.raises(InfeasibleConstraint):
            tradeoff_point("sdma_baseline", single_user([1.0, 1.0], 2), ArrayGeometry(2), GAIN,
                           1.0, 2.5)

    def test_deterministic(self):
        geo = ArrayGeometry(2)
        ch = draw_rayleigh_channels(geo, 3, CorrelationSpec(0.0), RngSeed(1))
        a = tradeoff_point("noma_empowered", ch, geo, GAIN, 10.0, 8.0, FAST, RngSeed(3))
        b = tradeoff_point("noma_empowered", ch, geo, GAIN, 10.0, 8.0, FAST, RngSeed(3))
        assert a == b

    def test_degenerate_sensing_equivalence(self):
        geo = ArrayGeometry(2)
        ch = draw_rayleigh_channels(geo, 2, CorrelationSpec(0.0), RngSeed(6))
        pts = [tradeoff_point(d, ch, geo, GAIN, 5.0, 0.0, FAST, RngSeed(2),
                              zero_sensing_precoder=True) for d in SENSING_DESIGNS]
        for p in pts:
            np.testing.assert_array_equal(p.beamformers.sensing_precoder, 0)
            assert p == pts[0]


class TestSweep:
    def test_singleton_matches_point(self):
        geo = ArrayGeometry(2)
        ch = draw_rayleigh_channels(geo, 2, CorrelationSpec(0.0), RngSeed(6))
        sweep = region_sweep_downlink("sdma_baseline", ch, geo, GAIN, 5.0, [4.0], FAST,
                                      RngSeed(2))
        pt = tradeoff_point("sdma_baseline", ch, geo, GAIN, 5.0, 4.0, FAST, RngSeed(2))
        assert sweep.points[0] == pt
        assert sweep.rows[0].comm_value == pt.comm_value

    def test_monotone_with_infeasible_level(self):
        geo, P = ArrayGeometry(2), 5.0
        ch = draw_rayleigh_channels(geo, 3, CorrelationSpec(0.0), RngSeed(6))
        levels = [0.0, 3.0, 6.0, 9.0, P * 2 + 1.0]
        res = region_sweep_downlink("noma_empowered", ch, geo, GAIN, P, levels, FAST,
                                    RngSeed(2))
        assert [r.status for r in res.rows] == ["ok"] * 4 + ["infeasible"]
        comm = [r.comm_value for r in res.rows[:4]]
        assert all(b <= a for a, b in zip(comm, comm[1:]))
        assert res.rows[-1].comm_value is None and not res.rows[-1].pareto
        assert set(res.rows[0].aux) == {"rate_1", "rate_2", "rate_3", "multicast_rate",
                                        "tx_power"}

    def test_rejects_unsorted(self):
        geo = ArrayGeometry(1)
        with pytest.raises(ValueError):
            region_sweep_downlink("sdma_baseline", single_user([1.0]), geo, GAIN, 1.0,
                                  [0.5, 0.1])
