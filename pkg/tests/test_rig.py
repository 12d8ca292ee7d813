import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.signal import find_peaks

from modaltest.capture import ImpactRecord
from modaltest.frf import estimate_h1
from modaltest.rig import (
    TIP_DURATIONS_S,
    HammerSpec,
    NoiseSpec,
    RigModel,
    SensorSpec,
    add_mass,
    eigen_modes,
    half_sine_pulse,
    impact_schedule,
    inject_noise,
    parse_point,
    simulate_impact,
    simulate_sweep,
    usable_bandwidth,
    with_bad_weld,
)
from modaltest.signal import TimeSeries, dft_forward

from conftest import chain_rig, sdof_rig


def pulse_spectrum(duration, fs=8192.0, n=8192):
    x = half_sine_pulse(n, fs, 0.01, duration, 1000.0)
    return dft_forward(TimeSeries(x, fs, "force_N")), x


class TestPoints:
    def test_parse(self):
        assert parse_point("13:z") == (13, "z")
        assert parse_point(" 7:X") == (7, "x")

    @pytest.mark.parametrize("bad", ["13", "13:q", "a:z", "1:2:z"])
    def test_parse_rejects(self, bad):
        with pytest.raises(ValueError):
            parse_point(bad)


class TestRigModel:
    def test_asymmetric_stiffness(self):
        with pytest.raises(ValueError, match="symmetric"):
            RigModel([1, 1], [[2, -1], [-0.5, 1]], [0.01, 0.01])

    def test_damping_range(self):
        with pytest.raises(ValueError):
            RigModel([1], [[1]], [0.0])

    def test_node_map_dof_range(self):
        with pytest.raises(ValueError, match="missing DOF"):
            RigModel([1], [[1]], [0.1], node_map={"1:z": 3})

    def test_shared_dof_allowed(self):
        rig = RigModel([1], [[1]], [0.1], node_map={"1:z": 0, "2:z": 0})
        assert rig.dof_of("2:z") == 0


class TestEigenModes:
    def test_sdof(self):
        (mode,) = eigen_modes(sdof_rig(10.0))
        assert mode.f_n_hz == pytest.approx(10.0, rel=1e-12)
        assert mode.zeta == 0.05

    def test_two_dof_chain(self):
        rig = RigModel([1, 1], [[2, -1], [-1, 1]], [0.01, 0.02])
        f = [m.f_n_hz for m in eigen_modes(rig)]
        # roots of l^2 - 3 l + 1 = 0, by hand: (3 -/+ sqrt 5) / 2 rad^2/s^2
        assert f[0] == pytest.approx(0.09836, abs=1e-5)
        assert f[1] == pytest.approx(0.25751, abs=1e-5)
        assert f[0] == pytest.approx(0.0983631643, abs=1e-6)
        assert f[1] == pytest.approx(0.2575181074, abs=1e-6)

    def test_mass_orthonormal(self, demo_config):
        rig = demo_config.rig
        phi = np.column_stack([m.shape for m in eigen_modes(rig)])
        np.testing.assert_allclose(phi.T @ np.diag(rig.masses) @ phi, np.eye(rig.n_dof), atol=1e-9)

    def test_ascending(self, demo_config):
        f = [m.f_n_hz for m in eigen_modes(demo_config.rig)]
        assert f == sorted(f)

    def test_unstable(self):
        with pytest.raises(ValueError, match="unstable model"):
            eigen_modes(RigModel([1, 1], [[1, -1], [-1, 1]], [0.01, 0.01]))

    @settings(max_examples=20, deadline=None)
    @given(st.floats(0.1, 100.0))
    def test_uniform_scaling(self, c):
        rig = chain_rig([2.0, 1.0, 3.0], [4e4, 1e4, 2e4], [0.01, 0.02, 0.03])
        f0 = [m.f_n_hz for m in eigen_modes(rig)]
        f1 = [m.f_n_hz for m in eigen_modes(rig.scaled(c))]
        np.testing.assert_allclose(f1, f0, rtol=1e-9)

    def test_demo_rig_band_layout(self, demo_config):
        f = [m.f_n_hz for m in eigen_modes(demo_config.rig)]
        assert len(f) == 12
        assert sum(x <= 200 for x in f) == 6


class TestImpact:
    def test_log_decrement(self):
        zeta = 0.02
        rig = sdof_rig(10.0, zeta)
        fs = 8192.0
        run = simulate_impact(rig, HammerSpec("hard", 1.0), "1:z", fs_hz=fs, duration_s=3.0, hit_times_s=[0.1])
        a = run.responses[0].samples[int(0.12 * fs) :]
        pk, _ = find_peaks(a)
        assert len(pk) > 12
        delta = np.log(a[pk[0]] / a[pk[10]]) / 10
        est = delta / np.sqrt(4 * np.pi**2 + delta**2)
        assert est == pytest.approx(zeta, rel=0.10)
        period = np.diff(pk[:11]).mean() / fs
        assert 1 / period == pytest.approx(10.0 * np.sqrt(1 - zeta**2), abs=1 / 3.0)

    def test_zero_force(self):
        run = simulate_impact(sdof_rig(), HammerSpec("medium", 0.0), "1:z", duration_s=2.0)
        assert all(np.all(ts.samples == 0) for ts in run.responses)

    def test_unknown_drive(self):
        with pytest.raises(ValueError, match="unknown point"):
            simulate_impact(sdof_rig(), HammerSpec(), "9:z", duration_s=1.0)

    def test_pulse_longer_than_run(self):
        with pytest.raises(ValueError):
            simulate_impact(sdof_rig(), HammerSpec("soft"), "1:z", duration_s=0.005)

    def test_clipping_flagged(self):
        # contact much shorter than the period: during the pulse a = F / m,
        # and the free ringing afterwards (~ I w / m) is far smaller
        m = 2.0
        rig = sdof_rig(10.0, 0.01, m=m)
        sensors = SensorSpec()
        hot = simulate_impact(rig, HammerSpec("hard", 2 * sensors.range_pk * m), "1:z", sensors, 8192.0, 1.0)
        assert hot.meta["clipped"] == ["1:z"]
        assert np.max(np.abs(hot.responses[0].samples)) == pytest.approx(sensors.range_pk)
        cold = simulate_impact(rig, HammerSpec("hard", 0.5 * sensors.range_pk * m), "1:z", sensors, 8192.0, 1.0)
        assert cold.meta["clipped"] == []

    def test_linearity(self):
        rig = chain_rig([1.0, 2.0], [1e4, 5e3], [0.02, 0.03])
        a = simulate_impact(rig, HammerSpec("medium", 10.0), "1:z", duration_s=2.0)
        b = simulate_impact(rig, HammerSpec("medium", 20.0), "1:z", duration_s=2.0)
        for x, y in zip(a.responses, b.responses):
            np.testing.assert_allclose(y.samples, 2 * x.samples, rtol=1e-9, atol=1e-15)

    def test_deterministic(self, demo_config):
        kw = dict(fs_hz=512.0, duration_s=4.0, seed=3, force_jitter=0.1, hit_times_s=[0.5, 2.0])
        a = simulate_impact(demo_config.rig, demo_config.hammer, "13:z", **kw)
        b = simulate_impact(demo_config.rig, demo_config.hammer, "13:z", **kw)
        assert a.force.samples.tobytes() == b.force.samples.tobytes()
        for x, y in zip(a.responses, b.responses):
            assert x.samples.tobytes() == y.samples.tobytes()

    def test_co_located_channels_identical(self, demo_config):
        run = simulate_impact(demo_config.rig, demo_config.hammer, "13:z", fs_hz=512.0, duration_s=2.0)
        for a, b in (("46:z", "48:z"), ("47:z", "49:z")):
            assert run.response(a).samples.tobytes() == run.response(b).samples.tobytes()

    def test_sensitivity_factor(self):
        rig = sdof_rig()
        a = simulate_impact(rig, HammerSpec("medium", 1.0), "1:z", duration_s=1.0)
        b = simulate_impact(rig, HammerSpec("medium", 1.0), "1:z", SensorSpec(sensitivity_factor=1.1), duration_s=1.0)
        np.testing.assert_allclose(b.responses[0].samples, 1.1 * a.responses[0].samples)

    def test_reciprocity(self):
        rig = chain_rig([2.0, 1.0, 1.5], [3e4, 2e4, 1e4], [0.02, 0.02, 0.03])
        fs = 512.0

        def h(drive, resp):
            run = simulate_impact(rig, HammerSpec("medium", 100.0), drive, fs_hz=fs, duration_s=8.0, hit_times_s=[0.2])
            rec = ImpactRecord(run.force, run.responses, 0.2, 100.0, pretrigger_samples=0, excitation=drive)
            return estimate_h1([rec], resp).h.band(2.0, 100.0).bins

        hab, hba = h("1:z", "3:z"), h("3:z", "1:z")
        np.testing.assert_allclose(hab, hba, rtol=1e-2, atol=1e-6 * np.abs(hab).max())


class TestSweep:
    def test_quasi_static(self):
        rig = sdof_rig(10.0, 0.05)
        k = rig.stiffness[0, 0]
        run = simulate_sweep(rig, "1:z", 0.2, 0.5, 0.05, 5.0, 200.0, quantity="disp_m")
        u = run.responses[0].samples
        assert np.max(np.abs(u[len(u) // 2 :])) == pytest.approx(5.0 / k, rel=0.05)

    def test_resonance_envelope(self):
        zeta = 0.05
        rig = sdof_rig(10.0, zeta)
        k = rig.stiffness[0, 0]
        run = simulate_sweep(rig, "1:z", 5.0, 15.0, 0.1, 1.0, 200.0, quantity="disp_m")
        peak = np.max(np.abs(run.responses[0].samples))
        assert peak == pytest.approx(1.0 / (2 * zeta * k), rel=0.20)

    def test_zero_amplitude(self):
        run = simulate_sweep(sdof_rig(), "1:z", 1.0, 20.0, 5.0, 0.0, 200.0)
        assert np.all(run.responses[0].samples == 0)

    @pytest.mark.parametrize("f0,f1,rate", [(10.0, 5.0, 1.0), (1.0, 150.0, 1.0), (1.0, 20.0, 0.0), (0.0, 20.0, 1.0)])
    def test_band_errors(self, f0, f1, rate):
        with pytest.raises(ValueError):
            simulate_sweep(sdof_rig(), "1:z", f0, f1, rate, 1.0, 200.0)


class TestNoise:
    def quiet_run(self, fs=1024.0):
        return simulate_impact(sdof_rig(), HammerSpec("medium", 0.0), "1:z", fs_hz=fs, duration_s=4.0)

    def test_empty_is_identity(self):
        run = self.quiet_run()
        assert inject_noise(run, NoiseSpec()) is run

    def test_single_tone_peak(self):
        run = inject_noise(self.quiet_run(), NoiseSpec(tones=[(120.0, 1.0)], seed=1))
        spec = dft_forward(run.responses[0])
        assert spec.freqs[np.argmax(spec.magnitude)] == pytest.approx(120.0)

    def test_force_untouched(self):
        run = self.quiet_run()
        out = inject_noise(run, NoiseSpec(tones=[(50.0, 1.0)], broadband_rms=0.1, seed=2))
        assert out.force is run.force

    def test_deterministic(self):
        spec = NoiseSpec(tones=[(50.0, 1.0)], broadband_rms=0.1, seed=5)
        a = inject_noise(self.quiet_run(), spec)
        b = inject_noise(self.quiet_run(), spec)
        assert a.responses[0].samples.tobytes() == b.responses[0].samples.tobytes()

    def test_tone_above_nyquist(self):
        with pytest.raises(ValueError):
            inject_noise(self.quiet_run(fs=200.0), NoiseSpec(tones=[(100.0, 1.0)]))

    def test_three_tones_in_autospectrum(self):
        from modaltest.frf import summed_autospectrum
        from modaltest.modal import pick_peaks

        rig = chain_rig([1.0, 1.0], [1e5, 1e5], [0.02, 0.02])
        run = simulate_impact(rig, HammerSpec("medium", 0.0), "1:z", duration_s=8.0)
        run = inject_noise(run, NoiseSpec(tones=[(20.0, 0.05), (30.0, 0.05), (40.0, 0.05)], broadband_rms=0.002, seed=9))
        peaks = pick_peaks(summed_autospectrum(run.responses), (0.0, 200.0), 10.0)
        assert [round(f) for f, _ in peaks] == [20, 30, 40]


class TestBandwidth:
    def test_medium_hard_near_900(self):
        spec, _ = pulse_spectrum(HammerSpec("medium_hard").pulse_duration_s)
        assert 800 <= usable_bandwidth(spec, 10.0) <= 1000

    def test_tip_ordering(self):
        bw = [usable_bandwidth(pulse_spectrum(TIP_DURATIONS_S[t])[0]) for t in ("soft", "medium", "medium_hard", "hard")]
        assert bw == sorted(bw) and len(set(bw)) == 4

    def test_softer_tips_last_longer(self):
        d = [TIP_DURATIONS_S[t] for t in ("soft", "medium", "medium_hard", "hard")]
        assert d == sorted(d, reverse=True)

    def test_one_ms_against_dense_scan(self):
        spec, x = pulse_spectrum(1e-3)
        fs = 8192.0
        nz = np.flatnonzero(x)
        t = nz / fs
        grid = np.arange(0.0, 2000.0, 0.05)
        dense = np.abs(np.exp(-2j * np.pi * grid[:, None] * t[None, :]) @ x[nz]) / fs
        f_scan = grid[np.argmax(dense < dense[0] * 10 ** (-0.5))]
        assert usable_bandwidth(spec, 10.0) == pytest.approx(f_scan, abs=1.0)
        # continuous half-sine spectrum, root found by hand-rolled bisection elsewhere: 1019.37 Hz
        assert f_scan == pytest.approx(1019.37, rel=0.03)

    def test_zero_spectrum(self):
        spec = dft_forward(TimeSeries(np.zeros(64), 100.0, "force_N"))
        with pytest.raises(ValueError, match="zero force spectrum"):
            usable_bandwidth(spec)


class TestScheduleAndVariants:
    def test_schedule(self):
        times, duration = impact_schedule(5, 8.0, seed=1)
        assert len(times) == 5
        assert times[0] >= 8.0
        assert np.all(np.diff(times) >= 9.0)
        assert duration > times[-1] + 8.0

    def test_add_mass_lowers_all_modes(self, demo_config):
        rig = demo_config.rig
        f0 = [m.f_n_hz for m in eigen_modes(rig)]
        f1 = [m.f_n_hz for m in eigen_modes(add_mass(rig, 3, 500.0))]
        assert all(b <= a for a, b in zip(f0, f1))

    def test_bad_weld_remaps(self, demo_config):
        rig = with_bad_weld(demo_config.rig, "46:z", "48:z", 1e6, 20.0)
        assert rig.n_dof == 13
        assert rig.dof_of("48:z") == 12
        assert rig.dof_of("46:z") == demo_config.rig.dof_of("46:z")
