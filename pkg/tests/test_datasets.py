import math

import numpy as np
import pytest

from ionmodes.constants import mhz_to_angular
from ionmodes.datasets import (
    NoiseModel,
    flopping_from_csv,
    flopping_to_csv,
    simulate_strong,
    simulate_weak,
    spectrum_from_csv,
    spectrum_to_csv,
)
from ionmodes.errors import DomainError
from ionmodes.fields import demo_layout
from ionmodes.geometry import IonSpecies, ModeConfiguration, mode_vectors
from ionmodes.strong_binding import RamanGeometry, ThermalState, survival_curve
from ionmodes.weak_binding import ExcitationPulse, ProbeLaser, weak_spectrum

ION = IonSpecies.mg25()
WEAK_CONFIG = ModeConfiguration.from_display([-6.0, -38.0, -1.0], [3.584, 4.833, 5.878])
STRONG_CONFIG = ModeConfiguration.from_display([-9.0, -51.0, -15.0], [3.76, 4.54, 5.76])
PROBE = ProbeLaser.from_display(direction=(0.8660254, 0.5, 0.0))
RAMAN = RamanGeometry.from_display(rabi_khz=390.0, decoherence_khz=13.0)
THERMAL = ThermalState((0.5, 1.0, 0.44))

SITE = (24.0, 0.0, 36.0)
FIELDS = {lid: demo_layout().field_at(lid, SITE) for lid in (6, 15, 26)}
GRID = mhz_to_angular(1.0) * np.linspace(3.3, 3.9, 40)


class TestSimulateWeak:
    def test_noiseless_limit(self):
        noise = NoiseModel(seed=1, signal_counts=1e9, stray_counts=0.0)
        spectra = simulate_weak(WEAK_CONFIG, ION, FIELDS, PROBE, 4e-4, 10e-6,
                                GRID, noise)
        for s in spectra:
            pulse = ExcitationPulse(s.electrode_id, 4e-4, GRID[0], 10e-6)
            model = weak_spectrum(WEAK_CONFIG, ION, FIELDS[s.electrode_id], PROBE,
                                  pulse, GRID)
            np.testing.assert_allclose(s.fluorescence, model.fluorescence, atol=1e-4)

    def test_law_of_large_numbers_baseline(self):
        # flat F = 1 region: sample mean consistent with the quoted sigma
        grid = mhz_to_angular(1.0) * np.linspace(8.0, 9.0, 1000)  # far off resonance
        noise = NoiseModel(seed=7)
        spectra = simulate_weak(WEAK_CONFIG, ION, {6: FIELDS[6]}, PROBE, 4e-4,
                                10e-6, grid, noise)
        s = spectra[0]
        sigma_bar = s.sigma.mean()
        assert abs(s.fluorescence.mean() - 1.0) < 3.0 * sigma_bar / math.sqrt(len(s))

    def test_determinism(self):
        noise = NoiseModel(seed=99)
        a = simulate_weak(WEAK_CONFIG, ION, FIELDS, PROBE, 4e-4, 10e-6, GRID, noise)
        b = simulate_weak(WEAK_CONFIG, ION, FIELDS, PROBE, 4e-4, 10e-6, GRID, noise)
        for sa, sb in zip(a, b):
            np.testing.assert_array_equal(sa.fluorescence, sb.fluorescence)
            np.testing.assert_array_equal(sa.sigma, sb.sigma)

    def test_order_independent_streams(self):
        # generating a subset of electrodes reproduces the same draws
        noise = NoiseModel(seed=99)
        full = simulate_weak(WEAK_CONFIG, ION, FIELDS, PROBE, 4e-4, 10e-6, GRID, noise)
        only15 = simulate_weak(WEAK_CONFIG, ION, {15: FIELDS[15]}, PROBE, 4e-4,
                               10e-6, GRID, noise)
        ref = next(s for s in full if s.electrode_id == 15)
        np.testing.assert_array_equal(ref.fluorescence, only15[0].fluorescence)

    def test_coverage_of_one_sigma(self):
        grid = mhz_to_angular(1.0) * np.linspace(3.45, 3.72, 500)
        noise = NoiseModel(seed=3)
        spectra = simulate_weak(WEAK_CONFIG, ION, {15: FIELDS[15]}, PROBE, 4e-4,
                                10e-6, grid, noise)
        s = spectra[0]
        pulse = ExcitationPulse(15, 4e-4, grid[0], 10e-6)
        model = weak_spectrum(WEAK_CONFIG, ION, FIELDS[15], PROBE, pulse, grid)
        covered = np.mean(np.abs(s.fluorescence - model.fluorescence) <= s.sigma)
        assert 0.63 <= covered <= 0.73


class TestSimulateStrong:
    T = np.linspace(0.0, 25e-6, 200)

    def test_certain_outcome(self):
        cold = ThermalState((0.0, 0.0, 0.0))
        quiet = RamanGeometry(RAMAN.delta_k, rabi_rate=0.0)  # nothing happens
        noise = NoiseModel(seed=2, trials=200)
        curve = simulate_strong(STRONG_CONFIG, ION, quiet, cold, ["carrier"],
                                self.T, noise)[0]
        assert np.all(curve.p_ground == 1.0)
        assert np.all(curve.sigma == 1.0 / 400.0)

    def test_binomial_variance(self):
        # steady P = 1/2: empirical spread matches sqrt(p(1-p)/trials)
        half = RamanGeometry(RAMAN.delta_k, rabi_rate=0.0, decoherence=1e9)
        noise = NoiseModel(seed=5, trials=200)
        t = np.linspace(1e-3, 2e-3, 1000)
        curve = simulate_strong(STRONG_CONFIG, ION, half, THERMAL, ["carrier"],
                                t, noise)[0]
        expect = math.sqrt(0.25 / 200)
        assert abs(curve.p_ground.std() - expect) / expect < 0.1

    def test_determinism(self):
        noise = NoiseModel(seed=12)
        a = simulate_strong(STRONG_CONFIG, ION, RAMAN, THERMAL, ["carrier", "bsb1"],
                            self.T, noise)
        b = simulate_strong(STRONG_CONFIG, ION, RAMAN, THERMAL, ["carrier", "bsb1"],
                            self.T, noise)
        for ca, cb in zip(a, b):
            np.testing.assert_array_equal(ca.p_ground, cb.p_ground)

    def test_coverage_of_one_sigma(self):
        noise = NoiseModel(seed=8, trials=200)
        t = np.linspace(0.3e-6, 25e-6, 800)
        curve = simulate_strong(STRONG_CONFIG, ION, RAMAN, THERMAL, ["bsb1"],
                                t, noise)[0]
        model = survival_curve("bsb1", t, STRONG_CONFIG, ION, RAMAN, THERMAL)
        covered = np.mean(np.abs(curve.p_ground - model) <= curve.sigma)
        assert 0.63 <= covered <= 0.73


class TestCsvRoundTrips:
    def test_spectrum(self):
        noise = NoiseModel(seed=4)
        s = simulate_weak(WEAK_CONFIG, ION, {6: FIELDS[6]}, PROBE, 4e-4, 10e-6,
                          GRID, noise)[0]
        text = spectrum_to_csv(s)
        back = spectrum_from_csv(text)
        assert back.electrode_id == 6
        np.testing.assert_allclose(back.omega, s.omega, rtol=1e-8)
        np.testing.assert_allclose(back.fluorescence, s.fluorescence, rtol=1e-8)
        np.testing.assert_allclose(back.sigma, s.sigma, rtol=1e-8)

    def test_flopping(self):
        noise = NoiseModel(seed=4)
        c = simulate_strong(STRONG_CONFIG, ION, RAMAN, THERMAL, ["bsb2"],
                            np.linspace(0, 20e-6, 50), noise)[0]
        back = flopping_from_csv(flopping_to_csv(c, omega_r_offset_mhz=4.54))
        assert back.selector == "bsb2"
        np.testing.assert_allclose(back.t, c.t, atol=1e-15)
        np.testing.assert_allclose(back.p_ground, c.p_ground, rtol=1e-8)

    def test_malformed_cell_location(self):
        text = "# electrode: 3\nomega_exc_MHz,F,sigma_F\n1.0,0.9,0.01\n2.0,oops,0.01\n"
        with pytest.raises(DomainError, match=r":4: column 2"):
            spectrum_from_csv(text, path="bad.csv")

    def test_missing_metadata(self):
        with pytest.raises(DomainError, match="electrode"):
            spectrum_from_csv("omega_exc_MHz,F,sigma_F\n1.0,0.9,0.01\n")
        with pytest.raises(DomainError, match="selector"):
            flopping_from_csv("t_pulse_us,P_g,sigma_P\n1.0,0.9,0.01\n")

    def test_wrong_column_count(self):
        text = "# selector: carrier\nt_pulse_us,P_g,sigma_P\n1.0,0.9\n"
        with pytest.raises(DomainError, match="3 columns"):
            flopping_from_csv(text, path="bad.csv")


class TestNoiseModel:
    def test_validation(self):
        with pytest.raises(DomainError):
            NoiseModel(seed=1, repetitions=0)
        with pytest.raises(DomainError):
            NoiseModel(seed=1, trials=0)
        with pytest.raises(DomainError):
            NoiseModel(seed=1, signal_counts=0.0)
        with pytest.raises(DomainError):
            NoiseModel(seed=1, stray_counts=-1.0)
