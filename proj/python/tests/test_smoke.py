import os
import subprocess

import numpy as np
import pytest

import dmsbl


def cn(rng, *shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)


def test_pilot_matrix_is_valid_convolution():
    rng = np.random.default_rng(0)
    L, M = 7, 20
    pilot = cn(rng, M + L - 1)
    h = cn(rng, L)
    A = dmsbl.PilotMatrix(pilot, L)
    assert A.dense().shape == (M, L)
    np.testing.assert_allclose(A.apply(h), np.convolve(pilot, h, mode="valid"), atol=1e-12)
    v = cn(rng, M)
    np.testing.assert_allclose(A.apply_adjoint(v), A.dense().conj().T @ v, atol=1e-12)


def test_schedule():
    s = dmsbl.VpSchedule()
    assert s.alpha(0.0) == pytest.approx(1.0)
    assert s.alpha(1.0) == pytest.approx(np.exp(-20.1 / 4))
    assert dmsbl.VpSchedule(alpha_form="paper").alpha(1.0) == pytest.approx(np.exp(-19.9 / 4))
    assert s.perturb_variance(0.5) == pytest.approx(2 * (1 - s.alpha(0.5) ** 2))


def test_baselines_and_nmse():
    rng = np.random.default_rng(1)
    L, M = 10, 40
    pilot = dmsbl.generate_bpsk_pilot(M + L - 1, seed=2)
    h = np.zeros(L, complex)
    h[[1, 6]] = [1.0, -0.5j]
    A = dmsbl.PilotMatrix(pilot, L)
    model = dmsbl.MeasurementModel(pilot, L, A.apply(h), 0.0)
    np.testing.assert_allclose(dmsbl.omp_estimate(model, 2), h, atol=1e-10)
    noisy = dmsbl.MeasurementModel(pilot, L, A.apply(h) + 0.01 * cn(rng, M), 1e-4)
    assert dmsbl.nmse_db(dmsbl.sbl_estimate(noisy), h) < -20
    Ad = A.dense()
    expect = 0.5 * Ad.conj().T @ np.linalg.solve(0.5 * Ad @ Ad.conj().T + 0.1 * np.eye(M), noisy.y)
    np.testing.assert_allclose(dmsbl.mmse_estimate(noisy, 0.5, 0.1), expect, atol=1e-10)


def test_small_sampler_run():
    L, M = 6, 16
    pilot = dmsbl.generate_bpsk_pilot(M + L - 1, seed=3)
    h = dmsbl.generate_channel(p0=2, L=L, seed=4)
    n = dmsbl.generate_lfm_interference(M, seed=5)
    A = dmsbl.PilotMatrix(pilot, L)
    mix = dmsbl.scale_and_mix(A.apply(h), n, 20.0, 0.0, seed=6)
    y, s2 = mix[0], mix[1]
    model = dmsbl.MeasurementModel(pilot, L, y, s2)
    cov = dmsbl.sinc_covariance(M, 0.25) + 1e-3 * np.eye(M)
    out = dmsbl.run_sampler(model, cov, dmsbl.VpSchedule(steps=20), K=8, seed=1, truth=h)
    assert out["h_hat"].shape == (L,)
    assert np.all(np.isfinite(out["h_hat"]))
    assert len(out["nmse_mean_db"]) == 20
    again = dmsbl.run_sampler(model, cov, dmsbl.VpSchedule(steps=20), K=8, seed=1, truth=h)
    np.testing.assert_array_equal(out["h_hat"], again["h_hat"])


def test_likelihood_scores_vanish_at_consistent_state():
    rng = np.random.default_rng(7)
    L, M = 4, 10
    pilot = cn(rng, M + L - 1)
    s = dmsbl.VpSchedule()
    t = 0.4
    a = s.alpha(t)
    h, n = cn(rng, L), cn(rng, M)
    y = (dmsbl.PilotMatrix(pilot, L).apply(h) + n) / a
    model = dmsbl.MeasurementModel(pilot, L, y, 0.1)
    gh, gn = dmsbl.likelihood_scores(model, h, n, t, "dmps", np.ones(L), np.eye(M), s)
    assert np.linalg.norm(gh) < 1e-10 and np.linalg.norm(gn) < 1e-10


def test_cbin_round_trip(tmp_path):
    x = np.array([1 + 2j, -0.5j, 3.25], complex)
    p = str(tmp_path / "x.cbin")
    dmsbl.write_cbin(p, x)
    np.testing.assert_array_equal(dmsbl.read_cbin(p), x)
    raw = open(p, "rb").read()
    assert raw[:4] == b"CSIG" and len(raw) == 16 + 3 * 8


def test_score_network_round_trip(tmp_path):
    net = dmsbl.ScoreNetwork.reference(width=8, blocks=4, emb_dim=8, seed=0)
    p = str(tmp_path / "n.dmsc")
    net.save(p)
    x = cn(np.random.default_rng(8), 32)
    np.testing.assert_array_equal(dmsbl.ScoreNetwork.load(p).evaluate(x, 0.3), net.evaluate(x, 0.3))


def test_errors_are_python_exceptions():
    with pytest.raises(Exception):
        dmsbl.PilotMatrix(np.ones(3, complex), 5)
    with pytest.raises(Exception):
        dmsbl.read_cbin("/nonexistent.cbin")


@pytest.mark.skipif(not os.environ.get("DMSBL_CLI"), reason="CLI path not provided")
def test_exported_dataset_is_readable(tmp_path):
    out = str(tmp_path / "ds.cbin")
    subprocess.run([os.environ["DMSBL_CLI"], "export-interference-dataset", "-s", "interference.kind=lfm",
                    "-o", out, "-n", "3", "--length", "32"], check=True, capture_output=True)
    x = dmsbl.read_cbin(out)
    assert x.shape == (96,)
    np.testing.assert_allclose(np.abs(x), 1.0, atol=1e-6)
    meta = dict(line.split("=", 1) for line in open(out + ".meta").read().split())
    assert meta["count"] == "3" and meta["segment_length"] == "32"
