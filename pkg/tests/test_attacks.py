"""Attack-family tests: budget exactness per family, determinism, the
composition identity, and signal IO round-trips."""

import json

import numpy as np
import pytest

from cad_defense import (AdversarialInstance, AttackSpec, SensingOperator,
                         analyze, draw_perturbation, load_signal,
                         load_signal_channels, make_clean_compressible,
                         make_clean_sparse, perturb, save_raw, write_pgm)

N = 64
N_DRAWS = 1000


def _spec(family, seed, **kw):
    return AttackSpec(family=family, seed=seed, **kw)


# ---------------------------------------------------------------------------
# clean-signal generators


def test_make_clean_sparse_exact_support():
    rng = np.random.default_rng(0)
    xhat = make_clean_sparse(784, 80, rng)
    assert np.count_nonzero(xhat) == 80
    mags = np.abs(xhat[xhat != 0.0])
    assert mags.min() >= 1.0 and mags.max() <= 2.0


def test_make_clean_sparse_boundaries():
    rng = np.random.default_rng(1)
    dense = make_clean_sparse(16, 16, rng)
    assert np.count_nonzero(dense) == 16
    single = make_clean_sparse(16, 1, rng, amplitude=(1.0, 1.0))
    assert np.count_nonzero(single) == 1
    assert abs(np.abs(single).max() - 1.0) < 1e-15
    with pytest.raises(ValueError):
        make_clean_sparse(16, 0, rng)
    with pytest.raises(ValueError):
        make_clean_sparse(16, 2, rng, amplitude=(2.0, 1.0))


def test_make_clean_compressible_tail():
    rng = np.random.default_rng(2)
    xhat = make_clean_compressible(128, 8, rng, tail_norm=0.5)
    assert np.count_nonzero(xhat) == 128  # dense tail everywhere
    # the k dominant entries sit well above the tail floor
    from cad_defense import top_k
    head = top_k(xhat, 8)
    assert np.count_nonzero(head) == 8
    tail = xhat - head
    assert np.linalg.norm(tail) < 1.0


# ---------------------------------------------------------------------------
# per-family budget exactness, 1000 draws each


def test_none_draws_zero():
    for seed in range(N_DRAWS):
        assert not draw_perturbation(_spec("none", seed), N).any()


def test_l0_budget_holds_every_draw():
    tau, eta_prime = 15, 0.15
    for seed in range(N_DRAWS):
        e = draw_perturbation(_spec("l0", seed, tau=tau, eta_prime=eta_prime), N)
        assert np.count_nonzero(e) <= tau
        assert np.abs(e).max() <= eta_prime + 1e-15
        assert np.linalg.norm(e) <= tau * eta_prime


def test_l1_budget_equality():
    eta = 0.3
    for seed in range(N_DRAWS):
        e = draw_perturbation(_spec("l1", seed, eta=eta), N)
        assert abs(np.abs(e).sum() - eta) <= 1e-9


def test_l2_budget_equality():
    eta = 0.3
    for seed in range(N_DRAWS):
        e = draw_perturbation(_spec("l2", seed, eta=eta), N)
        assert abs(np.linalg.norm(e) - eta) <= 1e-9


def test_linf_budget_with_witness():
    eta_dprime = 0.04
    for seed in range(N_DRAWS):
        e = draw_perturbation(_spec("linf", seed, eta_dprime=eta_dprime), N)
        assert np.abs(e).max() <= eta_dprime + 1e-15
        # at least one entry sits exactly at the bound
        assert np.isclose(np.abs(e).max(), eta_dprime, atol=1e-15)


def test_gradient_proxy_dense_signs():
    eta_dprime = 0.04
    for seed in range(200):
        e = draw_perturbation(_spec("gradient_proxy", seed, eta_dprime=eta_dprime), N)
        assert np.allclose(np.abs(e), eta_dprime, atol=1e-15)


def test_l0_l2_bound_mnist_parameters():
    # tau = 15 entries of at most 0.15 cannot exceed l2 norm 2.25
    spec = _spec("l0", 5, tau=15, eta_prime=0.15)
    e = draw_perturbation(spec, 784)
    assert np.count_nonzero(e) <= 15
    assert np.linalg.norm(e) <= 2.25


def test_linf_l2_bound_mnist_parameters():
    # dense amplitude 0.04 at n = 784 keeps l2 norm at most 28 * 0.04 = 1.12
    e = draw_perturbation(_spec("linf", 5, eta_dprime=0.04), 784)
    assert np.linalg.norm(e) <= 1.12


def test_low_freq_bias_support_placement():
    spec = _spec("l0", 9, tau=10, eta_prime=0.2, low_freq_bias=True)
    for seed in range(50):
        e = draw_perturbation(AttackSpec(**dict(spec.to_dict(), seed=seed)), 128)
        assert np.flatnonzero(e).max() < 32  # lowest-index quarter


def test_determinism_bit_for_bit():
    for family, kw in [("l0", dict(tau=5, eta_prime=0.2)), ("l1", dict(eta=1.0)),
                       ("l2", dict(eta=1.0)), ("linf", dict(eta_dprime=0.1)),
                       ("gradient_proxy", dict(eta_dprime=0.1))]:
        a = draw_perturbation(_spec(family, 123, **kw), N)
        b = draw_perturbation(_spec(family, 123, **kw), N)
        assert np.array_equal(a, b)
        c = draw_perturbation(_spec(family, 124, **kw), N)
        assert not np.array_equal(a, c)


# ---------------------------------------------------------------------------
# AttackSpec validation and instance composition


def test_attack_spec_validation():
    with pytest.raises(ValueError):
        AttackSpec(family="dos")
    with pytest.raises(ValueError):
        AttackSpec(family="l0", tau=5)  # missing eta_prime
    with pytest.raises(ValueError):
        AttackSpec(family="l2", eta=0.0)
    with pytest.raises(ValueError):
        draw_perturbation(AttackSpec(family="l0", tau=65, eta_prime=0.1), N)


def test_perturb_composition_identity():
    op = SensingOperator(N)
    rng = np.random.default_rng(3)
    clean = make_clean_sparse(N, 6, rng)
    inst = perturb(clean, _spec("l2", 7, eta=0.5), op)
    recon = analyze(inst.observed, op)
    assert np.abs(recon - (inst.clean_spectral + inst.perturbation)).max() < 1e-10


def test_perturb_none_is_identity():
    op = SensingOperator(N)
    clean = make_clean_sparse(N, 6, np.random.default_rng(4))
    inst = perturb(clean, _spec("none", 0), op)
    assert not inst.perturbation.any()
    assert np.allclose(inst.observed, op.synthesize(clean), atol=1e-15)


def test_perturb_clip_flag():
    op = SensingOperator(N)
    clean = make_clean_sparse(N, 6, np.random.default_rng(5), amplitude=(3.0, 4.0))
    spec = AttackSpec(family="l2", eta=2.0, seed=1, clip=True)
    inst = perturb(clean, spec, op)
    assert inst.observed.min() >= 0.0 and inst.observed.max() <= 1.0


def test_instance_json_round_trip():
    op = SensingOperator(N)
    clean = make_clean_sparse(N, 6, np.random.default_rng(6))
    inst = perturb(clean, _spec("l0", 8, tau=4, eta_prime=0.3), op)
    back = AdversarialInstance.from_json(inst.to_json())
    assert back.n == inst.n and back.spec == inst.spec
    assert np.array_equal(back.clean_spectral, inst.clean_spectral)
    assert np.array_equal(back.perturbation, inst.perturbation)
    assert np.array_equal(back.observed, inst.observed)


# ---------------------------------------------------------------------------
# signal IO


def test_pgm_all_white_is_ones(tmp_path):
    path = tmp_path / "white.pgm"
    write_pgm(path, np.ones(784), 28, 28)
    vals, channels = load_signal_channels(path)
    assert channels == 1
    assert np.array_equal(vals, np.ones(784))


def test_pgm_round_trip_quantized(tmp_path):
    rng = np.random.default_rng(10)
    orig = rng.random(64)
    path = tmp_path / "img.pgm"
    write_pgm(path, orig, 8, 8)
    vals = load_signal(path)
    assert np.abs(vals - orig).max() <= 0.5 / 255 + 1e-12


def test_pgm_16bit_maxval(tmp_path):
    path = tmp_path / "deep.pgm"
    write_pgm(path, np.linspace(0.0, 1.0, 16), 4, 4, maxval=65535)
    vals = load_signal(path)
    assert np.abs(vals - np.linspace(0.0, 1.0, 16)).max() <= 0.5 / 65535 + 1e-12


def test_pgm_comment_header(tmp_path):
    body = bytes(range(4))
    path = tmp_path / "c.pgm"
    path.write_bytes(b"P5\n# a comment line\n2 2\n255\n" + body)
    vals = load_signal(path)
    assert np.allclose(vals, np.arange(4) / 255.0)


def test_ppm_channel_major(tmp_path):
    # interleaved RGB pixels come back as [R..., G..., B...]
    path = tmp_path / "rgb.ppm"
    pixels = bytes([255, 0, 0, 0, 255, 0])  # red pixel then green pixel
    path.write_bytes(b"P6\n2 1\n255\n" + pixels)
    vals, channels = load_signal_channels(path)
    assert channels == 3
    assert np.array_equal(vals, np.array([1.0, 0.0, 0.0, 1.0, 0.0, 0.0]))


def test_malformed_headers_error(tmp_path):
    bad_magic = tmp_path / "bad.pgm"
    bad_magic.write_bytes(b"P4\n2 2\n255\n" + bytes(4))
    with pytest.raises(ValueError):
        load_signal(bad_magic)
    truncated = tmp_path / "short.pgm"
    truncated.write_bytes(b"P5\n2 2\n255\n" + bytes(2))
    with pytest.raises(ValueError):
        load_signal(truncated)
    token = tmp_path / "tok.pgm"
    token.write_bytes(b"P5\nx 2\n255\n" + bytes(4))
    with pytest.raises(ValueError):
        load_signal(token)


def test_raw_round_trip(tmp_path):
    path = tmp_path / "sig.raw"
    vals = np.random.default_rng(11).random(784)
    save_raw(path, vals, 784, 1)
    loaded, channels = load_signal_channels(path)
    assert channels == 1
    assert np.array_equal(loaded, vals)
    meta = json.loads((tmp_path / "sig.raw.json").read_text())
    assert meta == {"n": 784, "channels": 1}


def test_raw_out_of_range_rejected(tmp_path):
    path = tmp_path / "neg.raw"
    np.array([-0.5, 0.5]).astype("<f8").tofile(path)
    (tmp_path / "neg.raw.json").write_text(json.dumps({"n": 2, "channels": 1}))
    with pytest.raises(ValueError):
        load_signal(path)


def test_raw_missing_sidecar(tmp_path):
    path = tmp_path / "lone.raw"
    np.zeros(4).astype("<f8").tofile(path)
    with pytest.raises(ValueError):
        load_signal(path)
