#!/usr/bin/env python3
"""Environment probe tests: RGBE decoding, lookup and importance sampling"""

import numpy as np
import pytest

from pbr_recon import console
from pbr_recon.envlight import (
    direction_to_uv, eval_probe, load_probe, make_probe, sample_probe, save_probe,
)
from pbr_recon.errors import InputError, ProbeError, ProbeFormatError
from pbr_recon.tools.hdr_io import read_hdr, write_hdr


def unit_directions(n, seed=0):
    d = np.random.default_rng(seed).normal(size=(n, 3))
    return d / np.linalg.norm(d, axis=1, keepdims=True)


#file format

def test_rgbe_decode_by_hand(tmp_path):
    #one flat scanline: a unit texel and a zero-exponent texel
    header = b'#?RADIANCE\nFORMAT=32-bit_rle_rgbe\n\n-Y 1 +X 2\n'
    (tmp_path / 'two.hdr').write_bytes(header + bytes([128, 128, 128, 129, 200, 10, 3, 0]))
    image = read_hdr(tmp_path / 'two.hdr')
    assert image.shape == (1, 2, 3)
    assert np.allclose(image[0, 0], [1.0, 1.0, 1.0])
    assert np.array_equal(image[0, 1], [0.0, 0.0, 0.0])


def test_bad_magic_names_bytes(tmp_path):
    path = tmp_path / 'probe.hdr'
    path.write_bytes(b'P6\n2 1\n255\n' + bytes(6))
    with pytest.raises(ProbeFormatError) as err:
        load_probe(path)
    assert "P6" in err.value.message
    assert err.value.exit_code == 3


def test_missing_probe_file(tmp_path):
    with pytest.raises(InputError):
        read_hdr(tmp_path / 'missing.hdr')


def test_saved_probe_reloads_within_rgbe_precision(tmp_path, gradient_probe):
    save_probe(gradient_probe, tmp_path / 'p.hdr')
    reloaded = load_probe(tmp_path / 'p.hdr')
    assert reloaded.image.shape == gradient_probe.image.shape
    #truncated mantissas share the exponent of the brightest channel
    quantum = gradient_probe.image.max(axis=-1, keepdims=True) / 64.0
    assert np.all(np.abs(reloaded.image - gradient_probe.image) <= quantum)


def test_small_probe_reloads(tmp_path):
    image = np.full((3, 4, 3), 0.25)
    write_hdr(tmp_path / 'narrow.hdr', image)
    assert np.allclose(read_hdr(tmp_path / 'narrow.hdr'), 0.25)


#construction

def test_zero_energy_probe_is_an_error():
    with pytest.raises(ProbeError):
        make_probe(np.zeros((4, 8, 3)))


def test_negative_texels_are_clamped_and_counted():
    image = np.ones((4, 8, 3))
    image[0, 0, 0] = -1.0
    image[1, 1, 1] = np.nan
    probe = make_probe(image)
    assert probe.image.min() == 0.0
    assert console.warning_counts['probe_clamped_values'] == 2
    assert probe.validate()['valid']


def test_cdf_tables_are_well_formed(gradient_probe):
    assert gradient_probe.marginal_cdf[0] == 0.0
    assert gradient_probe.marginal_cdf[-1] == 1.0
    assert np.all(gradient_probe.conditional_cdf[:, -1] == 1.0)
    assert np.all(np.diff(gradient_probe.conditional_cdf, axis=1) >= 0.0)
    assert gradient_probe.texel_prob.sum() == pytest.approx(1.0)


#lookup

def test_two_texel_constant_probe():
    probe = make_probe(np.ones((1, 2, 3)))
    radiance, pdf = eval_probe(probe, unit_directions(50))
    assert np.allclose(radiance, 1.0)
    assert np.allclose(pdf, 1.0 / (4.0 * np.pi))


def test_constant_probe_pdf(constant_probe):
    radiance, pdf = eval_probe(constant_probe, unit_directions(200, seed=1))
    assert np.allclose(radiance, 1.0)
    assert np.allclose(pdf, 0.07957747, rtol=1e-6)


def test_poles_have_finite_pdf(gradient_probe):
    dirs = np.array([[0.0, 1.0, 0.0], [0.0, -1.0, 0.0], [0.0, 0.0, 1.0], [0.0, 0.0, -1.0]])
    radiance, pdf = eval_probe(gradient_probe, dirs)
    assert np.all(np.isfinite(pdf)) and np.all(pdf > 0)
    assert np.all(np.isfinite(radiance))


def test_direction_layout_and_rotation(constant_probe):
    u, v = direction_to_uv(constant_probe, np.array([[1.0, 0, 0], [0, 0, 1.0], [0, 1.0, 0]]))
    assert u[0] == pytest.approx(0.0) and v[0] == pytest.approx(0.5)
    assert u[1] == pytest.approx(0.25)
    assert v[2] == pytest.approx(0.0)
    rotated = make_probe(np.ones((16, 32, 3)), rotation=np.pi / 2)
    u, _ = direction_to_uv(rotated, np.array([[0, 0, 1.0]]))
    assert u[0] == pytest.approx(0.0, abs=1e-12)


#sampling

def test_inverse_pdf_estimates_sphere_area(gradient_probe):
    rng = np.random.default_rng(11)
    _, _, pdf = sample_probe(gradient_probe, rng.random((100000, 2)))
    assert np.mean(1.0 / pdf) == pytest.approx(4.0 * np.pi, rel=1e-2)


def test_hot_texel_samples_stay_in_texel(hot_texel_probe):
    rng = np.random.default_rng(2)
    dirs, radiance, pdf = sample_probe(hot_texel_probe, rng.random((2000, 2)))
    u, v = direction_to_uv(hot_texel_probe, dirs)
    assert np.all(np.floor(v * 16) == 5)
    assert np.all(np.floor(u * 32) == 9)
    assert np.allclose(radiance, 100.0)
    assert np.allclose(pdf, 1.0 / hot_texel_probe.row_solid_angle[5])


def test_energy_estimate_matches_integral():
    v = (np.arange(16) + 0.5) / 16
    image = np.empty((16, 32, 3))
    image[...] = (0.3 + np.sin(np.pi * v))[:, None, None]
    image[..., 2] *= 0.5
    probe = make_probe(image, interpolation='nearest')
    rng = np.random.default_rng(5)
    _, radiance, pdf = sample_probe(probe, rng.random((100000, 2)))
    estimate = (radiance / pdf[:, None]).mean(axis=0)
    assert np.allclose(estimate, probe.integrated_radiance(), rtol=1e-2)


def test_sampled_pdf_agrees_with_eval(gradient_probe):
    rng = np.random.default_rng(3)
    dirs, radiance, pdf = sample_probe(gradient_probe, rng.random((20000, 2)))
    eval_radiance, eval_pdf = eval_probe(gradient_probe, dirs)
    assert np.mean(np.isclose(pdf, eval_pdf, rtol=1e-9)) > 0.999
    assert np.allclose(radiance, eval_radiance)
    assert np.allclose(np.linalg.norm(dirs, axis=1), 1.0)
