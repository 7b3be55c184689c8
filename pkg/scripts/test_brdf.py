#!/usr/bin/env python3
"""Reflectance tests: lobe weights, GGX terms, sampling densities, MIS and gradients"""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pbr_recon.brdf import (
    ALPHA_MIN, PbrSample, derive_lobes, eval_bsdf, eval_bsdf_grad, fresnel_schlick, ggx_ndf, mis_weight,
    pdf_bsdf, sample_bsdf, smith_g, smith_g_separable, specular_probability,
)

UP = np.array([0.0, 0.0, 1.0])


def hemisphere_direction(theta, phi):
    return np.array([np.sin(theta) * np.cos(phi), np.sin(theta) * np.sin(phi), np.cos(theta)])


def repeat(v, n):
    return np.tile(np.asarray(v, dtype=np.float64), (n, 1))


def uniform_sphere(n, seed):
    d = np.random.default_rng(seed).normal(size=(n, 3))
    return d / np.linalg.norm(d, axis=1, keepdims=True)


#lobes and microfacet terms

def test_lobes_dielectric():
    lobes = derive_lobes(PbrSample.constant(1, (0.5, 0.5, 0.5), 0.5, 0.0))
    assert np.allclose(lobes.diffuse, 0.5)
    assert np.allclose(lobes.specular, 0.04)


def test_lobes_metal():
    lobes = derive_lobes(PbrSample.constant(1, (0.3, 0.6, 0.9), 0.5, 1.0))
    assert np.allclose(lobes.diffuse, 0.0)
    assert np.allclose(lobes.specular, [0.3, 0.6, 0.9])


def test_lobes_half_metal():
    lobes = derive_lobes(PbrSample.constant(1, (1.0, 0.0, 0.0), 0.5, 0.5))
    assert np.allclose(lobes.diffuse, [0.5, 0.0, 0.0])
    assert np.allclose(lobes.specular, [0.52, 0.02, 0.02])


def test_inputs_are_clamped_and_alpha_floored():
    s = PbrSample(np.array([[1.5, -0.2, 0.5]]), np.array([0.0]), np.array([2.0]))
    assert np.array_equal(s.base_color, [[1.0, 0.0, 0.5]])
    assert s.metallic[0] == 1.0
    assert s.alpha[0] == ALPHA_MIN


def test_ndf_values():
    assert ggx_ndf(1.0, 1.0) == pytest.approx(1.0 / np.pi)
    assert ggx_ndf(1e-12, 0.5) == pytest.approx(0.25 / np.pi, rel=1e-6)


@pytest.mark.parametrize('alpha', [0.1, 0.4, 0.9])
def test_ndf_projected_area_is_one(alpha):
    """integral of D(h) cos(theta_h) over the hemisphere"""
    mu = np.linspace(0.0, 1.0, 200001)[1:]
    integrand = ggx_ndf(mu, alpha) * mu
    integral = 2.0 * np.pi * np.trapezoid(integrand, mu) if hasattr(np, 'trapezoid') \
        else 2.0 * np.pi * np.trapz(integrand, mu)
    assert integral == pytest.approx(1.0, rel=1e-3)


def test_fresnel_endpoints():
    f0 = np.array([0.04, 0.5, 0.9])
    assert np.allclose(fresnel_schlick(f0, 1.0), f0)
    assert np.allclose(fresnel_schlick(f0, 0.0), 1.0)


def test_smith_monotone_and_close_to_separable():
    alphas = np.linspace(0.01, 1.0, 50)
    g = smith_g(0.6, 0.8, alphas)
    assert np.all(np.diff(g) <= 1e-15)
    correlated = smith_g(0.6, 0.8, 0.2)
    separable = smith_g_separable(0.6, 0.8, 0.2)
    assert abs(correlated - separable) <= 0.15 * separable


#evaluation

def test_lambertian_diffuse_only():
    s = PbrSample.constant(3, (1.0, 1.0, 1.0), 1.0, 0.0)
    wi = np.array([hemisphere_direction(0.3, 0.1), hemisphere_direction(1.0, 2.0), hemisphere_direction(1.4, 4.0)])
    wo = np.array([hemisphere_direction(0.7, 3.0), hemisphere_direction(0.2, 1.0), hemisphere_direction(1.2, 5.0)])
    f = eval_bsdf(s, wi, wo, repeat(UP, 3), diffuse_only=True)
    assert np.allclose(f, 1.0 / np.pi)


def test_below_hemisphere_is_black():
    s = PbrSample.constant(2, (0.8, 0.8, 0.8), 0.4, 0.3)
    wi = np.array([[0.0, 0.6, -0.8], hemisphere_direction(0.5, 0.0)])
    wo = np.array([hemisphere_direction(0.5, 0.0), [0.6, 0.0, -0.8]])
    assert np.array_equal(eval_bsdf(s, wi, wo, repeat(UP, 2)), np.zeros((2, 3)))


angles = st.floats(min_value=0.0, max_value=1.5)
azimuths = st.floats(min_value=0.0, max_value=2.0 * np.pi)
unit = st.floats(min_value=0.0, max_value=1.0)


@settings(max_examples=200, deadline=None)
@given(ti=angles, pi=azimuths, to=angles, po=azimuths, r=unit, m=unit, c=unit)
def test_reciprocity(ti, pi, to, po, r, m, c):
    s = PbrSample.constant(1, (c, 0.5 * c, 1.0 - c), r, m)
    wi = hemisphere_direction(ti, pi)[None]
    wo = hemisphere_direction(to, po)[None]
    n = UP[None]
    forward = eval_bsdf(s, wi, wo, n)
    backward = eval_bsdf(s, wo, wi, n)
    assert np.allclose(forward, backward, rtol=1e-6, atol=1e-9)
    assert np.all(forward >= 0.0)


@pytest.mark.parametrize('roughness,metallic', [(0.3, 0.0), (0.6, 0.5), (1.0, 1.0)])
def test_white_furnace_never_gains_energy(roughness, metallic):
    """directional albedo <= 1 with c=0.9 for several view angles"""
    n_samples = 200000
    wi = uniform_sphere(n_samples, seed=4)
    wi[:, 2] = np.abs(wi[:, 2])
    sn = PbrSample.constant(n_samples, (0.9, 0.9, 0.9), roughness, metallic)
    for cos_o in (0.5, 0.8, 1.0):
        wo = repeat(hemisphere_direction(np.arccos(cos_o), 0.3), n_samples)
        f = eval_bsdf(sn, wi, wo, repeat(UP, n_samples))
        albedo = (f * wi[:, 2:3]).mean(axis=0) * 2.0 * np.pi
        assert np.all(albedo <= 1.0 + 0.02)


#sampling

def test_diffuse_only_pdf_is_cosine():
    n = 5000
    s = PbrSample.constant(n, (0.5, 0.5, 0.5), 0.5, 0.0)
    wo = repeat(hemisphere_direction(0.4, 1.0), n)
    u = np.random.default_rng(0).random((n, 3))
    wi, pdf, lobe = sample_bsdf(s, wo, repeat(UP, n), u, diffuse_only=True)
    assert np.all(lobe == 0)
    assert np.allclose(pdf, np.maximum(wi[:, 2], 0.0) / np.pi)
    assert np.all(wi[:, 2] >= 0.0)


@pytest.mark.parametrize('roughness,metallic', [(0.2, 0.0), (0.5, 1.0), (0.9, 0.3)])
def test_pdf_integrates_to_one_over_sphere(roughness, metallic):
    """importance estimate with uniform sphere directions"""
    n = 400000
    s = PbrSample.constant(n, (0.7, 0.5, 0.3), roughness, metallic)
    wo = repeat(hemisphere_direction(0.6, 0.2), n)
    wi = uniform_sphere(n, seed=9)
    total = pdf_bsdf(s, wi, wo, repeat(UP, n)).mean() * 4.0 * np.pi
    assert total == pytest.approx(1.0, abs=0.03)


def test_sample_pdf_matches_pdf_bsdf():
    n = 4000
    rng = np.random.default_rng(1)
    s = PbrSample(rng.random((n, 3)), rng.random(n), rng.random(n))
    wo = repeat(hemisphere_direction(0.9, 2.5), n)
    normals = repeat(UP, n)
    wi, pdf, _ = sample_bsdf(s, wo, normals, rng.random((n, 3)))
    assert np.allclose(pdf, pdf_bsdf(s, wi, wo, normals))
    assert np.allclose(np.linalg.norm(wi, axis=1), 1.0)


def test_sampled_histogram_matches_pdf():
    """chi-square over 20 bins of cos(theta_i) for a glossy dielectric"""
    n = 100000
    s = PbrSample.constant(n, (0.6, 0.6, 0.6), 0.35, 0.2)
    wo = repeat(hemisphere_direction(0.5, 0.0), n)
    normals = repeat(UP, n)
    wi, _, _ = sample_bsdf(s, wo, normals, np.random.default_rng(8).random((n, 3)))
    cos_i = wi[:, 2]
    valid = cos_i > 0
    edges = np.linspace(0.0, 1.0, 21)
    observed, _ = np.histogram(cos_i[valid], bins=edges)

    #expected mass per bin: midpoint quadrature of the density over (cos theta, phi)
    n_cos, n_phi = 2000, 1024
    mu = (np.arange(n_cos) + 0.5) / n_cos
    phi = (np.arange(n_phi) + 0.5) / n_phi * 2.0 * np.pi
    mm, pp = np.meshgrid(mu, phi, indexing='ij')
    sin_t = np.sqrt(1.0 - mm * mm)
    dirs = np.stack([sin_t * np.cos(pp), sin_t * np.sin(pp), mm], axis=-1).reshape(-1, 3)
    m = dirs.shape[0]
    dens = pdf_bsdf(PbrSample.constant(m, (0.6, 0.6, 0.6), 0.35, 0.2), dirs,
                    repeat(hemisphere_direction(0.5, 0.0), m), repeat(UP, m))
    cell = (1.0 / n_cos) * (2.0 * np.pi / n_phi)
    mass, _ = np.histogram(dirs[:, 2], bins=edges, weights=dens * cell)
    expected = mass / mass.sum() * valid.sum()
    chi2 = ((observed - expected) ** 2 / expected).sum()
    assert chi2 < 36.191


def test_specular_probability_from_albedo():
    s = PbrSample.constant(2, (0.5, 0.5, 0.5), 0.5, 0.0)
    assert np.allclose(specular_probability(s), 0.04 / 0.54)
    assert np.array_equal(specular_probability(s, diffuse_only=True), [0.0, 0.0])


#MIS

def test_mis_examples():
    assert mis_weight(2.0, 2.0) == pytest.approx(0.5)
    assert mis_weight(0.7, 0.0) == 1.0
    assert mis_weight(1.0, 3.0) == pytest.approx(0.1)
    assert mis_weight(0.0, 0.0) == 0.0


@given(a=st.floats(min_value=1e-6, max_value=1e6), b=st.floats(min_value=1e-6, max_value=1e6))
def test_mis_weights_complement(a, b):
    assert mis_weight(a, b) + mis_weight(b, a) == pytest.approx(1.0)


#gradients

def test_analytic_gradients_match_finite_differences():
    rng = np.random.default_rng(6)
    n = 64
    base = rng.uniform(0.1, 0.9, size=(n, 3))
    rough = rng.uniform(0.2, 0.9, size=n)
    metal = rng.uniform(0.1, 0.9, size=n)
    wi = np.array([hemisphere_direction(t, p) for t, p in rng.uniform([0, 0], [1.3, 6.2], size=(n, 2))])
    wo = np.array([hemisphere_direction(t, p) for t, p in rng.uniform([0, 0], [1.3, 6.2], size=(n, 2))])
    normals = repeat(UP, n)
    f, d_base, d_rough, d_metal = eval_bsdf_grad(PbrSample(base, rough, metal), wi, wo, normals)
    assert np.allclose(f, eval_bsdf(PbrSample(base, rough, metal), wi, wo, normals))

    h = 1e-6
    for channel in range(3):
        plus, minus = base.copy(), base.copy()
        plus[:, channel] += h
        minus[:, channel] -= h
        fd = (eval_bsdf(PbrSample(plus, rough, metal), wi, wo, normals)
              - eval_bsdf(PbrSample(minus, rough, metal), wi, wo, normals)) / (2 * h)
        assert np.allclose(fd[:, channel], d_base[:, channel], rtol=1e-4, atol=1e-6)
    fd_rough = (eval_bsdf(PbrSample(base, rough + h, metal), wi, wo, normals)
                - eval_bsdf(PbrSample(base, rough - h, metal), wi, wo, normals)) / (2 * h)
    assert np.allclose(fd_rough, d_rough, rtol=1e-4, atol=1e-6)
    fd_metal = (eval_bsdf(PbrSample(base, rough, metal + h), wi, wo, normals)
                - eval_bsdf(PbrSample(base, rough, metal - h), wi, wo, normals)) / (2 * h)
    assert np.allclose(fd_metal, d_metal, rtol=1e-4, atol=1e-6)
