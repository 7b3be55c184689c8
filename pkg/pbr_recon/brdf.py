"""Lambertian + GGX microfacet reflectance with sampling and analytic gradients

All functions are vectorized over N shading points; directions are (N, 3)
world-space unit vectors and the shading normal n defines the upper hemisphere.
"""
from dataclasses import dataclass
from typing import Tuple

import numpy as np

ALPHA_MIN = 1e-3
DIELECTRIC_F0 = 0.04

DIFFUSE_LOBE = 0
SPECULAR_LOBE = 1


def _dot(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return a[..., 0] * b[..., 0] + a[..., 1] * b[..., 1] + a[..., 2] * b[..., 2]


def _normalize(v: np.ndarray) -> np.ndarray:
    length = np.sqrt(_dot(v, v))[..., None]
    with np.errstate(invalid='ignore', divide='ignore'):
        out = v / length
    return np.where(length > 0, out, 0.0)


@dataclass
class PbrSample:
    """material at N shading points: base color (N,3), roughness (N,), metallic (N,)"""
    base_color: np.ndarray
    roughness: np.ndarray
    metallic: np.ndarray

    def __post_init__(self):
        self.base_color = np.clip(np.asarray(self.base_color, dtype=np.float64).reshape(-1, 3), 0.0, 1.0)
        self.roughness = np.clip(np.asarray(self.roughness, dtype=np.float64).reshape(-1), 0.0, 1.0)
        self.metallic = np.clip(np.asarray(self.metallic, dtype=np.float64).reshape(-1), 0.0, 1.0)

    def __len__(self):
        return self.base_color.shape[0]

    @property
    def alpha(self) -> np.ndarray:
        return np.maximum(self.roughness * self.roughness, ALPHA_MIN)

    @property
    def dalpha_droughness(self) -> np.ndarray:
        #zero where the alpha floor is active
        return np.where(self.roughness * self.roughness > ALPHA_MIN, 2.0 * self.roughness, 0.0)

    @classmethod
    def from_array(cls, values: np.ndarray) -> 'PbrSample':
        """(N, 5) rows of (r, g, b, roughness, metallic)"""
        values = np.asarray(values, dtype=np.float64).reshape(-1, 5)
        return cls(values[:, :3], values[:, 3], values[:, 4])

    @classmethod
    def constant(cls, n: int, base_color, roughness: float, metallic: float) -> 'PbrSample':
        return cls(np.tile(np.asarray(base_color, dtype=np.float64), (n, 1)),
                   np.full(n, roughness), np.full(n, metallic))

    def to_array(self) -> np.ndarray:
        return np.concatenate([self.base_color, self.roughness[:, None], self.metallic[:, None]], axis=1)

    def take(self, index) -> 'PbrSample':
        return PbrSample(self.base_color[index], self.roughness[index], self.metallic[index])


@dataclass
class LobeWeights:
    diffuse: np.ndarray    #k_d, (N,3)
    specular: np.ndarray   #k_s, (N,3)


def derive_lobes(s: PbrSample) -> LobeWeights:
    m = s.metallic[:, None]
    return LobeWeights(
        diffuse=s.base_color * (1.0 - m),
        specular=DIELECTRIC_F0 * (1.0 - m) + s.base_color * m,
    )


def specular_probability(s: PbrSample, diffuse_only: bool = False) -> np.ndarray:
    """probability of sampling the GGX lobe, from mean lobe albedo"""
    if diffuse_only:
        return np.zeros(len(s))
    lobes = derive_lobes(s)
    kd = lobes.diffuse.mean(axis=1)
    ks = lobes.specular.mean(axis=1)
    total = kd + ks
    with np.errstate(invalid='ignore', divide='ignore'):
        return np.where(total > 0, ks / total, 0.5)


def ggx_ndf(cos_nh, alpha):
    cos_nh = np.asarray(cos_nh, dtype=np.float64)
    a2 = np.asarray(alpha, dtype=np.float64) ** 2
    c2 = cos_nh * cos_nh
    d = c2 * (a2 - 1.0) + 1.0
    return np.where(cos_nh > 0, a2 / (np.pi * d * d), 0.0)


def _ggx_ndf_dalpha(cos_nh, alpha):
    c2 = cos_nh * cos_nh
    a2 = alpha * alpha
    d = c2 * (a2 - 1.0) + 1.0
    grad = (2.0 * alpha / (np.pi * d * d)) * (1.0 - 2.0 * a2 * c2 / d)
    return np.where(cos_nh > 0, grad, 0.0)


def _smith_lambda(cos_theta, alpha):
    c2 = np.maximum(cos_theta * cos_theta, 1e-300)
    tan2 = np.maximum(1.0 - c2, 0.0) / c2
    return 0.5 * (np.sqrt(1.0 + alpha * alpha * tan2) - 1.0)


def _smith_lambda_dalpha(cos_theta, alpha):
    c2 = np.maximum(cos_theta * cos_theta, 1e-300)
    tan2 = np.maximum(1.0 - c2, 0.0) / c2
    return alpha * tan2 / (2.0 * np.sqrt(1.0 + alpha * alpha * tan2))


def smith_g1(cos_theta, alpha):
    return 1.0 / (1.0 + _smith_lambda(np.asarray(cos_theta, dtype=np.float64), alpha))


def smith_g(cos_ni, cos_no, alpha):
    """height-correlated Smith masking-shadowing for GGX"""
    cos_ni = np.asarray(cos_ni, dtype=np.float64)
    cos_no = np.asarray(cos_no, dtype=np.float64)
    return 1.0 / (1.0 + _smith_lambda(cos_ni, alpha) + _smith_lambda(cos_no, alpha))


def smith_g_separable(cos_ni, cos_no, alpha):
    return smith_g1(cos_ni, alpha) * smith_g1(cos_no, alpha)


def fresnel_schlick(f0, cos_vh):
    f0 = np.asarray(f0, dtype=np.float64)
    cos_vh = np.clip(np.asarray(cos_vh, dtype=np.float64), 0.0, 1.0)
    weight = (1.0 - cos_vh) ** 5
    if f0.ndim == np.ndim(weight) + 1:
        weight = weight[..., None]
    return f0 + (1.0 - f0) * weight


def _geometry(wi, wo, n):
    """cosines and the symmetric half-vector terms shared by eval and its gradient"""
    cos_i = _dot(n, wi)
    cos_o = _dot(n, wo)
    h = _normalize(wi + wo)
    cos_nh = _dot(n, h)
    #averaged so swapping wi and wo is bit-exact
    cos_vh = 0.5 * (_dot(wo, h) + _dot(wi, h))
    valid = (cos_i > 0) & (cos_o > 0)
    return cos_i, cos_o, cos_nh, cos_vh, valid


def eval_bsdf(s: PbrSample, wi: np.ndarray, wo: np.ndarray, n: np.ndarray,
              diffuse_only: bool = False) -> np.ndarray:
    """(N,3) reflectance per steradian; zero below the shading hemisphere"""
    cos_i, cos_o, cos_nh, cos_vh, valid = _geometry(wi, wo, n)
    lobes = derive_lobes(s)
    f = np.broadcast_to(lobes.diffuse / np.pi, (len(s), 3)).copy()
    if not diffuse_only:
        alpha = s.alpha
        denom = np.where(valid, 4.0 * cos_i * cos_o, 1.0)
        spec = ggx_ndf(cos_nh, alpha) * smith_g(np.where(valid, cos_i, 1.0), np.where(valid, cos_o, 1.0), alpha) / denom
        f += spec[:, None] * fresnel_schlick(lobes.specular, cos_vh)
    return np.where(valid[:, None], f, 0.0)


def eval_bsdf_grad(s: PbrSample, wi: np.ndarray, wo: np.ndarray, n: np.ndarray,
                   diffuse_only: bool = False) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """f and its partials: df/dbase (per channel, diagonal), df/droughness, df/dmetallic, all (N,3)"""
    cos_i, cos_o, cos_nh, cos_vh, valid = _geometry(wi, wo, n)
    c = s.base_color
    m = s.metallic[:, None]
    lobes = derive_lobes(s)

    f = lobes.diffuse / np.pi
    d_base = np.broadcast_to((1.0 - m) / np.pi, c.shape).copy()
    d_metal = -c / np.pi
    d_rough = np.zeros_like(c)

    if not diffuse_only:
        alpha = s.alpha
        ci = np.where(valid, cos_i, 1.0)
        co = np.where(valid, cos_o, 1.0)
        denom = 4.0 * ci * co
        D = ggx_ndf(cos_nh, alpha)
        G = smith_g(ci, co, alpha)
        A = (D * G / denom)[:, None]

        schlick = ((1.0 - np.clip(cos_vh, 0.0, 1.0)) ** 5)[:, None]
        F = lobes.specular * (1.0 - schlick) + schlick
        f = f + A * F
        d_base = d_base + A * (1.0 - schlick) * m
        d_metal = d_metal + A * (1.0 - schlick) * (c - DIELECTRIC_F0)

        dD = _ggx_ndf_dalpha(cos_nh, alpha)
        dG = -G * G * (_smith_lambda_dalpha(ci, alpha) + _smith_lambda_dalpha(co, alpha))
        dA = (dD * G + D * dG) / denom * s.dalpha_droughness
        d_rough = dA[:, None] * F

    mask = valid[:, None]
    return (np.where(mask, f, 0.0), np.where(mask, d_base, 0.0),
            np.where(mask, d_rough, 0.0), np.where(mask, d_metal, 0.0))


def shading_frame(n: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """orthonormal tangent and bitangent for unit normals"""
    sign = np.where(n[:, 2] >= 0, 1.0, -1.0)
    a = -1.0 / (sign + n[:, 2])
    b = n[:, 0] * n[:, 1] * a
    t = np.stack([1.0 + sign * n[:, 0] * n[:, 0] * a, sign * b, -sign * n[:, 0]], axis=1)
    bt = np.stack([b, sign + n[:, 1] * n[:, 1] * a, -n[:, 1]], axis=1)
    return t, bt


def _to_local(v, t, bt, n):
    return np.stack([_dot(v, t), _dot(v, bt), _dot(v, n)], axis=1)


def _to_world(v, t, bt, n):
    return v[:, 0:1] * t + v[:, 1:2] * bt + v[:, 2:3] * n


def _sample_cosine(u1, u2):
    r = np.sqrt(u1)
    phi = 2.0 * np.pi * u2
    return np.stack([r * np.cos(phi), r * np.sin(phi), np.sqrt(np.maximum(0.0, 1.0 - u1))], axis=1)


def sample_ggx_vndf(wo_local: np.ndarray, alpha: np.ndarray, u1: np.ndarray, u2: np.ndarray) -> np.ndarray:
    """visible-normal sample of the GGX half-vector in the local frame"""
    a = alpha
    vh = _normalize(np.stack([a * wo_local[:, 0], a * wo_local[:, 1], wo_local[:, 2]], axis=1))
    lensq = vh[:, 0] ** 2 + vh[:, 1] ** 2
    inv_len = np.where(lensq > 0, 1.0 / np.sqrt(np.where(lensq > 0, lensq, 1.0)), 0.0)
    t1 = np.where((lensq > 0)[:, None],
                  np.stack([-vh[:, 1] * inv_len, vh[:, 0] * inv_len, np.zeros_like(lensq)], axis=1),
                  np.array([1.0, 0.0, 0.0]))
    t2 = np.stack([
        vh[:, 1] * t1[:, 2] - vh[:, 2] * t1[:, 1],
        vh[:, 2] * t1[:, 0] - vh[:, 0] * t1[:, 2],
        vh[:, 0] * t1[:, 1] - vh[:, 1] * t1[:, 0],
    ], axis=1)
    r = np.sqrt(u1)
    phi = 2.0 * np.pi * u2
    p1 = r * np.cos(phi)
    p2 = r * np.sin(phi)
    blend = 0.5 * (1.0 + vh[:, 2])
    p2 = (1.0 - blend) * np.sqrt(np.maximum(0.0, 1.0 - p1 * p1)) + blend * p2
    nh = (p1[:, None] * t1 + p2[:, None] * t2
          + np.sqrt(np.maximum(0.0, 1.0 - p1 * p1 - p2 * p2))[:, None] * vh)
    return _normalize(np.stack([a * nh[:, 0], a * nh[:, 1], np.maximum(0.0, nh[:, 2])], axis=1))


def _specular_pdf(cos_o, cos_nh, alpha):
    #G1(wo) D(h) / (4 cos_o): the VNDF density after reflection (not hemisphere-masked)
    with np.errstate(invalid='ignore', divide='ignore'):
        pdf = smith_g1(cos_o, alpha) * ggx_ndf(cos_nh, alpha) / (4.0 * cos_o)
    return np.where(cos_o > 0, pdf, 0.0)


def pdf_bsdf(s: PbrSample, wi: np.ndarray, wo: np.ndarray, n: np.ndarray,
             diffuse_only: bool = False) -> np.ndarray:
    """mixture density of sample_bsdf at wi (per steradian)"""
    cos_i = _dot(n, wi)
    cos_o = _dot(n, wo)
    p_spec = specular_probability(s, diffuse_only)
    pdf = (1.0 - p_spec) * np.maximum(cos_i, 0.0) / np.pi
    if not diffuse_only:
        h = _normalize(wi + wo)
        pdf = pdf + p_spec * _specular_pdf(cos_o, _dot(n, h), s.alpha)
    return np.where(cos_o > 0, pdf, 0.0)


def sample_bsdf(s: PbrSample, wo: np.ndarray, n: np.ndarray, u: np.ndarray,
                diffuse_only: bool = False) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """draw wi from (N, 3) uniforms: u[:,0] picks the lobe, u[:,1:] drive it

    returns (wi, pdf, lobe); pdf is the full mixture density pdf_bsdf(wi).
    """
    u = np.asarray(u, dtype=np.float64).reshape(-1, 3)
    p_spec = specular_probability(s, diffuse_only)
    lobe = np.where(u[:, 0] < p_spec, SPECULAR_LOBE, DIFFUSE_LOBE)

    t, bt = shading_frame(n)
    wi_local = _sample_cosine(u[:, 1], u[:, 2])
    spec = lobe == SPECULAR_LOBE
    if np.any(spec):
        wo_local = _to_local(wo[spec], t[spec], bt[spec], n[spec])
        h = sample_ggx_vndf(wo_local, s.alpha[spec], u[spec, 1], u[spec, 2])
        wi_local[spec] = 2.0 * _dot(wo_local, h)[:, None] * h - wo_local
    wi = _normalize(_to_world(wi_local, t, bt, n))
    return wi, pdf_bsdf(s, wi, wo, n, diffuse_only), lobe


def mis_weight(pdf_a, pdf_b):
    """power heuristic (beta = 2)"""
    a2 = np.asarray(pdf_a, dtype=np.float64) ** 2
    b2 = np.asarray(pdf_b, dtype=np.float64) ** 2
    total = a2 + b2
    with np.errstate(invalid='ignore', divide='ignore'):
        w = np.where(total > 0, a2 / total, 0.0)
    #an infinite density on one side takes the whole weight
    w = np.where(np.isinf(a2), 1.0, w)
    return np.where(np.isinf(b2) & ~np.isinf(a2), 0.0, w)
