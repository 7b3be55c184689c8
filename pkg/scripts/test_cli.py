#!/usr/bin/env python3
"""Command line tests: exit codes and each subcommand on a tiny cube scene"""

import csv

import numpy as np
import pytest
import yaml

from make_sample_scene import sky_probe, unit_cube
from pbr_recon.envlight import load_probe, save_probe
from pbr_recon.matfield import bake_textures, save_textures
from pbr_recon.materials import OracleMaterial
from pbr_recon.pipeline import AUGMENT_FILE, make_material, orbit_cameras, scene_mesh
from pbr_recon.scene import build_bvh, save_obj
from pbr_recon.tools.config_loader import load_config
from pbr_recon.tools.image_io import write_png
from pbr_recon.tracer import render
from run_pipeline import parse_args, run


def base_config():
    return {
        'scene': {'mesh': 'cube.obj', 'probe': 'probe.hdr'},
        'orbit': {'n_frames': 4, 'elevation': 0.3, 'radius': 2.5, 'fov': 0.8},
        'render': {'spp': 2, 'spp_backward': 1, 'max_bounces': 1, 'width': 8, 'height': 8,
                   'tile_size': 8, 'ray_batch': 4096},
        'field': {'levels': 2, 'table_size_log2': 8, 'n_min': 2, 'n_max': 8, 'hidden_layers': 1,
                  'hidden_width': 8, 'table_init': 0.1},
        'optim': {'iterations': 2, 'batch_size': 2},
        'material': {'kind': 'constant', 'base_color': [0.6, 0.4, 0.3], 'roughness': 0.4, 'metallic': 0.1},
        'bake': {'resolution': 16},
        'paths': {'frameset': 'frames'},
    }


@pytest.fixture
def scene_dir(tmp_path, monkeypatch):
    for var in ('PBR_WORKERS', 'PBR_OUTPUT', 'PBR_QUIET'):
        monkeypatch.delenv(var, raising=False)
    save_obj(tmp_path / 'cube.obj', unit_cube())
    save_probe(sky_probe(height=16, width=32), tmp_path / 'probe.hdr')
    save_probe(sky_probe(height=16, width=32, sun=(0.7, 0.4)), tmp_path / 'evening.hdr')
    return tmp_path


def write_config(directory, data, name='config.yaml'):
    path = directory / name
    path.write_text(yaml.safe_dump(data))
    return path


def cli(*argv):
    return run(parse_args(list(argv) + ['--quiet']))


def pngs(directory):
    return sorted(p.name for p in directory.glob('*.png'))


#exit codes

def test_unknown_key_exits_2(scene_dir):
    data = base_config()
    data['render']['sppp'] = 4
    assert cli('render', '--config', str(write_config(scene_dir, data))) == 2


def test_missing_config_exits_3(tmp_path):
    assert cli('render', '--config', str(tmp_path / 'nope.yaml')) == 3


def test_bad_worker_count_exits_2(scene_dir):
    assert cli('render', '--config', str(write_config(scene_dir, base_config())), '--workers', '0') == 2


def test_missing_mesh_exits_3(scene_dir):
    data = base_config()
    data['scene']['mesh'] = 'missing.obj'
    assert cli('render', '--config', str(write_config(scene_dir, data))) == 3


def test_unknown_command_is_rejected():
    with pytest.raises(SystemExit):
        parse_args(['paint', '--config', 'x.yaml'])


#subcommands

def test_render_writes_frame_set(scene_dir):
    config = write_config(scene_dir, base_config())
    out = scene_dir / 'frames'
    assert cli('render', '--config', str(config), '--output', str(out), '--intrinsics', '--augment') == 0
    assert pngs(out / 'frames') == [f'{i:05d}.png' for i in range(4)]
    assert pngs(out / 'masks') == pngs(out / 'frames')
    assert len(pngs(out / 'guides' / 'roughness')) == 4
    assert len((out / 'cameras.txt').read_text().splitlines()) == 5
    assert (out / 'resolved_config.yaml').exists()
    lines = (out / AUGMENT_FILE).read_text().splitlines()
    assert lines[0].startswith('# reverse=')
    assert sorted(int(x) for x in lines[1:]) == [0, 1, 2, 3]


def test_guides_write_two_images_per_frame(scene_dir):
    config = write_config(scene_dir, base_config())
    out = scene_dir / 'guides'
    assert cli('guides', '--config', str(config), '--output', str(out)) == 0
    names = pngs(out)
    assert len(names) == 8
    assert '00003_normal.png' in names and '00003_shading.png' in names


def test_reconstruct_bake_and_metrics(scene_dir):
    config = write_config(scene_dir, base_config())
    assert cli('render', '--config', str(config), '--output', str(scene_dir / 'frames'), '--intrinsics') == 0

    recon = scene_dir / 'recon'
    assert cli('reconstruct', '--config', str(config), '--output', str(recon), '--seed', '3') == 0
    for name in ('field.bin', 'loss_history.csv', 'basecolor.png', 'roughness.png', 'metallic.png', 'mask.png'):
        assert (recon / name).exists()
    with open(recon / 'loss_history.csv') as f:
        rows = list(csv.reader(f))
    assert rows[0][0] == 'iteration' and len(rows) == 3

    data = base_config()
    data['paths']['checkpoint'] = 'recon/field.bin'
    bake_config = write_config(scene_dir, data, 'bake.yaml')
    assert cli('bake', '--config', str(bake_config), '--output', str(scene_dir / 'baked')) == 0
    assert (scene_dir / 'baked' / 'basecolor.png').exists()

    truth = bake_textures(OracleMaterial(), unit_cube(), 16)
    save_textures(truth, scene_dir / 'truth_maps')
    data = base_config()
    data['material'] = {'kind': 'textures', 'path': 'baked'}
    data['paths']['truth_textures'] = 'truth_maps'
    metrics_config = write_config(scene_dir, data, 'metrics.yaml')
    assert cli('metrics', '--config', str(metrics_config), '--output', str(scene_dir / 'scores')) == 0
    with open(scene_dir / 'scores' / 'metrics.csv') as f:
        rows = list(csv.reader(f))
    assert [r[0] for r in rows[1:]] == ['basecolor', 'roughness', 'metallic']


def test_metrics_with_empty_truth_mask_exits_3(scene_dir):
    truth = bake_textures(OracleMaterial(), unit_cube(), 16)
    save_textures(truth, scene_dir / 'truth_maps')
    write_png(scene_dir / 'truth_maps' / 'mask.png', np.zeros((16, 16)))
    data = base_config()
    data['material'] = {'kind': 'textures', 'path': 'truth_maps'}
    data['paths']['truth_textures'] = 'truth_maps'
    config = write_config(scene_dir, data, 'metrics.yaml')
    assert cli('metrics', '--config', str(config), '--output', str(scene_dir / 'scores')) == 3
    assert not (scene_dir / 'scores' / 'metrics.csv').exists()


def test_bake_without_checkpoint_exits_2(scene_dir):
    config = write_config(scene_dir, base_config())
    assert cli('bake', '--config', str(config), '--output', str(scene_dir / 'baked')) == 2


def test_warp_follows_trajectory(scene_dir):
    config = write_config(scene_dir, base_config())
    assert cli('render', '--config', str(config), '--output', str(scene_dir / 'frames')) == 0
    out = scene_dir / 'warp'
    assert cli('warp', '--config', str(config), '--output', str(out)) == 0
    assert pngs(out / 'warped') == [f'{i:05d}.png' for i in range(4)]
    assert len(pngs(out / 'warp_masks')) == 4
    assert (out / 'depth.bin').exists()


def test_relight_scores_probes(scene_dir):
    data = base_config()
    data['relight'] = {'probes': ['evening.hdr'], 'truth_dir': 'truth'}
    config_path = write_config(scene_dir, data)

    #truth renders of the configured material under the held-out probe
    config = load_config(config_path)
    mesh = scene_mesh(config)
    accel = build_bvh(mesh)
    probe = load_probe(scene_dir / 'evening.hdr')
    material = make_material(config)
    for i, cam in enumerate(orbit_cameras(config, mesh)):
        write_png(scene_dir / 'truth' / 'evening' / f'{i:05d}.png',
                  render(accel, probe, material, cam, config.render).display())

    assert cli('relight', '--config', str(config_path), '--output', str(scene_dir / 'relit')) == 0
    with open(scene_dir / 'relit' / 'relight.csv') as f:
        rows = list(csv.reader(f))
    assert rows[1][0] == 'evening' and rows[1][1] == '4'
    assert float(rows[1][2]) > 30.0


def test_relight_without_probes_exits_2(scene_dir):
    config = write_config(scene_dir, base_config())
    assert cli('relight', '--config', str(config), '--output', str(scene_dir / 'relit')) == 2


def test_render_is_byte_identical_across_runs_and_workers(scene_dir):
    config = write_config(scene_dir, base_config())
    assert cli('render', '--config', str(config), '--output', str(scene_dir / 'a'), '--workers', '1') == 0
    assert cli('render', '--config', str(config), '--output', str(scene_dir / 'b'), '--workers', '1') == 0
    assert cli('render', '--config', str(config), '--output', str(scene_dir / 'c'), '--workers', '3') == 0
    for name in pngs(scene_dir / 'a' / 'frames'):
        first = (scene_dir / 'a' / 'frames' / name).read_bytes()
        assert (scene_dir / 'b' / 'frames' / name).read_bytes() == first
        assert (scene_dir / 'c' / 'frames' / name).read_bytes() == first
