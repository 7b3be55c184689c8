"""load and validate the pipeline YAML configuration"""
from pathlib import Path
from typing import Dict, Optional, Tuple

import yaml
from pydantic import ValidationError

from pbr_recon.errors import ConfigError, InputError
from pbr_recon.schemas import PipelineConfig, RuntimeSettings

RESOLVED_CONFIG_NAME = 'resolved_config.yaml'

#keys holding file paths, resolved relative to the config file's directory
_PATH_KEYS = (
    ('scene', 'mesh'),
    ('scene', 'probe'),
    ('material', 'path'),
    ('relight', 'truth_dir'),
    ('warp', 'source_image'),
    ('paths', 'frameset'),
    ('paths', 'output'),
    ('paths', 'checkpoint'),
    ('paths', 'truth_textures'),
)


def _key_path(loc) -> str:
    return '.'.join(str(part) for part in loc)


def format_validation_error(error: ValidationError) -> str:
    """one line per problem, naming the offending key path"""
    lines = []
    for item in error.errors():
        where = _key_path(item.get('loc', ())) or '<root>'
        if item.get('type') == 'extra_forbidden':
            lines.append(f"unknown key '{where}'")
        else:
            lines.append(f"{where}: {item.get('msg')}")
    return '; '.join(lines)


def validate_config_dict(raw: Dict) -> Dict:
    """check a parsed config without raising"""
    try:
        config = PipelineConfig.model_validate(raw)
    except ValidationError as e:
        return {'valid': False, 'error': format_validation_error(e), 'count': e.error_count()}
    return {'valid': True, 'config': config}


def _resolve_paths(raw: Dict, base: Path) -> Dict:
    for section, key in _PATH_KEYS:
        block = raw.get(section)
        if isinstance(block, dict) and block.get(key) is not None:
            p = Path(block[key]).expanduser()
            block[key] = str(p if p.is_absolute() else base / p)
    relight = raw.get('relight')
    if isinstance(relight, dict) and isinstance(relight.get('probes'), list):
        relight['probes'] = [str(Path(p) if Path(p).is_absolute() else base / p) for p in relight['probes']]
    return raw


def load_config(path: Path, overrides: Optional[Dict] = None) -> PipelineConfig:
    """parse, resolve relative paths, validate; ConfigError on any problem"""
    path = Path(path)
    if not path.exists():
        raise InputError("config file not found", str(path))
    try:
        with open(path) as f:
            raw = yaml.safe_load(f) or {}
    except yaml.YAMLError as e:
        raise ConfigError(f"{path}: not valid YAML ({e})")
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be a mapping")

    raw = _resolve_paths(raw, path.resolve().parent)
    for dotted, value in (overrides or {}).items():
        if value is None:
            continue
        *parents, leaf = dotted.split('.')
        block = raw
        for part in parents:
            block = block.setdefault(part, {})
        block[leaf] = value

    result = validate_config_dict(raw)
    if not result['valid']:
        raise ConfigError(f"{path}: {result['error']}")
    return result['config']


def runtime_settings() -> RuntimeSettings:
    try:
        return RuntimeSettings()
    except ValidationError as e:
        raise ConfigError(f"environment: {format_validation_error(e)}")


def resolve_runtime(config: PipelineConfig, workers: Optional[int] = None,
                    output: Optional[Path] = None) -> Tuple[int, Path, RuntimeSettings]:
    """worker count and output directory: CLI flag > PBR_* env > config"""
    env = runtime_settings()
    n_workers = workers or env.workers or config.render.workers
    out = Path(output) if output else (env.output or config.paths.output)
    return n_workers, Path(out), env


def write_resolved_config(config: PipelineConfig, out_dir: Path) -> Path:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    target = out_dir / RESOLVED_CONFIG_NAME
    with open(target, 'w') as f:
        yaml.dump(config.model_dump(mode='json'), f, default_flow_style=False, sort_keys=False)
    return target
