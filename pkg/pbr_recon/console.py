"""Status output shared by every stage

Plain status lines (✓ / ⚠ / ✗) printed through one rich console, plus counters
for warnings that repeat per sample or per pixel.
"""
import os
from collections import Counter
from typing import Dict

from rich.console import Console

console = Console(highlight=False, soft_wrap=True)
_err_console = Console(stderr=True, highlight=False, soft_wrap=True)

_state = {'quiet': os.environ.get('PBR_QUIET', '') not in ('', '0', 'false')}
_warned_once = set()
warning_counts: Counter = Counter()


def set_quiet(quiet: bool):
    """silence status output (errors still print)"""
    _state['quiet'] = bool(quiet)


def is_quiet() -> bool:
    return _state['quiet']


def banner(title: str):
    if _state['quiet']:
        return
    console.print(f"\n{'='*80}")
    console.print(title, markup=False)
    console.print(f"{'='*80}")


def phase(index: int, total: int, title: str):
    if not _state['quiet']:
        console.print(f"\n[{index}/{total}] {title}", markup=False)


def info(message: str):
    if not _state['quiet']:
        console.print(f"  {message}", markup=False)


def ok(message: str):
    if not _state['quiet']:
        console.print(f"  ✓ {message}", markup=False)


def warn(message: str, key: str = None, count: int = 1):
    """print a warning and count it under key"""
    warning_counts[key or message] += count
    if not _state['quiet']:
        console.print(f"  ⚠ {message}", markup=False)


def warn_once(key: str, message: str):
    if key in _warned_once:
        warning_counts[key] += 1
        return
    _warned_once.add(key)
    warn(message, key=key)


def count(key: str, amount: int = 1):
    """count a repeated condition without printing"""
    if amount:
        warning_counts[key] += int(amount)


def fail(message: str):
    _err_console.print(f"✗ {message}", markup=False)


def summary() -> Dict[str, int]:
    """print and return accumulated warning counts"""
    counts = dict(warning_counts)
    if counts and not _state['quiet']:
        console.print("\nWarnings:")
        for key, value in sorted(counts.items()):
            console.print(f"  ⚠ {key}: {value}", markup=False)
    return counts


def reset():
    """clear counters (tests and new CLI runs)"""
    warning_counts.clear()
    _warned_once.clear()
