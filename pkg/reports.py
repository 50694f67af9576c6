"""
Result artifacts and console reports.

Every CSV and JSON artifact carries the same provenance block: the SHA-256
of the run configuration, the root seed and a git-describe style version
string. Artifacts contain no wall-clock timestamps, so a repeated run with
the same configuration and seed reproduces them byte for byte.
"""

import hashlib
import json
import math
import subprocess
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional

import numpy as np
import pandas as pd
from termcolor import colored

from estimates import Estimate

__version__ = "0.1.0"

PROVENANCE_KEYS = ('config_hash', 'seed', 'version')

BANNER_WIDTH = 90


def version_string() -> str:
    """`git describe` of the checkout, or the package version outside a repository."""
    try:
        out = subprocess.run(['git', 'describe', '--tags', '--always', '--dirty'],
                             cwd=Path(__file__).parent, capture_output=True, text=True, timeout=5)
        if out.returncode == 0 and out.stdout.strip():
            return out.stdout.strip()
    except (OSError, subprocess.SubprocessError):
        pass
    return f"v{__version__}"


def _jsonable(value: Any) -> Any:
    if isinstance(value, Estimate):
        return value.to_dict()
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, float) and not math.isfinite(value):
        return str(value)
    if isinstance(value, Path):
        return str(value)
    return value


def canonical_json(data: Any) -> str:
    return json.dumps(_jsonable(data), sort_keys=True, separators=(',', ':'))


def config_hash(config: Dict[str, Any]) -> str:
    return hashlib.sha256(canonical_json(config).encode('utf-8')).hexdigest()


def provenance(config: Dict[str, Any], seed: Optional[int]) -> Dict[str, Any]:
    return {'config_hash': config_hash(config), 'seed': seed, 'version': version_string()}


def write_json(path, payload: Dict[str, Any], config: Dict[str, Any], seed: Optional[int]) -> Path:
    """Write a verification report with the run configuration embedded verbatim."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    document = {'provenance': provenance(config, seed), 'config': _jsonable(config)}
    document.update(_jsonable(payload))
    with open(path, 'w') as f:
        json.dump(document, f, indent=2, sort_keys=True)
        f.write('\n')
    return path


def records_frame(records: Iterable[Dict[str, Any]]) -> pd.DataFrame:
    """Long-format table; nested estimate dicts are flattened to value/std_error columns."""
    rows = []
    for i, record in enumerate(records):
        row = {'row': i}
        for key, value in record.items():
            if isinstance(value, Estimate):
                value = value.to_dict()
            if isinstance(value, dict) and 'value' in value and 'std_error' in value:
                row[f'{key}_value' if key != 'estimate' else 'value'] = value['value']
                row[f'{key}_std_error' if key != 'estimate' else 'std_error'] = value['std_error']
            elif isinstance(value, (list, tuple)):
                row[key] = ';'.join(str(v) for v in value)
            else:
                row[key] = value
        rows.append(row)
    return pd.DataFrame(rows)


def write_csv(path, records: Iterable[Dict[str, Any]], config: Dict[str, Any],
              seed: Optional[int]) -> Path:
    """
    Long-format CSV. Two leading comment lines hold the provenance and the
    configuration (read back with `pd.read_csv(path, comment='#')`), and the
    provenance is repeated as columns on every row.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame = records_frame(records)
    prov = provenance(config, seed)
    for key in PROVENANCE_KEYS:
        frame[key] = prov[key]
    with open(path, 'w', newline='') as f:
        f.write(f"# provenance: {canonical_json(prov)}\n")
        f.write(f"# config: {canonical_json(config)}\n")
        frame.to_csv(f, index=False, float_format='%.12g')
    return path


def read_csv(path) -> pd.DataFrame:
    return pd.read_csv(path, comment='#')


# ---------------------------------------------------------------------------
# Console
# ---------------------------------------------------------------------------

def _status(passed: Optional[bool]) -> str:
    if passed is None:
        return colored("n/a", "yellow")
    return colored("PASS", "green", attrs=["bold"]) if passed else colored("FAIL", "red", attrs=["bold"])


def _format_value(value: Any) -> str:
    if isinstance(value, Estimate):
        return str(value)
    if isinstance(value, dict) and 'value' in value and 'std_error' in value:
        return f"{value['value']:.6g} +/- {value['std_error']:.2g}"
    if isinstance(value, float):
        return f"{value:.6g}"
    return str(value)


def format_header(title: str, subtitle: Iterable[str] = ()) -> List[str]:
    lines = ["=" * BANNER_WIDTH, colored(f"  {title}", "cyan", attrs=["bold"])]
    for line in subtitle:
        lines.append(colored(f"  {line}", "cyan"))
    lines.append("=" * BANNER_WIDTH)
    return lines


def format_verification(name: str, report: Dict[str, Any], passed: Optional[bool]) -> str:
    """Banner, one line per scalar or estimate field, and the verdict."""
    lines = format_header(f"VERIFY {name.upper()}")
    lines.append("")
    for key, value in report.items():
        if isinstance(value, dict) and not ('value' in value and 'std_error' in value):
            lines.append(f"  {key}:")
            for sub, inner in value.items():
                lines.append(f"    {sub:<26} {_format_value(inner)}")
        elif isinstance(value, list) and value and isinstance(value[0], dict):
            lines.append(f"  {key:<28} [{len(value)} entries]")
        else:
            lines.append(f"  {key:<28} {_format_value(value)}")
    lines.append("")
    lines.append(f"  Result: {_status(passed)}")
    lines.append("=" * BANNER_WIDTH)
    return "\n".join(lines)


def format_estimates(title: str, records: List[Dict[str, Any]]) -> str:
    lines = format_header(title)
    lines.append("")
    lines.append(f"  {'Observable':<24} {'Value':>14} {'Std. error':>12} {'Samples':>10}  Flags")
    lines.append("  " + "-" * (BANNER_WIDTH - 4))
    for r in records:
        est = r['estimate']
        flags = ','.join(est.flags) if est.flags else ''
        lines.append(f"  {r['name']:<24} {est.value:>14.6g} {est.std_error:>12.3g} "
                     f"{est.n_samples:>10}  {colored(flags, 'yellow') if flags else ''}")
    lines.append("=" * BANNER_WIDTH)
    return "\n".join(lines)


def format_battery(title: str, ranked: List[Dict[str, Any]], summary: Dict[str, Any],
                   top: int = 10) -> str:
    """Worst cases first, then the pass-rate verdict."""
    lines = format_header(title, [f"Cases: {summary.get('cases', len(ranked))}",
                                  f"Trials: {summary.get('trials', len(ranked))}"])
    lines.append("")
    lines.append(colored(f"  WORST {min(top, len(ranked))} CASES (ranked by |z|)", "yellow", attrs=["bold"]))
    lines.append("")
    lines.append(f"  {'Rank':<5} {'Case':<34} {'lambda':>7} {'delta':>7} {'gamma':>7} {'|z|':>8}  Status")
    lines.append("  " + "-" * (BANNER_WIDTH - 4))
    for r in ranked[:top]:
        lines.append(f"  {r['rank']:<5} {str(r['case'])[:34]:<34} {r['lambda']:>7.3f} {r['delta']:>7.3f} "
                     f"{r['gamma']:>7.3f} {r['abs_z']:>8.3f}  {_status(r['passed'])}")
    lines.append("")
    lines.append("=" * BANNER_WIDTH)
    rate = summary.get('pass_rate')
    if rate is not None:
        color = "green" if summary.get('passed') else "red"
        lines.append(f"  Pass rate: {colored(f'{rate:.4f}', color)}"
                     f"  (target {summary.get('target', 0):.2f}, p = {summary.get('p_value', float('nan')):.3g})")
    lines.append(f"  Result: {_status(summary.get('passed'))}")
    lines.append("=" * BANNER_WIDTH)
    return "\n".join(lines)


def format_scan(result: Dict[str, Any]) -> str:
    lines = format_header("CRITICAL POINT SCAN")
    lines.append("")
    for c in result.get('crossings', []):
        lines.append(f"  sizes {c.get('sizes')}: crossing at {c['rho']:.4f} +/- {c.get('se', 0.0):.2g}")
    rho_c = result.get('rho_c')
    if rho_c is not None:
        lines.append("")
        lines.append(colored(f"  rho_c = {_format_value(rho_c)}", "green", attrs=["bold"]))
    if result.get('diagnostic'):
        lines.append(colored(f"  {result['diagnostic']}", "yellow"))
    lines.append("=" * BANNER_WIDTH)
    return "\n".join(lines)
