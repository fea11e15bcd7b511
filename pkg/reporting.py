"""
Report serialisation: JSON (versioned schema), CSV and a plain text table.
Also reads JSON reports back for across-dataset comparisons.
"""
import io
import json
import logging
import math
import os
import sys
from typing import Any, Optional

import pandas as pd

from errors import InputError
from loss_estimators import LossEstimate
from r2_inference import Comparison, R2Report

logger = logging.getLogger(__name__)

SCHEMA_VERSION = "1.0"


def _clean(value: Any) -> Any:
    """JSON-safe copy: non-finite floats become null, numpy scalars plain."""
    if isinstance(value, dict):
        return {str(k): _clean(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_clean(v) for v in value]
    if hasattr(value, "item") and not isinstance(value, (str, bytes)):
        value = value.item()
    if isinstance(value, float) and not math.isfinite(value):
        return None
    return value


# ---------------------------------------------------------------------------
# Dict conversion
# ---------------------------------------------------------------------------
def report_to_dict(report: R2Report) -> dict:
    return {
        "outcome": report.meta.get("outcome"),
        "r2": report.r2,
        "se": report.se,
        "estimator": report.estimator,
        "se_method": report.se_method,
        "rho_hat": report.rho_hat,
        "rho_method": report.rho_method,
        "rho_degenerate": report.rho_degenerate,
        "mse": report.mse.summary() if report.mse is not None else None,
        "mst": report.mst.summary(),
        "ci": {
            "lower": report.ci_lower,
            "upper": report.ci_upper,
            "method": report.ci_method,
            "alpha": report.alpha,
        },
        "z": report.z,
        "p_one_sided": report.p_one_sided,
        "n_replicates": report.n_replicates,
        "meta": report.meta,
    }


def _loss_from_dict(d: Optional[dict]) -> Optional[LossEstimate]:
    if d is None:
        return None
    settings = {k: v for k, v in d.items() if k not in ("point", "variance", "method")}
    return LossEstimate(point=float(d["point"]), variance=float(d["variance"]), method=str(d["method"]), settings=settings)


def report_from_dict(d: dict) -> R2Report:
    """Rebuild an R2Report; malformed input raises InputError."""
    try:
        ci = d.get("ci") or {}
        return R2Report(
            r2=float(d["r2"]),
            se=None if d.get("se") is None else float(d["se"]),
            estimator=str(d.get("estimator", "pooling")),
            se_method=str(d.get("se_method", "delta")),
            mse=_loss_from_dict(d.get("mse")),
            mst=_loss_from_dict(d["mst"]),
            ci_lower=ci.get("lower"),
            ci_upper=ci.get("upper"),
            ci_method=ci.get("method"),
            alpha=float(ci.get("alpha", 0.05)),
            z=d.get("z"),
            p_one_sided=d.get("p_one_sided"),
            rho_hat=d.get("rho_hat"),
            rho_method=d.get("rho_method"),
            rho_degenerate=bool(d.get("rho_degenerate", False)),
            n_replicates=int(d.get("n_replicates", 0)),
            meta=dict(d.get("meta") or {}),
        )
    except (KeyError, TypeError, ValueError, AttributeError) as e:
        raise InputError(f"malformed report: {e!r}") from e


def comparison_to_dict(comparison: Comparison, labels: tuple[Optional[str], Optional[str]] = (None, None)) -> dict:
    return {
        "mode": comparison.mode,
        "a": labels[0],
        "b": labels[1],
        "r2_a": comparison.r2_a,
        "r2_b": comparison.r2_b,
        "z": comparison.z,
        "p_two_sided": comparison.p_two_sided,
        "corr_hat": comparison.corr_hat,
        "corr_degenerate": comparison.corr_degenerate,
        "cell": comparison.cell(),
    }


def analysis_document(reports: list[R2Report]) -> dict:
    return {"schema_version": SCHEMA_VERSION, "kind": "analysis", "reports": [report_to_dict(r) for r in reports]}


def comparison_document(comparison: Comparison, labels=(None, None), reports: Optional[list[R2Report]] = None) -> dict:
    doc = {"schema_version": SCHEMA_VERSION, "kind": "comparison", "comparison": comparison_to_dict(comparison, labels)}
    if reports:
        doc["reports"] = [report_to_dict(r) for r in reports]
    return doc


# ---------------------------------------------------------------------------
# Loading prior reports
# ---------------------------------------------------------------------------
def load_report(file_path: str, outcome: Optional[str] = None) -> R2Report:
    """
    One report from an analysis JSON document. With several reports in the
    file, outcome picks one by name.
    """
    if not os.path.isfile(file_path):
        raise InputError(f"report not found -> {file_path}")
    try:
        with open(file_path, encoding="utf-8") as f:
            doc = json.load(f)
    except (OSError, UnicodeDecodeError, json.JSONDecodeError) as e:
        raise InputError(f"malformed report {file_path}: {e}") from e
    if not isinstance(doc, dict) or not isinstance(doc.get("reports"), list) or not doc["reports"]:
        raise InputError(f"malformed report {file_path}: no 'reports' list")
    if doc.get("schema_version") != SCHEMA_VERSION:
        raise InputError(f"report {file_path} has schema_version {doc.get('schema_version')!r}, expected {SCHEMA_VERSION}")
    entries = doc["reports"]
    if outcome is not None:
        entries = [e for e in entries if isinstance(e, dict) and e.get("outcome") == outcome]
        if not entries:
            raise InputError(f"no report for outcome '{outcome}' in {file_path}")
    elif len(entries) > 1:
        raise InputError(f"{file_path} holds {len(entries)} reports; pick one with --outcome")
    if not isinstance(entries[0], dict):
        raise InputError(f"malformed report {file_path}")
    return report_from_dict(entries[0])


# ---------------------------------------------------------------------------
# Rendering
# ---------------------------------------------------------------------------
def _flatten(d: dict, prefix: str = "") -> dict:
    flat = {}
    for key, value in d.items():
        name = f"{prefix}{key}"
        if isinstance(value, dict):
            flat.update(_flatten(value, f"{name}_"))
        else:
            flat[name] = value
    return flat


def to_json(doc: dict) -> str:
    return json.dumps(_clean(doc), indent=2, sort_keys=True) + "\n"


def to_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    pd.DataFrame([_flatten(_clean(r)) for r in rows]).to_csv(buf, index=False, float_format="%.17g")
    return buf.getvalue()


def format_p(p: Optional[float]) -> str:
    """Three significant digits, scientific, as in 8.06e-25."""
    return "-" if p is None else f"{p:.2e}"


def format_num(x: Optional[float]) -> str:
    return "-" if x is None or not math.isfinite(x) else f"{x:.2f}"


def reports_table(reports: list[R2Report]) -> str:
    header = f"{'Outcome':<24} {'R2':>7} {'SE':>6} {'p-value':>10} {'CI':>16}"
    lines = [header, "-" * len(header)]
    for i, r in enumerate(reports):
        name = str(r.meta.get("outcome", i + 1))
        ci = "-" if r.ci_lower is None else f"({format_num(r.ci_lower)}, {format_num(r.ci_upper)})"
        lines.append(
            f"{name:<24} {format_num(r.r2):>7} {format_num(r.se):>6} {format_p(r.p_one_sided):>10} {ci:>16}"
        )
    return "\n".join(lines) + "\n"


def comparison_table(comparison: Comparison, labels=(None, None)) -> str:
    a = labels[0] or "a"
    b = labels[1] or "b"
    lines = [f"{a} vs {b} ({comparison.mode}): {comparison.cell()}"]
    if comparison.corr_hat is not None:
        lines.append(f"corr(R2_a, R2_b) = {comparison.corr_hat:.2f}")
    return "\n".join(lines) + "\n"


def render_analysis(reports: list[R2Report], fmt: str) -> str:
    if fmt == "json":
        return to_json(analysis_document(reports))
    if fmt == "csv":
        return to_csv([report_to_dict(r) for r in reports])
    return reports_table(reports)


def render_comparison(comparison: Comparison, fmt: str, labels=(None, None), reports=None) -> str:
    if fmt == "json":
        return to_json(comparison_document(comparison, labels, reports))
    if fmt == "csv":
        return to_csv([comparison_to_dict(comparison, labels)])
    return comparison_table(comparison, labels)


def write_output(text: str, file_path: Optional[str] = None) -> None:
    """To file_path when given, else stdout."""
    if file_path:
        with open(file_path, "w", encoding="utf-8") as f:
            f.write(text)
        logger.info("Wrote %s", file_path)
    else:
        sys.stdout.write(text)
