"""Static parameter, multiply-accumulate, and serialized-size audit of a graph.

One MAC is one multiply-accumulate; bias adds and activations are excluded.
Pool layers contribute nothing. Sizes in MB are decimal (1e6 bytes).
"""

from __future__ import annotations

from dataclasses import dataclass

from .arch import ArchSpec, input_channel_counts, intermediate_shapes, param_manifest
from .modelio import model_file_size


@dataclass(frozen=True)
class LayerAudit:
    name: str
    param_count: int
    mac_count: int
    output_shape: tuple[int, int, int]


@dataclass(frozen=True)
class AuditReport:
    layers: tuple[LayerAudit, ...]
    total_params: int
    total_macs: int
    fp16_bytes: int
    fp32_bytes: int

    @property
    def fp16_mb(self) -> float:
        return self.fp16_bytes / 1e6


def _conv_cost(in_c, out_c, kernel, has_bias, out_h, out_w):
    kh, kw = kernel
    params = in_c * kh * kw * out_c + (out_c if has_bias else 0)
    macs = out_h * out_w * out_c * in_c * kh * kw
    return params, macs


def audit(spec: ArchSpec, input_size: int | None = None) -> AuditReport:
    """Per-layer and total resource accounting for one input image."""
    shapes = dict(intermediate_shapes(spec, input_size))
    in_channels = input_channel_counts(spec)
    layers = []
    for layer in spec.layers:
        g = layer.geometry
        c, h, w = shapes[layer.name]
        if layer.kind == "conv":
            params, macs = _conv_cost(in_channels[layer.name], g.out_channels,
                                      g.kernel, g.has_bias, h, w)
        elif layer.kind == "fire":
            sp, sm = _conv_cost(in_channels[layer.name], g.squeeze, (1, 1), True, h, w)
            e1p, e1m = _conv_cost(g.squeeze, g.expand1x1, (1, 1), True, h, w)
            e3p, e3m = _conv_cost(g.squeeze, g.expand3x3, (3, 3), True, h, w)
            params, macs = sp + e1p + e3p, sm + e1m + e3m
        else:
            params, macs = 0, 0
        layers.append(LayerAudit(layer.name, params, macs, (c, h, w)))
    total_params = sum(a.param_count for a in layers)
    total_macs = sum(a.mac_count for a in layers)
    manifest = param_manifest(spec)
    return AuditReport(
        layers=tuple(layers),
        total_params=total_params,
        total_macs=total_macs,
        fp16_bytes=model_file_size(manifest, "f16"),
        fp32_bytes=model_file_size(manifest, "f32"),
    )


@dataclass(frozen=True)
class ReferenceClaims:
    """Published resource figures the audit is compared against."""

    params: float = 1.13e6
    macs: float = 571.09e6
    fp16_mb: float = 2.3


@dataclass(frozen=True)
class MetricCheck:
    metric: str
    actual: float
    reference: float
    deviation: float  # relative, signed
    tolerance: float

    @property
    def passed(self) -> bool:
        return abs(self.deviation) <= self.tolerance


@dataclass(frozen=True)
class Comparison:
    checks: tuple[MetricCheck, ...]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)


def compare(report: AuditReport, reference: ReferenceClaims = ReferenceClaims(),
            tol_params: float = 0.06, tol_macs: float = 0.10,
            tol_size: float = 0.06) -> Comparison:
    """Relative deviation of the audited totals from the reference claims."""

    def check(metric, actual, ref, tol):
        return MetricCheck(metric, actual, ref, (actual - ref) / ref, tol)

    return Comparison(checks=(
        check("params", float(report.total_params), reference.params, tol_params),
        check("macs", float(report.total_macs), reference.macs, tol_macs),
        check("fp16_mb", report.fp16_mb, reference.fp16_mb, tol_size),
    ))


def format_audit_table(report: AuditReport) -> str:
    """Aligned per-layer table plus totals block."""
    rows = [("layer", "params", "MACs", "output")]
    for a in report.layers:
        c, h, w = a.output_shape
        rows.append((a.name, f"{a.param_count:,}", f"{a.mac_count:,}", f"{c}x{h}x{w}"))
    widths = [max(len(r[i]) for r in rows) for i in range(4)]
    lines = []
    for row in rows:
        lines.append(
            "  ".join(
                cell.ljust(widths[i]) if i == 0 else cell.rjust(widths[i])
                for i, cell in enumerate(row)
            ).rstrip()
        )
    lines.insert(1, "-" * max(len(line) for line in lines))
    lines.append("")
    lines.append(f"total params: {report.total_params:,}")
    lines.append(f"total MACs:   {report.total_macs:,}")
    lines.append(f"fp16 size:    {report.fp16_bytes:,} bytes ({report.fp16_mb:.3f} MB)")
    lines.append(f"fp32 size:    {report.fp32_bytes:,} bytes ({report.fp32_bytes / 1e6:.3f} MB)")
    return "\n".join(lines) + "\n"


def format_comparison(cmp: Comparison) -> str:
    lines = []
    for c in cmp.checks:
        verdict = "PASS" if c.passed else "FAIL"
        lines.append(
            f"{c.metric:<8} actual {c.actual:,.2f}  reference {c.reference:,.2f}  "
            f"deviation {c.deviation:+.2%} (tolerance {c.tolerance:.0%})  {verdict}"
        )
    lines.append(f"overall: {'PASS' if cmp.passed else 'FAIL'}")
    return "\n".join(lines) + "\n"
