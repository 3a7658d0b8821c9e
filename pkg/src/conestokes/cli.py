"""Command-line entry point.

Structured results are JSON, series are CSV; every record carries a
``citation`` tag.  Errors go to stderr as JSON with exit code 2 (validation)
or 3 (numeric failure).  A ``--config`` JSON file supplies defaults per
subcommand; explicit flags win.
"""
from __future__ import annotations

import csv
import io
import json
import math
import sys
from pathlib import Path

import click
import numpy as np

from .errors import ConeStokesError, DataError, DomainError
from .geometry import ConeSpec

EXIT_OK, EXIT_VALIDATION, EXIT_NUMERIC = 0, 2, 3


def _plain(o):
    if isinstance(o, complex):
        return [o.real, o.imag]
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (set, tuple)):
        return list(o)
    raise TypeError(f"not serializable: {type(o).__name__}")


def dumps(obj):
    return json.dumps(obj, default=_plain, sort_keys=True, indent=2)


def _emit(text, out):
    if out:
        Path(out).write_text(text)
    else:
        click.echo(text, nl=not text.endswith("\n"))


def _csv(header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in r])
    return buf.getvalue()


def _floats(text, name):
    try:
        return [float(v) for v in str(text).replace(",", " ").split()]
    except ValueError:
        raise DomainError(f"{name} must be a list of numbers", value=text)


def _grid(text, name):
    """'a:b:n' (inclusive linspace) or a comma list."""
    if ":" in str(text):
        parts = str(text).split(":")
        if len(parts) != 3:
            raise DomainError(f"{name} range must be a:b:n", value=text)
        a, b, n = float(parts[0]), float(parts[1]), int(parts[2])
        if n < 1:
            raise DomainError(f"{name} needs at least one point", value=text)
        return list(np.linspace(a, b, n))
    return _floats(text, name)


def _point(text, name):
    v = _floats(text, name)
    if len(v) != 3:
        raise DomainError(f"{name} must have three components", value=text)
    return np.array(v)


def _cone(theta0, delta_c=None):
    return ConeSpec(theta0, delta_c)


class _Group(click.Group):
    def invoke(self, ctx):
        try:
            return super().invoke(ctx)
        except ConeStokesError as exc:
            click.echo(json.dumps(exc.to_dict(), default=_plain, sort_keys=True), err=True)
            ctx.exit(exc.exit_code)
        except (ValueError, OSError, KeyError) as exc:
            err = {"error": "validation", "message": str(exc), "details": {"type": type(exc).__name__}}
            click.echo(json.dumps(err, sort_keys=True), err=True)
            ctx.exit(EXIT_VALIDATION)
        except (ArithmeticError, np.linalg.LinAlgError) as exc:
            err = {"error": "numeric", "message": str(exc), "details": {"type": type(exc).__name__}}
            click.echo(json.dumps(err, sort_keys=True), err=True)
            ctx.exit(EXIT_NUMERIC)


def _apply_config(ctx, name):
    """Fill parameters left at their defaults from the config section ``name``."""
    cfg = (ctx.obj or {}).get("config", {})
    section = dict(cfg.get("common", {}))
    section.update(cfg.get(name, {}))
    for key, value in section.items():
        key = key.replace("-", "_")
        if key in ctx.params and ctx.get_parameter_source(key) == click.core.ParameterSource.DEFAULT:
            ctx.params[key] = value
    return ctx.params


@click.group(cls=_Group)
@click.option("--config", type=click.Path(dir_okay=False), default=None, help="JSON config; flags win.")
@click.pass_context
def main(ctx, config):
    """Singular-expansion and kernel toolkit for the Stokes system on a circular cone."""
    ctx.ensure_object(dict)
    if config:
        try:
            ctx.obj["config"] = json.loads(Path(config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise DataError("cannot read config", path=config, reason=str(exc))


def _cone_options(f):
    f = click.option("--delta-c", type=float, default=None, help="Collar width fraction.")(f)
    f = click.option("--theta0", type=float, default=math.pi / 2, show_default=True, help="Cone half-angle.")(f)
    return f


def _s_options(f):
    f = click.option("--s-im", type=float, default=0.0, show_default=True)(f)
    f = click.option("--s-re", type=float, default=1.0, show_default=True)(f)
    return f


@main.command()
@_cone_options
@click.option("--mu-max", type=float, default=4.0, show_default=True)
@click.option("--m-max", type=int, default=None)
@click.option("--out", type=click.Path(dir_okay=False), default=None)
@click.pass_context
def spectrum(ctx, theta0, delta_c, mu_max, m_max, out):
    """Neumann degrees mu <= mu-max with multiplicities (JSON)."""
    p = _apply_config(ctx, "spectrum")
    from .neumann import neumann_spectrum
    spec = neumann_spectrum(_cone(p["theta0"], p["delta_c"]), p["mu_max"], p["m_max"])
    rows = [dict(e.to_dict(), citation="neumann-spectrum") for e in spec]
    _emit(dumps(rows), p["out"])


@main.command()
@click.option("--lambda1", type=float, default=1.0, show_default=True)
@click.option("--simple/--not-simple", default=True, show_default=True)
@click.option("--re-lambda2", type=float, default=None)
@click.option("--mu2", type=float, required=False, default=None)
@click.option("--beta-grid", type=str, default=None, help="a:b:n or comma list.")
@click.option("--beta", "betas", type=float, multiple=True, help="Single weight (repeatable).")
@click.option("--out", type=click.Path(dir_okay=False), default=None)
@click.pass_context
def intervals(ctx, lambda1, simple, re_lambda2, mu2, beta_grid, betas, out):
    """Weight classification (CSV: beta, status, citation)."""
    p = _apply_config(ctx, "intervals")
    from .pencil import StokesPencilData, classify_weight
    if p["mu2"] is None:
        raise DomainError("--mu2 is required")
    grid = list(p["betas"] or ())
    if p["beta_grid"] is not None:
        grid += _grid(p["beta_grid"], "beta-grid")
    if not grid:
        raise DomainError("give --beta or --beta-grid")
    pen = StokesPencilData(p["lambda1"], p["simple"], p["re_lambda2"], "user-supplied")
    rows = []
    for b in grid:
        v = classify_weight(b, pen, p["mu2"])
        rows.append((v.beta, v.status, f"weight-classification:{v.citation}"))
    _emit(_csv(["beta", "status", "citation"], rows), p["out"])


def _expansion(p):
    from .expansion import build_expansion
    from .neumann import negative_branch, neumann_spectrum
    cone = _cone(p["theta0"], p["delta_c"])
    j = p["mu_index"]
    if j == 0:
        raise DomainError("mu-index must be nonzero (negative selects the dual branch)")
    spec = neumann_spectrum(cone, 3.5)
    e = next((x for x in spec if x.index == abs(j)), None)
    if e is None:
        raise DomainError("mu-index beyond the computed spectrum", mu_index=j, available=len(spec))
    if j < 0:
        e = negative_branch(e)
    s = complex(p["s_re"], p["s_im"])
    return build_expansion(e, p["k"], p["depth"], s, cone, spectrum=spec), s


@main.command()
@_cone_options
@click.option("--mu-index", type=int, default=2, show_default=True, help="j; negative for the dual branch.")
@click.option("--k", type=int, default=1, show_default=True)
@click.option("--depth", type=int, default=1, show_default=True)
@_s_options
@click.option("--out", type=click.Path(dir_okay=False), default=None)
@click.pass_context
def singular(ctx, theta0, delta_c, mu_index, k, depth, s_re, s_im, out):
    """Singular expansion (U_N, P_N) as an atom ledger (JSON)."""
    p = _apply_config(ctx, "singular")
    ex, _ = _expansion(p)
    _emit(dumps(dict(ex.to_dict(), citation="singular-expansion")), p["out"])


@main.command()
@_cone_options
@click.option("--mu-index", type=int, default=2, show_default=True)
@click.option("--k", type=int, default=1, show_default=True)
@click.option("--depth", type=int, default=1, show_default=True)
@_s_options
@click.option("--r-grid", type=str, default="1:10:10", show_default=True)
@click.option("--theta-grid", type=str, default=None, help="Default: 20 angles across the collar.")
@click.option("--phi", type=float, default=0.0, show_default=True)
@click.option("--out", type=click.Path(dir_okay=False), default=None)
@click.pass_context
def residual(ctx, theta0, delta_c, mu_index, k, depth, s_re, s_im, r_grid, theta_grid, phi, out):
    """Residual of the expansion on an (r, theta) lattice (CSV)."""
    p = _apply_config(ctx, "residual")
    from .expansion import residual as residual_table
    ex, s = _expansion(p)
    r = _grid(p["r_grid"], "r-grid")
    if p["theta_grid"] is None:
        th = list(np.linspace(ex.cone.theta0 - ex.cone.collar_angle, ex.cone.theta0, 20))
    else:
        th = _grid(p["theta_grid"], "theta-grid")
    if min(r) <= 0 or max(th) > ex.cone.theta0 or min(th) < 0:
        raise DomainError("lattice must lie in the cone with r > 0")
    tab = residual_table(ex, r, th, p["phi"], s)
    rows = []
    for a in range(len(r)):
        for b in range(len(th)):
            rows.append((tab["r"][a, b], tab["theta"][a, b], tab["force"][a, b], tab["div"][a, b],
                         tab["envelope"][a, b], int(tab["stencil_outside"][a, b]), "residual-envelopes"))
    _emit(_csv(["r", "theta", "force", "div", "envelope", "stencil_outside", "citation"], rows), p["out"])


def _load_data(spec_text, cone, s, base):
    """Data manifest: {"preset": {...}} for manufactured data or {"grid": {...}} for gridded values."""
    from .coefficients import DataField, SmoothPart, manufacture
    from .geometry import QuadratureGrid
    if not isinstance(spec_text, dict):
        raise DataError("data manifest must be a JSON object")
    if "preset" in spec_text:
        pre = spec_text["preset"]
        seeds = {tuple(int(v) for v in key.split(",")): complex(*val) if isinstance(val, list) else complex(val)
                 for key, val in pre.get("seeds", {}).items()}
        smooth = None
        if "smooth" in pre:
            sm = pre["smooth"]
            smooth = SmoothPart(tuple(sm["center"]), float(sm["radius"]), tuple(sm.get("axis", (0, 0, 1))),
                                float(sm.get("pressure", 1.0)))
        data, truth = manufacture(cone, seeds, s, pre.get("gamma"), smooth, pre.get("rho"), pre.get("depth"))
        return data, {f"{j},{k}": v for (j, k), v in truth.items()}
    if "grid" in spec_text:
        g = spec_text["grid"]
        path = g.get("values")
        vals = json.loads((base / path).read_text()) if path else g
        if "quadrature" not in g:
            raise DataError("gridded data need a quadrature description")
        grid = QuadratureGrid.from_dict(g["quadrature"])
        f = np.asarray(vals["f_re"]) + 1j * np.asarray(vals.get("f_im", 0.0))
        gg = np.asarray(vals["g_re"]) + 1j * np.asarray(vals.get("g_im", 0.0))
        return DataField(cone, grid=grid, f_values=f, g_values=gg, zero_mean=bool(g.get("zero_mean", False))), None
    raise DataError("data manifest needs 'preset' or 'grid'")


@main.command()
@_cone_options
@click.option("--gamma", type=float, required=False, default=None)
@_s_options
@click.option("--data", "data_path", type=click.Path(dir_okay=False), default=None)
@click.option("--zero-mean/--no-zero-mean", default=False, show_default=True)
@click.option("--out", type=click.Path(dir_okay=False), default=None)
@click.pass_context
def coeffs(ctx, theta0, delta_c, gamma, s_re, s_im, data_path, zero_mean, out):
    """Coefficients c_{j,k}(s) of the singular part of given data (JSON)."""
    p = _apply_config(ctx, "coeffs")
    from .coefficients import decompose
    if p["gamma"] is None or p["data_path"] is None:
        raise DomainError("--gamma and --data are required")
    cone = _cone(p["theta0"], p["delta_c"])
    s = complex(p["s_re"], p["s_im"])
    path = Path(p["data_path"])
    try:
        manifest = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError("cannot read data manifest", path=str(path), reason=str(exc))
    data, truth = _load_data(manifest, cone, s, path.parent)
    res = decompose(data, s, p["gamma"], p["zero_mean"])
    cs = res[0] if isinstance(res, tuple) else res
    doc = cs.to_dict()
    if truth:
        doc["seeded"] = {k: [complex(v).real, complex(v).imag] for k, v in truth.items()}
    _emit(dumps(doc), p["out"])


@main.command()
@_cone_options
@click.option("--kind", type=click.Choice(["K_u", "H_u", "K_p", "H_p"]), default="K_u", show_default=True)
@click.option("--j", type=int, default=2, show_default=True)
@click.option("--k", type=int, default=1, show_default=True)
@click.option("--x", "x_text", type=str, default=None, help="Three comma-separated coordinates.")
@click.option("--y", "y_text", type=str, default=None)
@click.option("--t-grid", type=str, default="0.5:2:4", show_default=True)
@click.option("--method", type=click.Choice(["auto", "contour", "split"]), default="auto", show_default=True)
@click.option("--mollifier-n", type=int, default=2, show_default=True)
@click.option("--delta", type=float, default=0.3, show_default=True, help="Contour tilt past the imaginary axis.")
@click.option("--out", type=click.Path(dir_okay=False), default=None)
@click.pass_context
def kernels(ctx, theta0, delta_c, kind, j, k, x_text, y_text, t_grid, method, mollifier_n, delta, out):
    """Time-domain kernel values (CSV: t, components, error estimate)."""
    p = _apply_config(ctx, "kernels")
    from .kernels import ContourSpec, build_mollifier, kernel_terms, sample_terms
    if p["x_text"] is None or p["y_text"] is None:
        raise DomainError("--x and --y are required")
    cone = _cone(p["theta0"], p["delta_c"])
    x, y = _point(p["x_text"], "x"), _point(p["y_text"], "y")
    ts = _grid(p["t_grid"], "t-grid")
    if min(ts) <= 0:
        raise DomainError("t-grid must be positive")
    mol = build_mollifier(p["mollifier_n"])
    kt = kernel_terms(p["kind"], cone, p["j"], p["k"], x, y)
    ncomp = int(np.prod(kt.shape)) if kt.shape else 1
    rows = []
    for t in ts:
        val, err, how = sample_terms(kt, t, mol, ContourSpec(t, p["delta"]), p["method"])
        rows.append([t] + list(np.atleast_1d(val).ravel()) + [err, how, "kernel-envelopes"])
    header = ["t"] + [f"v{i}" for i in range(ncomp)] + ["error", "method", "citation"]
    _emit(_csv(header, rows), p["out"])


def _time_data(manifest, base):
    """Manifest: {"points": [[x,y,z],...], "weights": [...], "frames": [{"t": .., "file": ..} or
    {"t": .., "f": [[..]], "g": [..]}]}; files hold {"f": .., "g": ..}."""
    from .kernels import TimeData
    try:
        frames = sorted(manifest["frames"], key=lambda fr: fr["t"])
        ts, fs, gs = [], [], []
        for fr in frames:
            body = json.loads((base / fr["file"]).read_text()) if "file" in fr else fr
            ts.append(float(fr["t"]))
            fs.append(body["f"])
            gs.append(body["g"])
        return TimeData(ts, manifest["points"], manifest["weights"], fs, gs)
    except (KeyError, TypeError, OSError, json.JSONDecodeError) as exc:
        raise DataError("malformed time-data manifest", reason=str(exc))


@main.command()
@_cone_options
@click.option("--term", type=click.Choice(["S", "T"]), default="S", show_default=True)
@click.option("--j", type=int, default=2, show_default=True)
@click.option("--k", type=int, default=1, show_default=True)
@click.option("--x", "x_text", type=str, default=None)
@click.option("--t-grid", type=str, default=None)
@click.option("--manifest", type=click.Path(dir_okay=False), default=None)
@click.option("--reading", type=click.Choice(["H_p", "H_u"]), default="H_p", show_default=True,
              help="g-kernel of the T term.")
@click.option("--out", type=click.Path(dir_okay=False), default=None)
@click.pass_context
def timeterm(ctx, theta0, delta_c, term, j, k, x_text, t_grid, manifest, reading, out):
    """S or T traces at x over a time grid (CSV)."""
    p = _apply_config(ctx, "timeterm")
    from .kernels import time_term
    if p["x_text"] is None or p["manifest"] is None or p["t_grid"] is None:
        raise DomainError("--x, --t-grid and --manifest are required")
    cone = _cone(p["theta0"], p["delta_c"])
    path = Path(p["manifest"])
    try:
        man = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError("cannot read manifest", path=str(path), reason=str(exc))
    data = _time_data(man, path.parent)
    x = _point(p["x_text"], "x")
    rows = []
    for t in _grid(p["t_grid"], "t-grid"):
        v = time_term(p["term"], cone, p["j"], p["k"], x, t, data, reading=p["reading"])
        if isinstance(v, dict):
            comps = [v["K_p_f"]] + list(v["H_u_g"])
        else:
            comps = list(np.atleast_1d(np.real(v)).ravel())
        rows.append([t] + comps + [p["reading"] if p["term"] == "T" else "", "time-terms"])
    n = len(rows[0]) - 3 if rows else 0
    _emit(_csv(["t"] + [f"v{i}" for i in range(n)] + ["reading", "citation"], rows), p["out"])


@main.command()
@click.option("--criteria", type=str, default=None, help="Comma list of criterion numbers (default: all).")
@click.option("--out", type=click.Path(dir_okay=False), default="verify_report.json", show_default=True)
@click.pass_context
def verify(ctx, criteria, out):
    """Run the property suite and write a pass/fail JSON report."""
    p = _apply_config(ctx, "verify")
    from .verify import run_all
    only = None if p["criteria"] is None else [int(v) for v in _floats(p["criteria"], "criteria")]
    results = run_all(only)
    rep = {"passed": all(r["passed"] for r in results),
           "checks": [dict(r, citation=r.get("citation", "acceptance")) for r in results]}
    Path(p["out"]).write_text(dumps(rep))
    for r in results:
        click.echo(f"{'PASS' if r['passed'] else 'FAIL'} {r['criterion']:>2} {r['name']} ({r['runtime']:.1f}s)")
    ctx.exit(EXIT_OK if rep["passed"] else EXIT_NUMERIC)


if __name__ == "__main__":
    sys.exit(main())
