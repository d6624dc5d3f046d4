"""toolctl: validate documents, inspect their HTTP closure and coverage,
measure context cost, exercise single tools, and run the gateway.

Exit codes: 0 ok, 1 validation error, 2 usage or not found, 3 authorization
denied, 4 upstream terminal failure.  Settings resolve flag over environment
over optional config file.
"""

import json
import signal
import sys
import threading
import time
from pathlib import Path

import click
import yaml

from . import gateway as gw
from .authz import AuditLog, Gatekeeper, Policy, PolicyRule, load_policy, sink_from_spec
from .credentials import CredentialResolver
from .errors import (
    AuthzDenied,
    DadlError,
    RequestError,
    RetriesExhausted,
    UnknownTool,
    UpstreamTerminal,
)
from .model import (
    coverage_report,
    document_json_schema,
    effective_tool,
    parse_document,
    static_closure,
    validate,
)
from .runtime import Runtime, composite_effective_access
from .synthetic import synthetic_catalog

CONFIG_KEYS = ("library_dir", "secrets_file", "policy_file", "audit_sink",
               "transport", "listen")

PERMISSIVE = Policy(rules=(PolicyRule(role="*", allow=("*",)),))


def _load_config(path):
    if path is None:
        return {}
    raw = yaml.safe_load(Path(path).read_text()) or {}
    if not isinstance(raw, dict):
        raise click.UsageError(f"{path}: config must be a YAML map")
    unknown = set(raw) - set(CONFIG_KEYS)
    if unknown:
        raise click.UsageError(
            f"{path}: unknown config keys {sorted(unknown)}")
    return raw


def _setting(ctx, flag_value, key, default=None):
    if flag_value is not None:
        return flag_value
    return ctx.obj.get(key, default)


def _dadl_files(paths):
    """Expand a mix of files and directories into .dadl file paths."""
    out = []
    for p in paths:
        path = Path(p)
        if path.is_dir():
            out.extend(sorted(path.glob("*.dadl")))
        elif path.exists():
            out.append(path)
        else:
            raise click.UsageError(f"{p}: no such file or directory")
    return out


def _emit(data, as_json):
    if as_json:
        click.echo(json.dumps(data, indent=2, sort_keys=True))


@click.group()
@click.option("--config", type=click.Path(exists=True, dir_okay=False),
              envvar="TOOLCTL_CONFIG", default=None,
              help="Optional YAML config; flags and env override it.")
@click.pass_context
def main(ctx, config):
    """Work with DADL documents and the two-operation gateway."""
    ctx.obj = _load_config(config)


# --- validate -----------------------------------------------------------------


@main.command("validate")
@click.argument("paths", nargs=-1, required=True)
@click.option("--json", "as_json", is_flag=True, help="Machine-readable report.")
@click.option("--strict", is_flag=True, help="Treat warnings as failures.")
def cmd_validate(paths, as_json, strict):
    """Parse and validate documents; exit 0 only when none has errors."""
    files = _dadl_files(paths)
    out = {"files": [], "errors": 0, "warnings": 0}
    for path in files:
        entry = {"path": str(path), "errors": [], "warnings": []}
        try:
            doc = parse_document(path.read_text(encoding="utf-8"))
        except (DadlError, OSError) as err:
            entry["errors"].append({"path": "-", "code": "parse",
                                    "message": str(err)})
        else:
            report = validate(doc)
            entry["errors"] = [vars(f) for f in report.errors]
            entry["warnings"] = [vars(f) for f in report.warnings]
            entry["backend"] = doc.backend.name
            entry["tools"] = len(doc.tool_map())
        entry["ok"] = not entry["errors"]
        out["errors"] += len(entry["errors"])
        out["warnings"] += len(entry["warnings"])
        out["files"].append(entry)
    failed = out["errors"] > 0 or (strict and out["warnings"] > 0)
    out["ok"] = not failed
    if as_json:
        _emit(out, True)
    else:
        for entry in out["files"]:
            if entry["ok"]:
                label = entry.get("backend", "?")
                click.echo(f"OK    {entry['path']} "
                           f"({label}, {entry.get('tools', 0)} tools)")
            else:
                click.echo(f"FAIL  {entry['path']}")
            for f in entry["errors"]:
                click.echo(f"      error {f['path']}: {f['message']} [{f['code']}]")
            for f in entry["warnings"]:
                click.echo(f"      warn  {f['path']}: {f['message']} [{f['code']}]")
        click.echo(f"{len(out['files'])} file(s), {out['errors']} error(s), "
                   f"{out['warnings']} warning(s)")
    sys.exit(1 if failed else 0)


# --- closure ------------------------------------------------------------------


@main.command("closure")
@click.argument("paths", nargs=-1, required=True)
@click.option("--json", "as_json", is_flag=True)
@click.option("--access", "access_filter", default=None,
              help="Only show tools carrying this access label.")
def cmd_closure(paths, as_json, access_filter):
    """Print the static HTTP surface and composite reachability per file."""
    out = {"files": []}
    for path in _dadl_files(paths):
        try:
            doc = parse_document(path.read_text(encoding="utf-8"))
        except DadlError as err:
            raise click.ClickException(f"{path}: {err}")
        surface = static_closure(doc)

        def label_of(tool_name):
            access = effective_tool(doc, tool_name).access
            return str(access) if access else None

        def keep(tool_name):
            return access_filter is None or label_of(tool_name) == access_filter

        endpoints = []
        for e in sorted(surface.entries,
                        key=lambda e: (e.path_template, e.method)):
            tools = sorted(t for t in e.tool_names if keep(t))
            if tools:
                endpoints.append({"method": e.method, "path": e.path_template,
                                  "tools": tools})
        composites = {}
        for cname, reachable in sorted(surface.reachable_map().items()):
            comp = doc.composite_map()[cname]
            if access_filter is not None:
                label = composite_effective_access(doc, comp)
                if (str(label) if label else None) != access_filter:
                    continue
            composites[cname] = sorted(reachable)
        out["files"].append({
            "path": str(path),
            "backend": doc.backend.name,
            "contains_code": doc.contains_code,
            "endpoints": endpoints,
            "composites": composites,
        })
    if as_json:
        _emit(out, True)
        return
    for entry in out["files"]:
        click.echo(f"{entry['path']} ({entry['backend']})")
        if entry["contains_code"]:
            click.echo("  !! contains_code: true  (composites define scripts)")
        for e in entry["endpoints"]:
            click.echo(f"  {e['method']} {e['path']}  [{', '.join(e['tools'])}]")
        for cname, reachable in entry["composites"].items():
            click.echo(f"  composite {cname} -> {', '.join(reachable)}")


# --- coverage -----------------------------------------------------------------


@main.command("coverage")
@click.argument("paths", nargs=-1, required=True)
@click.option("--json", "as_json", is_flag=True)
@click.option("--report", "report_dir", type=click.Path(file_okay=False),
              default=None, help="Write coverage.csv and coverage.png here.")
def cmd_coverage(paths, as_json, report_dir):
    """Compare each document's declared coverage block with its actual
    tool count."""
    docs = []
    for path in _dadl_files(paths):
        try:
            docs.append(parse_document(path.read_text(encoding="utf-8")))
        except DadlError as err:
            raise click.ClickException(f"{path}: {err}")
    report = coverage_report(docs)
    out = {
        "backends": [
            {
                "backend": s.backend,
                "actual_tools": s.actual_tools,
                "declared_tools":
                    s.declared.tools_defined if s.declared else None,
                "estimated_total":
                    s.declared.estimated_total if s.declared else None,
                "reported_percent": s.reported_percent,
                "discrepancy": s.discrepancy,
            }
            for s in report.summaries
        ],
        "total_backends": report.total_backends,
        "total_tools": report.total_tools,
        "total_declared_estimate": report.total_declared_estimate,
    }
    written = []
    if report_dir:
        from .report import write_coverage_report
        written = [str(p) for p in write_coverage_report(report_dir, report)]
        out["report_files"] = written
    if as_json:
        _emit(out, True)
        return
    for row in out["backends"]:
        declared = (f"declares {row['declared_tools']}"
                    if row["declared_tools"] is not None else "no coverage block")
        pct = (f", ~{row['reported_percent']}% of "
               f"{row['estimated_total']}" if row["reported_percent"] is not None
               else "")
        flag = "  DISCREPANCY" if row["discrepancy"] else ""
        click.echo(f"{row['backend']}: {row['actual_tools']} tools "
                   f"({declared}{pct}){flag}")
    click.echo(f"total: {out['total_tools']} tools across "
               f"{out['total_backends']} backend(s)")
    for path in written:
        click.echo(f"wrote {path}")


# --- measure ------------------------------------------------------------------

# report-mode ladder for the scaling figure; clipped to the requested size
_LADDER = (1, 8, 25, 92, 250, 500, 1000, 1833)


@main.command("measure")
@click.option("--library-dir", type=click.Path(exists=True, file_okay=False),
              envvar="DADL_LIBRARY_DIR", default=None)
@click.option("--synthetic", "synthetic_n", type=int, default=None,
              help="Measure a generated catalog of N tools instead of a library.")
@click.option("--json", "as_json", is_flag=True)
@click.option("--report", "report_dir", type=click.Path(file_okay=False),
              default=None, help="Write measure.csv and measure.png here.")
@click.pass_context
def cmd_measure(ctx, library_dir, synthetic_n, as_json, report_dir):
    """Context cost: flat per-tool advertisement tokens versus the constant
    gateway surface."""
    if synthetic_n is not None and library_dir is not None:
        raise click.UsageError("--synthetic and --library-dir are exclusive")
    if synthetic_n is not None:
        if synthetic_n < 0:
            raise click.UsageError("--synthetic must be >= 0")
        catalog = synthetic_catalog(synthetic_n)
    else:
        library_dir = _setting(ctx, library_dir, "library_dir")
        if library_dir is None:
            raise click.UsageError(
                "pass --synthetic N or --library-dir DIR")
        catalog = gw.Catalog(gw.load_library(library_dir))
    report = gw.measure_context(catalog)
    out = report.as_dict()
    written = []
    if report_dir:
        from .report import write_measure_report
        points = [report]
        if synthetic_n is not None:
            sizes = sorted({n for n in _LADDER if n < synthetic_n})
            points = [gw.measure_context(synthetic_catalog(n))
                      for n in sizes] + [report]
        written = [str(p) for p in write_measure_report(report_dir, points)]
        out["report_files"] = written
    if as_json:
        _emit(out, True)
        return
    click.echo(f"tools:     {report.catalog_tool_count} across "
               f"{len(catalog.documents)} backend(s)")
    click.echo(f"flat:      {report.flat_advertisement_tokens} tokens")
    click.echo(f"surface:   {report.codemode_surface_tokens} tokens (constant)")
    click.echo(f"ratio:     {report.reduction_ratio:.1f}x")
    click.echo(f"interface: {report.interface_bytes_total} bytes "
               f"({report.bytes_per_tool:.1f} per tool)")
    for path in written:
        click.echo(f"wrote {path}")


# --- call ---------------------------------------------------------------------


@main.command("call")
@click.argument("tool")
@click.option("--params", "params_json", default=None,
              help="Tool parameters as a JSON object.")
@click.option("--principal", "principal_id", default="local",
              help="Principal id resolved through the policy.")
@click.option("--library-dir", type=click.Path(exists=True, file_okay=False),
              envvar="DADL_LIBRARY_DIR", default=None)
@click.option("--secrets-file", type=click.Path(dir_okay=False),
              envvar="DADL_SECRETS_FILE", default=None)
@click.option("--policy-file", type=click.Path(exists=True, dir_okay=False),
              envvar="DADL_POLICY_FILE", default=None)
@click.option("--audit-sink", envvar="DADL_AUDIT_SINK", default=None,
              help='"stderr", "memory", or a JSONL file path.')
@click.option("--jq", "jq_override", default=None,
              help="jq-style filter applied to the result.")
@click.pass_context
def cmd_call(ctx, tool, params_json, principal_id, library_dir, secrets_file,
             policy_file, audit_sink, jq_override):
    """Invoke one tool through the full pipeline and print its JSON result.

    Without a policy file every label is granted; with one, denials map to
    exit code 3."""
    library_dir = _setting(ctx, library_dir, "library_dir")
    if library_dir is None:
        raise click.UsageError("a library is required: --library-dir DIR")
    params = {}
    if params_json is not None:
        try:
            params = json.loads(params_json)
        except ValueError as err:
            raise click.UsageError(f"--params is not valid JSON: {err}")
        if not isinstance(params, dict):
            raise click.UsageError("--params must be a JSON object")

    policy_file = _setting(ctx, policy_file, "policy_file")
    policy = (load_policy(Path(policy_file).read_text())
              if policy_file else PERMISSIVE)
    sink_spec = _setting(ctx, audit_sink, "audit_sink", "stderr")
    sink = sink_from_spec("stderr" if sink_spec == "-" else sink_spec)
    resolver = CredentialResolver(
        secrets_file=_setting(ctx, secrets_file, "secrets_file"))
    try:
        documents = gw.load_library(library_dir)
        runtime = Runtime(list(documents.values()), resolver,
                          gatekeeper=Gatekeeper(policy, AuditLog(sink)))
        catalog = gw.Catalog(documents)
        entry = catalog.resolve(tool)
        principal = policy.resolve_principal(principal_id)
        result = runtime.invoke(principal, entry.backend, entry.name, params,
                                jq_override=jq_override)
    except UnknownTool as err:
        click.echo(f"toolctl: {err}", err=True)
        sys.exit(2)
    except AuthzDenied as err:
        click.echo(f"toolctl: {err}", err=True)
        sys.exit(3)
    except (UpstreamTerminal, RetriesExhausted) as err:
        click.echo(f"toolctl: {err}", err=True)
        sys.exit(4)
    except RequestError as err:
        click.echo(f"toolctl: {err}", err=True)
        sys.exit(2)
    except DadlError as err:
        click.echo(f"toolctl: {err}", err=True)
        sys.exit(1)
    click.echo(json.dumps(result.value, indent=2, sort_keys=True))
    summary = (f"{entry.qualified}: requests={result.requests} "
               f"bytes_in={result.bytes_in} bytes_out={result.bytes_out}")
    if result.truncated:
        summary += " truncated=yes"
    if result.next_cursor is not None:
        summary += f" next_cursor={result.next_cursor}"
    click.echo(summary, err=True)


# --- serve --------------------------------------------------------------------


def _parse_listen(listen):
    host, _, port = listen.rpartition(":")
    if not port.isdigit():
        raise click.UsageError(f"--listen must be HOST:PORT, got {listen!r}")
    return host or "127.0.0.1", int(port)


def _watch_library(gateway_obj, library_dir, interval=1.0):
    """Poll the library for edits and hot-reload on change.  A bad edit
    keeps the old catalog and logs the failure."""

    def snapshot():
        return {p: p.stat().st_mtime for p in sorted(Path(library_dir).glob("*.dadl"))}

    def loop():
        seen = snapshot()
        while True:
            time.sleep(interval)
            now = snapshot()
            if now != seen:
                seen = now
                _reload(gateway_obj, library_dir)

    thread = threading.Thread(target=loop, daemon=True, name="toolctl-watch")
    thread.start()
    return thread


def _reload(gateway_obj, library_dir):
    try:
        catalog = gateway_obj.hot_reload(library_dir)
    except DadlError as err:
        click.echo(f"toolctl: reload failed, keeping current catalog: {err}",
                   err=True)
    else:
        click.echo(f"toolctl: reloaded generation {catalog.generation} "
                   f"({catalog.tool_count} tools)", err=True)


@main.command("serve")
@click.option("--library-dir", type=click.Path(exists=True, file_okay=False),
              envvar="DADL_LIBRARY_DIR", default=None)
@click.option("--secrets-file", type=click.Path(dir_okay=False),
              envvar="DADL_SECRETS_FILE", default=None)
@click.option("--policy-file", type=click.Path(exists=True, dir_okay=False),
              envvar="DADL_POLICY_FILE", default=None)
@click.option("--audit-sink", envvar="DADL_AUDIT_SINK", default=None)
@click.option("--audit-strict", is_flag=True,
              help="Abort invocations when the audit sink fails.")
@click.option("--transport", type=click.Choice(["stdio", "http"]),
              envvar="DADL_TRANSPORT", default=None)
@click.option("--listen", default=None, help="HOST:PORT for http transport.")
@click.option("--principal", "principal_id", default=None,
              help="Fixed principal for stdio instead of the handshake.")
@click.option("--expose-native", is_flag=True,
              help="Also advertise every catalog tool individually.")
@click.option("--watch", is_flag=True,
              help="Poll the library and hot-reload on change.")
@click.pass_context
def cmd_serve(ctx, library_dir, secrets_file, policy_file, audit_sink,
              audit_strict, transport, listen, principal_id, expose_native,
              watch):
    """Run the gateway.  SIGHUP (or --watch) reloads the library in place."""
    library_dir = _setting(ctx, library_dir, "library_dir")
    if library_dir is None:
        raise click.UsageError("a library is required: --library-dir DIR")
    policy_file = _setting(ctx, policy_file, "policy_file")
    policy = (load_policy(Path(policy_file).read_text())
              if policy_file else PERMISSIVE)
    sink_spec = _setting(ctx, audit_sink, "audit_sink", "stderr")
    sink = sink_from_spec("stderr" if sink_spec == "-" else sink_spec)
    resolver = CredentialResolver(
        secrets_file=_setting(ctx, secrets_file, "secrets_file"))
    gateway_obj = gw.Gateway(
        gw.load_library(library_dir),
        resolver=resolver,
        gatekeeper=Gatekeeper(policy, AuditLog(sink, strict=audit_strict)),
        expose_native=expose_native,
    )
    principal = (policy.resolve_principal(principal_id)
                 if principal_id else None)

    if hasattr(signal, "SIGHUP"):  # not on Windows
        signal.signal(signal.SIGHUP,
                      lambda *_: _reload(gateway_obj, library_dir))
    if watch:
        _watch_library(gateway_obj, library_dir)

    transport = _setting(ctx, transport, "transport", "stdio")
    host, port = _parse_listen(_setting(ctx, listen, "listen", "127.0.0.1:8264"))
    click.echo(f"toolctl: serving {gateway_obj.catalog.tool_count} tools "
               f"over {transport}", err=True)
    gw.serve(gateway_obj, transport, host=host, port=port, principal=principal)


# --- schema -------------------------------------------------------------------


@main.command("schema")
@click.option("--json", "as_json", is_flag=True,
              help="Accepted for symmetry; output is always JSON.")
def cmd_schema(as_json):
    """Print the JSON Schema for the on-disk document format."""
    click.echo(json.dumps(document_json_schema(), indent=2, sort_keys=True))


if __name__ == "__main__":
    main()
