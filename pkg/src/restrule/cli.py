"""Command-line front end.

Exit status: 0 nothing at or above the fail threshold, 1 findings at or
above it, 2 usage or input errors.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
from collections.abc import Sequence
from pathlib import Path

import yaml

from restrule import __version__
from restrule.catalog import CatalogError, RuleCatalog, default_catalog, dump_overrides, load_catalog_or_overrides
from restrule.checks import diff_concepts, evaluate
from restrule.config import ENV_VAR, Config, ConfigError, default_config_text, load_config
from restrule.consensus import ConsensusError, consensus, derive_weights, read_ratings, weighted_kappa
from restrule.ingest import IngestionError, IngestionReport, dump_exchanges, ingest_exchanges, ingest_file
from restrule.linguistics import LexiconError
from restrule.model import resolve_operation
from restrule.probe import ProbeError, execute, plan
from restrule.scoring import EvaluationReport, ScoringError, exit_code, render_json, render_text, score

EXIT_OK, EXIT_FINDINGS, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    """Bad input: reported on stderr with exit status 2."""


def parse_id_list(text: str) -> set[int]:
    """``"1,3,17-20"`` -> ``{1, 3, 17, 18, 19, 20}``."""
    ids: set[int] = set()
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        try:
            if "-" in part:
                lo, hi = (int(x) for x in part.split("-", 1))
                if lo > hi:
                    raise ValueError
                ids.update(range(lo, hi + 1))
            else:
                ids.add(int(part))
        except ValueError:
            raise argparse.ArgumentTypeError(f"invalid rule list entry {part!r}") from None
    return ids


# --------------------------------------------------------------------------
# argument parsing


def _add_output(p: argparse.ArgumentParser) -> None:
    p.add_argument("--format", choices=("text", "json"), default="text", help="report format (default: text)")
    p.add_argument("--fail-on", choices=("error", "warning", "never"), default="error",
                   help="lowest finding severity that makes the exit status 1 (default: error)")


def _add_selection(p: argparse.ArgumentParser) -> None:
    p.add_argument("--catalog", metavar="PATH", help="rule catalog, or an override file applied to the built-in one")
    p.add_argument("--config", metavar="PATH", help=f"configuration file (fallback: ${ENV_VAR})")
    p.add_argument("--rules", metavar="LIST", type=parse_id_list, help="only check these rule ids, e.g. 1,3,17-20")
    p.add_argument("--disable", metavar="LIST", type=parse_id_list, help="skip these rule ids")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="restrule", description="Check REST API descriptions and recorded "
                                     "traffic against a catalog of design rules.")
    parser.add_argument("--version", action="version", version=f"restrule {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("lint", help="check an OpenAPI description")
    p.add_argument("spec", help="OpenAPI 3.0/3.1 document (YAML or JSON)")
    _add_output(p)
    _add_selection(p)

    p = sub.add_parser("replay", help="check a description together with a recorded exchange log")
    p.add_argument("spec", help="OpenAPI 3.0/3.1 document")
    p.add_argument("log", help="HAR exchange log")
    _add_output(p)
    _add_selection(p)

    p = sub.add_parser("probe", help="send safe requests to a live API and write a HAR log")
    p.add_argument("spec", help="OpenAPI 3.0/3.1 document")
    p.add_argument("output", nargs="?", help="where to write the log (default: stdout)")
    p.add_argument("--base-url", metavar="URI", help="API root (default: first declared server)")
    p.add_argument("--live", action="store_true", help="required: confirms that network requests may be sent")
    p.add_argument("--rate", metavar="N", type=float, help="maximum requests per second")
    mode = p.add_mutually_exclusive_group()
    mode.add_argument("--safe", dest="safe", action="store_true", default=None,
                      help="send only GET, HEAD and OPTIONS (default)")
    mode.add_argument("--unsafe", dest="safe", action="store_false",
                      help="also send body-less or rejected-body probes with other methods")
    p.add_argument("--config", metavar="PATH", help=f"configuration file (fallback: ${ENV_VAR})")

    p = sub.add_parser("score", help="re-score a saved JSON report, e.g. under a different catalog")
    p.add_argument("report", help="JSON report written by lint or replay")
    _add_output(p)
    p.add_argument("--catalog", metavar="PATH", help="rule catalog, or an override file applied to the built-in one")

    p = sub.add_parser("diff", help="check that incompatible changes moved to new URIs")
    p.add_argument("old", help="previous OpenAPI document")
    p.add_argument("new", help="current OpenAPI document")
    _add_output(p)
    p.add_argument("--catalog", metavar="PATH", help="rule catalog, or an override file applied to the built-in one")
    p.add_argument("--config", metavar="PATH", help=f"configuration file (fallback: ${ENV_VAR})")

    p = sub.add_parser("consensus", help="summarize a Delphi rating round")
    p.add_argument("ratings", help="ratings CSV")
    p.add_argument("next", nargs="?", help="ratings CSV of the following round, for a stability check")
    p.add_argument("--format", choices=("text", "json"), default="text", help="output format (default: text)")
    p.add_argument("--emit-overrides", metavar="PATH", help="write the consensus values as a catalog override file")

    p = sub.add_parser("config", help="show the effective configuration or the rule catalog")
    p.add_argument("what", nargs="?", choices=("settings", "rules"), default="settings")
    p.add_argument("--format", choices=("text", "json"), default="text", help="output format (default: text)")
    p.add_argument("--catalog", metavar="PATH", help="rule catalog, or an override file applied to the built-in one")
    p.add_argument("--config", metavar="PATH", help=f"configuration file (fallback: ${ENV_VAR})")
    return parser


# --------------------------------------------------------------------------
# shared steps


def _catalog(args) -> RuleCatalog:
    path = getattr(args, "catalog", None)
    return load_catalog_or_overrides(path) if path else default_catalog()


def _config(args) -> Config:
    config = load_config(getattr(args, "config", None))
    disabled = getattr(args, "disable", None)
    if disabled:
        config = dataclasses.replace(config, disabled_rules=config.disabled_rules | frozenset(disabled))
    return config


def _ingest(path: str, config: Config) -> IngestionReport:
    try:
        return ingest_file(path, external_refs=config.external_refs, link_markers=config.checks.link_markers)
    except IngestionError as exc:
        raise UsageError(f"{path}: {exc}") from None


def _warnings(report: IngestionReport) -> list[str]:
    out = []
    for loc, message in report.warnings:
        where = f"{loc.file}:{loc.line}" if loc.line else loc.file
        out.append(f"{where} {loc.pointer}: {message}")
    return out


def _emit(report: EvaluationReport, fmt: str, fail_on: str) -> int:
    sys.stdout.write(render_json(report) if fmt == "json" else render_text(report))
    return exit_code(report, fail_on)


def _evaluate(args, exchanges=None, extra_warnings=()) -> int:
    catalog = _catalog(args)
    config = _config(args)
    ingested = _ingest(args.spec, config)
    model = ingested.model
    outcomes = evaluate(model, exchanges, catalog, config, rules=args.rules)
    report = score(outcomes, catalog, model, source=args.spec,
                   warnings=_warnings(ingested) + list(extra_warnings))
    return _emit(report, args.format, args.fail_on)


# --------------------------------------------------------------------------
# commands


def cmd_lint(args) -> int:
    return _evaluate(args)


def cmd_replay(args) -> int:
    config = _config(args)
    model = _ingest(args.spec, config).model
    warnings: list[str] = []
    try:
        text = Path(args.log).read_bytes()
    except OSError as exc:
        raise UsageError(f"cannot read {args.log}: {exc.strerror}") from None
    try:
        records = ingest_exchanges(text, source=args.log, warnings=warnings,
                                   link_markers=config.checks.link_markers)
    except IngestionError as exc:
        raise UsageError(f"{args.log}: {exc}") from None
    for rec in records:
        if rec.synthetic:
            continue
        if resolve_operation(model, rec.effective_method, rec.request.uri) is None:
            warnings.append(f"{args.log} #/log/entries/{rec.index}: no declared operation matches "
                            f"{rec.effective_method} {rec.request.uri}")
    return _evaluate(args, records, warnings)


def cmd_probe(args) -> int:
    if not args.live:
        raise UsageError("probe sends network requests; pass --live to confirm")
    config = load_config(args.config)
    model = _ingest(args.spec, config).model
    try:
        p = plan(model, config, base_uri=args.base_url, safe_mode=args.safe, rate=args.rate)
        for w in p.warnings:
            print(f"warning: {w}", file=sys.stderr)
        records = execute(p)
    except ProbeError as exc:
        raise UsageError(str(exc)) from None
    text = json.dumps(dump_exchanges(records), indent=2) + "\n"
    if args.output:
        Path(args.output).write_text(text, "utf-8")
        print(f"wrote {len(records)} exchanges to {args.output}", file=sys.stderr)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_score(args) -> int:
    try:
        saved = EvaluationReport.from_json(json.loads(Path(args.report).read_text("utf-8")))
    except OSError as exc:
        raise UsageError(f"cannot read {args.report}: {exc.strerror}") from None
    except (ValueError, KeyError, TypeError) as exc:
        raise UsageError(f"{args.report}: not a restrule report ({exc})") from None
    catalog = _catalog(args)
    report = score(saved.outcomes, catalog, maturity_level=saved.maturity_level, api_title=saved.api_title,
                   source=saved.source, warnings=saved.warnings)
    return _emit(report, args.format, args.fail_on)


def cmd_diff(args) -> int:
    catalog = _catalog(args)
    config = load_config(args.config)
    old = _ingest(args.old, config)
    new = _ingest(args.new, config)
    outcome = diff_concepts(old.model, new.model, catalog, config)
    report = score([outcome], catalog, new.model, source=args.new,
                   warnings=_warnings(old) + _warnings(new))
    return _emit(report, args.format, args.fail_on)


def _consensus_text(result, stability) -> str:
    lines = [f"{result.kind} consensus at threshold {result.threshold}:"]
    for rule_id, rc in sorted(result.per_rule.items()):
        mark = "yes" if rc.consensus else "no"
        votes = ", ".join(f"{v}={n}" for v, n in rc.vote_histogram)
        lines.append(f"  rule {rule_id:>3}: {mark:<3} majority {rc.majority_value}  ({votes})")
    lines.append(f"agreement: {result.agreement_fraction:.2%} "
                 f"({sum(rc.consensus for rc in result.per_rule.values())} of {len(result.per_rule)} rules)")
    if stability is not None:
        stop = "stop recommended" if stability.stop_recommended else "continue"
        lines.append(f"weighted kappa: {stability.kappa:.4f} ({stability.band}); {stop}")
    return "\n".join(lines) + "\n"


def cmd_consensus(args) -> int:
    try:
        first = read_ratings(args.ratings, iteration=1)
        second = read_ratings(args.next, kind=first.kind, iteration=2) if args.next else None
        result = consensus(second or first)
        stability = weighted_kappa(first, second) if second is not None else None
        overrides = derive_weights(result) if args.emit_overrides else None
    except ConsensusError as exc:
        raise UsageError(str(exc)) from None
    if overrides is not None:
        Path(args.emit_overrides).write_text(dump_overrides(overrides), "utf-8")
    if args.format == "json":
        doc = {
            "kind": result.kind,
            "threshold": str(result.threshold),
            "agreement_fraction": result.agreement_fraction,
            "rules": {str(k): {"consensus": v.consensus, "majority": v.majority_value,
                               "votes": dict(v.vote_histogram)} for k, v in sorted(result.per_rule.items())},
        }
        if stability is not None:
            doc["kappa"] = stability.kappa
            doc["band"] = stability.band
            doc["stop_recommended"] = stability.stop_recommended
        sys.stdout.write(json.dumps(doc, indent=2) + "\n")
    else:
        sys.stdout.write(_consensus_text(result, stability))
    return EXIT_OK


def cmd_config(args) -> int:
    if args.what == "rules":
        catalog = _catalog(args)
        rows = [{"id": r.id, "category": r.category.value, "importance": r.importance.value,
                 "automation": r.automation.value, "enabled": r.enabled,
                 "qa_impact": sorted(q.value for q in r.qa_impact), "text": r.text} for r in catalog]
        if args.format == "json":
            sys.stdout.write(json.dumps(rows, indent=2) + "\n")
        else:
            for row in rows:
                flag = "" if row["enabled"] else " (disabled)"
                sys.stdout.write(f"{row['id']:>3} {row['importance']:<6} {row['automation']:<7} "
                                 f"{row['text']}{flag}\n")
        return EXIT_OK
    if args.config is None and not _env_config():
        text = default_config_text()
        if args.format == "json":
            text = json.dumps(yaml.safe_load(text), indent=2) + "\n"
        sys.stdout.write(text)
        return EXIT_OK
    config = load_config(args.config)
    doc = _config_doc(config)
    sys.stdout.write(json.dumps(doc, indent=2) + "\n" if args.format == "json"
                     else yaml.safe_dump(doc, sort_keys=False))
    return EXIT_OK


def _env_config() -> str | None:
    return os.environ.get(ENV_VAR) or None


def _config_doc(config: Config) -> dict:
    def plain(value):
        if isinstance(value, (tuple, list)):
            return [plain(v) for v in value]
        if isinstance(value, dict):
            return {k: plain(v) for k, v in value.items()}
        return value

    return {
        "version": 1,
        "rules": {rule_id: {"enabled": False} for rule_id in sorted(config.disabled_rules)},
        "checks": plain(dataclasses.asdict(config.checks)),
        "probe": plain(dataclasses.asdict(config.probe)),
        "ingest": {"external_refs": config.external_refs},
        "lexicon": config.lexicon,
    }


COMMANDS = {
    "lint": cmd_lint,
    "replay": cmd_replay,
    "probe": cmd_probe,
    "score": cmd_score,
    "diff": cmd_diff,
    "consensus": cmd_consensus,
    "config": cmd_config,
}


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"restrule: error: {exc}", file=sys.stderr)
    except (CatalogError, ConfigError, LexiconError, ScoringError) as exc:
        print(f"restrule: error: {exc}", file=sys.stderr)
    return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
