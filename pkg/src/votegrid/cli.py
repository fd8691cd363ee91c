"""Operator command line: election administration and audit verification.

Mutating commands (approve, open, close) go through a running server so they
stay on the audited path; read-only reporting and chain verification also
work directly against the datastore and log files.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from pathlib import Path

import httpx

from . import audit as audit_mod
from .election import tally_store
from .store import Datastore

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_BROKEN_CHAIN = 2


class CliError(Exception):
    def __init__(self, message: str, exit_code: int = EXIT_ERROR):
        super().__init__(message)
        self.exit_code = exit_code


class ServerClient:
    def __init__(self, base_url: str, token: str | None):
        self.base_url = base_url.rstrip("/")
        self.token = token

    def _headers(self) -> dict:
        return {"Authorization": f"Bearer {self.token}"} if self.token else {}

    def request(self, method: str, path: str, body: dict | None = None) -> dict:
        try:
            response = httpx.request(method, self.base_url + path,
                                     json=body, headers=self._headers(),
                                     timeout=30.0)
        except httpx.HTTPError as exc:
            raise CliError(f"server unreachable: {exc}")
        try:
            payload = response.json()
        except ValueError:
            payload = {}
        if response.status_code >= 400:
            error = payload.get("error", {})
            raise CliError(f"server error {response.status_code}: "
                           f"{error.get('code', 'unknown')} "
                           f"{error.get('message', '')}".rstrip())
        return payload


def _fetch_results(args) -> tuple[dict, dict[str, str]]:
    """Tally payload plus candidate_id -> display name."""
    if args.server:
        payload = ServerClient(args.server, args.token).request("GET", "/api/results")
        names = {c["candidate_id"]: c["name"] for c in payload.get("candidates", [])}
        return payload, names
    datastore = Datastore(args.db)
    try:
        summary = tally_store(datastore)
        names = {c.candidate_id: c.name for c in datastore.list_candidates()}
        return summary.as_dict(), names
    finally:
        datastore.close()


def _tally_rows(payload: dict) -> list[tuple[str, str, int]]:
    rows = []
    for office, counts in payload["offices"].items():
        for candidate_id, votes in sorted(counts.items()):
            rows.append((office, candidate_id, votes))
    return rows


def _render_results(payload: dict, names: dict[str, str], fmt: str) -> str:
    if fmt == "json":
        return json.dumps(payload, indent=2, sort_keys=True)
    if fmt == "csv":
        return _render_csv(payload)
    lines = ["Election results", "================"]
    for office, counts in payload["offices"].items():
        lines.append(f"{office}:")
        ordered = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
        for candidate_id, votes in ordered:
            label = names.get(candidate_id, candidate_id)
            lines.append(f"  {votes:>6}  {label} ({candidate_id})")
    lines.append("")
    lines.append(f"Ballots cast: {payload['total_ballots']}")
    lines.append(f"Turnout: {payload['voted_count']}/{payload['approved_voters']}"
                 f" ({payload['turnout'] * 100:.1f}%)")
    return "\n".join(lines)


def _render_csv(payload: dict) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer)
    writer.writerow(["office", "candidate", "votes"])
    for office, candidate_id, votes in _tally_rows(payload):
        writer.writerow([office, candidate_id, votes])
    return buffer.getvalue()


def cmd_results(args) -> int:
    payload, names = _fetch_results(args)
    print(_render_results(payload, names, args.format))
    return EXIT_OK


def cmd_export(args) -> int:
    payload, _ = _fetch_results(args)
    text = _render_csv(payload)
    if args.output:
        Path(args.output).write_text(text, encoding="utf-8")
        print(f"wrote {args.output}")
    else:
        print(text, end="")
    return EXIT_OK


def cmd_audit_verify(args) -> int:
    if args.server:
        payload = ServerClient(args.server, args.token).request(
            "GET", "/api/admin/audit")
        if payload["chain_valid"]:
            print(f"audit chain OK ({len(payload['events'])} events)")
            return EXIT_OK
        print(f"audit chain BROKEN at seq {payload['chain_broken_seq']}")
        return EXIT_BROKEN_CHAIN
    path = args.audit_log or (Path(args.db).parent / "audit.log")
    outcome = audit_mod.verify_file(path)
    if outcome.valid:
        events = sum(1 for _ in Path(path).read_text(encoding="utf-8").splitlines()) - 1
        print(f"audit chain OK ({events} events)")
        return EXIT_OK
    print(f"audit chain BROKEN at seq {outcome.broken_seq}")
    return EXIT_BROKEN_CHAIN


def cmd_approve(args) -> int:
    payload = ServerClient(args.server, args.token).request(
        "POST", "/api/admin/approve",
        {"employee_id": args.employee_id, "decision": args.decision})
    print(f"{payload['employee_id']}: {payload['status']}")
    return EXIT_OK


def cmd_open(args) -> int:
    payload = ServerClient(args.server, args.token).request(
        "POST", "/api/admin/election/open")
    print(f"election: {payload['status']}")
    return EXIT_OK


def cmd_close(args) -> int:
    payload = ServerClient(args.server, args.token).request(
        "POST", "/api/admin/election/close")
    print(f"election: {payload['status']}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="votegrid-admin",
        description="Administer a votegrid election and verify its audit trail.")
    target = argparse.ArgumentParser(add_help=False)
    target.add_argument("--server", help="base URL of a running server")
    target.add_argument("--token", help="admin bearer token (server mode)")
    target.add_argument("--db", help="path to the datastore file (read-only mode)")
    target.add_argument("--format", choices=("text", "csv", "json"),
                        default="text")

    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("approve", parents=[target],
                       help="approve or reject a pending voter")
    p.add_argument("--employee-id", required=True)
    p.add_argument("--decision", choices=("approve", "reject"), default="approve")
    p.set_defaults(handler=cmd_approve, needs_server=True)

    p = sub.add_parser("open", parents=[target], help="open the election")
    p.set_defaults(handler=cmd_open, needs_server=True)

    p = sub.add_parser("close", parents=[target], help="close the election")
    p.set_defaults(handler=cmd_close, needs_server=True)

    p = sub.add_parser("results", parents=[target],
                       help="per-office counts and turnout")
    p.set_defaults(handler=cmd_results, needs_server=False)

    p = sub.add_parser("export", parents=[target], help="export the tally as CSV")
    p.add_argument("--output", help="write CSV here instead of stdout")
    p.set_defaults(handler=cmd_export, needs_server=False)

    p = sub.add_parser("audit-verify", parents=[target],
                       help="recompute the audit hash chain")
    p.add_argument("--audit-log", help="path to the audit log file")
    p.set_defaults(handler=cmd_audit_verify, needs_server=False)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.needs_server and not args.server:
        parser.error(f"{args.command} changes state and requires --server "
                     "(direct datastore writes would bypass the audit trail)")
    if not args.server and not args.db and not getattr(args, "audit_log", None):
        parser.error("either --server or --db is required")
    try:
        return args.handler(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
