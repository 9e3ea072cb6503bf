"""Operator command line.

Every command maps onto one platform operation and works against the local
stores named in the config file; open-sitting and issue-cards can also be
pointed at a running service with --service, since unsealed exam content
lives in the service process, not on disk.

Exit codes: 0 success, 1 domain error (envelope printed), 2 usage error.
"""

from __future__ import annotations

import base64
import functools
import json
import sys
from datetime import datetime, timedelta, timezone
from pathlib import Path

import click
import httpx

from . import exam_model, scheduling, sealing
from .center import ExamCenter
from .config import ServiceConfig
from .errors import SecurexamError
from .stores import StoreLayout


def _envelope(exc: SecurexamError) -> dict:
    return {"code": exc.public_code, "message": str(exc),
            "retriable": exc.retriable}


def domain_errors(fn):
    """Print the uniform error envelope and exit 1 on any domain error."""
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except SecurexamError as exc:
            click.echo(json.dumps(_envelope(exc)), err=True)
            sys.exit(1)
    return wrapper


def _load_config(path: str | None) -> ServiceConfig:
    cfg = ServiceConfig.load(path)
    cfg.validate()
    return cfg


def _center(cfg: ServiceConfig) -> ExamCenter:
    keys = None
    if cfg.center_key_path and Path(cfg.center_key_path).exists():
        keys = sealing.load_key_file(cfg.center_key_path)
    stores = StoreLayout.at(Path(cfg.question_store_path),
                            Path(cfg.candidate_store_path))
    return ExamCenter(stores, keys,
                      pre_exam_window_minutes=cfg.pre_exam_window_minutes,
                      embargo_hours=cfg.embargo_hours)


def _emit(payload, as_json: bool, human: str) -> None:
    click.echo(json.dumps(payload, indent=2) if as_json else human)


@click.group()
@click.option("--config", "config_path", type=click.Path(), default=None,
              help="Config file (JSON); environment variables override it.")
@click.pass_context
def main(ctx, config_path):
    """Administer exam packaging, scheduling, sittings, and results."""
    ctx.obj = {"config_path": config_path}


# -- key and package handling -------------------------------------------------

@main.command()
@click.option("--role", type=click.Choice(["lecturer", "center"]),
              required=True)
@click.option("--out", "out_path", type=click.Path(), required=True,
              help="Private key file (keep confidential).")
@click.option("--public-out", "public_path", type=click.Path(), default=None,
              help="Public-only key file for distribution.")
@click.option("--json", "as_json", is_flag=True)
@domain_errors
def keygen(role, out_path, public_path, as_json):
    """Generate a signing + sealing keypair."""
    pair = sealing.generate_keypair(role)
    sealing.save_key_file(pair, out_path, include_private=True)
    if public_path:
        sealing.save_key_file(pair, public_path, include_private=False)
    _emit({"role": role, "key_id": pair.key_id_hex, "private": out_path,
           "public": public_path}, as_json,
          f"{role} key {pair.key_id_hex} written to {out_path}")


@main.command()
@click.argument("exam_file", type=click.Path(exists=True))
@click.option("--json", "as_json", is_flag=True)
@domain_errors
def validate(exam_file, as_json):
    """Check an exam file against every authoring rule."""
    draft = exam_model.load_exam_file(exam_file)
    exam = exam_model.validate_exam(draft)
    payload = {
        "exam_id": exam.exam_id,
        "course_code": exam.course_code,
        "duration_minutes": exam.duration_minutes,
        "design": exam.design,
        "questions": len(exam.questions),
        "objective": len(exam.objective_questions),
        "essay": len(exam.essay_questions),
        "max_total": exam.max_total,
    }
    _emit(payload, as_json,
          f"{exam.exam_id}: {len(exam.questions)} questions, "
          f"max total {exam.max_total}, valid")


@main.command()
@click.option("--exam", "exam_file", type=click.Path(exists=True),
              required=True)
@click.option("--author", "author_file", type=click.Path(exists=True),
              required=True, help="Author private key file.")
@click.option("--recipient", "recipient_files", type=click.Path(exists=True),
              multiple=True, required=True,
              help="Recipient public key file; repeatable.")
@click.option("--out", "out_path", type=click.Path(), required=True)
@click.option("--json", "as_json", is_flag=True)
@domain_errors
def seal(exam_file, author_file, recipient_files, out_path, as_json):
    """Validate, sign, and encrypt an exam into a package file."""
    exam = exam_model.validate_exam(exam_model.load_exam_file(exam_file))
    author = sealing.load_key_file(author_file)
    recipients = [sealing.load_key_file(p) for p in recipient_files]
    pkg = sealing.seal_exam(exam, author, recipients)
    blob = pkg.to_bytes()
    Path(out_path).write_bytes(blob)
    fp = sealing.package_fingerprint_hex(blob)
    _emit({"exam_id": exam.exam_id, "out": out_path, "bytes": len(blob),
           "fingerprint": fp}, as_json,
          f"sealed {exam.exam_id} -> {out_path} ({len(blob)} bytes), "
          f"fingerprint {fp}")


@main.command()
@click.argument("package_file", type=click.Path(exists=True))
@click.option("--json", "as_json", is_flag=True)
@domain_errors
def fingerprint(package_file, as_json):
    """Print the package fingerprint (stable across re-reads)."""
    fp = sealing.package_fingerprint_hex(Path(package_file).read_bytes())
    _emit({"fingerprint": fp}, as_json, fp)


@main.command("register-key")
@click.option("--key", "key_file", type=click.Path(exists=True),
              required=True, help="Public key file to trust for uploads.")
@click.option("--name", required=True)
@click.option("--json", "as_json", is_flag=True)
@click.pass_context
@domain_errors
def register_key(ctx, key_file, name, as_json):
    """Trust an author public key for package uploads."""
    center = _center(_load_config(ctx.obj["config_path"]))
    pair = sealing.load_key_file(key_file)
    key_id = center.register_author_key(name, pair)
    _emit({"name": name, "key_id": key_id}, as_json,
          f"registered {name} as {key_id}")


# -- roster and schedule ------------------------------------------------------

@main.command("ingest-roster")
@click.option("--roster", "roster_file", type=click.Path(exists=True),
              required=True)
@click.option("--json", "as_json", is_flag=True)
@click.pass_context
@domain_errors
def ingest_roster(ctx, roster_file, as_json):
    """Load the candidate roster into the candidate store."""
    center = _center(_load_config(ctx.obj["config_path"]))
    count = center.ingest_roster(Path(roster_file).read_text("utf-8"))
    _emit({"candidates": count}, as_json, f"{count} candidates ingested")


@main.command()
@click.option("--roster", "roster_file", type=click.Path(exists=True),
              required=True)
@click.option("--exam-id", default="exam", show_default=True)
@click.option("--capacity", type=int, default=None,
              help="Seats per sitting; defaults from config.")
@click.option("--cutoff", type=int, default=0, show_default=True,
              help="Minimum eligibility score.")
@click.option("--days", type=int, default=None,
              help="Days available; defaults to the minimum that fits.")
@click.option("--per-day", "per_day", type=int, default=None,
              help="Sittings per day; defaults from config.")
@click.option("--first-start", "first_start", default=None,
              help="ISO timestamp of the first sitting; "
                   "defaults to tomorrow 09:00 UTC.")
@click.option("--save", is_flag=True,
              help="Persist the schedule to the question store.")
@click.option("--json", "as_json", is_flag=True)
@click.pass_context
@domain_errors
def plan(ctx, roster_file, exam_id, capacity, cutoff, days, per_day,
         first_start, save, as_json):
    """Filter eligible candidates and pack them into sittings."""
    cfg = _load_config(ctx.obj["config_path"])
    capacity = capacity or cfg.default_capacity
    per_day = per_day or cfg.sittings_per_day
    roster = scheduling.load_roster(Path(roster_file).read_text("utf-8"))
    eligible = scheduling.filter_eligible(roster, cutoff)
    if days is None:
        import math
        total = max(1, len({c.course_code for c in eligible}))
        # worst case one sitting per course plus capacity splits
        need = sum(math.ceil(len([c for c in eligible
                                  if c.course_code == cc]) / capacity)
                   for cc in {c.course_code for c in eligible}) or 1
        days = max(1, math.ceil(need / per_day))
    start = (datetime.fromisoformat(first_start) if first_start
             else datetime.now(timezone.utc).replace(
                 hour=9, minute=0, second=0, microsecond=0)
             + timedelta(days=1))
    schedule = scheduling.plan_sittings(
        eligible, exam_id, capacity, days, per_day, first_start=start)
    if save:
        _center(cfg).set_schedule(schedule)
    payload = {
        "eligible": len(eligible),
        "sittings": len(schedule.sittings),
        "schedule": schedule.to_json(),
        "saved": bool(save),
    }
    sizes = ", ".join(str(len(s.assigned)) for s in schedule.sittings)
    _emit(payload, as_json,
          f"{len(eligible)} eligible candidates -> "
          f"{len(schedule.sittings)} sittings ({sizes})")


# -- sitting control ----------------------------------------------------------

@main.command("open-sitting")
@click.option("--sitting", "sitting_id", required=True)
@click.option("--service", "service_url", default=None,
              help="Base URL of a running service; otherwise local stores.")
@click.option("--json", "as_json", is_flag=True)
@click.pass_context
@domain_errors
def open_sitting(ctx, sitting_id, service_url, as_json):
    """Unseal a sitting's package and publish its security image."""
    cfg = _load_config(ctx.obj["config_path"])
    if service_url:
        ready = _post(cfg, service_url, f"/v1/sittings/{sitting_id}/open", {})
    else:
        ready = _center(cfg).open_sitting(sitting_id)
    image = ready["security_image"]
    _emit(ready, as_json,
          f"sitting {sitting_id} ready: exam {ready['exam_id']}, "
          f"image #{image['image_index']} ({image['glyph_name']}), "
          f"code {image['confirm_code']}")


@main.command("issue-cards")
@click.option("--sitting", "sitting_id", required=True)
@click.option("--reg-no", "reg_no", default=None,
              help="One candidate; omit to issue for the whole sitting.")
@click.option("--service", "service_url", default=None)
@click.option("--json", "as_json", is_flag=True)
@click.pass_context
@domain_errors
def issue_cards(ctx, sitting_id, reg_no, service_url, as_json):
    """Issue result scratch cards; PINs print once, here only."""
    cfg = _load_config(ctx.obj["config_path"])
    center = _center(cfg)  # schedule lookup; also issuer in local mode

    def issue_one(rn: str) -> dict:
        if service_url:
            return _post(cfg, service_url, "/v1/cards",
                         {"reg_no": rn, "sitting_id": sitting_id})
        return center.issue_card(rn, sitting_id)

    if reg_no is not None:
        card = issue_one(reg_no)
        _emit(card, as_json,
              f"{reg_no}: PIN {card['pin']} "
              f"(releases {card['release_time']})")
        return

    sitting = center.sitting(sitting_id)
    outcomes, issued = [], 0
    for rn in sitting.assigned:
        try:
            card = issue_one(rn)
            outcomes.append(card)
            issued += 1
        except SecurexamError as exc:
            outcomes.append({"reg_no": rn, **_envelope(exc)})
    if as_json:
        click.echo(json.dumps(outcomes, indent=2))
    else:
        for o in outcomes:
            if "pin" in o:
                click.echo(f"{o['reg_no']}: PIN {o['pin']}")
            else:
                click.echo(f"{o['reg_no']}: {o['code']}: {o['message']}")
    if issued == 0 and outcomes:
        sys.exit(1)


# -- results and audit ----------------------------------------------------------

@main.command("export-results")
@click.option("--exam-id", required=True)
@click.option("--out", "out_path", type=click.Path(), default=None,
              help="Destination CSV; stdout when omitted.")
@click.pass_context
@domain_errors
def export_results(ctx, exam_id, out_path):
    """Write the registry-upload CSV for one exam."""
    center = _center(_load_config(ctx.obj["config_path"]))
    csv_text = center.export_results_csv(exam_id)
    if out_path:
        Path(out_path).write_text(csv_text, "utf-8")
        click.echo(f"results written to {out_path}")
    else:
        click.echo(csv_text, nl=False)


@main.command("audit-dump")
@click.option("--json", "as_json", is_flag=True)
@click.pass_context
@domain_errors
def audit_dump(ctx, as_json):
    """Print the audit log in order; verifies digests first."""
    cfg = _load_config(ctx.obj["config_path"])
    stores = StoreLayout.at(Path(cfg.question_store_path),
                            Path(cfg.candidate_store_path))
    log = stores.candidate_store.audit
    if not log.verify():
        click.echo(json.dumps({"code": "CorruptStore",
                               "message": "audit log fails verification",
                               "retriable": False}), err=True)
        sys.exit(1)
    for event in log.events():
        if as_json:
            click.echo(json.dumps(event.to_json()))
        else:
            click.echo(f"{event.seq:6d}  {event.at}  {event.actor:28s} "
                       f"{event.action:20s} {event.outcome}")


@main.command()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.pass_context
@domain_errors
def serve(ctx, host):
    """Run the HTTP service."""
    import uvicorn

    from .service import create_app
    cfg = _load_config(ctx.obj["config_path"])
    app = create_app(_center(cfg), cfg)
    uvicorn.run(app, host=host, port=cfg.port, log_level="info")


class RemoteError(SecurexamError):
    """Carries a service error envelope through to the CLI envelope printer."""

    def __init__(self, envelope: dict):
        super().__init__(envelope.get("message", "service error"))
        self.code = envelope.get("code", "RemoteError")
        self.retriable = bool(envelope.get("retriable", False))


def _post(cfg: ServiceConfig, base_url: str, path: str, body: dict) -> dict:
    headers = {}
    if cfg.admin_token:
        headers["authorization"] = f"Bearer {cfg.admin_token}"
    resp = httpx.post(base_url.rstrip("/") + path, json=body,
                      headers=headers, timeout=30.0)
    data = resp.json()
    if resp.status_code >= 400:
        raise RemoteError(data if isinstance(data, dict) else {})
    return data


if __name__ == "__main__":
    main()
