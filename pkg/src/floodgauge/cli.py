"""Command-line entry point: ``floodgauge <subcommand> ...``.

Exit codes: 0 success, 1 one or more photos failed, 2 configuration or I/O failure.
Tables and documents go to stdout; progress and notices go to stderr.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
import uuid
from datetime import datetime, timezone
from pathlib import Path
from typing import Sequence

import httpx

from . import __version__
from .dataset_store import PhotoRecord, PhotoResult, RunLog, RunRecord, export_geojson, load_manifest
from .errors import FloodGaugeError, MissingEstimate
from .evaluation import AnnotationSet, evaluate, format_summary, write_scatter_csv
from .lmm_client import (
    DEFAULT_ENDPOINT,
    DEFAULT_MODEL,
    LmmClient,
    LmmRequest,
    ModelConfig,
    Provider,
    ResponseCache,
    make_provider,
    utc_now,
)
from .prompt_builder import PromptTemplate, build_prompt
from .reference_model import BUILTIN_PROFILES, DEFAULT_PROFILE, get_profile, load_profile_file
from .response_parser import parse_depth

EXIT_OK = 0
EXIT_PARTIAL = 1
EXIT_CONFIG = 2

DEFAULT_CACHE_DIR = ".floodgauge/cache"
DEFAULT_RUN_LOG = ".floodgauge/runs.jsonl"

log = logging.getLogger("floodgauge")


class UsageError(Exception):
    pass


def _notice(msg: str) -> None:
    print(msg, file=sys.stderr)


def _positive_int(text: str) -> int:
    value = int(text)
    if value <= 0:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return value


def _nonneg_int(text: str) -> int:
    value = int(text)
    if value < 0:
        raise argparse.ArgumentTypeError(f"expected a nonnegative integer, got {text}")
    return value


def _nonneg_float(text: str) -> float:
    value = float(text)
    if value < 0:
        raise argparse.ArgumentTypeError(f"expected a nonnegative number, got {text}")
    return value


def _positive_float(text: str) -> float:
    value = float(text)
    if value <= 0:
        raise argparse.ArgumentTypeError(f"expected a positive number, got {text}")
    return value


def _add_profile_args(p: argparse.ArgumentParser) -> None:
    p.add_argument(
        "--profile",
        default=DEFAULT_PROFILE,
        help=f"built-in landmark profile ({', '.join(BUILTIN_PROFILES)}; default: %(default)s)",
    )
    p.add_argument("--profile-file", type=Path, help="JSON landmark profile; overrides --profile")


def _add_run_log_arg(p: argparse.ArgumentParser) -> None:
    p.add_argument("--run-log", type=Path, default=Path(DEFAULT_RUN_LOG), help="run log path (default: %(default)s)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="floodgauge", description="Estimate floodwater depth from flood photos.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log debug output to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    est = sub.add_parser("estimate", help="estimate depth for each photo and record a run")
    est.add_argument("images", nargs="*", type=Path, help="image files (photo id = file stem)")
    est.add_argument("--manifest", type=Path, help="CSV/TSV/JSON photo manifest")
    est.add_argument("--provider", choices=("http", "replay"), default="http", help="default: %(default)s")
    est.add_argument("--model-id", default=DEFAULT_MODEL, help="default: %(default)s")
    est.add_argument("--endpoint", default=DEFAULT_ENDPOINT, help="chat-completions URL (default: %(default)s)")
    est.add_argument("--temperature", type=_nonneg_float, default=0.0, help="default: %(default)s")
    est.add_argument("--max-output-tokens", type=_positive_int, default=1024, help="default: %(default)s")
    est.add_argument("--timeout", type=_positive_float, default=60.0, help="seconds per request (default: %(default)s)")
    est.add_argument("--max-retries", type=_nonneg_int, default=3, help="default: %(default)s")
    est.add_argument("--concurrency", type=_positive_int, default=4, help="requests in flight (default: %(default)s)")
    est.add_argument("--fixtures-dir", type=Path, help="replay fixture directory (required for --provider replay)")
    est.add_argument("--cache-dir", type=Path, default=Path(DEFAULT_CACHE_DIR), help="default: %(default)s")
    est.add_argument("--no-cache", action="store_true", help="neither read nor write the response cache")
    est.add_argument("--run-id", help="id for the new run (default: generated)")
    _add_run_log_arg(est)
    _add_profile_args(est)

    ev = sub.add_parser("evaluate", help="compare a run against manifest annotations")
    ev.add_argument("--run-id", required=True)
    ev.add_argument("--manifest", type=Path, required=True)
    _add_run_log_arg(ev)
    ev.add_argument("--report", type=Path, help="report JSON path (default: <run-id>.report.json)")
    ev.add_argument("--scatter", type=Path, help="scatter CSV path (default: <run-id>.scatter.csv)")
    ev.add_argument("--outlier-factor", type=_nonneg_float, default=2.0, help="default: %(default)s")

    pr = sub.add_parser("prompt", help="print the estimation prompt")
    _add_profile_args(pr)
    pr.add_argument("--checksum", action="store_true", help="print only the prompt checksum")

    geo = sub.add_parser("export-geojson", help="write a run's depths as GeoJSON points")
    geo.add_argument("--run-id", required=True)
    geo.add_argument("--manifest", type=Path, required=True)
    _add_run_log_arg(geo)
    geo.add_argument("--output", type=Path, help="output path (default: stdout)")

    cache = sub.add_parser("cache", help="list or clear cached model responses")
    cache.add_argument("action", choices=("list", "clear"))
    cache.add_argument("--cache-dir", type=Path, default=Path(DEFAULT_CACHE_DIR), help="default: %(default)s")
    return parser


def _resolve_profile(args):
    if args.profile_file is not None:
        return load_profile_file(args.profile_file)
    return get_profile(args.profile)


def _new_run_id() -> str:
    return datetime.now(timezone.utc).strftime("run-%Y%m%dT%H%M%SZ-") + uuid.uuid4().hex[:6]


def read_image(locator: str, base_dir: Path | None = None) -> bytes:
    if locator.startswith(("http://", "https://")):
        response = httpx.get(locator, timeout=60.0, follow_redirects=True)
        response.raise_for_status()
        return response.content
    path = Path(locator)
    if not path.is_absolute() and base_dir is not None:
        path = base_dir / path
    return path.read_bytes()


def run_estimate(
    photos: Sequence[tuple[str, str]],
    base_dir: Path | None,
    prompt: PromptTemplate,
    client: LmmClient,
    run_id: str,
    profile_id: str | None = None,
) -> RunRecord:
    """Estimate every (photo_id, locator) pair; failures become error entries."""
    started = utc_now()
    results: dict[str, PhotoResult] = {}
    pending: list[tuple[str, LmmRequest]] = []
    for photo_id, locator in photos:
        try:
            request = client.request_for(read_image(locator, base_dir), prompt)
        except (OSError, httpx.HTTPError, FloodGaugeError) as exc:
            results[photo_id] = PhotoResult(photo_id, error=f"{type(exc).__name__}: {exc}")
            continue
        pending.append((photo_id, request))

    exchanges = client.submit_many(req for _, req in pending)
    for (photo_id, request), outcome in zip(pending, exchanges):
        image_hash = request.image.image_hash
        if isinstance(outcome, Exception):
            results[photo_id] = PhotoResult(photo_id, image_hash, error=f"{type(outcome).__name__}: {outcome}")
            continue
        try:
            estimate = parse_depth(outcome.response_text, source=client.cfg.model_id)
        except FloodGaugeError as exc:
            results[photo_id] = PhotoResult(photo_id, image_hash, error=f"{type(exc).__name__}: {exc}")
            continue
        results[photo_id] = PhotoResult(photo_id, image_hash, estimate=estimate, from_cache=outcome.from_cache)

    return RunRecord(
        run_id=run_id,
        model_id=client.cfg.model_id,
        prompt_checksum=prompt.checksum,
        results=tuple(results[pid] for pid, _ in photos),
        started_at=started,
        finished_at=utc_now(),
        profile_id=profile_id,
        provider=client.cfg.provider,
    )


def format_run_table(run: RunRecord) -> str:
    lines = ["photo_id\tdepth_m\tflags"]
    for r in run.results:
        if r.estimate is not None:
            flags = ",".join(sorted(f.value for f in r.estimate.flags)) or "-"
            lines.append(f"{r.photo_id}\t{r.estimate.value_m:.2f}\t{flags}")
        else:
            lines.append(f"{r.photo_id}\tERROR\t{r.error}")
    return "\n".join(lines)


def cmd_estimate(args, provider: Provider | None = None) -> int:
    if bool(args.images) == bool(args.manifest):
        raise UsageError("give either image paths or --manifest, not both and not neither")
    if args.provider == "replay" and args.fixtures_dir is None and provider is None:
        raise UsageError("--provider replay needs --fixtures-dir")
    cfg = ModelConfig(
        provider=args.provider,
        model_id=args.model_id,
        endpoint_url=args.endpoint,
        temperature=args.temperature,
        max_output_tokens=args.max_output_tokens,
        timeout_s=args.timeout,
        max_retries=args.max_retries,
        concurrency_limit=args.concurrency,
    )
    profile = _resolve_profile(args)
    prompt = build_prompt(profile)

    if args.manifest:
        records = load_manifest(args.manifest)
        photos = [(r.photo_id, r.path) for r in records]
        base_dir = args.manifest.parent
    else:
        photos = [(p.stem, str(p)) for p in args.images]
        ids = [pid for pid, _ in photos]
        if len(set(ids)) != len(ids):
            raise UsageError("image file stems must be unique (they become photo ids)")
        base_dir = None
    if not photos:
        _notice("0 photos to estimate; nothing recorded")
        return EXIT_OK

    run_log = RunLog(args.run_log)
    run_id = args.run_id or _new_run_id()
    if run_id in run_log.run_ids():
        raise UsageError(f"run id {run_id!r} already exists in {args.run_log}")

    if provider is None:
        provider = make_provider(cfg, args.fixtures_dir)
    cache = None if args.no_cache else ResponseCache(args.cache_dir)
    client = LmmClient(cfg, provider, cache)
    _notice(f"estimating {len(photos)} photos with {cfg.model_id} via {cfg.provider} (prompt {prompt.checksum[:12]})")
    run = run_estimate(photos, base_dir, prompt, client, run_id, profile.profile_id)
    run_log.append(run)

    print(format_run_table(run))
    failed = sum(1 for r in run.results if not r.ok)
    cached = sum(1 for r in run.results if r.from_cache)
    _notice(f"run {run.run_id}: {len(run.results)} photos, {failed} failed, {cached} from cache; logged to {args.run_log}")
    return EXIT_PARTIAL if failed else EXIT_OK


def _annotated(records: Sequence[PhotoRecord]) -> list[AnnotationSet]:
    return [r.annotations for r in records if r.annotations.annotator_depths]


def cmd_evaluate(args) -> int:
    records = load_manifest(args.manifest)
    run = RunLog(args.run_log).get(args.run_id)
    annotations = _annotated(records)
    skipped = len(records) - len(annotations)
    if skipped:
        _notice(f"{skipped} manifest photos have no annotations and are not evaluated")
    try:
        report = evaluate(run.estimates(), annotations, args.outlier_factor, run_id=run.run_id, model_id=run.model_id)
    except MissingEstimate as exc:
        _notice(f"error: {exc}")
        return EXIT_PARTIAL
    report_path = args.report or Path(f"{run.run_id}.report.json")
    scatter_path = args.scatter or Path(f"{run.run_id}.scatter.csv")
    report_path.write_text(report.to_json(), encoding="utf-8")
    write_scatter_csv(report, scatter_path)
    print(format_summary(report))
    _notice(f"wrote {report_path} and {scatter_path}")
    return EXIT_OK


def cmd_prompt(args) -> int:
    prompt = build_prompt(_resolve_profile(args))
    if args.checksum:
        print(prompt.checksum)
    else:
        sys.stdout.write(prompt.text)
    return EXIT_OK


def cmd_export_geojson(args) -> int:
    records = load_manifest(args.manifest)
    run = RunLog(args.run_log).get(args.run_id)
    doc, skipped = export_geojson(run, records)
    text = json.dumps(doc, indent=2) + "\n"
    if args.output:
        args.output.write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    _notice(f"{len(doc['features'])} features written, {skipped} photos skipped")
    return EXIT_OK


def cmd_cache(args) -> int:
    cache = ResponseCache(args.cache_dir)
    if args.action == "list":
        keys = cache.keys()
        for key in keys:
            print(key)
        _notice(f"{len(keys)} cache entries in {args.cache_dir}")
    else:
        removed = cache.clear()
        _notice(f"cleared {removed} cache entries from {args.cache_dir}")
    return EXIT_OK


def main(argv: Sequence[str] | None = None, *, provider: Provider | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "estimate":
            return cmd_estimate(args, provider)
        if args.command == "evaluate":
            return cmd_evaluate(args)
        if args.command == "prompt":
            return cmd_prompt(args)
        if args.command == "export-geojson":
            return cmd_export_geojson(args)
        return cmd_cache(args)
    except UsageError as exc:
        parser.error(str(exc))  # exits with status 2
    except (FloodGaugeError, OSError, ValueError) as exc:
        _notice(f"error: {exc}")
        return EXIT_CONFIG
    return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
