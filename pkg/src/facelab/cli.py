"""Command-line entry point: one subcommand per pipeline stage.

Exit codes: 0 success, 1 validation failure, 2 infeasibility.  Failures
emit a single JSON object on stderr so wrappers can parse them.
"""

from __future__ import annotations

import dataclasses
import json
import sys
from pathlib import Path

import click
import numpy as np

from . import cleaning, composite, features, records, service, subsets, synthgen


class ConfigError(ValueError):
    pass


def _load_config(path):
    try:
        cfg = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"unreadable config {path}: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a JSON object of subcommand defaults")
    return cfg


@click.group()
@click.option("--config", "config_path", type=click.Path(), default=None,
              help="JSON file with per-subcommand flag defaults.")
@click.option("--data-dir", envvar="FACELAB_DATA_DIR", default=".",
              type=click.Path(), help="Base directory for artifacts.")
@click.pass_context
def cli(ctx, config_path, data_dir):
    """Audit, clean, split, featurize, and evaluate longitudinal face data."""
    ctx.obj = {"data_dir": Path(data_dir)}
    if config_path:
        ctx.default_map = _load_config(config_path)


@cli.command()
@click.option("--subjects", default=100, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--rates", default="0,0,0,0", show_default=True,
              help="gender,race,dob-small,dob-large injection rates.")
@click.option("--paper-shape", is_flag=True,
              help="Use the reference-database cell shape and conflict rates.")
@click.option("--images", "with_images", is_flag=True)
@click.option("--out", required=True, type=click.Path())
def synth(subjects, seed, rates, paper_shape, with_images, out):
    """Generate a seeded synthetic corpus."""
    if paper_shape:
        spec = dataclasses.replace(synthgen.mirror_paper_shape(),
                                   master_seed=seed)
    else:
        try:
            rg, rr, rs, rl = (float(v) for v in rates.split(","))
        except ValueError as exc:
            raise ConfigError(f"bad --rates {rates!r}") from exc
        spec = synthgen.GenSpec(subject_count=subjects, rate_gender_flip=rg,
                                rate_race_flip=rr, rate_dob_small=rs,
                                rate_dob_large=rl, master_seed=seed)
    recs, images, truth = synthgen.generate(spec, with_images=with_images)
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    records.save_records(recs, out / "records.csv")
    (out / "truth.json").write_text(json.dumps({
        "realized_counts": truth.realized_counts,
        "required_decisions": truth.required_decisions(),
    }, sort_keys=True, indent=2) + "\n")
    if with_images:
        img_dir = out / "images"
        for r in recs:
            dest = img_dir / r.image_path
            dest.parent.mkdir(parents=True, exist_ok=True)
            features.write_pgm(images[r.image_id], dest)
    click.echo(f"wrote {len(recs)} records for {subjects} subjects to {out}")


@cli.command()
@click.option("--records", "records_path", required=True, type=click.Path())
@click.option("--out", default=None, type=click.Path())
def audit(records_path, out):
    """Report per-subject conflicts and the pending adjudication queue."""
    recs = records.load_records(records_path)
    ledgers = records.group_by_subject(recs)
    report = cleaning.audit(ledgers)
    queue = cleaning.adjudication_queue(ledgers)
    payload = {
        "subjects": len(ledgers),
        "gender_conflicts": len(report.gender_conflicts),
        "race_conflicts": len(report.race_conflicts),
        "dob_conflicts": len(report.dob_conflicts),
        "dob_gap_histogram": report.dob_gap_histogram(),
        "pending_items": [i.item_id for i in queue],
    }
    text = json.dumps(payload, sort_keys=True, indent=2) + "\n"
    if out:
        Path(out).write_text(text)
    click.echo(text, nl=False)


@cli.command("clean")
@click.option("--records", "records_path", required=True, type=click.Path())
@click.option("--decisions", "log_path", default=None, type=click.Path())
@click.option("--strict", is_flag=True,
              help="Fail if any subject still needs human adjudication.")
@click.option("--name", default="dataset", show_default=True)
@click.option("--out", required=True, type=click.Path())
def clean_cmd(records_path, log_path, strict, name, out):
    """Resolve conflicts and emit the three dataset versions."""
    recs = records.load_records(records_path)
    log_hash = ""
    decisions = {}
    if log_path:
        log = service.DecisionLog(log_path)
        if service.Lockfile(log_path).held():
            raise service.LogLocked(f"{log_path} has an active write session")
        decisions = log.decisions()
        log_hash = log.content_hash()
    result = cleaning.clean(recs, decisions=decisions)
    versions = cleaning.emit_versions(result, name, strict=strict)
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    manifest_all = {"decision_log_hash": log_hash, "versions": {}}
    for version, (vrecs, manifest) in versions.items():
        records.save_records(vrecs, out / f"{version}.csv")
        manifest_all["versions"][version] = dataclasses.asdict(manifest)
    (out / "manifest.json").write_text(
        json.dumps(manifest_all, sort_keys=True, indent=2, default=str) + "\n")
    click.echo(f"cleaned {len(recs)} records "
               f"({len(result.pending)} subjects pending) into {out}")


@cli.command()
@click.option("--records", "records_path", required=True, type=click.Path())
@click.option("--seeds", default="0:10", show_default=True,
              help="Seed range lo:hi (half-open).")
@click.option("--slack", default=0, show_default=True)
@click.option("--mf-ratio", default=3, show_default=True)
@click.option("--wb-ratio", default=1, show_default=True)
@click.option("--permutations", default=10_000, show_default=True)
@click.option("--out", required=True, type=click.Path())
def subset(records_path, seeds, slack, mf_ratio, wb_ratio, permutations, out):
    """Search split seeds and keep the best-scoring assignment."""
    recs = [r.with_age() for r in records.load_records(records_path)]
    try:
        lo, hi = (int(v) for v in seeds.split(":"))
    except ValueError as exc:
        raise ConfigError(f"bad --seeds {seeds!r}") from exc
    spec = subsets.SubsetSpec(male_female_ratio=mf_ratio,
                              white_black_ratio=wb_ratio, slack=slack,
                              permutations=permutations)
    best, scores = subsets.search_seeds(recs, spec, range(lo, hi))
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    subsets.save_assignment(best, recs, out / "assignment.csv")
    (out / "scores.json").write_text(json.dumps(
        [dataclasses.asdict(s) for s in scores], indent=2) + "\n")
    (out / "summaries.json").write_text(json.dumps(
        subsets.emit_summaries(best, recs), sort_keys=True, indent=2) + "\n")
    click.echo(f"best seed {best.seed} "
               f"(combined p {scores[0].combined:.4f}) written to {out}")


@cli.command("features")
@click.option("--images", "image_dir", required=True, type=click.Path())
@click.option("--cell-w", default=10, show_default=True)
@click.option("--cell-h", default=10, show_default=True)
@click.option("--out", required=True, type=click.Path())
def features_cmd(image_dir, cell_w, cell_h, out):
    """Extract binary-pattern histograms for every .pgm under a directory."""
    image_dir = Path(image_dir)
    paths = sorted(image_dir.rglob("*.pgm"))
    if not paths:
        raise ConfigError(f"no .pgm images under {image_dir}")
    image_ids = [p.stem for p in paths]
    vectors = [features.extract_lbp(features.read_pgm(p), cell_w=cell_w,
                                    cell_h=cell_h) for p in paths]
    features.save_feature_cache(out, image_ids, vectors,
                                cell_w=cell_w, cell_h=cell_h)
    click.echo(f"cached {len(vectors)} feature vectors to {out}")


@cli.command()
@click.option("--records", "records_path", type=click.Path(), default=None)
@click.option("--features", "cache_path", type=click.Path(), default=None)
@click.option("--assignment", "assignment_path", type=click.Path(), default=None)
@click.option("--toy", is_flag=True, help="Run the balanced 1,000-subject toy.")
@click.option("--seed", default=0, show_default=True)
@click.option("--gender-mode", default="oracle", show_default=True,
              type=click.Choice(["oracle", "classified"]))
@click.option("--out", required=True, type=click.Path())
def evaluate(records_path, cache_path, assignment_path, toy, seed,
             gender_mode, out):
    """Run the cross-set protocol and emit the per-cell MAE report."""
    config = composite.ProtocolConfig(gender_mode=gender_mode, seed=seed)
    if toy:
        recs, feats, _ = composite.toy_corpus(master_seed=seed)
        report = composite.toy_mode(config, master_seed=seed)
    else:
        if not (records_path and cache_path and assignment_path):
            raise ConfigError(
                "--records, --features and --assignment are required "
                "unless --toy is given")
        recs = [r.with_age() for r in records.load_records(records_path)]
        ids, vectors = features.load_feature_cache(cache_path)
        feats = {str(i): v for i, v in zip(ids, vectors)}
        split = subsets.load_assignment(assignment_path)
        report = composite.run_protocol(feats, recs, split, config)
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.txt").write_text(report.as_text() + "\n")
    (out / "report.json").write_text(json.dumps({
        "mae": report.mae, "weighted_mae": report.weighted_mae,
        "counts": report.counts, "config_hash": report.config_hash,
        "gender_mode": report.gender_mode,
    }, sort_keys=True, indent=2) + "\n")
    (out / "estimates.csv").write_text(
        composite.export_estimates(report, recs))
    click.echo(report.as_text())


@cli.command()
@click.option("--records", "records_path", required=True, type=click.Path())
@click.option("--decisions", "log_path", required=True, type=click.Path())
@click.option("--static", "static_dir", type=click.Path(), default=None)
@click.option("--images", "image_dir", type=click.Path(), default=None)
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8570, show_default=True)
def serve(records_path, log_path, static_dir, image_dir, host, port):
    """Serve the adjudication queue and decision log over HTTP."""
    import uvicorn

    recs = records.load_records(records_path)
    queue = service.queue_from_records(recs)
    log = service.DecisionLog(log_path)
    lock = service.Lockfile(log_path)
    lock.acquire("serve")
    try:
        app = service.build_app(queue, log, static_dir=static_dir,
                                image_dir=image_dir)
        click.echo(f"serving {len(queue)} pending items on {host}:{port}")
        uvicorn.run(app, host=host, port=port, log_level="warning")
    finally:
        lock.release()


@cli.command()
@click.option("--dir", "base", required=True, type=click.Path())
def report(base):
    """Summarize the artifacts found under a pipeline output directory."""
    base = Path(base)
    found = {}
    for name in ("truth.json", "manifest.json", "scores.json",
                 "summaries.json", "report.json"):
        for p in sorted(base.rglob(name)):
            found[str(p.relative_to(base))] = json.loads(p.read_text())
    if not found:
        raise ConfigError(f"no pipeline artifacts under {base}")
    click.echo(json.dumps(found, sort_keys=True, indent=2))


def _fail(kind, exc, code):
    print(json.dumps({"error": kind, "detail": str(exc)}), file=sys.stderr)
    return code


def main(argv=None):
    try:
        cli.main(args=argv, standalone_mode=False)
        return 0
    except click.exceptions.Abort:
        return 1
    except click.exceptions.ClickException as exc:
        return _fail("usage", exc.format_message(), 1)
    except ConfigError as exc:
        return _fail("config", exc, 1)
    except records.RecordError as exc:
        return _fail("records", exc, 1)
    except cleaning.UnresolvedSubjects as exc:
        return _fail("unresolved_subjects", exc, 1)
    except service.LogLocked as exc:
        return _fail("log_locked", exc, 1)
    except (subsets.InfeasibleSplit, subsets.AllSeedsInfeasible) as exc:
        return _fail("infeasible", exc, 2)
    except composite.MissingFeatures as exc:
        return _fail("missing_features", exc, 1)


if __name__ == "__main__":
    sys.exit(main())
