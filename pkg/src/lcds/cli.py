"""Command-line entry points for the pipeline: convert, build-map, generate,
attribute, eval, and serve."""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from .attribution import build_attribution_map, write_attribution
from .errors import LcdsError
from .evaluation import RecordEval, aggregate_report, judge_score, render_table, report_to_obj, rouge_l
from .gateway import Gateway, HttpProvider, MockProvider, ProviderConfig, mock_gateway
from .ingest import RawDocument, TypeMap, convert_batch, default_type_map
from .logic import load_department
from .records import dump_json, read_record, write_record
from .source_map import DsField, build_mapping_table, read_table, write_table
from .summarize import generate_summary, read_summary, write_summary


def _gateway(provider: str) -> Gateway:
    if provider == "mock":
        return mock_gateway()
    if provider == "http":
        config = ProviderConfig.from_env()
        if not config.endpoint:
            raise click.UsageError("http provider needs LCDS_ENDPOINT (and optionally LCDS_MODEL, LCDS_API_KEY)")
        return Gateway(HttpProvider(config), config)
    raise click.UsageError(f"unknown provider {provider!r}")


def _load_raw_dir(directory: Path) -> list[RawDocument]:
    raws = []
    for path in sorted(p for p in directory.iterdir() if p.is_file()):
        raws.append(RawDocument(doc_id=path.stem, payload=path.read_bytes()))
    if not raws:
        raise click.UsageError(f"no documents found in {directory}")
    return raws


@click.group()
def main():
    """Discharge-summary pipeline tools."""


@main.command()
@click.option("--in", "in_dir", type=click.Path(exists=True, file_okay=False, path_type=Path), required=True)
@click.option("--out", "out_file", type=click.Path(dir_okay=False, path_type=Path), required=True)
@click.option("--type-map", "type_map_file", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--patient-id", default=None, help="defaults to the input directory name")
@click.option("--admission-id", default=None, help="defaults to the input directory name")
def convert(in_dir: Path, out_file: Path, type_map_file: Path | None, patient_id: str | None, admission_id: str | None):
    """Convert a directory of raw EMR documents into one unified record file."""
    type_map = TypeMap.load(type_map_file) if type_map_file else default_type_map()
    name = in_dir.resolve().name
    record = convert_batch(
        _load_raw_dir(in_dir),
        patient_id=patient_id or name,
        admission_id=admission_id or name,
        type_map=type_map,
    )
    write_record(record, out_file)
    click.echo(f"wrote {out_file} ({len(record.documents)} documents)")


@main.command(name="build-map")
@click.option("--corpus", "corpus_dir", type=click.Path(exists=True, file_okay=False, path_type=Path), required=True)
@click.option("--department", required=True)
@click.option("--out", "out_file", type=click.Path(dir_okay=False, path_type=Path), required=True)
@click.option("--threshold", type=float, default=0.8, show_default=True)
@click.option("--provider", type=click.Choice(["mock", "http"]), default="mock", show_default=True)
def build_map(corpus_dir: Path, department: str, out_file: Path, threshold: float, provider: str):
    """Build a source mapping table from <name>.record.json / <name>.reference.json pairs."""
    corpus = []
    for record_file in sorted(corpus_dir.glob("*.record.json")):
        name = record_file.name[: -len(".record.json")]
        reference_file = corpus_dir / f"{name}.reference.json"
        if not reference_file.exists():
            raise click.UsageError(f"missing reference file for record {name!r}")
        reference = {
            DsField(k): v
            for k, v in json.loads(reference_file.read_text(encoding="utf-8")).items()
        }
        corpus.append((read_record(record_file), reference))
    if not corpus:
        raise click.UsageError(f"no *.record.json files in {corpus_dir}")
    table = build_mapping_table(corpus, department, _gateway(provider), threshold=threshold)
    write_table(table, out_file)
    click.echo(f"wrote {out_file} ({len(table.entries)} entries from {len(corpus)} records)")


@main.command()
@click.option("--record", "record_file", type=click.Path(exists=True, dir_okay=False, path_type=Path), required=True)
@click.option("--map", "table_file", type=click.Path(exists=True, dir_okay=False, path_type=Path), required=True)
@click.option("--rules", "rules_dir", type=click.Path(exists=True, file_okay=False, path_type=Path),
              help="directory with <department>.rules.json; defaults to the bundled departments")
@click.option("--out", "out_file", type=click.Path(dir_okay=False, path_type=Path), required=True)
@click.option("--provider", type=click.Choice(["mock", "http"]), default="mock", show_default=True)
def generate(record_file: Path, table_file: Path, rules_dir: Path | None, out_file: Path, provider: str):
    """Generate the silver summary for one record."""
    record = read_record(record_file)
    table = read_table(table_file)
    rulebook, kb = load_department(table.department, rules_dir)
    summary = generate_summary(record, table, rulebook, kb, _gateway(provider))
    write_summary(summary, out_file)
    click.echo(f"wrote {out_file} ({summary.summary_id})")


@main.command()
@click.option("--summary", "summary_file", type=click.Path(exists=True, dir_okay=False, path_type=Path), required=True)
@click.option("--record", "record_file", type=click.Path(exists=True, dir_okay=False, path_type=Path), required=True)
@click.option("--out", "out_file", type=click.Path(dir_okay=False, path_type=Path), required=True)
@click.option("--map", "table_file", type=click.Path(exists=True, dir_okay=False, path_type=Path),
              help="mapping table; required for --scope resolved")
@click.option("--scope", type=click.Choice(["resolved", "full"]), default=None,
              help="candidate pool; defaults to resolved when --map is given, else full")
@click.option("--provider", type=click.Choice(["mock", "http"]), default="mock", show_default=True)
def attribute(summary_file: Path, record_file: Path, out_file: Path, table_file: Path | None, scope: str | None, provider: str):
    """Attribute every generated sentence to supporting record sentences."""
    summary = read_summary(summary_file)
    record = read_record(record_file)
    table = read_table(table_file) if table_file else None
    if scope is None:
        scope = "resolved" if table else "full"
    if scope == "resolved" and table is None:
        raise click.UsageError("--scope resolved needs --map")
    amap = build_attribution_map(summary, record, _gateway(provider), table=table, scope=scope)
    write_attribution(amap, out_file)
    write_summary(summary, summary_file)  # sources written back
    grounded = sum(1 for e in amap.entries if e.sources)
    click.echo(f"wrote {out_file} ({grounded}/{len(amap.entries)} sentences grounded)")


@main.command(name="eval")
@click.option("--pairs", "pairs_dir", type=click.Path(exists=True, file_okay=False, path_type=Path), required=True)
@click.option("--metrics", default="rouge", show_default=True, help="comma-separated: rouge,judge")
@click.option("--out", "out_file", type=click.Path(dir_okay=False, path_type=Path), required=True)
@click.option("--method", default="pipeline", show_default=True, help="method label for the report")
@click.option("--tokenizer", type=click.Choice(["auto", "char", "word"]), default="auto", show_default=True)
@click.option("--provider", type=click.Choice(["mock", "http"]), default="mock", show_default=True)
def eval_cmd(pairs_dir: Path, metrics: str, out_file: Path, method: str, tokenizer: str, provider: str):
    """Score <name>.gen.txt against <name>.ref.txt pairs."""
    wanted = {m.strip() for m in metrics.split(",") if m.strip()}
    unknown = wanted - {"rouge", "judge"}
    if unknown:
        raise click.UsageError(f"unknown metrics: {sorted(unknown)}")
    gateway = _gateway(provider) if "judge" in wanted else None
    results = []
    for gen_file in sorted(pairs_dir.glob("*.gen.txt")):
        name = gen_file.name[: -len(".gen.txt")]
        ref_file = pairs_dir / f"{name}.ref.txt"
        if not ref_file.exists():
            raise click.UsageError(f"missing reference for {name!r}")
        generated = gen_file.read_text(encoding="utf-8")
        reference = ref_file.read_text(encoding="utf-8")
        result = RecordEval(record_id=name)
        if "rouge" in wanted:
            result.rouge = rouge_l(generated, reference, tokenizer)
        if "judge" in wanted:
            result.judge = judge_score(generated, reference, gateway)
        results.append(result)
    if not results:
        raise click.UsageError(f"no *.gen.txt files in {pairs_dir}")
    report = aggregate_report(method, results)
    out_file.write_text(dump_json(report_to_obj(report)), encoding="utf-8")
    click.echo(render_table([report]))
    click.echo(f"wrote {out_file}")


@main.command()
@click.option("--port", type=int, default=8400, show_default=True)
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--data-dir", type=click.Path(file_okay=False, path_type=Path), required=True)
@click.option("--provider", type=click.Choice(["mock", "http"]), default="mock", show_default=True)
def serve(port: int, host: str, data_dir: Path, provider: str):
    """Run the review service."""
    import uvicorn

    from .service import create_app

    app = create_app(data_dir, gateway=_gateway(provider))
    uvicorn.run(app, host=host, port=port)


def run():
    try:
        main(standalone_mode=True)
    except LcdsError as exc:  # pragma: no cover - CLI surface
        click.echo(f"error: {exc}", err=True)
        sys.exit(1)


if __name__ == "__main__":
    run()
