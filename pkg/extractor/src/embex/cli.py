"""Command-line entry points: extract and export-static."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .bundleio import write_embedding_set
from .errors import ExtractorError
from .extract import extract_embeddings
from .model import resolve_model
from .static import export_static, read_vector_table
from .transcript import read_transcript


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="embex",
        description="Extract per-layer language-model embeddings for a transcript",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("extract", help="contextual embeddings from a causal LM")
    p.add_argument("--transcript", required=True, help="words.tsv with word/onset/offset")
    p.add_argument("--model", required=True,
                   help="'toy', 'toy-<layers>x<dim>', or a Hugging Face model id")
    p.add_argument("--out", required=True, help="bundle directory to create or extend")
    p.add_argument("--context-limit", type=int, default=1023,
                   help="max preceding tokens fed per word (default 1023)")
    p.add_argument("--set-name", default="contextual")

    p = sub.add_parser("export-static", help="single-layer embeddings from a vector table")
    p.add_argument("--table", required=True, help="text table: word then components per row")
    p.add_argument("--transcript", required=True, help="words.tsv with word/onset/offset")
    p.add_argument("--out", required=True, help="bundle directory to create or extend")
    p.add_argument("--set-name", default="static")
    return parser


def cmd_extract(args) -> int:
    transcript = read_transcript(args.transcript)
    adapter = resolve_model(args.model)
    result = extract_embeddings(transcript, adapter, context_limit=args.context_limit)
    write_embedding_set(
        args.out, result.words, args.set_name, "contextual", result.layers,
        f"extract: model={adapter.model_id} context_limit={result.context_limit} "
        f"set={args.set_name}",
    )
    print(
        f"wrote {result.n_words} words x {adapter.n_layers} layers "
        f"(dim {adapter.hidden_dim}) to {args.out}"
    )
    return 0


def cmd_export_static(args) -> int:
    transcript = read_transcript(args.transcript)
    vectors = read_vector_table(args.table)
    result = export_static(vectors, transcript)
    write_embedding_set(
        args.out, result.words, args.set_name, "static", [result.matrix],
        f"export-static: table={Path(args.table).name} oov={len(result.oov_words)} "
        f"set={args.set_name}",
    )
    dim = result.matrix.shape[1]
    print(f"wrote {result.n_words} words x 1 layer (dim {dim}) to {args.out}")
    if result.oov_words:
        shown = ", ".join(result.oov_words[:5])
        more = "" if len(result.oov_words) <= 5 else ", ..."
        print(f"{len(result.oov_words)} word(s) missing from table "
              f"(zero rows): {shown}{more}", file=sys.stderr)
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "extract":
            return cmd_extract(args)
        return cmd_export_static(args)
    except ExtractorError as exc:
        print(f"embex: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
