from typing import Iterable, Sequence

from rest_framework.renderers import JSONRenderer


class OutputFormat:
    TSV = 'tsv'
    JSON = 'json'
    CHOICES = (TSV, JSON)


def _cell(value) -> str:
    if value is None:
        return 'n/a'
    if isinstance(value, bool):
        return 'true' if value else 'false'
    return str(value)


def render_tsv(columns: Sequence[str], rows: Iterable[dict]) -> str:
    lines = ['\t'.join(columns)]
    lines.extend('\t'.join(_cell(row[column]) for column in columns) for row in rows)
    return '\n'.join(lines) + '\n'


def render_json(data) -> str:
    return JSONRenderer().render(data, renderer_context={'indent': 2}).decode('utf-8') + '\n'


def render(columns: Sequence[str], rows: Sequence[dict], fmt: str) -> str:
    """Serializer output rows as a header-first TSV table or a JSON array."""
    if fmt == OutputFormat.JSON:
        return render_json(list(rows))
    return render_tsv(columns, rows)
