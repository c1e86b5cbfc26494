"""CSV writers for experiment tables.

Every file starts with ``# config: {...}`` (the resolved config minus
runtime-only keys, keys sorted) and, when the table carries units, a
``# units: {...}`` line. Large per-frame tables are gzip-compressed with a
zero mtime so the bytes depend only on the config.
"""
import gzip
import io
import json
import logging
from pathlib import Path

from .serializers import header_config

logger = logging.getLogger(__name__)

# tablas que se escriben comprimidas
COMPRESSED = {'mac_sim_frames', 'mac_sim_trace'}

FLOAT_FORMAT = '%.10g'


def header_lines(frame, config):
    lines = [f"# config: {json.dumps(header_config(config), sort_keys=True)}"]
    units = frame.attrs.get('units')
    if units:
        lines.append(f"# units: {json.dumps(units, sort_keys=True)}")
    return '\n'.join(lines) + '\n'


def render_csv(frame, config):
    buffer = io.StringIO()
    buffer.write(header_lines(frame, config))
    frame.to_csv(buffer, index=False, lineterminator='\n', float_format=FLOAT_FORMAT)
    return buffer.getvalue()


def write_csv(frame, config, name, out_dir):
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if name in COMPRESSED:
        path = out_dir / f'{name}.csv.gz'
        with open(path, 'wb') as raw, gzip.GzipFile(filename='', mode='wb', fileobj=raw, mtime=0) as fh:
            fh.write(render_csv(frame, config).encode('utf-8'))
    else:
        path = out_dir / f'{name}.csv'
        path.write_text(render_csv(frame, config), encoding='utf-8')
    logger.info(f"wrote {path} ({len(frame)} rows)")
    return path


def write_tables(tables, config, out_dir=None):
    """Write every table of a runner result; returns ``{name: path}``."""
    out_dir = out_dir or config['out']
    return {name: write_csv(frame, config, name, out_dir) for name, frame in tables.items()}
