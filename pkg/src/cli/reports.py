import logging
import os

import pandas as pd

from config.settings import Config
from .config_parser import RunConfig, config_hash


def metadata_line(config: RunConfig) -> str:
    return f"# {Config.VERSION},{config_hash(config)}\n"


def output_path(config: RunConfig, name: str) -> str:
    os.makedirs(config.output, exist_ok=True)
    return os.path.join(config.output, name)


def write_csv(frame: pd.DataFrame, path: str, config: RunConfig) -> str:
    """CSV with header, 17 significant digits and a trailing `# version,config-hash` line"""
    frame.to_csv(path, index=False, float_format='%.17g', lineterminator='\n')
    with open(path, 'a', encoding='utf-8') as handle:
        handle.write(metadata_line(config))
    logging.info(f"Wrote {len(frame)} rows to {path}")
    return path


def write_text(lines, path: str, config: RunConfig) -> str:
    with open(path, 'w', encoding='utf-8') as handle:
        for line in lines:
            handle.write(f"{line}\n")
        handle.write(metadata_line(config))
    logging.info(f"Wrote report {path}")
    return path
