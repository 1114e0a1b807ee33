#!/usr/bin/env python3
"""Write the synthetic 20-sentence corpus as ready-to-train files.

Produces toy.json (annotation format), toy.conll, a scaled-down config, and
a small raw-text sample for `legalner predict`.
"""

import argparse
import json
from pathlib import Path

from legalner.cli import main as cli
from legalner.toydata import toy_annotation_docs
from legalner.training import Hyperparameters


def run(out_dir: Path) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "toy.json").write_text(
        json.dumps(toy_annotation_docs(), indent=2), encoding="utf-8")
    assert cli(["convert", str(out_dir / "toy.json"),
                str(out_dir / "toy.conll")]) == 0

    config = Hyperparameters(epochs=200, learning_rate=0.1, batch_size=32,
                             glove_dim=24, word_dropout=0.0, lstm_hidden=16,
                             patience=200, seed=1).to_dict()
    (out_dir / "config.json").write_text(json.dumps(config, indent=2),
                                         encoding="utf-8")
    (out_dir / "sample.txt").write_text(
        "the supreme court of india heard justice verma on 12 march 2001\n",
        encoding="utf-8")
    print(f"wrote toy.json, toy.conll, config.json, sample.txt to {out_dir}/")


if __name__ == "__main__":
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("out_dir", nargs="?", default="work", type=Path)
    run(parser.parse_args().out_dir)
