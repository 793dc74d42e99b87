"""Empirical private/query model from a categorical CSV such as the UCI adult data."""

import csv
import gzip
import io
import itertools
import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .noiseopt import NoiseDesignProblem
from .probmodel import Alphabet, JointPmf, marginal

ADULT_COLUMNS = (
    "age", "workclass", "fnlwgt", "education", "education-num", "marital-status",
    "occupation", "relationship", "race", "sex", "capital-gain", "capital-loss",
    "hours-per-week", "native-country", "income",
)


@dataclass(frozen=True)
class AttributeEncoding:
    """Which columns form X and Y, and how their categories map to numbers.

    ``private`` is a list of ``(column, {category: code})``; X is the vector
    of codes in that order.  ``query`` is a single ``(column, {category: value})``.
    ``columns`` names the fields of header-less files.
    """

    private: tuple
    query: tuple
    columns: tuple = ADULT_COLUMNS

    @classmethod
    def from_dict(cls, data):
        try:
            private = tuple((p["column"], dict(p["categories"])) for p in data["private"])
            query = (data["query"]["column"], dict(data["query"]["categories"]))
        except (KeyError, TypeError) as exc:
            raise ValueError(f"malformed encoding: missing {exc}") from None
        return cls(private, query, tuple(data.get("columns", ADULT_COLUMNS)))

    def to_dict(self):
        return {
            "columns": list(self.columns),
            "private": [{"column": c, "categories": m} for c, m in self.private],
            "query": {"column": self.query[0], "categories": self.query[1]},
        }

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    @classmethod
    def default(cls):
        text = resources.files("chaospriv").joinpath("data/adult_encoding.json").read_text()
        return cls.from_dict(json.loads(text))

    @property
    def used_columns(self):
        return [c for c, _ in self.private] + [self.query[0]]


@dataclass(frozen=True, eq=False)
class DatasetSummary:
    joint: JointPmf
    counts: np.ndarray
    row_count: int
    dropped_rows: int
    sources: tuple = field(default=())

    @property
    def p_x(self):
        return marginal(self.joint, 0)

    @property
    def p_y(self):
        return marginal(self.joint, 1)

    def to_dict(self):
        return {
            "row_count": int(self.row_count),
            "dropped_rows": int(self.dropped_rows),
            "sources": list(self.sources),
            "x_alphabet": self.joint.row_alphabet.to_list(),
            "y_alphabet": self.joint.col_alphabet.to_list(),
            "counts": self.counts.astype(int).tolist(),
            "p_x": self.p_x.to_dict(),
            "p_y": self.p_y.to_dict(),
            "joint": self.joint.to_dict(),
        }

    @classmethod
    def from_dict(cls, data):
        xa = Alphabet.from_list(data["x_alphabet"])
        ya = Alphabet.from_list(data["y_alphabet"])
        counts = np.asarray(data["counts"], dtype=float)
        return cls(JointPmf.from_counts(xa, ya, counts), counts, int(data["row_count"]),
                   int(data["dropped_rows"]), tuple(data.get("sources", ())))


def default_adult_paths():
    """The adult files shipped in the repository's ``data/adult`` directory."""
    root = Path(__file__).resolve().parents[2] / "data" / "adult"
    return [root / "adult.data.gz", root / "adult.test.gz"]


def _open_text(path):
    path = Path(path)
    if path.suffix == ".gz":
        return io.TextIOWrapper(gzip.open(path, "rb"), encoding="utf-8", newline="")
    return open(path, encoding="utf-8", newline="")


def _records(path, columns):
    """Yield dicts per data row; skips blank and ``|`` comment lines, detects a header."""
    with _open_text(path) as fh:
        lines = (ln for ln in fh if ln.strip() and not ln.lstrip().startswith("|"))
        reader = csv.reader(lines, skipinitialspace=True)
        names = None
        for row in reader:
            row = [c.strip() for c in row]
            if names is None:
                if not _looks_like_data(row, columns):
                    names = row
                    continue
                names = list(columns)
            if len(row) != len(names):
                yield None
                continue
            yield dict(zip(names, row))


def _looks_like_data(row, columns):
    # a header row repeats column names; a data row does not
    return sum(c in columns for c in row) < max(2, len(row) // 2)


def load_adult(paths=None, encoding=None):
    """Count (X, Y) pairs over one or more files.

    Rows whose used columns hold an unmapped category, or whose field count
    is wrong, are dropped and counted.
    """
    encoding = AttributeEncoding.default() if encoding is None else encoding
    if paths is None:
        paths = default_adult_paths()
    elif isinstance(paths, (str, Path)):
        paths = [paths]
    x_points = list(itertools.product(*[sorted(set(m.values())) for _, m in encoding.private]))
    y_values = sorted(set(encoding.query[1].values()))
    x_index = {p: i for i, p in enumerate(x_points)}
    y_index = {v: i for i, v in enumerate(y_values)}
    counts = np.zeros((len(x_points), len(y_values)))
    kept = dropped = 0
    for path in paths:
        for rec in _records(path, encoding.columns):
            if rec is None:
                dropped += 1
                continue
            missing = [c for c in encoding.used_columns if c not in rec]
            if missing:
                raise ValueError(f"{path}: missing columns {missing}")
            try:
                x = tuple(m[rec[c]] for c, m in encoding.private)
                y = encoding.query[1][rec[encoding.query[0]]]
            except KeyError:
                dropped += 1
                continue
            counts[x_index[x], y_index[y]] += 1
            kept += 1
    if kept == 0:
        raise ValueError("no usable rows")
    joint = JointPmf.from_counts(Alphabet(x_points), Alphabet([[v] for v in y_values]), counts)
    return DatasetSummary(joint, counts, kept, dropped, tuple(str(p) for p in paths))


def problem_from_summary(summary, base=2):
    """Noise-design problem with ``p_{Y|X}`` the row-normalised joint.

    Zero-mass private atoms are dropped from the alphabet.
    """
    joint = summary.joint
    keep = joint.probs.sum(axis=1) > 0
    rows = Alphabet(joint.row_alphabet.points[keep])
    sub = JointPmf(rows, joint.col_alphabet, joint.probs[keep])
    return NoiseDesignProblem(marginal(sub, 0), sub.conditional(), base=base)
