"""
Real-data preprocessing.

Loads tabular designs (CSV, TSV or Excel), imputes and encodes mixed-type columns,
removes redundant features, clusters strongly correlated ones, filters binary
designs and transforms the response.
"""
import logging
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy.cluster.hierarchy import fcluster, linkage
from scipy.spatial.distance import squareform
from sklearn.compose import ColumnTransformer
from sklearn.impute import SimpleImputer
from sklearn.pipeline import make_pipeline
from sklearn.preprocessing import OneHotEncoder, StandardScaler

from utils.errors import EmptyDataset, InvalidConfig, LengthMismatch, NonPositiveForLog, NotBinary

logger = logging.getLogger(__name__)

STD_GUARD = 1e-8
CORR_TOL = 1e-10


class ColumnKind(str, Enum):
    NUMERIC = "numeric"
    CATEGORICAL = "categorical"
    BINARY = "binary"


@dataclass
class TabularDataset:
    """Named columns with a kind each; values live in a pandas DataFrame"""

    frame: pd.DataFrame
    kinds: Dict[str, ColumnKind] = field(default_factory=dict)

    def __post_init__(self):
        if not self.kinds:
            self.kinds = {c: infer_kind(self.frame[c]) for c in self.frame.columns}
        missing = set(self.frame.columns) - set(self.kinds)
        if missing:
            raise LengthMismatch(f"no kind given for columns {sorted(missing)}")

    @property
    def n(self) -> int:
        return len(self.frame)

    @property
    def names(self) -> List[str]:
        return [str(c) for c in self.frame.columns]


def infer_kind(column: pd.Series) -> ColumnKind:
    if pd.api.types.is_bool_dtype(column):
        return ColumnKind.BINARY
    if not pd.api.types.is_numeric_dtype(column):
        return ColumnKind.CATEGORICAL
    observed = column.dropna().unique()
    if observed.size and set(np.unique(observed)) <= {0, 1}:
        return ColumnKind.BINARY
    return ColumnKind.NUMERIC


def load_table(path, na_values: Sequence[str] = ("NA",), sheet_name=0) -> TabularDataset:
    """
    Load a design table with a header row.

    Args:
        path: .csv, .tsv or .xlsx file
        na_values: Extra strings treated as missing (empty cells always are)
        sheet_name: Sheet to read from Excel workbooks

    Returns:
        TabularDataset with inferred column kinds
    """
    path = Path(path)
    suffix = path.suffix.lower()
    if suffix in (".xlsx", ".xls"):
        frame = pd.read_excel(path, sheet_name=sheet_name, na_values=list(na_values))
    elif suffix == ".tsv":
        frame = pd.read_csv(path, sep="\t", na_values=list(na_values))
    else:
        frame = pd.read_csv(path, na_values=list(na_values))
    logger.info("Loaded %s: %d rows x %d columns", path.name, frame.shape[0], frame.shape[1])
    return TabularDataset(frame=frame)


def load_xy(x_path, y_path, column: Optional[str] = None,
            na_values: Sequence[str] = ("NA",)) -> Tuple[TabularDataset, np.ndarray]:
    """Load design and response and drop rows whose response is missing"""
    design = load_table(x_path, na_values=na_values)
    response = load_table(y_path, na_values=na_values).frame
    if len(response) != design.n:
        raise LengthMismatch(f"X has {design.n} rows, y has {len(response)}")
    y = pd.to_numeric(response[column] if column else response.iloc[:, 0], errors="coerce")
    keep = y.notna().to_numpy()
    if not keep.all():
        logger.info("Dropping %d rows with missing response", int((~keep).sum()))
    frame = design.frame.loc[keep].reset_index(drop=True)
    return TabularDataset(frame=frame, kinds=design.kinds), y.to_numpy(dtype=np.float64)[keep]


def standardize_columns(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    return (x - x.mean(axis=0)) / (x.std(axis=0) + STD_GUARD)


def preprocess_mixed(t: TabularDataset) -> Tuple[np.ndarray, List[str]]:
    """Impute, encode and standardize a mixed-type table into a dense float matrix"""
    if t.n < 2 or t.frame.shape[1] == 0:
        raise EmptyDataset(f"need at least 2 rows and 1 column, got {t.frame.shape}")

    frame = t.frame.copy()
    numeric = [c for c in frame.columns if t.kinds[c] != ColumnKind.CATEGORICAL]
    categorical = [c for c in frame.columns if t.kinds[c] == ColumnKind.CATEGORICAL]
    for c in numeric:
        frame[c] = pd.to_numeric(frame[c], errors="coerce").astype(np.float64)
    for c in categorical:
        frame[c] = frame[c].astype(object).where(frame[c].notna(), np.nan)

    transformers = []
    if numeric:
        transformers.append(("num", make_pipeline(SimpleImputer(strategy="median"), StandardScaler()), numeric))
    if categorical:
        encoder = OneHotEncoder(handle_unknown="ignore", sparse_output=False)
        transformers.append(("cat", make_pipeline(SimpleImputer(strategy="most_frequent"), encoder), categorical))

    transformer = ColumnTransformer(transformers, verbose_feature_names_out=False)
    matrix = np.asarray(transformer.fit_transform(frame), dtype=np.float64)
    names = [str(n) for n in transformer.get_feature_names_out()]
    return standardize_columns(matrix), names


def _abs_corr(x: np.ndarray) -> np.ndarray:
    centered = x - x.mean(axis=0)
    norms = np.linalg.norm(centered, axis=0)
    unit = centered / np.where(norms > 0, norms, 1.0)
    return np.abs(unit.T @ unit)


def dedup_features(x, names: Sequence[str], threshold: float = 0.98):
    """Greedy left-to-right removal of columns too correlated with a kept earlier column"""
    if not 0.0 < threshold <= 1.0:
        raise InvalidConfig(f"threshold must lie in (0, 1], got {threshold}")
    x = np.asarray(x, dtype=np.float64)
    corr = _abs_corr(x)
    kept: List[int] = []
    dropped: List[str] = []
    for j in range(x.shape[1]):
        if kept and np.any(corr[j, kept] > threshold - CORR_TOL):
            dropped.append(names[j])
        else:
            kept.append(j)
    if dropped:
        logger.info("Dedup dropped %d of %d columns", len(dropped), x.shape[1])
    return x[:, kept], [names[j] for j in kept], dropped


def _cluster_once(x: np.ndarray, threshold: float) -> List[List[int]]:
    p = x.shape[1]
    if p < 2:
        return [[j] for j in range(p)]
    dist = 1.0 - _abs_corr(x)
    np.fill_diagonal(dist, 0.0)
    dist = np.clip(0.5 * (dist + dist.T), 0.0, None)
    tree = linkage(squareform(dist, checks=False), method="complete")
    labels = fcluster(tree, t=1.0 - threshold, criterion="distance")
    clusters: Dict[int, List[int]] = {}
    for j, label in enumerate(labels):
        clusters.setdefault(label, []).append(j)
    return list(clusters.values())


def cluster_representatives(x, names: Sequence[str], threshold: float = 0.90):
    """
    Complete-linkage clustering on 1 - |corr| cut at 1 - threshold.

    One column per cluster is kept: the one with the largest variance, lowest index
    on ties. Clustering repeats on the kept columns until no two of them fall
    within the cut.

    Returns:
        (x', names', cluster_map) where cluster_map maps each kept name to its members
    """
    if not 0.0 < threshold < 1.0:
        raise InvalidConfig(f"threshold must lie in (0, 1), got {threshold}")
    x = np.asarray(x, dtype=np.float64)
    variances = x.var(axis=0)
    kept = list(range(x.shape[1]))
    members = {j: [j] for j in kept}

    while True:
        clusters = _cluster_once(x[:, kept], threshold)
        if len(clusters) == len(kept):
            break
        new_kept = []
        new_members = {}
        for cluster in clusters:
            cols = sorted(kept[i] for i in cluster)
            rep = cols[int(np.argmax(variances[cols]))]
            new_kept.append(rep)
            new_members[rep] = sorted(m for c in cols for m in members[c])
        kept = sorted(new_kept)
        members = new_members

    cluster_map = {names[j]: [names[m] for m in members[j]] for j in kept}
    return x[:, kept], [names[j] for j in kept], cluster_map


def filter_binary_design(x, names: Sequence[str], min_count: int = 3):
    """Drop rare columns and exact duplicate columns (first copy kept)"""
    x = np.asarray(x, dtype=np.float64)
    if not np.all(np.isin(x, (0.0, 1.0))):
        raise NotBinary("binary filter needs entries in {0, 1}")
    frequent = x.sum(axis=0) >= min_count
    duplicate = pd.DataFrame(x.T).duplicated(keep="first").to_numpy()
    keep = np.flatnonzero(frequent & ~duplicate)
    logger.info("Binary filter kept %d of %d columns", keep.size, x.shape[1])
    return x[:, keep], [names[j] for j in keep]


def transform_response(y_raw, log_transform: bool = False) -> np.ndarray:
    y = np.asarray(y_raw, dtype=np.float64).ravel()
    if log_transform:
        if np.any(y <= 0):
            raise NonPositiveForLog("log transform needs a strictly positive response")
        y = np.log(y)
    return (y - y.mean()) / (y.std() + STD_GUARD)
