"""Best-track ingestion: parsing, feature derivation, scaling, and samples.

A track is an ordered run of 6-hourly fixes. Each fix expands to a 6-feature
row (lat, lon, max wind, min pressure, step distance, step bearing), features
are min-max scaled against the training split, and every track yields one
padded fixed-length sample per prediction cutoff.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone

import numpy as np

from .errors import ParseError, ValidationError
from .ioutil import atomic_write_text, dump_json, load_json

EARTH_RADIUS_KM = 6371.0
FIX_INTERVAL = timedelta(hours=6)

FEATURES = ("lat", "lon", "max_wind", "min_pressure",
            "step_distance", "step_bearing")
N_FEATURES = len(FEATURES)

CSV_HEADER = ("storm_id", "name", "timestamp", "lat_deg", "lon_deg",
              "max_wind_kt", "min_pressure_hpa")

DATASET_FORMAT_VERSION = 1


@dataclass
class Fix:
    """One best-track entry: position and intensity at a 6-hour timestamp."""

    timestamp: datetime
    lat: float
    lon: float
    max_wind: float
    min_pressure: float

    def __post_init__(self):
        if not -90.0 <= self.lat <= 90.0:
            raise ValidationError(f"latitude {self.lat} outside [-90, 90]")
        if not -180.0 <= self.lon <= 180.0:
            raise ValidationError(f"longitude {self.lon} outside [-180, 180]")
        if self.max_wind < 0.0:
            raise ValidationError(f"max wind {self.max_wind} below 0")
        if not 0.0 < self.min_pressure < 1100.0:
            raise ValidationError(
                f"min pressure {self.min_pressure} outside (0, 1100)")


@dataclass
class StormTrack:
    storm_id: str
    name: str
    fixes: list[Fix]

    def __post_init__(self):
        if len(self.fixes) < 1:
            raise ValidationError(f"storm {self.storm_id} has no fixes")
        for prev, cur in zip(self.fixes, self.fixes[1:]):
            gap = cur.timestamp - prev.timestamp
            if gap <= timedelta(0):
                raise ValidationError(
                    f"storm {self.storm_id}: timestamps not strictly increasing "
                    f"at {cur.timestamp}")
            if gap != FIX_INTERVAL:
                raise ValidationError(
                    f"storm {self.storm_id}: {gap} between fixes at "
                    f"{cur.timestamp}, expected 6 hours")

    def __len__(self) -> int:
        return len(self.fixes)


@dataclass
class Scaler:
    """Per-feature min/max fitted on the training split."""

    min_vals: np.ndarray
    max_vals: np.ndarray

    def __post_init__(self):
        self.min_vals = np.asarray(self.min_vals, dtype=np.float64)
        self.max_vals = np.asarray(self.max_vals, dtype=np.float64)
        if self.min_vals.shape != self.max_vals.shape:
            raise ValidationError("scaler min/max shapes differ")
        if np.any(self.min_vals > self.max_vals):
            raise ValidationError("scaler has min > max")

    def latlon(self) -> "Scaler":
        """The 2-feature sub-scaler for (lat, lon) label columns."""
        return Scaler(self.min_vals[:2].copy(), self.max_vals[:2].copy())


@dataclass
class Sample:
    """One padded input sequence and its normalized (lat, lon) label."""

    storm_id: str
    cutoff: int             # number of observed fixes feeding the input
    input: np.ndarray       # [input_len x 6], zero rows first, then real rows
    label: np.ndarray       # normalized (lat, lon) at cutoff + pred_len - 1
    mask_len: int           # count of real (non-pad) rows, min(cutoff, input_len)


@dataclass
class SplitDataset:
    train: list[StormTrack]
    validation: list[StormTrack]
    test: list[StormTrack]
    seed: int


def _parse_timestamp(raw: str) -> datetime:
    text = raw.strip()
    if text.endswith(("Z", "z")):
        text = text[:-1] + "+00:00"
    stamp = datetime.fromisoformat(text)
    if stamp.tzinfo is not None:
        stamp = stamp.astimezone(timezone.utc).replace(tzinfo=None)
    return stamp


def parse_track_csv(source) -> list[StormTrack]:
    """Parse the track CSV interchange format into storm tracks.

    Accepts a string or a text file object. Rows are grouped by storm_id
    (storms returned in order of first appearance) and must already be
    chronological per storm on the 6-hour grid.
    """
    text = source.read() if hasattr(source, "read") else source
    reader = csv.reader(io.StringIO(text))
    rows = list(reader)
    if not rows:
        raise ParseError("empty file: missing header")
    if tuple(col.strip() for col in rows[0]) != CSV_HEADER:
        raise ParseError(
            f"line 1: header must be {','.join(CSV_HEADER)}")

    order: list[str] = []
    names: dict[str, str] = {}
    fixes: dict[str, list[tuple[int, Fix]]] = {}
    for line_no, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != len(CSV_HEADER):
            raise ParseError(
                f"line {line_no}: expected {len(CSV_HEADER)} columns, "
                f"got {len(row)}")
        storm_id, name = row[0].strip(), row[1].strip()
        try:
            stamp = _parse_timestamp(row[2])
            numbers = [float(v) for v in row[3:]]
        except ValueError as exc:
            raise ParseError(f"line {line_no}: {exc}") from exc
        try:
            fix = Fix(timestamp=stamp, lat=numbers[0], lon=numbers[1],
                      max_wind=numbers[2], min_pressure=numbers[3])
        except ValidationError as exc:
            raise ValidationError(f"line {line_no}: {exc}") from exc
        if storm_id not in fixes:
            order.append(storm_id)
            names[storm_id] = name
            fixes[storm_id] = []
        fixes[storm_id].append((line_no, fix))

    tracks = []
    for storm_id in order:
        entries = fixes[storm_id]
        for (_, prev), (line_no, cur) in zip(entries, entries[1:]):
            gap = cur.timestamp - prev.timestamp
            if gap <= timedelta(0):
                raise ValidationError(
                    f"line {line_no}: storm {storm_id} timestamps not "
                    f"strictly increasing")
            if gap != FIX_INTERVAL:
                raise ValidationError(
                    f"line {line_no}: storm {storm_id} fixes {gap} apart, "
                    f"expected 6 hours")
        tracks.append(StormTrack(storm_id=storm_id, name=names[storm_id],
                                 fixes=[f for _, f in entries]))
    return tracks


def haversine_km(a: tuple[float, float], b: tuple[float, float]) -> float:
    """Great-circle distance in km between two (lat, lon) points in degrees."""
    lat1, lon1 = math.radians(a[0]), math.radians(a[1])
    lat2, lon2 = math.radians(b[0]), math.radians(b[1])
    dlat = lat2 - lat1
    dlon = lon2 - lon1
    s = (math.sin(dlat / 2.0) ** 2
         + math.cos(lat1) * math.cos(lat2) * math.sin(dlon / 2.0) ** 2)
    return EARTH_RADIUS_KM * 2.0 * math.asin(min(1.0, math.sqrt(s)))


def initial_bearing_deg(a: tuple[float, float], b: tuple[float, float]) -> float:
    """Initial great-circle bearing at a toward b, clockwise from north.

    Coincident points are degenerate; by convention they map to 0.0.
    """
    if a[0] == b[0] and a[1] == b[1]:
        return 0.0
    lat1, lon1 = math.radians(a[0]), math.radians(a[1])
    lat2, lon2 = math.radians(b[0]), math.radians(b[1])
    dlon = lon2 - lon1
    y = math.sin(dlon) * math.cos(lat2)
    x = (math.cos(lat1) * math.sin(lat2)
         - math.sin(lat1) * math.cos(lat2) * math.cos(dlon))
    return math.degrees(math.atan2(y, x)) % 360.0


def derive_features(track: StormTrack) -> np.ndarray:
    """[L x 6] feature rows; step distance/bearing come from the previous fix.

    The first fix has no predecessor and gets 0 km / 0 degrees, matching the
    zero-padding convention.
    """
    out = np.zeros((len(track.fixes), N_FEATURES))
    for i, fix in enumerate(track.fixes):
        out[i, 0] = fix.lat
        out[i, 1] = fix.lon
        out[i, 2] = fix.max_wind
        out[i, 3] = fix.min_pressure
        if i > 0:
            prev = track.fixes[i - 1]
            here = (fix.lat, fix.lon)
            there = (prev.lat, prev.lon)
            out[i, 4] = haversine_km(there, here)
            out[i, 5] = initial_bearing_deg(there, here)
    return out


def fit_minmax(train_features) -> Scaler:
    """Componentwise min/max over training feature rows.

    Accepts one [N x k] array or a list of per-storm arrays.
    """
    if isinstance(train_features, np.ndarray):
        stacked = train_features
    else:
        parts = [np.asarray(f) for f in train_features]
        stacked = np.concatenate(parts, axis=0) if parts else np.zeros((0, N_FEATURES))
    if stacked.shape[0] == 0:
        raise ValidationError("cannot fit scaler on empty feature set")
    return Scaler(min_vals=stacked.min(axis=0), max_vals=stacked.max(axis=0))


def apply_minmax(scaler: Scaler, values: np.ndarray, invert: bool = False) -> np.ndarray:
    """Map features to [0, 1] (or back). Constant features normalize to 0.

    Forward output is clamped to [0, 1] so out-of-range validation/test
    values stay inside the training box; invert is exact for in-range inputs.
    """
    x = np.asarray(values, dtype=np.float64)
    span = scaler.max_vals - scaler.min_vals
    if invert:
        return x * span + scaler.min_vals
    safe = np.where(span == 0.0, 1.0, span)
    scaled = (x - scaler.min_vals) / safe
    scaled = np.where(span == 0.0, 0.0, scaled)
    return np.clip(scaled, 0.0, 1.0)


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def shuffle_split(storms: list[StormTrack], seed: int, test_frac: float = 0.25,
                  val_frac: float = 0.25) -> SplitDataset:
    """Seeded whole-storm shuffle into test/validation/train partitions."""
    n = len(storms)
    if n < 4:
        raise ValidationError(f"need at least 4 storms to split, got {n}")
    perm = np.random.default_rng(seed).permutation(n)
    n_test = _round_half_up(test_frac * n)
    n_val = _round_half_up(val_frac * n)
    shuffled = [storms[i] for i in perm]
    return SplitDataset(test=shuffled[:n_test],
                        validation=shuffled[n_test:n_test + n_val],
                        train=shuffled[n_test + n_val:],
                        seed=seed)


def build_samples(features: np.ndarray, scaler: Scaler, min_start: int,
                  pred_len: int, max_len: int, storm_id: str = "") -> list[Sample]:
    """Construct every padded sample a track admits.

    input_len = max_len - pred_len - min_start; one sample per cutoff c in
    [min_start, L - pred_len], holding the first c normalized rows pre-padded
    with zeros. A cutoff beyond input_len keeps the most recent input_len
    rows so the input stays fixed-width.
    """
    if min_start < 1:
        raise ValidationError(f"min_start must be >= 1, got {min_start}")
    if pred_len < 1:
        raise ValidationError(f"pred_len must be >= 1, got {pred_len}")
    if max_len < min_start + pred_len:
        raise ValidationError(
            f"max_len {max_len} below min_start + pred_len "
            f"({min_start + pred_len})")
    feats = np.asarray(features, dtype=np.float64)
    length = feats.shape[0]
    if length > max_len:
        raise ValidationError(
            f"track length {length} exceeds max_len {max_len}")

    input_len = max_len - pred_len - min_start
    normalized = apply_minmax(scaler, feats)
    samples = []
    for cutoff in range(min_start, length - pred_len + 1):
        real = min(cutoff, input_len)
        mat = np.zeros((input_len, feats.shape[1]))
        if real > 0:
            mat[input_len - real:] = normalized[cutoff - real:cutoff]
        label = normalized[cutoff + pred_len - 1, :2].copy()
        samples.append(Sample(storm_id=storm_id, cutoff=cutoff, input=mat,
                              label=label, mask_len=real))
    return samples


@dataclass
class SampleDataset:
    """Everything the trainer and predictor need, as written by ingest."""

    scaler: Scaler
    split_ids: dict[str, list[str]]
    samples: dict[str, list[Sample]]
    min_start: int
    pred_len: int
    max_len: int
    seed: int
    test_frac: float = 0.25
    val_frac: float = 0.25

    @property
    def input_len(self) -> int:
        return self.max_len - self.pred_len - self.min_start


def build_dataset(storms: list[StormTrack], seed: int, min_start: int = 4,
                  pred_len: int = 1, max_len: int | None = None,
                  test_frac: float = 0.25, val_frac: float = 0.25) -> SampleDataset:
    """Split storms, fit the scaler on train features only, build all samples.

    max_len defaults to the longest track in the input, the dataset-wide rule
    the fixed input length is derived from.
    """
    split = shuffle_split(storms, seed, test_frac=test_frac, val_frac=val_frac)
    if max_len is None:
        max_len = max(len(t) for t in storms)
    features = {t.storm_id: derive_features(t)
                for t in split.train + split.validation + split.test}
    scaler = fit_minmax([features[t.storm_id] for t in split.train])

    split_ids = {}
    samples = {}
    for name, tracks in (("train", split.train), ("validation", split.validation),
                         ("test", split.test)):
        split_ids[name] = [t.storm_id for t in tracks]
        built: list[Sample] = []
        for t in tracks:
            built.extend(build_samples(features[t.storm_id], scaler, min_start,
                                       pred_len, max_len, storm_id=t.storm_id))
        samples[name] = built
    return SampleDataset(scaler=scaler, split_ids=split_ids, samples=samples,
                         min_start=min_start, pred_len=pred_len, max_len=max_len,
                         seed=seed, test_frac=test_frac, val_frac=val_frac)


def tracks_to_csv_text(storms: list[StormTrack]) -> str:
    """Render storm tracks in the track CSV interchange format."""
    lines = [",".join(CSV_HEADER)]
    for storm in storms:
        for fix in storm.fixes:
            stamp = fix.timestamp.isoformat() + "Z"
            lines.append(f"{storm.storm_id},{storm.name},{stamp},"
                         f"{fix.lat!r},{fix.lon!r},{fix.max_wind!r},"
                         f"{fix.min_pressure!r}")
    return "\n".join(lines) + "\n"


def scaler_to_json(scaler: Scaler) -> dict:
    return {"min": scaler.min_vals.tolist(), "max": scaler.max_vals.tolist()}


def scaler_from_json(obj: dict) -> Scaler:
    return Scaler(min_vals=np.array(obj["min"], dtype=np.float64),
                  max_vals=np.array(obj["max"], dtype=np.float64))


def save_dataset(dataset: SampleDataset, path: str) -> None:
    doc = {
        "format_version": DATASET_FORMAT_VERSION,
        "config": {
            "min_start": dataset.min_start,
            "pred_len": dataset.pred_len,
            "max_len": dataset.max_len,
            "seed": dataset.seed,
            "test_frac": dataset.test_frac,
            "val_frac": dataset.val_frac,
        },
        "scaler": scaler_to_json(dataset.scaler),
        "split_ids": dataset.split_ids,
        "samples": {
            name: [{
                "storm_id": s.storm_id,
                "cutoff": s.cutoff,
                "mask_len": s.mask_len,
                "input": s.input.tolist(),
                "label": s.label.tolist(),
            } for s in split]
            for name, split in dataset.samples.items()
        },
    }
    atomic_write_text(path, dump_json(doc))


def load_dataset(path: str) -> SampleDataset:
    from .errors import ModelFormatError

    doc = load_json(path)
    try:
        version = doc["format_version"]
        if version != DATASET_FORMAT_VERSION:
            raise ModelFormatError(
                f"{path}: dataset format_version {version} unsupported "
                f"(expected {DATASET_FORMAT_VERSION})")
        cfg = doc["config"]
        samples = {
            name: [Sample(storm_id=s["storm_id"], cutoff=int(s["cutoff"]),
                          input=np.array(s["input"], dtype=np.float64),
                          label=np.array(s["label"], dtype=np.float64),
                          mask_len=int(s["mask_len"]))
                   for s in split]
            for name, split in doc["samples"].items()
        }
        return SampleDataset(scaler=scaler_from_json(doc["scaler"]),
                             split_ids=doc["split_ids"], samples=samples,
                             min_start=int(cfg["min_start"]),
                             pred_len=int(cfg["pred_len"]),
                             max_len=int(cfg["max_len"]), seed=int(cfg["seed"]),
                             test_frac=float(cfg["test_frac"]),
                             val_frac=float(cfg["val_frac"]))
    except (KeyError, TypeError) as exc:
        raise ModelFormatError(f"{path}: malformed dataset file ({exc})") from exc
