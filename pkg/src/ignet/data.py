"""Dataset ingestion and preparation.

Covers the encoded-filename label schema, grayscale contraction, the
rotation/stretch/noise augmenter, one-hot encoding over factor combinations,
and a synthetic stand-in corpus of separable stroke drawings for desk-scale
runs.  Images are single-channel graymaps normalized to [0, 1].
"""

from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np

from .errors import DataError, FilenameError, UnknownAuthorCodeError
from .pgm import read_pgm, write_pgm
from .rng import as_generator, derive
from .tensor import FeatureMap

# Author letter -> (author gender, self-portrait).  Only these two codes are
# attested in the source labeling; extend via the ``codes`` argument.
AUTHOR_CODES = {
    "w": ("female", False),
    "s": ("male", True),
}


@dataclass(frozen=True)
class LabelRecord:
    """Decoded drawing metadata."""

    age_category: str
    subject_id: int
    author_code: str
    age_months: int
    drawn_gender: str  # "female" or "male"
    author_gender: str
    author_self_portrait: bool

    @property
    def age_label(self) -> str:
        """The years.months form, e.g. 79 months -> '6.7'."""
        return f"{self.age_months // 12}.{self.age_months % 12}"


_FILENAME_RE = re.compile(
    r"^(?P<cat>[a-z][a-z0-9]*)-(?P<id>\d+)(?P<letter>[a-z])"
    r"-(?P<years>\d+)\.(?P<months>\d+)(?P<gender>[fm])\.(?P<ext>[A-Za-z0-9]+)$"
)

_GENDER = {"f": "female", "m": "male"}


def parse_filename(name: str, codes=None) -> LabelRecord:
    """Decode a ``<cat>-<id><letter>-<Y.M><g>.<ext>`` filename.

    ``Y.M`` is years.months, turned into total months; the author letter is
    looked up in ``codes`` (default: the attested w/s table); the trailing
    f/m letter is the gender of the drawn subject.
    """
    codes = AUTHOR_CODES if codes is None else codes
    m = _FILENAME_RE.match(name)
    if not m:
        raise FilenameError(
            f"{name!r} does not match <cat>-<id><letter>-<Y.M><g>.<ext>"
        )
    months = int(m["months"])
    if months > 11:
        raise FilenameError(f"{name!r}: month field {months} exceeds 11")
    letter = m["letter"]
    if letter not in codes:
        raise UnknownAuthorCodeError(
            f"{name!r}: author code {letter!r} not in table "
            f"{sorted(codes.keys())}"
        )
    author_gender, self_portrait = codes[letter]
    return LabelRecord(
        age_category=m["cat"],
        subject_id=int(m["id"]),
        author_code=letter,
        age_months=12 * int(m["years"]) + months,
        drawn_gender=_GENDER[m["gender"]],
        author_gender=author_gender,
        author_self_portrait=self_portrait,
    )


def render_filename(record: LabelRecord, ext: str = "pgm") -> str:
    """Inverse of :func:`parse_filename` for records expressible in the schema."""
    g = "f" if record.drawn_gender == "female" else "m"
    return (
        f"{record.age_category}-{record.subject_id}{record.author_code}"
        f"-{record.age_label}{g}.{ext}"
    )


@dataclass
class Sample:
    """A normalized single-channel image with its decoded label."""

    image: FeatureMap
    label: LabelRecord
    name: str = ""


def regression_target(record: LabelRecord) -> float:
    """Age in months, as the numeric learning target."""
    return float(record.age_months)


# ---------------------------------------------------------------------------
# Image contraction

def _overlap_weights(src: int, dst: int) -> np.ndarray:
    """(dst, src) area-overlap weights; each row sums to 1."""
    w = np.zeros((dst, src))
    scale = src / dst
    for d in range(dst):
        lo = d * scale
        hi = (d + 1) * scale
        first = int(np.floor(lo))
        last = int(np.ceil(hi))
        for s in range(first, min(last, src)):
            overlap = min(hi, s + 1) - max(lo, s)
            if overlap > 0:
                w[d, s] = overlap / scale
    return w


def contract_image(img, target_rows: int, target_cols: int) -> np.ndarray:
    """Area-averaged downscale of a 2-d grid to the target size."""
    arr = np.asarray(img, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError("contract_image expects a 2-d grid")
    if target_rows < 1 or target_cols < 1:
        raise ValueError("target dims must be >= 1")
    if arr.shape == (target_rows, target_cols):
        return arr.copy()
    wr = _overlap_weights(arr.shape[0], target_rows)
    wc = _overlap_weights(arr.shape[1], target_cols)
    return wr @ arr @ wc.T


# ---------------------------------------------------------------------------
# Augmentation

@dataclass
class AugmentConfig:
    """Knobs of the rotation/stretch/noise augmenter.

    ``multiplier`` counts the original: each input yields the original plus
    (multiplier - 1) transformed copies.  ``noise_fraction`` is the portion
    of pixels noised, ``noise_level`` the amplitude of the additive uniform
    perturbation.
    """

    rotation_max_deg: float = 0.0
    stretch_min: float = 1.0
    stretch_max: float = 1.0
    noise_level: float = 0.0
    noise_fraction: float = 0.0
    multiplier: int = 1

    def __post_init__(self):
        if self.multiplier < 1:
            raise ValueError("multiplier must be >= 1")
        if self.stretch_min <= 0 or self.stretch_max < self.stretch_min:
            raise ValueError("stretch factors must be positive and ordered")
        if not 0.0 <= self.noise_level <= 1.0:
            raise ValueError("noise_level must lie in [0, 1]")
        if not 0.0 <= self.noise_fraction <= 1.0:
            raise ValueError("noise_fraction must lie in [0, 1]")


def transform_image(img, angle_deg: float, scale_v: float,
                    scale_h: float) -> np.ndarray:
    """Rotate about the center, then stretch each axis.

    Implemented as one inverse-mapped bilinear resampling onto the original
    frame; reads outside the frame return the background value 0.
    """
    arr = np.asarray(img, dtype=np.float64)
    rows, cols = arr.shape
    cy, cx = (rows - 1) / 2.0, (cols - 1) / 2.0
    yy, xx = np.meshgrid(np.arange(rows) - cy, np.arange(cols) - cx,
                         indexing="ij")
    ty = yy / scale_v
    tx = xx / scale_h
    th = np.deg2rad(angle_deg)
    c, s = np.cos(th), np.sin(th)
    src_y = c * ty + s * tx + cy
    src_x = -s * ty + c * tx + cx
    y0 = np.floor(src_y).astype(np.int64)
    x0 = np.floor(src_x).astype(np.int64)
    fy = src_y - y0
    fx = src_x - x0

    def grab(yi, xi):
        inside = (yi >= 0) & (yi < rows) & (xi >= 0) & (xi < cols)
        vals = arr[np.clip(yi, 0, rows - 1), np.clip(xi, 0, cols - 1)]
        return np.where(inside, vals, 0.0)

    return ((1 - fy) * (1 - fx) * grab(y0, x0)
            + (1 - fy) * fx * grab(y0, x0 + 1)
            + fy * (1 - fx) * grab(y0 + 1, x0)
            + fy * fx * grab(y0 + 1, x0 + 1))


def augment(sample: Sample, cfg: AugmentConfig, rng) -> list:
    """The original plus (multiplier - 1) transformed copies.

    Each copy rotates, stretches, then noises exactly
    round(noise_fraction * pixels) pixels chosen without replacement, with
    the result clamped back to [0, 1].  Labels are copied unchanged.
    """
    rng = as_generator(rng)
    out = [sample]
    img = sample.image.data[0]
    for copy_i in range(cfg.multiplier - 1):
        angle = rng.uniform(-cfg.rotation_max_deg, cfg.rotation_max_deg)
        sv = rng.uniform(cfg.stretch_min, cfg.stretch_max)
        sh = rng.uniform(cfg.stretch_min, cfg.stretch_max)
        warped = transform_image(img, angle, sv, sh)
        k = round(cfg.noise_fraction * warped.size)
        if k:
            flat = warped.ravel()
            picked = rng.choice(warped.size, size=k, replace=False)
            flat[picked] += rng.uniform(-cfg.noise_level, cfg.noise_level,
                                        size=k)
            np.clip(warped, 0.0, 1.0, out=warped)
        out.append(Sample(FeatureMap.from_2d(warped), sample.label,
                          f"{sample.name}#aug{copy_i + 1}"))
    return out


def augment_dataset(samples, cfg: AugmentConfig, seed: int) -> list:
    """Augment every sample with its own derived rng stream.

    Streams are keyed by (seed, sample index), so the output is identical no
    matter how the work is ordered.
    """
    out = []
    for idx, sample in enumerate(samples):
        out.extend(augment(sample, cfg, derive(seed, idx)))
    return out


# ---------------------------------------------------------------------------
# One-hot encoding over factor combinations

FACTOR_GROUPS = ("age", "who_drew", "who_is_drawn", "age_category",
                 "age_in_months")


@dataclass(frozen=True)
class EncoderSpec:
    """Which factor groups participate in the category combination."""

    groups: tuple

    def __post_init__(self):
        if not self.groups:
            raise ValueError("at least one factor group is required")
        unknown = set(self.groups) - set(FACTOR_GROUPS)
        if unknown:
            raise ValueError(f"unknown factor groups: {sorted(unknown)}")
        # canonical order, so equal selections encode identically
        object.__setattr__(
            self, "groups",
            tuple(g for g in FACTOR_GROUPS if g in self.groups),
        )


def factor_values(record: LabelRecord, spec: EncoderSpec) -> tuple:
    vals = []
    for g in spec.groups:
        if g == "age":
            vals.append(record.age_label)
        elif g == "who_drew":
            vals.append(record.author_code)
        elif g == "who_is_drawn":
            vals.append(record.drawn_gender)
        elif g == "age_category":
            vals.append(record.age_category)
        else:  # age_in_months
            vals.append(str(record.age_months))
    return tuple(vals)


def encode_onehot(records, spec: EncoderSpec):
    """(category table, one-hot matrix) over the records' occurring combos.

    The table lists each distinct combination of the selected groups' values,
    sorted lexicographically; row i of the matrix is the one-hot vector of
    record i.
    """
    if not records:
        raise ValueError("no records to encode")
    combos = [factor_values(r, spec) for r in records]
    table = sorted(set(combos))
    index = {c: i for i, c in enumerate(table)}
    vectors = np.zeros((len(records), len(table)))
    for row, combo in enumerate(combos):
        vectors[row, index[combo]] = 1.0
    return table, vectors


def write_category_table(table, path) -> None:
    """One combination per line, values joined by tabs."""
    with open(path, "w", encoding="ascii") as fh:
        for combo in table:
            fh.write("\t".join(combo) + "\n")


# ---------------------------------------------------------------------------
# Synthetic corpus

_CELL = 4  # pixels per grid cell; every stroke stays inside its cell

# 3-pixel stroke shapes, one per class, as (dy, dx) offsets from the anchor
_MOTIFS = (
    ((0, -1), (0, 0), (0, 1)),       # horizontal bar
    ((-1, 0), (0, 0), (1, 0)),       # vertical bar
    ((-1, -1), (0, 0), (1, 1)),      # diagonal
    ((-1, 1), (0, 0), (1, -1)),      # anti-diagonal
    ((0, 0), (0, 1), (1, 0)),        # corner
    ((0, -1), (0, 0), (1, 0)),       # tee
)

_COMBOS = (("w", "f"), ("w", "m"), ("s", "f"), ("s", "m"))

MONTHS_PER_STROKE = 3


def _class_bands(n_cells: int, class_count: int):
    """Disjoint stroke-count bands, one per class, separated by gaps."""
    seg = n_cells // class_count
    if seg < 3:
        raise ValueError(
            f"{n_cells} grid cells cannot hold {class_count} separated bands"
        )
    margin = max(1, seg // 4)
    return [(k * seg + margin, (k + 1) * seg - margin)
            for k in range(class_count)]


def synth_dataset(class_count: int, per_class: int, dims=(36, 58),
                  seed: int = 0) -> list:
    """A separable grayscale corpus with schema-conformant labels.

    Class k draws a distinct 3-pixel stroke motif; its stroke count falls in
    a class-specific band, and the age label is exactly 3 months per stroke,
    so the age is a linear function of total ink and both classification and
    regression are learnable.  Strokes occupy distinct grid cells (no
    overlap).  Deterministic per seed.
    """
    if class_count < 2:
        raise ValueError("class_count must be >= 2")
    if per_class < 1:
        raise ValueError("per_class must be >= 1")
    rows, cols = dims
    grid_r, grid_c = rows // _CELL, cols // _CELL
    n_cells = grid_r * grid_c
    bands = _class_bands(n_cells, class_count)
    samples = []
    uid = 0
    for cls in range(class_count):
        motif = _MOTIFS[cls % len(_MOTIFS)]
        lo, hi = bands[cls]
        for j in range(per_class):
            uid += 1
            rng = derive(seed, uid)
            strokes = int(rng.integers(lo, hi + 1))
            img = np.zeros((rows, cols))
            cells = rng.choice(n_cells, size=strokes, replace=False)
            for cell in cells:
                cr, cc = divmod(int(cell), grid_c)
                ay = cr * _CELL + int(rng.integers(1, _CELL - 1))
                ax = cc * _CELL + int(rng.integers(1, _CELL - 1))
                for dy, dx in motif:
                    img[ay + dy, ax + dx] = 1.0
            months = MONTHS_PER_STROKE * strokes
            code, drawn = _COMBOS[uid % len(_COMBOS)]
            gender, self_portrait = AUTHOR_CODES[code]
            record = LabelRecord(
                age_category=f"g{cls}",
                subject_id=uid,
                author_code=code,
                age_months=months,
                drawn_gender="female" if drawn == "f" else "male",
                author_gender=gender,
                author_self_portrait=self_portrait,
            )
            samples.append(Sample(FeatureMap.from_2d(img), record,
                                  render_filename(record)))
    return samples


def write_dataset(samples, directory) -> None:
    """Emit samples as 8-bit binary graymaps named per the label schema."""
    for sample in samples:
        name = sample.name or render_filename(sample.label)
        grid = np.rint(sample.image.data[0] * 255).astype(np.uint8)
        write_pgm(f"{directory}/{name}", grid)


def load_dataset(directory, codes=None, target_rows=None,
                 target_cols=None) -> list:
    """Read every ``.pgm`` in a directory, sorted by name.

    Pixels are normalized to [0, 1]; when target dims are given and differ
    from the stored size, images are contracted on load.
    """
    import os

    try:
        names = sorted(n for n in os.listdir(directory)
                       if n.lower().endswith(".pgm"))
    except OSError as exc:
        raise DataError(f"cannot list dataset directory {directory}: {exc}")
    if not names:
        raise DataError(f"no .pgm files in {directory}")
    samples = []
    for name in names:
        record = parse_filename(name, codes)
        grid, maxval = read_pgm(os.path.join(directory, name))
        img = grid.astype(np.float64) / maxval
        if target_rows is not None and img.shape != (target_rows, target_cols):
            img = contract_image(img, target_rows, target_cols)
        samples.append(Sample(FeatureMap.from_2d(img), record, name))
    return samples
