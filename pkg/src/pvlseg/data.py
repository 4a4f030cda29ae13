"""Synthetic prompt-conditioned segmentation corpus.

Scenes are 64x64 grayscale canvases holding one prompted target class
(circle, rectangle or triangle; possibly two instances) plus up to two
distractor objects of other shapes, over a noisy background with a
low-frequency intensity gradient. Captions are produced by the template
pipeline: attributes extracted from the mask (location, component count,
shape, brightness) fill a small deterministic template bank, with styles
covering original / underdescriptive / overdescriptive / contradictory /
missing-location perturbations. The OOD variant re-renders the same test
scenes with tripled noise and a 0.6 gamma shift (optional inversion).
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import ndimage

from .metrics import CROSS
from .tensor import Rng

CANVAS = 64
MIN_MASK_PIXELS = 20

SHAPES = ("circle", "rectangle", "triangle")
SHAPE_WORDS = {"circle": "round", "rectangle": "rectangular", "triangle": "triangular"}
LOCATION_WORDS = ("upper-left", "upper-right", "lower-left", "lower-right",
                  "center", "left", "right")
SIZE_CLASSES = ("small", "medium", "large")
STYLES = ("original", "underdescriptive", "overdescriptive", "contradictory",
          "missing_location")

# classification thresholds fixed from pixel-counting measurements on
# digital shapes (see tests): disks score >= ~0.79 circularity and
# triangles <= ~0.65 under the corner-cut contour perimeter; axis-aligned
# rectangles fill their bounding box exactly
CIRCULARITY_ROUND_THRESHOLD = 0.72
RECT_EXTENT_THRESHOLD = 0.90


# -- PGM IO -------------------------------------------------------------------


def write_pgm(path, arr: np.ndarray):
    arr = np.asarray(arr, dtype=np.uint8)
    with open(path, "wb") as fh:
        fh.write(f"P5\n{arr.shape[1]} {arr.shape[0]}\n255\n".encode())
        fh.write(arr.tobytes())


def read_pgm(path) -> np.ndarray:
    with open(path, "rb") as fh:
        data = fh.read()
    if not data.startswith(b"P5"):
        raise IOError(f"{path}: not a binary PGM file")
    fields: list[bytes] = []
    pos = 2
    while len(fields) < 3:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos] != 0x0A:
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        fields.append(data[start:pos])
    w, h, maxval = (int(f) for f in fields)
    if maxval != 255:
        raise IOError(f"{path}: expected 8-bit PGM")
    pos += 1
    return np.frombuffer(data[pos:pos + w * h], dtype=np.uint8).reshape(h, w)


# -- shape rasterization ------------------------------------------------------


def _raster_circle(radius: int) -> np.ndarray:
    n = 2 * radius + 1
    ii, jj = np.mgrid[0:n, 0:n]
    return (ii - radius) ** 2 + (jj - radius) ** 2 <= radius * radius


def _raster_rectangle(h: int, w: int) -> np.ndarray:
    return np.ones((h, w), dtype=bool)


def _raster_triangle(base: int) -> np.ndarray:
    h = base
    patch = np.zeros((h, base + 1), dtype=bool)
    c = base // 2
    for r in range(h):
        half = int(round((r + 1) / h * base / 2))
        patch[r, max(0, c - half):min(base + 1, c + half + 1)] = True
    return patch


def rasterize(shape: str, size_param) -> np.ndarray:
    if shape == "circle":
        return _raster_circle(size_param)
    if shape == "rectangle":
        return _raster_rectangle(*size_param)
    if shape == "triangle":
        return _raster_triangle(size_param)
    raise ValueError(f"unknown shape {shape!r}")


def _patch_centroid(patch: np.ndarray) -> tuple[float, float]:
    ii, jj = np.nonzero(patch)
    return float(ii.mean()), float(jj.mean())


def place_patch(canvas_mask: np.ndarray, patch: np.ndarray, cy: float, cx: float) -> bool:
    """Stamp the patch so its centroid lands at (cy, cx); False if out of bounds."""
    pcy, pcx = _patch_centroid(patch)
    top = int(round(cy - pcy))
    left = int(round(cx - pcx))
    h, w = patch.shape
    if top < 0 or left < 0 or top + h > canvas_mask.shape[0] or left + w > canvas_mask.shape[1]:
        return False
    canvas_mask[top:top + h, left:left + w] |= patch
    return True


# -- scene specification ------------------------------------------------------


@dataclass
class ObjectSpec:
    shape: str
    size_param: object
    cy: float
    cx: float
    level: int
    is_target: bool


@dataclass
class OodShift:
    noise_scale: float = 3.0
    gamma: float = 0.6
    invert: bool = False


@dataclass
class SceneSpec:
    objects: list[ObjectSpec]
    target_shape: str
    location_word: str
    number_word: str
    brightness_word: str
    background_level: float
    gradient: tuple[float, float]
    noise_sigma: float = 6.0
    canvas: int = CANVAS


def _size_param_for(shape: str, size_class: str, rng: Rng):
    pick = lambda lo, hi: lo + int(rng.uniform() * (hi - lo + 1))
    if shape == "circle":
        ranges = {"small": (4, 6), "medium": (7, 9), "large": (10, 12)}
        return pick(*ranges[size_class])
    if shape == "rectangle":
        ranges = {"small": (7, 10), "medium": (11, 16), "large": (17, 24)}
        return (pick(*ranges[size_class]), pick(*ranges[size_class]))
    ranges = {"small": (10, 13), "medium": (14, 19), "large": (20, 26)}
    return pick(*ranges[size_class])


def _half_extent(shape: str, size_param) -> int:
    if shape == "circle":
        return size_param
    if shape == "rectangle":
        return (max(size_param) + 1) // 2
    return (size_param + 1) // 2


def _location_box(word: str, half: int, canvas: int) -> tuple[float, float, float, float]:
    """Safe centroid sampling box (ymin, ymax, xmin, xmax) for a location word.

    Boxes keep a 3 px margin from every third-of-canvas boundary so the
    discrete centroid of any placed shape extracts back to the same word.
    """
    t = canvas / 3.0
    lo = half + 1
    hi = canvas - half - 2
    margin = 3.0
    bands = {
        0: (lo, t - margin),                # low third
        1: (t + margin, 2 * t - margin),    # middle third
        2: (2 * t + margin, hi),            # high third
    }
    rows = {"upper-left": 0, "upper-right": 0, "center": 1, "left": 1, "right": 1,
            "lower-left": 2, "lower-right": 2}[word]
    cols = {"upper-left": 0, "lower-left": 0, "left": 0, "center": 1,
            "upper-right": 2, "lower-right": 2, "right": 2}[word]
    ry = (max(bands[rows][0], lo), min(bands[rows][1], hi))
    rx = (max(bands[cols][0], lo), min(bands[cols][1], hi))
    return ry[0], ry[1], rx[0], rx[1]


def _collapse_location(cy: float, cx: float, canvas: int) -> str:
    t = canvas / 3.0
    row = 0 if cy < t else (1 if cy < 2 * t else 2)
    col = 0 if cx < t else (1 if cx < 2 * t else 2)
    table = {
        (0, 0): "upper-left", (0, 2): "upper-right",
        (2, 0): "lower-left", (2, 2): "lower-right",
        (1, 1): "center", (1, 0): "left", (1, 2): "right",
    }
    if (row, col) in table:
        return table[(row, col)]
    # centroid in a top/bottom middle cell: collapse toward the nearer corner
    side = "left" if cx <= canvas / 2 else "right"
    return f"{'upper' if row == 0 else 'lower'}-{side}"


def sample_scene(rng: Rng, n_distractors: int | None = None) -> SceneSpec:
    """Random scene: target objects of one shape class plus distractors of
    other classes, all disjoint and fully inside the canvas."""
    target_shape = SHAPES[int(rng.uniform() * 3)]
    multiple = rng.uniform() < 0.3
    size_class = "small" if multiple else SIZE_CLASSES[int(rng.uniform() * 3)]
    location = LOCATION_WORDS[int(rng.uniform() * 7)]
    bright = rng.uniform() < 0.5
    level = (190 + int(rng.uniform() * 46)) if bright else (25 + int(rng.uniform() * 46))

    objects: list[ObjectSpec] = []
    occupancy = np.zeros((CANVAS, CANVAS), dtype=bool)

    def try_place(shape, size_param, cy, cx, lvl, is_target) -> bool:
        patch = rasterize(shape, size_param)
        trial = np.zeros_like(occupancy)
        if not place_patch(trial, patch, cy, cx):
            return False
        grown = ndimage.binary_dilation(trial, structure=CROSS, iterations=2)
        if (grown & occupancy).any():
            return False
        occupancy[:] |= trial
        objects.append(ObjectSpec(shape, size_param, cy, cx, lvl, is_target))
        return True

    size_param = _size_param_for(target_shape, size_class, rng)
    half = _half_extent(target_shape, size_param)
    if multiple:
        off = half + 3 + int(rng.uniform() * 3)
        y0, y1, x0, x1 = _location_box(location, half, CANVAS)
        x0, x1 = max(x0, off + half + 1), min(x1, CANVAS - off - half - 2)
        if x0 >= x1:
            multiple = False
        else:
            cy = y0 + rng.uniform() * (y1 - y0)
            cx = x0 + rng.uniform() * (x1 - x0)
            ok = try_place(target_shape, size_param, cy, cx - off, level, True)
            ok &= try_place(target_shape, size_param, cy, cx + off, level, True)
            if not ok:
                multiple = False
                objects.clear()
                occupancy[:] = False
    if not multiple:
        for _ in range(60):
            y0, y1, x0, x1 = _location_box(location, half, CANVAS)
            cy = y0 + rng.uniform() * (y1 - y0)
            cx = x0 + rng.uniform() * (x1 - x0)
            if try_place(target_shape, size_param, cy, cx, level, True):
                break
        else:
            raise RuntimeError("could not place target object")

    if n_distractors is None:
        # at least one distractor per scene: segmentation stays unsolvable
        # without reading the prompt
        n_distractors = 1 + int(rng.uniform() * 2)
    others = [s for s in SHAPES if s != target_shape]
    for _ in range(n_distractors):
        shape = others[int(rng.uniform() * len(others))]
        size_param = _size_param_for(shape, SIZE_CLASSES[int(rng.uniform() * 2)], rng)
        dhalf = _half_extent(shape, size_param)
        dbright = rng.uniform() < 0.5
        dlevel = (190 + int(rng.uniform() * 46)) if dbright else (25 + int(rng.uniform() * 46))
        for _ in range(60):
            cy = dhalf + 1 + rng.uniform() * (CANVAS - 2 * dhalf - 3)
            cx = dhalf + 1 + rng.uniform() * (CANVAS - 2 * dhalf - 3)
            if try_place(shape, size_param, cy, cx, dlevel, False):
                break
        # unplaceable distractors are simply dropped

    return SceneSpec(
        objects=objects,
        target_shape=target_shape,
        location_word=location,
        number_word="multiple" if multiple else "single",
        brightness_word="bright" if bright else "dark",
        background_level=105 + rng.uniform() * 35,
        gradient=(rng.uniform() - 0.5, rng.uniform() - 0.5),
    )


def render_scene(spec: SceneSpec, noise_rng: Rng,
                 ood: OodShift | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Rasterize a scene -> (uint8 image, bool target mask)."""
    n = spec.canvas
    yy, xx = np.mgrid[0:n, 0:n]
    img = np.full((n, n), spec.background_level, dtype=np.float64)
    img += spec.gradient[0] * (yy - n / 2) + spec.gradient[1] * (xx - n / 2)
    target_mask = np.zeros((n, n), dtype=bool)
    for obj in spec.objects:
        m = np.zeros((n, n), dtype=bool)
        place_patch(m, rasterize(obj.shape, obj.size_param), obj.cy, obj.cx)
        img[m] = obj.level
        if obj.is_target:
            target_mask |= m
    sigma = spec.noise_sigma * (ood.noise_scale if ood else 1.0)
    img += noise_rng.normal((n, n)) * sigma
    img = np.clip(img, 0.0, 255.0)
    if ood is not None:
        img = (img / 255.0) ** ood.gamma * 255.0
        if ood.invert:
            img = 255.0 - img
    return np.round(img).astype(np.uint8), target_mask


# -- attribute extraction (caption pipeline, step 2) -------------------------


@dataclass
class CaptionRecord:
    image_id: int
    is_lesion: bool
    class_word: str = "lesion"
    location_word: str = ""
    number_word: str = ""
    shape_word: str = ""
    brightness_word: str = ""
    style: str = "original"
    text: str = ""


def contour_perimeter(mask: np.ndarray) -> float:
    """Length of the 0.5-level contour: axis edge count with staircase
    corners cut to diagonals (each corner trades two half-edges for a
    sqrt(2)/2 segment)."""
    m = np.pad(np.asarray(mask, dtype=np.uint8), 1)
    edges = int((m[1:, :] != m[:-1, :]).sum() + (m[:, 1:] != m[:, :-1]).sum())
    blk = m[:-1, :-1] + m[:-1, 1:] + m[1:, :-1] + m[1:, 1:]
    corners = int(((blk == 1) | (blk == 3)).sum())
    checker = (blk == 2) & (m[:-1, :-1] == m[1:, 1:]) & (m[:-1, :-1] != m[:-1, 1:])
    corners += 2 * int(checker.sum())
    return edges - corners * (1.0 - np.sqrt(2.0) / 2.0)


def circularity(mask: np.ndarray) -> float:
    """4*pi*A / perimeter^2 on the discrete grid."""
    area = int(np.count_nonzero(mask))
    if area == 0:
        return 0.0
    p = contour_perimeter(mask)
    return 4.0 * np.pi * area / (p * p)


def classify_shape(mask: np.ndarray) -> str:
    """Shape word for one connected component (largest if several)."""
    labels, count = ndimage.label(mask, structure=CROSS)
    if count == 0:
        return ""
    if count > 1:
        sizes = ndimage.sum_labels(np.ones_like(labels), labels, range(1, count + 1))
        mask = labels == (int(np.argmax(sizes)) + 1)
    else:
        mask = labels == 1
    ii, jj = np.nonzero(mask)
    bbox_area = (ii.max() - ii.min() + 1) * (jj.max() - jj.min() + 1)
    extent = mask.sum() / bbox_area
    if extent >= RECT_EXTENT_THRESHOLD:
        return "rectangular"
    if circularity(mask) > CIRCULARITY_ROUND_THRESHOLD:
        return "round"
    return "triangular"


def extract_attributes(mask: np.ndarray, image: np.ndarray,
                       image_id: int = 0) -> CaptionRecord:
    """Caption attributes read back from a mask and its image."""
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        return CaptionRecord(image_id=image_id, is_lesion=False, class_word="normal")
    _, count = ndimage.label(mask, structure=CROSS)
    ii, jj = np.nonzero(mask)
    location = _collapse_location(float(ii.mean()), float(jj.mean()), mask.shape[0])
    img = np.asarray(image, dtype=np.float64)
    inside = img[mask].mean()
    outside = img[~mask].mean() if (~mask).any() else 0.0
    return CaptionRecord(
        image_id=image_id,
        is_lesion=True,
        location_word=location,
        number_word="single" if count == 1 else "multiple",
        shape_word=classify_shape(mask),
        brightness_word="bright" if inside > outside else "dark",
    )


# -- template filling (caption pipeline, step 3) ------------------------------

LESION_TEMPLATES = {
    "original": [
        "one {number} {brightness} {shape} lesion, located in {location} of the image",
        "a {brightness} {shape} lesion is present in the {location} region",
        "{number} {shape} lesion observed toward the {location}, {brightness} in appearance",
    ],
    "underdescriptive": [
        "lesion present.",
        "lesion detected.",
        "a lesion is visible.",
    ],
    "overdescriptive": [
        "one {number} clearly defined {brightness} {shape} lesion with well-demarcated "
        "margins and homogeneous internal texture, located in {location} of the image",
        "a prominently {brightness} {shape} lesion exhibiting smooth contours and uniform "
        "density is present in the {location} region of the image",
        "{number} {shape} lesion of distinctly {brightness} appearance with regular borders "
        "and consistent internal texture, situated toward the {location}",
    ],
    "contradictory": [
        "one {number} {brightness} {shape} lesion in {location} of the image, "
        "but the image appears completely normal",
        "a {brightness} {shape} lesion is detected in the {location} region, "
        "though no lesion is visible",
        "{number} {shape} lesion present at the {location}, "
        "yet the scan shows no abnormality at all",
    ],
    "missing_location": [
        "one {number} {brightness} {shape} lesion in the image",
        "a {brightness} {shape} lesion is present",
        "{number} {shape} lesion detected, {brightness} in appearance",
    ],
}

NORMAL_TEMPLATES = {
    "original": [
        "the image appears normal with no visible lesion",
        "no lesion is detected in the image",
    ],
    "underdescriptive": [
        "normal image.",
        "no findings.",
    ],
    "overdescriptive": [
        "the tissue appears entirely healthy, with homogeneous texture throughout "
        "and no focal abnormality anywhere in the image",
        "a completely unremarkable scan showing uniform intensity and no lesion",
    ],
    "contradictory": [
        "normal image with a visible lesion present",
        "no findings, but a lesion is clearly seen",
    ],
    "missing_location": [
        "the image appears normal with no visible lesion",
        "no lesion is detected in the image",
    ],
}


def fill_template(record: CaptionRecord, style: str) -> str:
    """Deterministic template filling, cycled by image id."""
    if style not in STYLES:
        raise ValueError(f"unknown caption style {style!r}")
    bank = LESION_TEMPLATES[style] if record.is_lesion else NORMAL_TEMPLATES[style]
    template = bank[record.image_id % len(bank)]
    return template.format(
        number=record.number_word, brightness=record.brightness_word,
        shape=record.shape_word, location=record.location_word,
    )


def caption_for_scene(spec: SceneSpec, image_id: int, style: str) -> CaptionRecord:
    record = CaptionRecord(
        image_id=image_id,
        is_lesion=True,
        location_word=spec.location_word,
        number_word=spec.number_word,
        shape_word=SHAPE_WORDS[spec.target_shape],
        brightness_word=spec.brightness_word,
        style=style,
    )
    record.text = fill_template(record, style)
    return record


# -- corpus -------------------------------------------------------------------

OOD_STREAM_SALT = 1_000_000


@dataclass
class Sample:
    image_id: int
    split: str
    style: str
    text: str
    image: np.ndarray = field(repr=False)
    mask: np.ndarray = field(repr=False)


def object_mask(spec: SceneSpec, obj: ObjectSpec) -> np.ndarray:
    mask = np.zeros((spec.canvas, spec.canvas), dtype=bool)
    place_patch(mask, rasterize(obj.shape, obj.size_param), obj.cy, obj.cx)
    return mask


def _distractor_record(spec: SceneSpec, img: np.ndarray) -> tuple[np.ndarray, CaptionRecord] | None:
    """Mask and verified caption attributes for the scene's first distractor."""
    for obj in spec.objects:
        if obj.is_target:
            continue
        mask = object_mask(spec, obj)
        if mask.sum() < MIN_MASK_PIXELS:
            return None
        rec = extract_attributes(mask, img)
        if rec.shape_word != SHAPE_WORDS[obj.shape]:
            return None
        return mask, rec
    return None


def build_scene(seed: int, index: int) -> tuple[SceneSpec, np.ndarray, np.ndarray,
                                                tuple[np.ndarray, CaptionRecord]]:
    """Deterministic scene for (seed, index), resampled until the planted
    attributes survive the extraction round trip for both the target and
    the first distractor (which becomes the counterfactual prompt)."""
    rng = Rng(seed).spawn(index)
    for attempt in range(40):
        spec = sample_scene(rng)
        img, mask = render_scene(spec, rng)
        if mask.sum() < MIN_MASK_PIXELS:
            continue
        rec = extract_attributes(mask, img)
        if not (rec.location_word == spec.location_word
                and rec.number_word == spec.number_word
                and rec.shape_word == SHAPE_WORDS[spec.target_shape]
                and rec.brightness_word == spec.brightness_word):
            continue
        other = _distractor_record(spec, img)
        if other is None:
            continue
        return spec, img, mask, other
    raise RuntimeError(f"scene {index}: attributes never stabilized")


def generate_corpus(seed: int, n_train: int, n_test: int, ood: bool, out_dir: str,
                    style: str = "original") -> dict[str, int]:
    """Write images/, masks/ and prompts.tsv; returns per-split counts.

    Each scene contributes two samples over the same pixels: the target
    object prompted by its own caption, and the first distractor prompted
    as a counterfactual. A prompt-blind model therefore cannot fit even
    the training split.
    """
    if n_train < 1 or n_test < 1:
        raise ValueError("split sizes must be >= 1")
    if style not in STYLES:
        raise ValueError(f"unknown caption style {style!r}")
    img_dir = os.path.join(out_dir, "images")
    mask_dir = os.path.join(out_dir, "masks")
    os.makedirs(img_dir, exist_ok=True)
    os.makedirs(mask_dir, exist_ok=True)

    rows = []
    counts: dict[str, int] = {}
    next_id = 0

    def emit(split, img, mask, text):
        nonlocal next_id
        name = f"{next_id:04d}"
        write_pgm(os.path.join(img_dir, name + ".pgm"), img)
        write_pgm(os.path.join(mask_dir, name + ".pgm"),
                  np.where(mask, 255, 0).astype(np.uint8))
        rows.append((name, split, style, text))
        counts[split] = counts.get(split, 0) + 1
        next_id += 1

    def scene_samples(idx):
        spec, img, mask, (alt_mask, alt_rec) = build_scene(seed, idx)
        record = caption_for_scene(spec, idx * 2, style)
        alt_rec.image_id = idx * 2 + 1
        alt_rec.style = style
        alt_text = fill_template(alt_rec, style)
        return spec, img, [(mask, record.text), (alt_mask, alt_text)]

    n_train_scenes = (n_train + 1) // 2
    n_test_scenes = (n_test + 1) // 2
    test_scenes = []
    for idx in range(n_train_scenes + n_test_scenes):
        split = "train" if idx < n_train_scenes else "test"
        budget = n_train if split == "train" else n_train + n_test
        spec, img, pairs = scene_samples(idx)
        emitted = []
        for mask, text in pairs:
            if next_id < budget:
                emit(split, img, mask, text)
                emitted.append((mask, text))
        if split == "test" and emitted:
            test_scenes.append((idx, spec, emitted))

    if ood:
        shift = OodShift()
        for idx, spec, emitted in test_scenes:
            noise_rng = Rng(seed).spawn(OOD_STREAM_SALT + idx)
            img, _ = render_scene(spec, noise_rng, ood=shift)
            for mask, text in emitted:
                emit("test_ood", img, mask, text)

    with open(os.path.join(out_dir, "prompts.tsv"), "w", encoding="utf-8") as fh:
        fh.write("id\tsplit\tstyle\ttext\n")
        for row in rows:
            fh.write("\t".join(row) + "\n")
    return counts


def load_corpus(data_dir: str, splits=None) -> list[Sample]:
    """Read a corpus directory back into memory."""
    prompts = os.path.join(data_dir, "prompts.tsv")
    if not os.path.exists(prompts):
        raise IOError(f"no prompts.tsv under {data_dir}")
    samples = []
    with open(prompts, encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n").split("\t")
        for line in fh:
            rec = dict(zip(header, line.rstrip("\n").split("\t")))
            if splits is not None and rec["split"] not in splits:
                continue
            img = read_pgm(os.path.join(data_dir, "images", rec["id"] + ".pgm"))
            mask = read_pgm(os.path.join(data_dir, "masks", rec["id"] + ".pgm")) > 127
            samples.append(Sample(
                image_id=int(rec["id"]), split=rec["split"], style=rec["style"],
                text=rec["text"], image=img, mask=mask))
    return samples


def image_to_input(img: np.ndarray) -> np.ndarray:
    """uint8 grayscale -> [3, H, W] float in [-1, 1]."""
    x = np.asarray(img, dtype=np.float64) / 255.0 * 2.0 - 1.0
    return np.stack([x, x, x])


def prompt_switch_scene(seed: int) -> tuple[np.ndarray, list[tuple[str, np.ndarray]]]:
    """One image holding two different-shape objects, with an original-style
    prompt and its own mask for each: the text-conditioning probe."""
    rng = Rng(seed, stream=31337)
    shapes = list(SHAPES)
    a = shapes[int(rng.uniform() * 3)]
    b = [s for s in shapes if s != a][int(rng.uniform() * 2)]
    spec_a = None
    for _ in range(50):
        left_first = rng.uniform() < 0.5
        loc_a, loc_b = ("left", "right") if left_first else ("right", "left")
        objs = []
        occupancy = np.zeros((CANVAS, CANVAS), bool)
        ok = True
        for shape, loc in ((a, loc_a), (b, loc_b)):
            size = _size_param_for(shape, "medium", rng)
            half = _half_extent(shape, size)
            y0, y1, x0, x1 = _location_box(loc, half, CANVAS)
            cy = y0 + rng.uniform() * (y1 - y0)
            cx = x0 + rng.uniform() * (x1 - x0)
            trial = np.zeros_like(occupancy)
            if not place_patch(trial, rasterize(shape, size), cy, cx):
                ok = False
                break
            if (ndimage.binary_dilation(trial, structure=CROSS, iterations=2) & occupancy).any():
                ok = False
                break
            occupancy |= trial
            bright = rng.uniform() < 0.5
            level = (190 + int(rng.uniform() * 46)) if bright else (25 + int(rng.uniform() * 46))
            objs.append(ObjectSpec(shape, size, cy, cx, level, True))
        if ok:
            spec_a = objs
            break
    if spec_a is None:
        raise RuntimeError("could not build the two-object probe scene")

    base = SceneSpec(objects=[], target_shape=a, location_word="left",
                     number_word="single", brightness_word="bright",
                     background_level=105 + rng.uniform() * 35,
                     gradient=(rng.uniform() - 0.5, rng.uniform() - 0.5))
    pairs = []
    noise_rng = Rng(seed, stream=31338)
    scene = replace(base, objects=spec_a)
    img, _ = render_scene(scene, noise_rng)
    for obj in spec_a:
        mask = np.zeros((CANVAS, CANVAS), bool)
        place_patch(mask, rasterize(obj.shape, obj.size_param), obj.cy, obj.cx)
        rec = extract_attributes(mask, img)
        rec.shape_word = SHAPE_WORDS[obj.shape]
        text = fill_template(rec, "original")
        pairs.append((text, mask))
    return img, pairs
