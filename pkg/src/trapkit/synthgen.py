"""Procedural synthetic RGB-D scenes with exact ground truth.

A scene is a textured ground plane seen by a pitched pinhole camera, plus
animal silhouettes (parametric body/head/leg shapes, gait-animated) rendered
as constant-depth billboards standing on the ground. Intensity, depth, class
and instance maps come out of one rasterization pass and are consistent by
construction. The camouflage knob blends animal luminance into the local
background so that intensity alone carries little signal while depth still
separates the animal from the ground behind it.

Rendering is deterministic: the same spec always yields the same frame.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .imaging import (
    CLASS_NAMES,
    BinaryMask,
    DepthMap,
    IntensityImage,
    LabeledInstance,
    mask_to_rle,
    read_pgm16,
    rle_to_mask,
    write_pgm16,
)

SKY_DEPTH = math.inf


@dataclass(frozen=True)
class CameraSpec:
    height: float                 # meters above ground
    pitch: float                  # degrees, downward positive
    fov: float                    # horizontal field of view, degrees
    image: tuple[int, int]        # (width, height) pixels

    def __post_init__(self):
        if not 10.0 < self.fov < 120.0:
            raise ValueError(f"fov {self.fov} outside (10, 120)")
        if self.height <= 0:
            raise ValueError("camera height must be positive")

    @property
    def focal_px(self) -> float:
        return (self.image[0] / 2.0) / math.tan(math.radians(self.fov) / 2.0)


@dataclass(frozen=True)
class IlluminationSpec:
    azimuth: float                # degrees
    elevation: float              # degrees above horizon
    intensity_scale: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.elevation <= 90.0:
            raise ValueError("elevation outside [0, 90]")


@dataclass(frozen=True)
class AnimalSpec:
    class_id: int
    ground_position: tuple[float, float]   # (x, z) meters, camera at origin
    heading: float                          # degrees
    scale: float = 1.0
    gait_phase: float = 0.0

    def __post_init__(self):
        if self.ground_position[1] <= 0:
            raise ValueError("animal must stand in front of the camera (z > 0)")
        if not 0.0 <= self.gait_phase < 1.0:
            raise ValueError("gait_phase outside [0, 1)")
        if self.class_id < 0 or self.class_id >= len(CLASS_NAMES):
            raise ValueError(f"unknown class id {self.class_id}")


@dataclass(frozen=True)
class BackgroundSpec:
    texture_seed: int
    mean_luminance: float = 90.0   # 0-255 scale
    noise_amplitude: float = 9.0


@dataclass(frozen=True)
class SceneSpec:
    seed: int
    camera: CameraSpec
    illumination: IlluminationSpec
    animals: tuple[AnimalSpec, ...]
    background: BackgroundSpec
    camouflage: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.camouflage <= 1.0:
            raise ValueError("camouflage outside [0, 1]")
        object.__setattr__(self, "animals", tuple(self.animals))


@dataclass(frozen=True)
class RenderedFrame:
    """Intensity, depth and per-pixel class/instance ids (0 = background).

    ``class_map`` stores class_id + 1 so that 0 stays free for background;
    instance ids are consecutive from 1 in animal-list order over the animals
    that ended up visible.
    """

    intensity: IntensityImage
    depth: DepthMap
    class_map: np.ndarray
    instance_map: np.ndarray


# silhouette recipe per class: sizes in meters, everything else in local
# (u along body, v bottom-to-top) unit coordinates
_SHAPES = {
    0: dict(name="deer", length=1.70, height=1.50, albedo=110.0,
            body=(0.50, 0.66, 0.32, 0.15, 2.4), head=(0.86, 0.88, 0.11, 0.09),
            neck=(0.74, 0.78, 0.10, 0.14), leg_top=0.56, leg_w=0.035, ears=None, tail=None),
    1: dict(name="boar", length=1.20, height=0.85, albedo=70.0,
            body=(0.52, 0.58, 0.40, 0.26, 2.8), head=(0.90, 0.52, 0.12, 0.13),
            neck=None, leg_top=0.36, leg_w=0.05, ears=None, tail=None),
    2: dict(name="hare", length=0.55, height=0.42, albedo=150.0,
            body=(0.45, 0.48, 0.34, 0.30, 2.2), head=(0.78, 0.62, 0.14, 0.13),
            neck=None, leg_top=0.22, leg_w=0.06, ears=(0.80, 0.88, 0.05, 0.14), tail=None),
    3: dict(name="fox", length=0.95, height=0.60, albedo=125.0,
            body=(0.52, 0.55, 0.30, 0.17, 2.3), head=(0.84, 0.66, 0.10, 0.10),
            neck=None, leg_top=0.38, leg_w=0.035, ears=None, tail=(0.12, 0.52, 0.16, 0.09)),
}

_LEG_POSITIONS = (0.26, 0.40, 0.64, 0.78)
_LEG_SWAY = 0.06


def _silhouette(class_id: int, gait_phase: float, flip: bool, uu: np.ndarray, vv: np.ndarray) -> np.ndarray:
    """Evaluate the class silhouette on local-coordinate grids."""
    p = _SHAPES[class_id]
    u = 1.0 - uu if flip else uu
    v = vv

    def ellipse(cu, cv, au, av, power=2.0):
        with np.errstate(over="ignore"):
            return (np.abs((u - cu) / au) ** power + np.abs((v - cv) / av) ** power) <= 1.0

    cu, cv, au, av, power = p["body"]
    inside = ellipse(cu, cv, au, av, power)
    inside |= ellipse(*p["head"])
    if p["neck"]:
        inside |= ellipse(*p["neck"])
    if p["ears"]:
        eu, ev, ea, eb = p["ears"]
        inside |= ellipse(eu - 0.05, ev, ea, eb)
        inside |= ellipse(eu + 0.05, ev, ea, eb)
    if p["tail"]:
        inside |= ellipse(*p["tail"])
    top = p["leg_top"]
    for k, lu in enumerate(_LEG_POSITIONS):
        sway = _LEG_SWAY * math.sin(2.0 * math.pi * (gait_phase + k / 4.0))
        centers = lu + sway * np.clip((top - v) / top, 0.0, 1.0)
        inside |= (np.abs(u - centers) <= p["leg_w"]) & (v <= top)
    return inside


def _value_noise(seed: int, h: int, w: int, cells: int, amplitude: float) -> np.ndarray:
    """Bilinear value noise in [-amplitude, amplitude]."""
    rng = np.random.default_rng(seed)
    grid = rng.uniform(-1.0, 1.0, (cells + 1, cells + 1))
    gy = np.linspace(0.0, cells, h)
    gx = np.linspace(0.0, cells, w)
    y0 = np.minimum(gy.astype(int), cells - 1)
    x0 = np.minimum(gx.astype(int), cells - 1)
    fy = (gy - y0)[:, None]
    fx = (gx - x0)[None, :]
    g00 = grid[np.ix_(y0, x0)]
    g01 = grid[np.ix_(y0, x0 + 1)]
    g10 = grid[np.ix_(y0 + 1, x0)]
    g11 = grid[np.ix_(y0 + 1, x0 + 1)]
    return amplitude * ((1 - fy) * ((1 - fx) * g00 + fx * g01) + fy * ((1 - fx) * g10 + fx * g11))


def _ground_depth(camera: CameraSpec) -> np.ndarray:
    """Ground-plane z-depth in meters per pixel; +inf above the horizon."""
    w, h = camera.image
    f = camera.focal_px
    theta = math.radians(camera.pitch)
    yn = (np.arange(h) + 0.5 - h / 2.0) / f
    denom = math.sin(theta) + yn * math.cos(theta)
    with np.errstate(divide="ignore"):
        s = np.where(denom > 1e-9, camera.height / np.where(denom > 1e-9, denom, 1.0), SKY_DEPTH)
    return np.broadcast_to(s[:, None], (h, w)).copy()


def _anchor_depth(camera: CameraSpec, animal: AnimalSpec) -> float:
    ax, az = animal.ground_position
    theta = math.radians(camera.pitch)
    return camera.height * math.sin(theta) + az * math.cos(theta)


def _projected_rect(camera: CameraSpec, animal: AnimalSpec):
    """Billboard rectangle (float pixel bounds) and its constant depth."""
    shape = _SHAPES[animal.class_id]
    z0 = _anchor_depth(camera, animal)
    ax, az = animal.ground_position
    theta = math.radians(camera.pitch)
    f = camera.focal_px
    w, h = camera.image
    # project the feet point
    qx, qy, qz = ax, -camera.height, az
    xn = qx / z0
    yn = -(qy * math.cos(theta) + qz * math.sin(theta)) / z0
    px_f = xn * f + w / 2.0 - 0.5
    py_f = yn * f + h / 2.0 - 0.5
    fore = max(0.35, abs(math.cos(math.radians(animal.heading))))
    width_px = f * shape["length"] * animal.scale * fore / z0
    height_px = f * shape["height"] * animal.scale / z0
    return (px_f - width_px / 2.0, py_f - height_px, px_f + width_px / 2.0, py_f, z0)


def render_scene(spec: SceneSpec) -> RenderedFrame:
    """Rasterize one scene into intensity/depth/class/instance maps."""
    camera = spec.camera
    w, h = camera.image
    ground_s = _ground_depth(camera)

    sin_el = math.sin(math.radians(spec.illumination.elevation))
    scale = spec.illumination.intensity_scale
    bg = spec.background
    noise = (_value_noise(bg.texture_seed, h, w, 7, bg.noise_amplitude)
             + _value_noise(bg.texture_seed + 1, h, w, 17, bg.noise_amplitude * 0.5))
    luma = np.where(np.isfinite(ground_s),
                    (bg.mean_luminance + noise) * scale,
                    0.25 * bg.mean_luminance * scale)

    bg_luma = luma.copy()   # pristine background, camouflage blends toward this
    zbuf = ground_s.copy()
    class_map = np.zeros((h, w), dtype=np.int32)
    raw_instance = np.zeros((h, w), dtype=np.int32)

    for spec_a in spec.animals:
        if spec_a.ground_position[1] <= 0:
            raise ValueError("animal behind the camera")

    # far to near so nearer billboards overwrite; stable for equal depths
    order = sorted(range(len(spec.animals)),
                   key=lambda i: -_anchor_depth(camera, spec.animals[i]))
    az_light = math.radians(spec.illumination.azimuth)
    light = (math.cos(math.radians(spec.illumination.elevation)) * math.sin(az_light),
             math.cos(math.radians(spec.illumination.elevation)) * math.cos(az_light))

    for idx in order:
        animal = spec.animals[idx]
        x0f, y0f, x1f, y1f, z0 = _projected_rect(camera, animal)
        x0, x1 = max(0, int(math.floor(x0f))), min(w - 1, int(math.ceil(x1f)))
        y0, y1 = max(0, int(math.floor(y0f))), min(h - 1, int(math.ceil(y1f)))
        if x1 < x0 or y1 < y0 or x1f <= x0f or y1f <= y0f:
            continue
        xs = np.arange(x0, x1 + 1)
        ys = np.arange(y0, y1 + 1)
        uu = (xs[None, :] - x0f) / (x1f - x0f)
        vv = (y1f - ys[:, None]) / (y1f - y0f)
        uu = np.broadcast_to(uu, (ys.size, xs.size))
        vv = np.broadcast_to(vv, (ys.size, xs.size))
        ok = (uu >= 0) & (uu <= 1) & (vv >= 0) & (vv <= 1)
        flip = math.cos(math.radians(animal.heading)) < 0
        sil = ok & _silhouette(animal.class_id, animal.gait_phase, flip, uu, vv)
        win = sil & (z0 < zbuf[y0:y1 + 1, x0:x1 + 1])
        if not win.any():
            continue

        # flat billboard shading: lambert against the camera-facing normal
        ax, az_pos = animal.ground_position
        norm = math.hypot(ax, az_pos)
        nx, nz = (-ax / norm, -az_pos / norm)
        lambert = max(0.0, nx * light[0] + nz * light[1])
        albedo = _SHAPES[animal.class_id]["albedo"]
        shade = albedo * (0.45 + 0.55 * lambert) * (0.85 + 0.30 * vv * max(0.0, sin_el)) * scale
        blended = (1.0 - spec.camouflage) * shade + spec.camouflage * bg_luma[y0:y1 + 1, x0:x1 + 1]

        region = (slice(y0, y1 + 1), slice(x0, x1 + 1))
        zbuf[region][win] = z0
        class_map[region][win] = animal.class_id + 1
        raw_instance[region][win] = idx + 1
        patch = luma[region]
        patch[win] = blended[win]

    # compact instance ids to 1..k in animal order over visible animals
    instance_map = np.zeros((h, w), dtype=np.int32)
    next_id = 1
    for idx in range(len(spec.animals)):
        sel = raw_instance == idx + 1
        if sel.any():
            instance_map[sel] = next_id
            next_id += 1

    depth_mm = np.where(np.isfinite(zbuf), np.rint(zbuf * 1000.0), 0.0)
    depth_mm[depth_mm > 65535] = 0.0   # beyond 16-bit range counts as missing
    depth_mm = depth_mm.astype(np.uint16)
    intensity = np.clip(np.rint(np.clip(luma, 0.0, 255.0) * 257.0), 0, 65535).astype(np.uint16)
    return RenderedFrame(IntensityImage(intensity), DepthMap(depth_mm), class_map, instance_map)


@dataclass(frozen=True)
class SceneRanges:
    """Sampling ranges for randomized scenes; collapse a pair to fix a value."""

    image: tuple[int, int] = (96, 96)
    cam_height: tuple[float, float] = (2.2, 4.0)
    cam_pitch: tuple[float, float] = (14.0, 26.0)
    cam_fov: tuple[float, float] = (45.0, 60.0)
    illum_azimuth: tuple[float, float] = (0.0, 360.0)
    illum_elevation: tuple[float, float] = (15.0, 75.0)
    illum_intensity: tuple[float, float] = (0.85, 1.15)
    n_animals: tuple[int, int] = (1, 2)
    classes: tuple[int, ...] = (0, 1, 2, 3)
    animal_z: tuple[float, float] = (3.5, 6.5)
    animal_xfrac: tuple[float, float] = (-0.7, 0.7)
    heading: tuple[float, float] = (0.0, 360.0)
    scale: tuple[float, float] = (0.85, 1.15)
    gait: tuple[float, float] = (0.0, 1.0)
    bg_mean: tuple[float, float] = (70.0, 110.0)
    camouflage: tuple[float, float] = (0.0, 0.0)
    separate: bool = True          # resample until billboards do not overlap


def _rects_overlap(a, b, margin=2.0) -> bool:
    return not (a[2] + margin < b[0] or b[2] + margin < a[0]
                or a[3] + margin < b[1] or b[3] + margin < a[1])


def sample_scene(seed: int, ranges: SceneRanges = SceneRanges()) -> SceneSpec:
    """Draw one SceneSpec; the same seed always yields the same spec."""
    rng = np.random.default_rng(seed)
    camera = CameraSpec(
        height=rng.uniform(*ranges.cam_height),
        pitch=rng.uniform(*ranges.cam_pitch),
        fov=rng.uniform(*ranges.cam_fov),
        image=ranges.image,
    )
    illum = IlluminationSpec(
        azimuth=rng.uniform(*ranges.illum_azimuth),
        elevation=rng.uniform(*ranges.illum_elevation),
        intensity_scale=rng.uniform(*ranges.illum_intensity),
    )
    background = BackgroundSpec(
        texture_seed=int(rng.integers(0, 2**31 - 1)),
        mean_luminance=rng.uniform(*ranges.bg_mean),
    )
    camouflage = rng.uniform(*ranges.camouflage)
    n = int(rng.integers(ranges.n_animals[0], ranges.n_animals[1] + 1))
    half_tan = math.tan(math.radians(camera.fov) / 2.0)

    def draw_animal() -> AnimalSpec:
        cls = int(ranges.classes[rng.integers(0, len(ranges.classes))])
        z = rng.uniform(*ranges.animal_z)
        x = rng.uniform(*ranges.animal_xfrac) * z * half_tan
        return AnimalSpec(
            class_id=cls,
            ground_position=(x, z),
            heading=rng.uniform(*ranges.heading),
            scale=rng.uniform(*ranges.scale),
            gait_phase=rng.uniform(ranges.gait[0], min(ranges.gait[1], 1.0 - 1e-9)),
        )

    animals: list[AnimalSpec] = []
    for _ in range(n):
        candidate = draw_animal()
        if ranges.separate:
            for _ in range(40):
                rect = _projected_rect(camera, candidate)
                if not any(_rects_overlap(rect, _projected_rect(camera, a)) for a in animals):
                    break
                candidate = draw_animal()
        animals.append(candidate)

    return SceneSpec(seed=seed, camera=camera, illumination=illum,
                     animals=tuple(animals), background=background,
                     camouflage=camouflage)


def derive_annotations(frame: RenderedFrame) -> list[LabeledInstance]:
    """Ground-truth instances straight from the instance/class maps."""
    out = []
    ids = np.unique(frame.instance_map)
    for inst_id in ids[ids > 0]:
        sel = frame.instance_map == inst_id
        classes = np.unique(frame.class_map[sel])
        if classes.size != 1 or classes[0] == 0:
            raise ValueError(f"instance {inst_id} has inconsistent class pixels")
        out.append(LabeledInstance.from_mask(int(classes[0]) - 1, BinaryMask(sel)))
    return out


# ---------------------------------------------------------------------------
# dataset on disk: per-split PGM pairs + one annotations JSON
# ---------------------------------------------------------------------------


@dataclass
class DatasetFrame:
    image_id: int
    intensity: IntensityImage
    depth: DepthMap
    instances: list[LabeledInstance]

    def class_map(self) -> np.ndarray:
        """Rebuild the dense class target (0 background, else class_id + 1)."""
        cm = np.zeros(self.intensity.shape, dtype=np.int32)
        for inst in self.instances:
            cm[inst.mask.bits] = inst.class_id + 1
        return cm


def _canonical_json(payload) -> str:
    return json.dumps(payload, sort_keys=True, separators=(",", ":"))


def write_dataset(frames: Sequence[RenderedFrame], split: str, out_dir) -> dict:
    """Persist frames under ``out_dir/<split>/`` and return the split manifest."""
    if not frames:
        raise ValueError("refusing to write an empty split")
    split_dir = os.path.join(out_dir, split)
    os.makedirs(split_dir, exist_ok=True)
    images, annotations = [], []
    per_class = {name: 0 for name in CLASS_NAMES}
    for i, frame in enumerate(frames):
        int_name = f"frame_{i:05d}.int.pgm"
        dep_name = f"frame_{i:05d}.dep.pgm"
        write_pgm16(os.path.join(split_dir, int_name), frame.intensity.pixels)
        write_pgm16(os.path.join(split_dir, dep_name), frame.depth.mm)
        images.append({
            "id": i,
            "intensity": int_name,
            "depth": dep_name,
            "width": frame.intensity.width,
            "height": frame.intensity.height,
        })
        for inst in derive_annotations(frame):
            annotations.append({
                "image_id": i,
                "class_id": inst.class_id,
                "bbox": inst.bbox.as_list(),
                "mask": mask_to_rle(inst.mask),
            })
            per_class[CLASS_NAMES[inst.class_id]] += 1
    payload = {"split": split, "images": images, "annotations": annotations}
    with open(os.path.join(split_dir, "annotations.json"), "w", encoding="utf-8") as fh:
        fh.write(_canonical_json(payload))
    return {
        "split": split,
        "frames": len(frames),
        "instances": sum(per_class.values()),
        "per_class": per_class,
    }


def load_split(out_dir, split: str) -> list[DatasetFrame]:
    """Read a split written by :func:`write_dataset`."""
    split_dir = os.path.join(out_dir, split)
    with open(os.path.join(split_dir, "annotations.json"), encoding="utf-8") as fh:
        payload = json.load(fh)
    by_image: dict[int, list[LabeledInstance]] = {}
    for ann in payload["annotations"]:
        inst = LabeledInstance.from_mask(ann["class_id"], rle_to_mask(ann["mask"]))
        by_image.setdefault(ann["image_id"], []).append(inst)
    frames = []
    for im in payload["images"]:
        frames.append(DatasetFrame(
            image_id=im["id"],
            intensity=IntensityImage(read_pgm16(os.path.join(split_dir, im["intensity"]))),
            depth=DepthMap(read_pgm16(os.path.join(split_dir, im["depth"]))),
            instances=by_image.get(im["id"], []),
        ))
    return frames


def generate_dataset(seed: int, n_frames: int, split_ratio: float, out_dir,
                     ranges: SceneRanges = SceneRanges(),
                     camouflage: Optional[float] = None) -> dict:
    """Sample, render and persist a train/test dataset; returns the manifest."""
    if not 0.0 < split_ratio < 1.0:
        raise ValueError("split_ratio must be in (0, 1)")
    if camouflage is not None:
        ranges = replace(ranges, camouflage=(camouflage, camouflage))
    n_train = max(1, int(round(n_frames * split_ratio)))
    n_test = max(1, n_frames - n_train)
    rendered = [render_scene(sample_scene(seed + i, ranges)) for i in range(n_train + n_test)]
    manifest = {
        "seed": seed,
        "train": write_dataset(rendered[:n_train], "train", out_dir),
        "test": write_dataset(rendered[n_train:], "test", out_dir),
    }
    with open(os.path.join(out_dir, "manifest.json"), "w", encoding="utf-8") as fh:
        fh.write(json.dumps(manifest, sort_keys=True, indent=2))
    return manifest
