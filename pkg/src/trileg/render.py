"""Top-down schematic frames of the workspace and robot, 640x480 RGB8.

The 50 x 50 mm workspace maps onto the centered 480 x 480 px square at
9.6 px/mm (x rightward, y upward, 80 px horizontal margin).  Frames stand
in for the bench camera: same geometry slot in the protocol and episode
format, schematic content.  Rendering is a pure function of
(RobotState, SceneSpec): identical inputs give byte-identical buffers.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field

import numpy as np
from PIL import Image, ImageDraw, ImageFont

from . import kernels
from .config import WORKSPACE_MM, RobotConfig
from .errors import ValidationError
from .robot import LIFT_MAX_MM, SQUAT_MIN_MM, LegGeometry, RobotState

FRAME_W = 640
FRAME_H = 480
PX_PER_MM = 480.0 / WORKSPACE_MM  # 9.6
X_OFFSET_PX = (FRAME_W - 480) // 2  # 80

# Active square bounds in pixel coordinates (x0, y0, x1, y1), half-open.
ACTIVE = (X_OFFSET_PX, 0, X_OFFSET_PX + 480, 480)

_COLORS = {
    "red": (200, 60, 50),
    "green": (60, 160, 70),
    "blue": (60, 90, 200),
    "black": (30, 30, 30),
    "orange": (230, 150, 40),
    "purple": (140, 70, 180),
    "white": (245, 245, 240),
    "yellow": (240, 210, 60),
}



@dataclass(frozen=True)
class Marker:
    label: str
    position: tuple[float, float]
    color: str = "red"


@dataclass(frozen=True)
class Lesion:
    position: tuple[float, float]
    color: str = "white"  # white or yellow
    radius_mm: float = 3.0


@dataclass(frozen=True)
class SceneSpec:
    background: str = "white-grid"  # or "intestinal-texture"
    markers: tuple[Marker, ...] = field(default_factory=tuple)
    lesions: tuple[Lesion, ...] = field(default_factory=tuple)

    def __post_init__(self):
        if self.background not in ("white-grid", "intestinal-texture"):
            raise ValidationError(f"unknown background {self.background!r}")
        for m in self.markers:
            _check_inside(m.position)
        for s in self.lesions:
            _check_inside(s.position)
            if s.color not in ("white", "yellow"):
                raise ValidationError("lesion color must be white or yellow")

    def to_dict(self) -> dict:
        return {
            "background": self.background,
            "markers": [
                {"label": m.label, "position": list(m.position), "color": m.color}
                for m in self.markers
            ],
            "lesions": [
                {"position": list(s.position), "color": s.color, "radius_mm": s.radius_mm}
                for s in self.lesions
            ],
        }

    @staticmethod
    def from_dict(data: dict) -> "SceneSpec":
        return SceneSpec(
            background=data.get("background", "white-grid"),
            markers=tuple(
                Marker(m["label"], tuple(m["position"]), m.get("color", "red"))
                for m in data.get("markers", [])
            ),
            lesions=tuple(
                Lesion(tuple(s["position"]), s.get("color", "white"), s.get("radius_mm", 3.0))
                for s in data.get("lesions", [])
            ),
        )


def _check_inside(p) -> None:
    if not (0.0 <= p[0] <= WORKSPACE_MM and 0.0 <= p[1] <= WORKSPACE_MM):
        raise ValidationError(f"scene position {p} outside workspace")


def default_scene(task_category: str) -> SceneSpec:
    """Canonical scene for each dataset task category."""
    if task_category == "grid_marker":
        return SceneSpec(
            background="white-grid",
            markers=(Marker("A", (10.0, 10.0), "blue"), Marker("B", (40.0, 40.0), "red")),
        )
    if task_category == "white_lesion":
        return SceneSpec(
            background="intestinal-texture",
            markers=(Marker("A", (10.0, 25.0), "blue"),),
            lesions=(Lesion((40.0, 25.0), "white", 3.0),),
        )
    if task_category == "yellow_lesion":
        return SceneSpec(
            background="intestinal-texture",
            lesions=(Lesion((40.0, 40.0), "yellow", 3.0),),
        )
    raise ValidationError(f"unknown task category {task_category!r}")


def world_to_pixel(p: tuple[float, float]) -> tuple[float, float]:
    """Affine map from workspace mm to pixel coordinates (y axis flipped).

    Out-of-workspace points are clamped to the workspace edge first.
    """
    x = min(max(float(p[0]), 0.0), WORKSPACE_MM)
    y = min(max(float(p[1]), 0.0), WORKSPACE_MM)
    return (X_OFFSET_PX + x * PX_PER_MM, 480.0 - y * PX_PER_MM)


class Renderer:
    """Rasterizes frames; owns no mutable state beyond the leg geometry."""

    def __init__(self, robot_cfg: RobotConfig | None = None) -> None:
        self.robot_cfg = robot_cfg or RobotConfig()
        self.geometry = LegGeometry(self.robot_cfg)
        self.z0 = float(self.robot_cfg.z0_mm)
        self.contact_eps = float(self.robot_cfg.contact_eps_mm)
        self._bg_cache: dict[SceneSpec, np.ndarray] = {}

    # -- scene layers ----------------------------------------------------

    def _background(self, scene: SceneSpec) -> np.ndarray:
        cached = self._bg_cache.get(scene)
        if cached is None:
            cached = self._render_background(scene)
            self._bg_cache[scene] = cached
        return cached.copy()

    def _render_background(self, scene: SceneSpec) -> np.ndarray:
        buf = np.empty((FRAME_H, FRAME_W, 3), dtype=np.uint8)
        buf[:] = (18, 18, 22)  # letterbox outside the active square
        x0, y0, x1, y1 = ACTIVE
        if scene.background == "white-grid":
            buf[y0:y1, x0:x1] = (250, 250, 250)
            for k in range(0, 11):  # 5 mm grid
                px = x0 + int(round(k * 5 * PX_PER_MM))
                px = min(px, x1 - 1)
                buf[y0:y1, px] = (215, 215, 215)
                py = min(y0 + int(round(k * 5 * PX_PER_MM)), y1 - 1)
                buf[py, x0:x1] = (215, 215, 215)
        else:
            buf[y0:y1, x0:x1] = (226, 170, 160)
            # Deterministic mottling: fixed-seed blotches.
            rng = np.random.default_rng(7)
            for _ in range(40):
                cx = x0 + rng.uniform(0, 480)
                cy = y0 + rng.uniform(0, 480)
                r = rng.uniform(10, 45)
                shade = rng.integers(-25, -8)
                yy, xx = np.ogrid[y0:y1, x0:x1]
                mask = (xx - cx) ** 2 + (yy - cy) ** 2 <= r * r
                region = buf[y0:y1, x0:x1].astype(np.int16)
                region[mask] += int(shade)
                buf[y0:y1, x0:x1] = np.clip(region, 0, 255).astype(np.uint8)
        # Workspace border
        buf[y0, x0:x1] = (90, 90, 90)
        buf[y1 - 1, x0:x1] = (90, 90, 90)
        buf[y0:y1, x0] = (90, 90, 90)
        buf[y0:y1, x1 - 1] = (90, 90, 90)

        # Static scene entities live in the cached layer too.
        for lesion in scene.lesions:
            cx, cy = world_to_pixel(lesion.position)
            kernels.draw_disk(
                buf, cx, cy, lesion.radius_mm * PX_PER_MM, *_COLORS[lesion.color], x0, y0, x1, y1
            )
            kernels.draw_ring(
                buf, cx, cy, lesion.radius_mm * PX_PER_MM,
                lesion.radius_mm * PX_PER_MM - 1.5, 150, 110, 90, x0, y0, x1, y1,
            )
        for marker in scene.markers:
            cx, cy = world_to_pixel(marker.position)
            rgb = _COLORS.get(marker.color, _COLORS["red"])
            kernels.draw_disk(buf, cx, cy, 1.2 * PX_PER_MM, *rgb, x0, y0, x1, y1)
            self._draw_label(buf, marker.label, cx, cy - 2.2 * PX_PER_MM, rgb)
        return buf

    def _draw_label(self, buf: np.ndarray, text: str, px: float, py: float, rgb) -> None:
        # Pillow's embedded bitmap font keeps label pixels deterministic.
        im = Image.fromarray(buf, mode="RGB")
        draw = ImageDraw.Draw(im)
        font = ImageFont.load_default()
        left, top, right, bottom = draw.textbbox((0, 0), text, font=font)
        draw.text(
            (int(px) - (right - left) // 2, int(py) - (bottom - top) // 2),
            text,
            fill=tuple(rgb),
            font=font,
        )
        buf[:] = np.asarray(im)

    def _squat_fraction(self, z: float) -> float:
        """0 at full body lift, 1 at full squat."""
        span = LIFT_MAX_MM - SQUAT_MIN_MM
        return min(max((self.z0 + LIFT_MAX_MM - z) / span, 0.0), 1.0)

    def leg_tips(self, state: RobotState) -> list[tuple[float, float]]:
        """Leg tip world positions (mm); squatting splays the legs outward."""
        depth = max(0.0, self.z0 - state.z)
        radius = self.robot_cfg.body_radius_mm * (
            1.0 + self.robot_cfg.squat_spread * depth / -SQUAT_MIN_MM
        )
        tips = []
        for leg in range(3):
            rx, ry = self.geometry.leg_dir_world(leg, state.psi)
            tips.append((state.x + radius * rx, state.y + radius * ry))
        return tips

    def render(self, state: RobotState, scene: SceneSpec) -> np.ndarray:
        """Rasterize one frame; deterministic for identical inputs."""
        buf = self._background(scene)
        x0, y0, x1, y1 = ACTIVE

        # Robot body: filled triangle over the leg tips, darker when squatting.
        tips_px = [world_to_pixel(t) for t in self.leg_tips(state)]
        squat = self._squat_fraction(state.z)
        shade = 1.0 - 0.45 * squat
        body = tuple(int(round(c * shade)) for c in (150, 170, 205))
        (ax, ay), (bx, by), (cx, cy) = tips_px
        kernels.fill_triangle(buf, ax, ay, bx, by, cx, cy, *body, x0, y0, x1, y1)

        # Leg tips: filled dot when in contact, hollow ring when lifted.
        for leg, (px, py) in enumerate(tips_px):
            lifted = state.h[leg] > self.contact_eps
            r_px = 1.5 * PX_PER_MM
            if lifted:
                kernels.draw_ring(buf, px, py, r_px, r_px - 2.5, 40, 40, 90, x0, y0, x1, y1)
            else:
                kernels.draw_disk(buf, px, py, r_px, 40, 40, 90, x0, y0, x1, y1)

        # Heading tick from the centroid toward body-frame +x.
        hx, hy = world_to_pixel(
            (state.x + 3.5 * math.cos(state.psi), state.y + 3.5 * math.sin(state.psi))
        )
        ccx, ccy = world_to_pixel((state.x, state.y))
        kernels.draw_disk(buf, hx, hy, 2.5, 220, 60, 60, x0, y0, x1, y1)
        kernels.draw_disk(buf, ccx, ccy, 2.0, 30, 30, 30, x0, y0, x1, y1)
        return buf

    def robot_pixel_count(self, state: RobotState) -> int:
        """Silhouette size of the body triangle, for the area criterion."""
        tips_px = [world_to_pixel(t) for t in self.leg_tips(state)]
        (ax, ay), (bx, by), (cx, cy) = tips_px
        return int(
            kernels.count_triangle_pixels(ax, ay, bx, by, cx, cy, *ACTIVE)
        )


def encode_png(buf: np.ndarray) -> bytes:
    """Lossless PNG bytes for a rendered frame."""
    out = io.BytesIO()
    Image.fromarray(buf, mode="RGB").save(out, format="PNG", optimize=False)
    return out.getvalue()


def decode_png(data: bytes) -> np.ndarray:
    with Image.open(io.BytesIO(data)) as im:
        return np.asarray(im.convert("RGB"))
