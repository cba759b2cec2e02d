"""Dense optical flow between frame pairs via a duality-based TV-L1 solver.

The solver minimizes  E(u) = sum_x [ lambda * |I1(x + u) - I0(x)| + |grad u1| + |grad u2| ]
by coarse-to-fine warping.  At each warp the brightness-constancy residual is
linearized and the relaxed problem is solved by alternating a point-wise
thresholding step (data term) with a projected dual update (total variation),
following the classic primal-dual scheme.  Each warp is energy-guarded: a
candidate field (including the optional median-filtered one) is only accepted
if it does not increase the true nonlinear energy, so the objective is
non-increasing across warps by construction.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .imageops import median3x3, resize_bilinear, warp_bilinear

_GRAD_EPS = 1e-12
MIN_SIDE = 16
# The canonical solver parameters (lam, theta, tau) assume 8-bit-range
# intensities; frames arrive in [0, 1], so the solver works on scaled copies.
INTENSITY_SCALE = 255.0


class FlowError(Exception):
    pass


@dataclass
class TvL1Config:
    lam: float = 0.15            # data-attachment weight
    theta: float = 0.3           # quadratic relaxation tightness
    tau: float = 0.25            # dual step size (stability requires <= 0.25)
    n_warps: int = 5
    n_iters_per_warp: int = 25
    pyramid_levels: int | None = None   # None: deepest pyramid with coarsest side >= 16
    pyramid_scale: float = 0.5
    median_filter: bool = True

    def __post_init__(self):
        if self.tau > 0.25 or self.tau <= 0:
            raise ValueError("tau must be in (0, 0.25]")
        if not 0.0 < self.pyramid_scale < 1.0:
            raise ValueError("pyramid_scale must be in (0, 1)")
        for name in ("n_warps", "n_iters_per_warp"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.pyramid_levels is not None and self.pyramid_levels < 1:
            raise ValueError("pyramid_levels must be >= 1")
        if self.lam <= 0 or self.theta <= 0:
            raise ValueError("lam and theta must be positive")

    def cache_token(self) -> str:
        levels = "auto" if self.pyramid_levels is None else str(self.pyramid_levels)
        return (f"lam={self.lam!r};theta={self.theta!r};tau={self.tau!r};"
                f"warps={self.n_warps};iters={self.n_iters_per_warp};"
                f"levels={levels};scale={self.pyramid_scale!r};med={self.median_filter}")


@dataclass
class FlowField:
    p: np.ndarray    # horizontal displacement, pixels/frame
    q: np.ndarray    # vertical displacement, pixels/frame

    def __post_init__(self):
        p = np.asarray(self.p, dtype=np.float64)
        q = np.asarray(self.q, dtype=np.float64)
        if p.shape != q.shape or p.ndim != 2:
            raise FlowError(f"p and q must be 2-D with identical shape, got {p.shape} and {q.shape}")
        if not (np.isfinite(p).all() and np.isfinite(q).all()):
            raise FlowError("flow field contains non-finite values")
        self.p, self.q = p, q

    @property
    def height(self) -> int:
        return self.p.shape[0]

    @property
    def width(self) -> int:
        return self.p.shape[1]


@dataclass
class FlowImage:
    """3-plane (p, q, m) flow image; channels carry raw, unnormalized values."""
    p: np.ndarray
    q: np.ndarray
    m: np.ndarray

    def stacked(self) -> np.ndarray:
        return np.stack([self.p, self.q, self.m], axis=-1)


def assemble_flow_image(f: FlowField) -> FlowImage:
    return FlowImage(f.p.copy(), f.q.copy(), np.hypot(f.p, f.q))


def flow_energy(prev: np.ndarray, nxt: np.ndarray, p: np.ndarray, q: np.ndarray,
                lam: float, intensity_scale: float = INTENSITY_SCALE) -> float:
    """The TV-L1 objective at flow (p, q): L1 data term + isotropic TV of each component.

    ``intensity_scale`` maps [0, 1] frames onto the solver's working range so
    the value matches what :func:`estimate_flow` minimizes.
    """
    return _energy(np.asarray(prev, dtype=np.float64) * intensity_scale,
                   np.asarray(nxt, dtype=np.float64) * intensity_scale,
                   p, q, lam)


def _energy(prev: np.ndarray, nxt: np.ndarray, p: np.ndarray, q: np.ndarray,
            lam: float) -> float:
    warped = warp_bilinear(nxt, p, q)
    data = lam * np.abs(warped - prev).sum()
    tv = 0.0
    for u in (p, q):
        gx, gy = _forward_diff(u)
        tv += np.sqrt(gx * gx + gy * gy).sum()
    return float(data + tv)


def estimate_flow(prev: np.ndarray, nxt: np.ndarray, cfg: TvL1Config | None = None,
                  return_energies: bool = False):
    """Estimate dense flow from ``prev`` to ``nxt``.

    With ``return_energies`` the per-warp energies of the finest pyramid level
    are returned alongside the field (non-increasing by construction).
    """
    cfg = cfg or TvL1Config()
    prev = np.asarray(prev, dtype=np.float64)
    nxt = np.asarray(nxt, dtype=np.float64)
    if prev.shape != nxt.shape:
        raise FlowError(f"frame shapes differ: {prev.shape} vs {nxt.shape}")
    if prev.ndim != 2 or min(prev.shape) < MIN_SIDE:
        raise FlowError(f"frames must be 2-D with min side >= {MIN_SIDE}")

    shapes = _pyramid_shapes(prev.shape, cfg)
    pyr_prev = _build_pyramid(prev * INTENSITY_SCALE, shapes)
    pyr_next = _build_pyramid(nxt * INTENSITY_SCALE, shapes)

    p = np.zeros(shapes[-1])
    q = np.zeros(shapes[-1])
    energies: list[float] = []
    for level in range(len(shapes) - 1, -1, -1):
        i0, i1 = pyr_prev[level], pyr_next[level]
        if level != len(shapes) - 1:
            sy = shapes[level][0] / shapes[level + 1][0]
            sx = shapes[level][1] / shapes[level + 1][1]
            p = resize_bilinear(p, *shapes[level]) * sx
            q = resize_bilinear(q, *shapes[level]) * sy
        p, q, level_energies = _solve_level(i0, i1, p, q, cfg)
        if level == 0:
            energies = level_energies
    field = FlowField(p, q)
    if return_energies:
        return field, energies
    return field


def flow_sequence(frames: np.ndarray, cfg: TvL1Config | None = None) -> list[FlowField]:
    """Flow between each pair of successive frames: N frames -> N-1 fields."""
    frames = np.asarray(frames, dtype=np.float64)
    if frames.ndim != 3 or frames.shape[0] < 2:
        raise FlowError("need at least 2 frames")
    return [estimate_flow(frames[t], frames[t + 1], cfg) for t in range(frames.shape[0] - 1)]


# ---------------------------------------------------------------------------
# solver internals
# ---------------------------------------------------------------------------

def _pyramid_shapes(shape: tuple[int, int], cfg: TvL1Config) -> list[tuple[int, int]]:
    shapes = [shape]
    while True:
        if cfg.pyramid_levels is not None and len(shapes) >= cfg.pyramid_levels:
            break
        h = int(round(shapes[-1][0] * cfg.pyramid_scale))
        w = int(round(shapes[-1][1] * cfg.pyramid_scale))
        if cfg.pyramid_levels is None and min(h, w) < MIN_SIDE:
            break
        if min(h, w) < 4:
            break
        shapes.append((h, w))
    return shapes


def _box3(img: np.ndarray) -> np.ndarray:
    padded = np.pad(img, 1, mode="edge")
    h, w = img.shape
    acc = np.zeros_like(img)
    for dy in range(3):
        for dx in range(3):
            acc += padded[dy:dy + h, dx:dx + w]
    return acc / 9.0


def _build_pyramid(img: np.ndarray, shapes: list[tuple[int, int]]) -> list[np.ndarray]:
    levels = [img]
    for shape in shapes[1:]:
        levels.append(resize_bilinear(_box3(levels[-1]), *shape))
    return levels


def _forward_diff(u: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    gx = np.zeros_like(u)
    gy = np.zeros_like(u)
    gx[:, :-1] = u[:, 1:] - u[:, :-1]
    gy[:-1, :] = u[1:, :] - u[:-1, :]
    return gx, gy


def _divergence(px: np.ndarray, py: np.ndarray) -> np.ndarray:
    div = np.zeros_like(px)
    div[:, 0] += px[:, 0]
    div[:, 1:] += px[:, 1:] - px[:, :-1]
    div[0, :] += py[0, :]
    div[1:, :] += py[1:, :] - py[:-1, :]
    return div


def _central_grad(img: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    gx = np.gradient(img, axis=1)
    gy = np.gradient(img, axis=0)
    return gx, gy


def _solve_level(i0: np.ndarray, i1: np.ndarray, p: np.ndarray, q: np.ndarray,
                 cfg: TvL1Config) -> tuple[np.ndarray, np.ndarray, list[float]]:
    i1x, i1y = _central_grad(i1)
    dual_px = np.zeros((2,) + p.shape)
    dual_qy = np.zeros((2,) + p.shape)
    lt = cfg.lam * cfg.theta
    sigma = cfg.tau / cfg.theta
    energy = _energy(i0, i1, p, q, cfg.lam)
    energies = []
    for _ in range(cfg.n_warps):
        u1_0, u2_0 = p.copy(), q.copy()
        w = warp_bilinear(i1, u1_0, u2_0)
        wx = warp_bilinear(i1x, u1_0, u2_0)
        wy = warp_bilinear(i1y, u1_0, u2_0)
        grad_sq = wx * wx + wy * wy
        rho_c = w - wx * u1_0 - wy * u2_0 - i0

        for _ in range(cfg.n_iters_per_warp):
            rho = rho_c + wx * p + wy * q
            # point-wise prox of the linearized L1 data term
            th = lt * grad_sq
            below = rho < -th
            above = rho > th
            middle = ~(below | above)
            d1 = np.where(below, lt * wx, np.where(above, -lt * wx, 0.0))
            d2 = np.where(below, lt * wy, np.where(above, -lt * wy, 0.0))
            safe = grad_sq > _GRAD_EPS
            scale = np.where(middle & safe, -rho / np.where(safe, grad_sq, 1.0), 0.0)
            v1 = p + d1 + scale * wx
            v2 = q + d2 + scale * wy
            # TV step: primal from dual divergence, then projected dual ascent
            p = v1 + cfg.theta * _divergence(dual_px[0], dual_px[1])
            q = v2 + cfg.theta * _divergence(dual_qy[0], dual_qy[1])
            for u, dual in ((p, dual_px), (q, dual_qy)):
                gx, gy = _forward_diff(u)
                denom = 1.0 + sigma * np.sqrt(gx * gx + gy * gy)
                dual[0] = (dual[0] + sigma * gx) / denom
                dual[1] = (dual[1] + sigma * gy) / denom

        candidates = [(p, q)]
        if cfg.median_filter:
            candidates.append((median3x3(p), median3x3(q)))
        best = (energy, u1_0, u2_0)
        for cp, cq in candidates:
            e = _energy(i0, i1, cp, cq, cfg.lam)
            if e < best[0]:
                best = (e, cp, cq)
        energy, p, q = best
        energies.append(energy)
    return p, q, energies


# ---------------------------------------------------------------------------
# binary flow files and the content-addressed cache
# ---------------------------------------------------------------------------

FLO2_SUFFIX = ".flo2"


def write_flo2(field: FlowField, path: str | Path) -> None:
    """Binary flow file: uint32 width, uint32 height, float32 planes p then q (LE)."""
    path = Path(path)
    with path.open("wb") as fh:
        fh.write(struct.pack("<II", field.width, field.height))
        fh.write(field.p.astype("<f4").tobytes())
        fh.write(field.q.astype("<f4").tobytes())


def read_flo2(path: str | Path) -> FlowField:
    data = Path(path).read_bytes()
    if len(data) < 8:
        raise FlowError(f"truncated flow file: {path}")
    width, height = struct.unpack_from("<II", data)
    n = width * height
    expected = 8 + 2 * 4 * n
    if len(data) != expected:
        raise FlowError(f"flow file {path} has {len(data)} bytes, expected {expected}")
    planes = np.frombuffer(data, dtype="<f4", offset=8)
    p = planes[:n].reshape(height, width).astype(np.float64)
    q = planes[n:].reshape(height, width).astype(np.float64)
    return FlowField(p, q)


class FlowCache:
    """Disk cache of flow fields keyed by content hash of (frame pair, config).

    Stored fields are float32; freshly computed fields are passed through the
    same quantization so warm and cold runs produce identical results.
    """

    def __init__(self, directory: str | Path):
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)

    @staticmethod
    def key(prev: np.ndarray, nxt: np.ndarray, cfg: TvL1Config) -> str:
        digest = hashlib.sha256()
        digest.update(str(prev.shape).encode())
        digest.update(np.ascontiguousarray(prev, dtype=np.float64).tobytes())
        digest.update(np.ascontiguousarray(nxt, dtype=np.float64).tobytes())
        digest.update(cfg.cache_token().encode())
        return digest.hexdigest()

    def get_or_compute(self, prev: np.ndarray, nxt: np.ndarray, cfg: TvL1Config) -> FlowField:
        path = self.directory / (self.key(prev, nxt, cfg) + FLO2_SUFFIX)
        if path.is_file():
            return read_flo2(path)
        field = estimate_flow(prev, nxt, cfg)
        write_flo2(field, path)
        return read_flo2(path)


def quantize_like_cache(field: FlowField) -> FlowField:
    """Apply the cache's float32 round-trip without touching disk."""
    return FlowField(field.p.astype(np.float32).astype(np.float64),
                     field.q.astype(np.float32).astype(np.float64))


def default_config_for_side(side: int) -> TvL1Config:
    """Default solver configuration; pyramid depth keyed to the frame side."""
    return TvL1Config(pyramid_levels=None) if side >= MIN_SIDE else TvL1Config(pyramid_levels=1)
