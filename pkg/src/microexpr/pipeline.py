"""Per-video enrichment: resize, fixed-length temporal interpolation, then
flow/strain between successive frames, stacked with the grayscale frame.

For an interpolated length of n the pipeline emits n-1 enriched frames;
enriched frame t carries the motion between interpolated frames t and t+1
and frame t itself as the grayscale plane.  The interpolate-first order is
the default; the alternative (motion on the original frames, interpolation
of the enriched stacks) is available behind ``tim_before_flow=False``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dataset import Dataset, VideoSample, resize_frame
from .flow import FlowCache, FlowField, FlowImage, TvL1Config, assemble_flow_image, estimate_flow, quantize_like_cache
from .strain import StrainImage, strain_image_from_flow
from .tim import interpolate


class PipelineError(Exception):
    pass


@dataclass
class EnrichedFrame:
    """One time step of network input: flow image, strain image, gray frame."""
    flow: FlowImage
    strain: StrainImage
    gray: np.ndarray

    def __post_init__(self):
        shapes = {self.flow.p.shape, self.strain.s.shape, self.gray.shape}
        if len(shapes) != 1:
            raise PipelineError(f"plane shapes differ: {shapes}")
        if (self.strain.s < 0).any():
            raise PipelineError("strain plane must be non-negative")

    def stacked(self) -> np.ndarray:
        """(5, H, W) channel stack in (p, q, m, s, g) order."""
        return np.stack([self.flow.p, self.flow.q, self.flow.m,
                         self.strain.s, self.gray], axis=0)


@dataclass
class PipelineConfig:
    side: int = 32
    tim_length: int = 10
    tim_mode: str = "linear"
    tim_before_flow: bool = True
    tvl1: TvL1Config = field(default_factory=TvL1Config)

    @property
    def n_steps(self) -> int:
        """Length of the enriched sequence the recurrent model unrolls over."""
        return self.tim_length - 1


def build_enriched_sequence(sample: VideoSample, cfg: PipelineConfig,
                            cache: FlowCache | None = None) -> list[EnrichedFrame]:
    """Resize, interpolate and enrich one video into its n-1 input frames."""
    if sample.n_frames < 2:
        raise PipelineError(f"video {sample.video_id!r} needs >= 2 frames")
    resized = np.stack([resize_frame(f, cfg.side) for f in sample.frames])
    if cfg.tim_before_flow:
        frames = interpolate(resized, cfg.tim_length, mode=cfg.tim_mode)
        fields = [_flow_between(frames[t], frames[t + 1], cfg.tvl1, cache)
                  for t in range(cfg.tim_length - 1)]
        return [_enrich(fields[t], frames[t]) for t in range(cfg.tim_length - 1)]
    # motion first: enrich the native sequence, then interpolate the stacks
    fields = [_flow_between(resized[t], resized[t + 1], cfg.tvl1, cache)
              for t in range(sample.n_frames - 1)]
    raw = np.stack([_enrich(fields[t], resized[t]).stacked()
                    for t in range(sample.n_frames - 1)])
    if raw.shape[0] == 1:
        raw = np.repeat(raw, 2, axis=0)
    stacks = interpolate(raw, cfg.n_steps, mode=cfg.tim_mode, clamp=False)
    out = []
    for t in range(cfg.n_steps):
        flow = FlowImage(stacks[t, 0], stacks[t, 1], stacks[t, 2])
        strain = StrainImage(np.maximum(stacks[t, 3], 0.0))
        gray = np.clip(stacks[t, 4], 0.0, 1.0)
        out.append(EnrichedFrame(flow, strain, gray))
    return out


def enriched_tensor(sample: VideoSample, cfg: PipelineConfig,
                    cache: FlowCache | None = None) -> np.ndarray:
    """(n-1, 5, H, W) stacked enrichment of one video."""
    return np.stack([ef.stacked() for ef in build_enriched_sequence(sample, cfg, cache)])


@dataclass
class PreparedDataset:
    """Baked network inputs for a whole dataset, ready for fold indexing."""
    inputs: np.ndarray          # (N, n_steps, 5, side, side)
    labels: np.ndarray          # (N,)
    subject_ids: list[str]
    video_ids: list[str]
    gray_mean: float

    def __len__(self) -> int:
        return len(self.labels)


def prepare_dataset(ds: Dataset, cfg: PipelineConfig,
                    cache: FlowCache | None = None) -> PreparedDataset:
    """Enrich every video and subtract the dataset-wide mean from the gray plane.

    Flow/strain planes stay unnormalized; only the grayscale channel is
    mean-centered ("per-dataset mean subtraction").
    """
    if len(ds) == 0:
        raise PipelineError("dataset is empty")
    inputs = np.stack([enriched_tensor(s, cfg, cache) for s in ds.samples])
    gray_mean = float(inputs[:, :, 4].mean())
    inputs[:, :, 4] -= gray_mean
    return PreparedDataset(
        inputs=inputs,
        labels=np.array([s.label for s in ds.samples], dtype=np.intp),
        subject_ids=[s.subject_id for s in ds.samples],
        video_ids=[s.video_id for s in ds.samples],
        gray_mean=gray_mean,
    )


def _flow_between(prev: np.ndarray, nxt: np.ndarray, tvl1: TvL1Config,
                  cache: FlowCache | None) -> FlowField:
    if cache is not None:
        return cache.get_or_compute(prev, nxt, tvl1)
    # match the cache's float32 round-trip so cached and uncached runs agree
    return quantize_like_cache(estimate_flow(prev, nxt, tvl1))


def _enrich(field: FlowField, gray: np.ndarray) -> EnrichedFrame:
    return EnrichedFrame(assemble_flow_image(field), strain_image_from_flow(field), gray)
