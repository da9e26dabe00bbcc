"""Dataset generation: synthesize, filter, normalize, split 9:1, write manifest."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from ..wireframe import (Wireframe, atomic_write_text, build_graph, connected_components,
                         normalize, read_wireframe, write_wireframe)
from .augment import augment
from .house import assemble_house
from .layout import SynthesisConfig, SynthesisFailure, generate_layout

MANIFEST_NAME = "manifest.json"


@dataclass(frozen=True)
class ManifestEntry:
    id: str
    file: str
    split: str
    segment_count: int
    component_count: int
    seed: int


@dataclass(frozen=True)
class DatasetManifest:
    root: Path
    entries: tuple
    global_seed: int = 0
    max_segments: int = 0

    def split(self, name: str) -> list[ManifestEntry]:
        return [e for e in self.entries if e.split == name]

    def load(self, entry: ManifestEntry) -> Wireframe:
        return read_wireframe(self.root / entry.file)

    def load_split(self, name: str | None = None) -> list[Wireframe]:
        entries = self.entries if name is None else self.split(name)
        return [self.load(e) for e in entries]

    def to_json(self) -> str:
        return json.dumps({
            "version": 1,
            "global_seed": self.global_seed,
            "max_segments": self.max_segments,
            "samples": [asdict(e) for e in self.entries],
        }, indent=1)


def read_manifest(path) -> DatasetManifest:
    path = Path(path)
    if path.is_dir():
        path = path / MANIFEST_NAME
    data = json.loads(path.read_text())
    entries = tuple(ManifestEntry(**e) for e in data["samples"])
    return DatasetManifest(path.parent, entries, data.get("global_seed", 0),
                           data.get("max_segments", 0))


def sample_seed(global_seed: int, sample_index: int) -> int:
    return int(np.random.SeedSequence([global_seed, sample_index]).generate_state(1)[0])


def synthesize_sample(cfg: SynthesisConfig, sample_index: int) -> tuple[Wireframe, int]:
    seed = sample_seed(cfg.seed, sample_index)
    rng = np.random.default_rng(seed)
    layout = generate_layout(cfg, rng)
    return assemble_house(layout, cfg), seed


def _split_rank(sample_id: str) -> str:
    return hashlib.sha256(sample_id.encode()).hexdigest()


def assign_splits(ids: list[str], test_fraction: float = 0.1) -> dict[str, str]:
    """Exact 9:1 split: the ids with the smallest hashes go to the test set."""
    n_test = int(round(len(ids) * test_fraction))
    ranked = sorted(ids, key=_split_rank)
    test = set(ranked[:n_test])
    return {i: ("test" if i in test else "train") for i in ids}


def build_dataset(cfg: SynthesisConfig, n_samples: int, out_dir,
                  max_attempts_factor: int = 20) -> DatasetManifest:
    out_dir = Path(out_dir)
    accepted = []
    attempt = 0
    while len(accepted) < n_samples:
        if attempt >= max_attempts_factor * max(n_samples, 1):
            raise SynthesisFailure(
                f"only {len(accepted)} of {n_samples} houses passed the segment filter")
        try:
            house, seed = synthesize_sample(cfg, attempt)
        except SynthesisFailure:
            attempt += 1
            continue
        sid = f"house_{attempt:05d}"
        attempt += 1
        if house.num_segments >= cfg.max_segments:
            continue
        accepted.append((sid, normalize(house), seed))

    splits = assign_splits([sid for sid, _, _ in accepted])
    entries = []
    for sid, house, seed in accepted:
        rel = f"wireframes/{sid}.wf"
        try:
            write_wireframe(out_dir / rel, house)
        except OSError as exc:
            raise OSError(f"{out_dir / rel}: {exc}") from exc
        comps = connected_components(build_graph(house)).component_count
        entries.append(ManifestEntry(sid, rel, splits[sid], house.num_segments, comps, seed))
    manifest = DatasetManifest(out_dir, tuple(entries), cfg.seed, cfg.max_segments)
    write_manifest(manifest)
    return manifest


def write_manifest(manifest: DatasetManifest) -> None:
    path = Path(manifest.root) / MANIFEST_NAME
    try:
        atomic_write_text(path, manifest.to_json())
    except OSError as exc:
        raise OSError(f"{path}: {exc}") from exc


def augment_dataset(manifest: DatasetManifest, out_dir, copies: int,
                    seed: int = 0) -> DatasetManifest:
    """Copy a dataset, adding ``copies`` augmented variants of every training item.

    Test items are copied unchanged. Variant k of item i draws its parameters
    from a generator seeded with (seed, i, k).
    """
    out_dir = Path(out_dir)
    entries = []
    for i, e in enumerate(manifest.entries):
        w = manifest.load(e)
        write_wireframe(out_dir / e.file, w)
        entries.append(e)
        if e.split != "train":
            continue
        for k in range(copies):
            aw = augment(w, np.random.default_rng([seed, i, k]))
            sid = f"{e.id}_aug{k:02d}"
            rel = f"wireframes/{sid}.wf"
            write_wireframe(out_dir / rel, aw)
            comps = connected_components(build_graph(aw)).component_count
            entries.append(ManifestEntry(sid, rel, "train", aw.num_segments, comps, e.seed))
    out = DatasetManifest(out_dir, tuple(entries), manifest.global_seed, manifest.max_segments)
    write_manifest(out)
    return out
