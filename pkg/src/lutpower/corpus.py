"""On-disk corpus layout.

Training corpus: ``<root>/<subsystem>/<freq_hz>/<workload>_pass<k>.csv``.
Validation pairs: ``<root>/<f_cpu_hz>_<f_gpu_hz>/<subsystem>_pass<k>.csv``,
one CPU and one GPU recording of the same concurrent run. Every CSV has
its ``.meta.json`` sidecar.
"""

from __future__ import annotations

import re
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Iterable, Mapping

from .errors import DataError
from .trace import (SUBSYSTEMS, MergedTrace, TraceSegment, load_trace, merge_passes,
                    write_trace)

CORPUS_LAYOUT = "<root>/<subsystem>/<freq_hz>/<workload>_pass<k>.csv (+ .meta.json)"
PAIRS_LAYOUT = "<root>/<f_cpu_hz>_<f_gpu_hz>/<subsystem>_pass<k>.csv (+ .meta.json)"

_PASS_FILE = re.compile(r"^(?P<workload>.+)_pass(?P<k>\d+)\.csv$")
_PAIR_DIR = re.compile(r"^(?P<fc>\d+)_(?P<fg>\d+)$")


def corpus_file(root, seg: TraceSegment) -> Path:
    return Path(root) / seg.subsystem / str(seg.frequency) / f"{seg.workload}_pass{seg.pass_id}.csv"


def pair_file(root, f_cpu: int, f_gpu: int, seg: TraceSegment) -> Path:
    return Path(root) / f"{int(f_cpu)}_{int(f_gpu)}" / f"{seg.subsystem}_pass{seg.pass_id}.csv"


def write_corpus(root, segments: Iterable[TraceSegment]) -> list[Path]:
    return [write_trace(seg, corpus_file(root, seg)) for seg in segments]


def write_pairs(root, pairs: Mapping) -> list[Path]:
    """``pairs`` maps ``(f_cpu, f_gpu)`` to ``{subsystem: [segments]}``."""
    out = []
    for (fc, fg), by_sub in sorted(pairs.items()):
        for d in SUBSYSTEMS:
            out += [write_trace(seg, pair_file(root, fc, fg, seg)) for seg in by_sub[d]]
    return out


def _map(fn, items, jobs: int):
    items = list(items)
    if jobs <= 1 or len(items) < 2:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=jobs) as ex:
        return list(ex.map(fn, items))


def scan_corpus(root) -> dict:
    """``(subsystem, freq) -> {workload: [paths]}``, sorted, without loading."""
    root = Path(root)
    if not root.is_dir():
        raise DataError(f"corpus root {root} is not a directory; expected {CORPUS_LAYOUT}")
    found = {}
    for d in SUBSYSTEMS:
        sub = root / d
        if not sub.is_dir():
            continue
        for fdir in sorted(sub.iterdir()):
            if not fdir.is_dir():
                continue
            if not fdir.name.isdigit():
                raise DataError(f"{fdir}: frequency directories must be integer Hz; "
                                f"expected {CORPUS_LAYOUT}")
            by_w = {}
            for p in sorted(fdir.glob("*.csv")):
                m = _PASS_FILE.match(p.name)
                if m is None:
                    raise DataError(f"{p}: file name must be <workload>_pass<k>.csv")
                by_w.setdefault(m["workload"], []).append(p)
            if by_w:
                found[(d, int(fdir.name))] = by_w
    if not found:
        raise DataError(f"no traces under {root}; expected {CORPUS_LAYOUT}")
    return found


def load_corpus(root, jobs: int = 1, subsystems: Iterable[str] | None = None) -> dict:
    """``(subsystem, freq) -> [MergedTrace per workload]`` in workload-name order."""
    found = scan_corpus(root)
    if subsystems is not None:
        keep = set(subsystems)
        found = {k: v for k, v in found.items() if k[0] in keep}
        if not found:
            raise DataError(f"no {'/'.join(sorted(keep))} traces under {root}")
    dvfs = {d: sorted(f for (d2, f) in found if d2 == d) for d in SUBSYSTEMS}
    jobs_list = [(key, w, paths) for key in sorted(found) for w, paths in sorted(found[key].items())]

    def work(item):
        (d, f), w, paths = item
        segs = [load_trace(p, dvfs[d]) for p in paths]
        for s in segs:
            if (s.subsystem, s.frequency) != (d, f):
                raise DataError(f"{s.source}: metadata says {s.subsystem}@{s.frequency}Hz "
                                f"but file lives under {d}/{f}")
        return merge_passes(segs)

    merged = _map(work, jobs_list, jobs)
    out: dict = {}
    for (key, _, _), t in zip(jobs_list, merged):
        out.setdefault(key, []).append(t)
    return out


def load_pairs(root, jobs: int = 1) -> dict:
    """``(f_cpu, f_gpu) -> (cpu MergedTrace, gpu MergedTrace)``."""
    root = Path(root)
    if not root.is_dir():
        raise DataError(f"validation root {root} is not a directory; expected {PAIRS_LAYOUT}")
    items = []
    for pdir in sorted(root.iterdir()):
        m = _PAIR_DIR.match(pdir.name)
        if not pdir.is_dir() or m is None:
            continue
        files = {d: sorted(pdir.glob(f"{d}_pass*.csv")) for d in SUBSYSTEMS}
        missing = [d for d in SUBSYSTEMS if not files[d]]
        if missing:
            raise DataError(f"{pdir}: no {' or '.join(missing)} traces")
        items.append(((int(m["fc"]), int(m["fg"])), files))
    if not items:
        raise DataError(f"no frequency-pair directories under {root}; expected {PAIRS_LAYOUT}")

    def work(item):
        (fc, fg), files = item
        cpu = merge_passes([load_trace(p) for p in files["cpu"]])
        gpu = merge_passes([load_trace(p) for p in files["gpu"]])
        if (cpu.frequency, gpu.frequency) != (fc, fg):
            raise DataError(f"{root / f'{fc}_{fg}'}: metadata frequencies "
                            f"{cpu.frequency}/{gpu.frequency} do not match the directory")
        return cpu, gpu

    loaded = _map(work, items, jobs)
    return {key: pair for (key, _), pair in zip(items, loaded)}


def merged(segments: Iterable[TraceSegment]) -> list[MergedTrace]:
    """Group segments by workload and merge each group's passes."""
    by_w = {}
    for s in segments:
        by_w.setdefault(s.workload, []).append(s)
    return [merge_passes(by_w[w]) for w in sorted(by_w)]
