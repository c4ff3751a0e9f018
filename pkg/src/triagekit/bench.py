"""Latency and worker-scaling benchmark harness.

Replays a deterministic mix of scripted triage sessions against a running
service at a fixed concurrency, once per worker count, and records latency
percentiles, throughput and scaling efficiency. Reports are persisted with
environment metadata; cross-machine, only the single-traverse and p99 gates
are meant to be asserted.
"""

from __future__ import annotations

import asyncio
import json
import os
import platform
import random
import statistics
import subprocess
import sys
import time
from dataclasses import dataclass, field, asdict
from pathlib import Path

import httpx

from .errors import BenchError

HEALTH_TIMEOUT = 30.0


@dataclass
class BenchConfig:
    graph_path: str
    ontology_path: str
    workers: tuple[int, ...] = (1, 2, 4)
    concurrency: int = 30
    sessions_per_run: int = 120
    seed: int = 7
    port: int = 8441
    host: str = "127.0.0.1"


@dataclass
class BenchReport:
    worker_count: int
    concurrency: int
    sessions: int
    requests: int
    mean_ms: float
    p50_ms: float
    p95_ms: float
    p99_ms: float
    throughput_rps: float
    wall_seconds: float

    def validate(self) -> None:
        if not (self.p50_ms <= self.p95_ms <= self.p99_ms):
            raise BenchError("latency percentiles not monotone")


def _percentile(samples: list[float], q: float) -> float:
    if not samples:
        return 0.0
    ordered = sorted(samples)
    idx = min(int(q * len(ordered)), len(ordered) - 1)
    return ordered[idx]


def build_session_scripts(n: int, seed: int, concepts: list[str]) -> list[dict]:
    """Deterministic session scripts: initial concept(s) plus a fixed stream
    of yes/no answers; the same mix is replayed for every worker count."""
    rng = random.Random(seed)
    scripts = []
    for i in range(n):
        first = rng.choice(concepts)
        initial = [first]
        if rng.random() < 0.4:
            second = rng.choice(concepts)
            if second != first:
                initial.append(second)
        scripts.append(
            {
                "age": rng.randint(5, 85),
                "gender": rng.choice(["female", "male"]),
                "concepts": initial,
                "answers": [rng.random() < 0.35 for _ in range(16)],
            }
        )
    return scripts


async def _drive_session(client: httpx.AsyncClient, base: str, script: dict, latencies: list[float]) -> int:
    async def timed_post(url: str, body: dict) -> dict:
        t0 = time.perf_counter()
        response = await client.post(url, json=body)
        latencies.append((time.perf_counter() - t0) * 1000.0)
        response.raise_for_status()
        return response.json()

    payload = await timed_post(
        f"{base}/v1/sessions",
        {"age": script["age"], "gender": script["gender"], "concepts": script["concepts"]},
    )
    requests = 1
    session_id = payload["session_id"]
    answer_iter = iter(script["answers"])
    while "next_question" in payload:
        yes = next(answer_iter, False)
        payload = await timed_post(
            f"{base}/v1/sessions/{session_id}/answer",
            {
                "concept_id": payload["next_question"]["concept_id"],
                "response": "yes" if yes else "no",
            },
        )
        requests += 1
    if "recommendation" not in payload:
        raise BenchError(f"session {session_id} ended without a recommendation")
    return requests


async def _run_load(
    bases: list[str] | str, scripts: list[dict], concurrency: int
) -> tuple[list[float], int, float]:
    """Drive the scripts at fixed concurrency; with several worker base URLs
    each session sticks to one worker (round-robin assignment)."""
    if isinstance(bases, str):
        bases = [bases]
    latencies: list[float] = []
    queue: asyncio.Queue[tuple[str, dict]] = asyncio.Queue()
    for i, script in enumerate(scripts):
        queue.put_nowait((bases[i % len(bases)], script))
    total_requests = 0

    async with httpx.AsyncClient(timeout=60.0) as client:
        async def worker():
            nonlocal total_requests
            while True:
                try:
                    base, script = queue.get_nowait()
                except asyncio.QueueEmpty:
                    return
                completed = await _drive_session(client, base, script, latencies)
                total_requests += completed  # update after the await, not across it

        t0 = time.perf_counter()
        await asyncio.gather(*[worker() for _ in range(concurrency)])
        wall = time.perf_counter() - t0
    return latencies, total_requests, wall


def wait_for_health(base: str, timeout: float = HEALTH_TIMEOUT) -> dict:
    deadline = time.monotonic() + timeout
    last_error: Exception | None = None
    while time.monotonic() < deadline:
        try:
            response = httpx.get(f"{base}/v1/health", timeout=2.0)
            if response.status_code == 200:
                return response.json()
        except Exception as exc:  # noqa: BLE001 - retried until deadline
            last_error = exc
        time.sleep(0.2)
    raise BenchError(f"service at {base} not healthy within {timeout}s: {last_error}")


def start_server(config: BenchConfig, workers: int) -> subprocess.Popen:
    cmd = [
        sys.executable,
        "-m",
        "triagekit.cli",
        "serve",
        "--graph",
        config.graph_path,
        "--ontology",
        config.ontology_path,
        "--host",
        config.host,
        "--port",
        str(config.port),
        "--workers",
        str(workers),
    ]
    return subprocess.Popen(cmd, stdout=subprocess.DEVNULL, stderr=subprocess.DEVNULL)


def stop_server(proc: subprocess.Popen) -> None:
    proc.terminate()
    try:
        proc.wait(timeout=15)
    except subprocess.TimeoutExpired:
        proc.kill()
        proc.wait(timeout=10)


def run_bench(config: BenchConfig, concepts: list[str]) -> dict:
    """One report per worker count over the identical session mix. Worker N
    listens on port + N - 1; sessions are pinned round-robin."""
    scripts = build_session_scripts(config.sessions_per_run, config.seed, concepts)
    reports: list[BenchReport] = []
    for workers in config.workers:
        bases = [f"http://{config.host}:{config.port + i}" for i in range(workers)]
        proc = start_server(config, workers)
        try:
            for base in bases:
                wait_for_health(base)
            latencies, requests, wall = asyncio.run(
                _run_load(bases, scripts, config.concurrency)
            )
        finally:
            stop_server(proc)
        report = BenchReport(
            worker_count=workers,
            concurrency=config.concurrency,
            sessions=len(scripts),
            requests=requests,
            mean_ms=statistics.fmean(latencies) if latencies else 0.0,
            p50_ms=_percentile(latencies, 0.50),
            p95_ms=_percentile(latencies, 0.95),
            p99_ms=_percentile(latencies, 0.99),
            throughput_rps=requests / wall if wall > 0 else 0.0,
            wall_seconds=wall,
        )
        report.validate()
        reports.append(report)

    efficiencies = {}
    for previous, current in zip(reports, reports[1:]):
        if previous.throughput_rps > 0 and current.worker_count == 2 * previous.worker_count:
            ratio = current.throughput_rps / previous.throughput_rps
            efficiencies[f"{previous.worker_count}->{current.worker_count}"] = ratio / 2.0
    return {
        "reports": [asdict(r) for r in reports],
        "scaling_efficiency_per_doubling": efficiencies,
        "environment": {
            "platform": platform.platform(),
            "python": sys.version.split()[0],
            "cpu_count": os.cpu_count(),
            "timestamp": time.strftime("%Y-%m-%dT%H:%M:%S"),
            "seed": config.seed,
        },
    }


def save_report(report: dict, path: str | Path) -> None:
    Path(path).write_text(json.dumps(report, indent=2) + "\n", encoding="utf-8")
