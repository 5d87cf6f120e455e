"""Run-directory progress: counts and a live watcher for finished replicates."""

import asyncio
from pathlib import Path

import pandas as pd
from rich.console import Console
from rich.table import Table
from watchdog.events import FileSystemEventHandler
from watchdog.observers import Observer

from .records import ReplicateStore

console = Console()

FITS_SUFFIX = "_fits.csv"


def replicate_status_line(path: Path) -> str:
    """One line per finished replicate: stem and each variant's status."""
    stem = path.name[: -len(FITS_SUFFIX)]
    try:
        frame = pd.read_csv(path)
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        return f"{stem}: unreadable ({e})"
    statuses = frame.drop_duplicates("variant")[["variant", "status"]]
    parts = [f"{v}={s}" for v, s in zip(statuses["variant"], statuses["status"])]
    return f"{stem}: {', '.join(parts)}"


def status_table(base_path: Path) -> Table:
    store = ReplicateStore(base_path)
    counts = store.get_counts()
    expected = store.read_manifest().get("config", {}).get("replicates")
    table = Table(title=f"Run {base_path}")
    table.add_column("Item")
    table.add_column("Count", justify="right")
    if expected is not None:
        table.add_row("expected", str(expected))
    for key, value in counts.items():
        table.add_row(key, str(value))
    return table


class ReplicateFileHandler(FileSystemEventHandler):
    """Reports fits files as they land (atomic writes arrive as moves)."""

    def __init__(self, watcher: "RunWatcher"):
        self.watcher = watcher

    def _dispatch(self, path: str) -> None:
        if not path.endswith(FITS_SUFFIX):
            return
        loop = self.watcher.loop
        if loop and loop.is_running():
            asyncio.run_coroutine_threadsafe(self.watcher.process_fits_file(Path(path)), loop)

    def on_created(self, event):
        if not event.is_directory:
            self._dispatch(event.src_path)

    def on_moved(self, event):
        if not event.is_directory:
            self._dispatch(event.dest_path)


class RunWatcher:
    """Prints each replicate as its fits file appears; stops when all are done."""

    def __init__(self, base_path: Path, poll_interval: float = 1.0):
        self.base_path = Path(base_path)
        self.store = ReplicateStore(self.base_path)
        self.poll_interval = poll_interval
        self.observer: Observer | None = None
        self.loop: asyncio.AbstractEventLoop | None = None
        self.running = False
        self.seen: set[str] = set()

    def expected(self) -> int | None:
        return self.store.read_manifest().get("config", {}).get("replicates")

    async def process_fits_file(self, path: Path) -> None:
        if path.name in self.seen:
            return
        self.seen.add(path.name)
        console.log(replicate_status_line(path))

    async def start(self) -> None:
        self.loop = asyncio.get_running_loop()
        for path in sorted(self.store.replicates_dir.glob(f"*{FITS_SUFFIX}")):
            self.seen.add(path.name)
        console.log(f"Watching {self.store.replicates_dir} ({len(self.seen)} replicates complete)")

        self.observer = Observer()
        self.observer.schedule(ReplicateFileHandler(self), str(self.store.replicates_dir), recursive=False)
        self.observer.start()
        self.running = True
        try:
            while self.running:
                await asyncio.sleep(self.poll_interval)
                expected = self.expected()
                if expected is not None and len(self.seen) >= expected:
                    console.log("All replicates complete")
                    break
        finally:
            await self.stop()

    async def stop(self) -> None:
        self.running = False
        if self.observer:
            self.observer.stop()
            self.observer.join()
            self.observer = None
