#!/usr/bin/env python3
"""Print run status - replicate counts and the latest finished replicates."""

import sys
from pathlib import Path

# Add project root to path
sys.path.insert(0, str(Path(__file__).parent.parent))

from rich.console import Console

from core.progress import FITS_SUFFIX, replicate_status_line
from core.records import ReplicateStore

console = Console()


def main():
    """Print status of the run directory given as the first argument (default ``runs``)."""
    base_path = Path(sys.argv[1]) if len(sys.argv) > 1 else Path("runs")
    if not base_path.exists():
        console.print(f"[bold red]No run directory at {base_path}[/bold red]")
        sys.exit(1)
    store = ReplicateStore(base_path)
    manifest = store.read_manifest()
    config = manifest.get("config", {})

    console.print(f"📊 [bold blue]prefsim run {base_path}[/bold blue]")
    console.print("=" * 30)
    if config:
        console.print(
            f"  Scenario {config.get('scenario')} Comb({config.get('n_fid')},{config.get('n_fdd')}), "
            f"T={config.get('T')}, variants: {', '.join(manifest.get('variants', []))}"
        )

    console.print("\n📋 [bold]Replicates:[/bold]")
    for status, count in store.get_counts().items():
        console.print(f"  {status}: [bold]{count}[/bold]")
    if "replicates" in config:
        console.print(f"  expected: [bold cyan]{config['replicates']}[/bold cyan]")

    finished = sorted(store.replicates_dir.glob(f"*{FITS_SUFFIX}"))
    if finished:
        console.print("\n⚡ [bold]Recent Replicates:[/bold]")
        for path in finished[-3:]:
            console.print(f"  ✅ {replicate_status_line(path)}")
    else:
        console.print("\n⚡ [bold]Recent Replicates:[/bold] none finished")

    console.print()


if __name__ == "__main__":
    main()
