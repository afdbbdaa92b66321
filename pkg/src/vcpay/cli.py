"""Operator tooling.

Exit codes for `stack`: 0 clean reconstruction, 2 tampering detected,
3 share dimension mismatch. Other failures exit 1 with a message.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from . import bench as bench_mod
from . import netpbm, vc
from .demo import HttpBank, load_scenario, run_scenario
from .errors import DimensionMismatchError, TamperDetectedError, VcpayError
from .imaging import ErrorDiffusion, GrayscaleImage, binarize


@click.group()
def main() -> None:
    """Selfie micro-payments: split, stack, demo, serve, bench."""


@main.command()
@click.argument("image_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--seed", type=int, default=0, show_default=True, help="coin stream seed")
@click.option(
    "--out",
    "out_dir",
    type=click.Path(file_okay=False),
    default="shares",
    show_default=True,
)
def split(image_path: str, seed: int, out_dir: str) -> None:
    """Split a PBM/PGM image into two shares (PGM is dithered first)."""
    data = Path(image_path).read_bytes()
    try:
        kind = netpbm.sniff(data)
        if kind == "pgm":
            secret = binarize(GrayscaleImage.from_pgm(data), ErrorDiffusion())
        else:
            secret = vc.BinaryImage.from_pbm(data)
        share1, share2 = vc.generate_shares(secret, seed)
    except VcpayError as exc:
        raise click.ClickException(str(exc)) from exc
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "share1.pbm").write_bytes(share1.to_pbm())
    (out / "share2.pbm").write_bytes(share2.to_pbm())
    meta = {
        "input": str(image_path),
        "secretWidth": secret.width,
        "secretHeight": secret.height,
        "expansion": share1.expansion,
        "seed": seed,
        "share1Checksum": _sha256(share1.to_pbm()),
        "share2Checksum": _sha256(share2.to_pbm()),
    }
    (out / "meta.json").write_text(json.dumps(meta, indent=2) + "\n", encoding="utf-8")
    click.echo(f"wrote {out / 'share1.pbm'}, {out / 'share2.pbm'} ({share1.width}x{share1.height})")


@main.command()
@click.argument("share_paths", nargs=-1, required=True, type=click.Path(exists=True, dir_okay=False))
@click.option(
    "--out",
    "out_dir",
    type=click.Path(file_okay=False),
    default="stacked",
    show_default=True,
)
def stack(share_paths: tuple[str, ...], out_dir: str) -> None:
    """Stack two or more shares; decode and report tampering via exit code."""
    if len(share_paths) < 2:
        raise click.ClickException("need at least two shares")
    try:
        shares = [vc.Share.from_pbm(Path(p).read_bytes()) for p in share_paths]
    except VcpayError as exc:
        raise click.ClickException(str(exc)) from exc
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    try:
        stacked = vc.stack(shares)
    except DimensionMismatchError as exc:
        click.echo(f"dimension mismatch: {exc}", err=True)
        sys.exit(3)
    (out / "stacked.pbm").write_bytes(stacked.to_pbm())
    try:
        for index, share in enumerate(shares, start=1):
            vc.verify_share(share, label=f"share {index}")
        decoded = vc.decode(stacked)
    except TamperDetectedError as exc:
        click.echo(f"tampering detected: {exc}", err=True)
        sys.exit(2)
    (out / "decoded.pbm").write_bytes(decoded.to_pbm())
    click.echo(f"clean stack; decoded {decoded.width}x{decoded.height} -> {out / 'decoded.pbm'}")


@main.command()
@click.argument("scenario_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--bank-url", required=True, help="base URL of a running bank service")
@click.option("--seed", type=int, default=None, help="override the scenario seed")
@click.option("--client-id", default="admin", show_default=True)
@click.option("--client-secret", default="admin-secret", show_default=True)
def demo(
    scenario_path: str,
    bank_url: str,
    seed: int | None,
    client_id: str,
    client_secret: str,
) -> None:
    """Run a scenario end to end and print the transcript."""
    scenario = load_scenario(scenario_path)
    try:
        bank = HttpBank(bank_url, client_id, client_secret)
    except Exception as exc:
        raise click.ClickException(f"cannot reach the bank at {bank_url}: {exc}") from exc
    try:
        result = run_scenario(scenario, bank, seed_override=seed)
    finally:
        bank.close()
    click.echo("\n".join(result.transcript))
    if result.failed_step is not None:
        click.echo(f"scenario failed at {result.failed_step}", err=True)
        sys.exit(1)


@main.command()
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--port", type=int, default=None, help="override the configured port")
@click.option("--db", "db_path", default=None, help="override the SQLite path")
@click.option("--data-dir", default=None, help="override the image data directory")
@click.option("--sync-jobs", is_flag=True, help="run pairing synchronously on upload")
def serve(
    config_path: str | None,
    port: int | None,
    db_path: str | None,
    data_dir: str | None,
    sync_jobs: bool,
) -> None:
    """Run the point-of-service HTTP API."""
    import uvicorn

    from .bank import BankConfig, BankService
    from .bank.api import create_app

    config = BankConfig.load(config_path)
    if port is not None:
        config.port = port
    if db_path is not None:
        config.db_path = db_path
    if data_dir is not None:
        config.data_dir = data_dir
    if sync_jobs:
        config.sync_jobs = True
    service = BankService(config)
    if not config.sync_jobs:
        service.start_worker()
    app = create_app(service)
    click.echo(f"bank service on {config.host}:{config.port} (db {config.db_path})")
    uvicorn.run(app, host=config.host, port=config.port, log_level="warning")


@main.command()
@click.option("--size", type=int, default=1024, show_default=True)
@click.option("--repeats", type=int, default=5, show_default=True)
def bench(size: int, repeats: int) -> None:
    """Compare the numba kernels with the numpy fallbacks."""
    rows = bench_mod.run_benchmark(size=size, repeats=repeats)
    click.echo(bench_mod.format_report(rows, size))
    if not all(row.matched for row in rows):
        raise click.ClickException("backend outputs diverged")


def _sha256(data: bytes) -> str:
    import hashlib

    return hashlib.sha256(data).hexdigest()


if __name__ == "__main__":
    main()
