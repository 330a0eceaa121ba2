# SPDX-License-Identifier: Apache-2.0
# SPDX-FileCopyrightText: 2025 The Linux Foundation

"""Command-line interface for ddg-refiner."""

from __future__ import annotations

from collections.abc import Iterator
from contextlib import contextmanager
import logging
import math
from pathlib import Path
import sys
from typing import Any

import numpy as np
from rich.console import Console
from rich.logging import RichHandler
from rich.table import Table
import typer

try:  # typer >= 0.26 raises exceptions from its vendored click copy
    from typer._click import exceptions as click_exceptions
except ImportError:  # pragma: no cover
    from click import exceptions as click_exceptions

from ._version import __version__
from .checks import SuiteReport, run_checks
from .checkpoint import save_checkpoint
from .config import load_config
from .data_io import (
    load_dataset,
    load_rmsf,
    load_structure,
    load_structures,
    parse_mutation,
    rmsf_for_complex,
    serialize_pdb,
    split_folds,
    write_dataset,
    write_rmsf,
)
from .exceptions import (
    CheckFailedError,
    ConfigurationError,
    DataFormatError,
    DdgRefinerError,
    InvalidPDCError,
    MetricError,
    MutationError,
    ShapeError,
    StructureError,
)
from .metrics import EvalReport, evaluate, format_report
from .mmm import corrupt, masked_ca_rmsd, select_mask_region
from .models import CheckSuite, CorruptionKind
from .pipeline import ModelParams, predict
from .progress_tracker import DummyProgressTracker, ProgressLike, TrainingProgress
from .synthetic import make_benchmark
from .trainer import (
    Trainer,
    build_samples,
    correlate_uncertainty,
    default_workers,
    fit_uncertainty,
    load_model,
    load_pretrained,
    model_summary,
    predict_records,
    pretrain,
    split_for_fold,
)

console = Console()
logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_CHECK = 3

_DATA_ERRORS = (
    DataFormatError,
    StructureError,
    MutationError,
    MetricError,
    InvalidPDCError,
    ShapeError,
)


def version_callback(ctx: typer.Context, value: bool) -> None:
    """Print version and exit."""
    if value:
        console.print(f"🧬 ddg-refiner version {__version__}")
        ctx.exit()


def setup_logging(
    log_level: str = "INFO", quiet: bool = False, verbose: bool = False
) -> None:
    """Configure logging with Rich handler."""
    if quiet:
        log_level = "ERROR"
    elif verbose:
        log_level = "DEBUG"

    logging.basicConfig(
        level=log_level.upper(),
        format="%(message)s",
        handlers=[RichHandler(console=console, show_time=False, show_path=False)],
        force=True,
    )


@contextmanager
def handle_errors() -> Iterator[None]:
    """Map library exceptions to exit codes with a readable message."""
    try:
        yield
    except CheckFailedError as e:
        console.print(f"[red]Check failed:[/red] {e}")
        raise typer.Exit(EXIT_CHECK) from e
    except _DATA_ERRORS as e:
        console.print(f"[red]Error:[/red] {e}")
        raise typer.Exit(EXIT_DATA) from e
    except (ConfigurationError, DdgRefinerError) as e:
        console.print(f"[red]Error:[/red] {e}")
        raise typer.Exit(EXIT_USAGE) from e


def _chains(text: str) -> tuple[str, ...]:
    chains = tuple(c for c in text.replace(",", "") if not c.isspace())
    if not chains:
        msg = "At least one chain id is required"
        raise ConfigurationError(msg)
    return chains


def _tracker(ctx: typer.Context, task: str, total: int) -> ProgressLike:
    if ctx.obj and ctx.obj.get("quiet"):
        return DummyProgressTracker(task, total)
    return TrainingProgress(task, total, console)


def _rmsf_tables(
    rmsf_dir: Path | None, pdb_ids: set[str]
) -> dict[str, dict[tuple[str, int], float]] | None:
    """Read ``<rmsf_dir>/<pdb>.tsv`` for every structure id."""
    if rmsf_dir is None:
        return None
    tables: dict[str, dict[tuple[str, int], float]] = {}
    for pdb_id in sorted(pdb_ids):
        path = rmsf_dir / f"{pdb_id}.tsv"
        try:
            tables[pdb_id] = load_rmsf(path.read_text(encoding="utf-8"))
        except OSError as e:
            msg = f"Cannot read RMSF table {path}: {e}"
            raise DataFormatError(msg) from e
    return tables


def _read_rmsf_file(path: Path) -> dict[tuple[str, int], float]:
    try:
        return load_rmsf(path.read_text(encoding="utf-8"))
    except OSError as e:
        msg = f"Cannot read RMSF table {path}: {e}"
        raise DataFormatError(msg) from e


def _print_report(report: EvalReport) -> None:
    table = Table(title=f"Evaluation ({report.n_records} records)")
    table.add_column("metric", style="cyan")
    table.add_column("value", justify="right")
    for name, value in report.metrics.items():
        table.add_row(name, "n/a" if math.isnan(value) else f"{value:.4f}")
    console.print(table)


def _print_checks(reports: list[SuiteReport]) -> None:
    table = Table(title="Property checks")
    table.add_column("suite", style="cyan")
    table.add_column("property")
    table.add_column("max deviation", justify="right")
    table.add_column("limit", justify="right")
    table.add_column("status")
    for report in reports:
        for r in report.results:
            status = "[green]pass[/green]" if r.passed else "[red]FAIL[/red]"
            table.add_row(
                report.suite.value, r.name, f"{r.max_deviation:.3e}", f"{r.threshold:.0e}", status
            )
    console.print(table)


# Create Typer app
app = typer.Typer(
    name="ddg-refiner",
    help="Masked structure refinement and ΔΔG prediction for protein complexes",
    add_completion=False,
    rich_markup_mode="rich",
    no_args_is_help=True,
)


@app.callback()
def main(
    ctx: typer.Context,
    verbose: bool = typer.Option(
        False, "--verbose", "-v", help="Enable verbose output"
    ),
    quiet: bool = typer.Option(
        False, "--quiet", "-q", help="Suppress all output except errors"
    ),
    log_level: str = typer.Option("INFO", "--log-level", help="Set logging level"),
    _version: bool = typer.Option(
        False,
        "--version",
        callback=version_callback,
        is_eager=True,
        help="Show version and exit",
    ),
) -> None:
    """
    ddg-refiner - refine mutant structures and predict binding ΔΔG.

    Examples:
      ddg-refiner make-synthetic --out-dir bench
      ddg-refiner train --config run.json --fold 0 --out model.json
      ddg-refiner predict --ckpt model.json --pdb 1abc.pdb -L A -R B -m TA12G
      ddg-refiner check --suite all
    """
    setup_logging(log_level=log_level, quiet=quiet, verbose=verbose)
    ctx.obj = {"quiet": quiet}


@app.command()
def train(
    ctx: typer.Context,
    config_path: Path | None = typer.Option(
        None, "--config", "-c", help="JSON run configuration"
    ),
    fold: int | None = typer.Option(None, "--fold", help="Test fold (trained on the others)"),
    out: Path | None = typer.Option(None, "--out", "-o", help="Checkpoint to write"),
    dataset: Path | None = typer.Option(None, "--dataset", help="Dataset TSV"),
    structure_dir: Path | None = typer.Option(
        None, "--structure-dir", help="Directory of <pdb>.pdb files"
    ),
    rmsf_dir: Path | None = typer.Option(
        None, "--rmsf-dir", help="Directory of <pdb>.tsv RMSF tables"
    ),
    init_ckpt: Path | None = typer.Option(
        None, "--init-ckpt", help="Pretrained checkpoint for encoder and refiner"
    ),
    log_file: Path | None = typer.Option(None, "--log-file", help="JSONL training log"),
    max_iterations: int | None = typer.Option(None, "--max-iterations", min=1),
    batch_size: int | None = typer.Option(None, "--batch-size", min=1),
    lr: float | None = typer.Option(None, "--lr"),
    seed: int | None = typer.Option(None, "--seed", help="Random seed"),
    workers: int | None = typer.Option(
        None,
        "--workers",
        "-j",
        min=1,
        max=32,
        help="Validation workers (auto-detects CPU cores if not specified)",
    ),
) -> None:
    """Train on folds other than --fold and validate on a held-out slice."""
    with handle_errors():
        config = load_config(
            config_path,
            {
                "fold": fold,
                "checkpoint": out,
                "dataset": dataset,
                "structure_dir": structure_dir,
                "rmsf_dir": rmsf_dir,
                "init_checkpoint": init_ckpt,
                "log_file": log_file,
                "train": {
                    "max_iterations": max_iterations,
                    "batch_size": batch_size,
                    "lr": lr,
                    "seed": seed,
                },
            },
        )
        config.check_paths()
        if config.dataset is None or config.structure_dir is None:
            msg = "train needs a dataset and a structure directory"
            raise ConfigurationError(msg)
        if config.checkpoint is None:
            msg = "train needs an output checkpoint (--out or 'checkpoint')"
            raise ConfigurationError(msg)

        entries = load_dataset(config.dataset)
        folds = split_folds(entries, config.n_folds, config.train.seed)
        split = split_for_fold(
            entries, folds, config.fold, config.val_fraction, config.train.seed
        )
        if not split.train:
            msg = f"fold {config.fold} leaves no training entries"
            raise DataFormatError(msg)
        used = split.train + split.val
        complexes = load_structures(used, config.structure_dir)
        rmsf = _rmsf_tables(config.rmsf_dir, {e.pdb_id for e in used})

        params = ModelParams.init(config.model, config.train.seed)
        if config.init_checkpoint is not None:
            load_pretrained(config.init_checkpoint, params)
        logger.info(
            f"Fold {config.fold}: {len(split.train)} train, {len(split.val)} validation, "
            f"{len(split.test)} test entries; parameters {model_summary(params)}"
        )
        trainer = Trainer(
            params,
            config.train,
            build_samples(split.train, complexes, rmsf),
            build_samples(split.val, complexes, rmsf),
            checkpoint_path=config.checkpoint,
            log_path=config.log_file,
            progress=_tracker(ctx, f"train fold {config.fold}", config.train.max_iterations),
            workers=workers or default_workers(),
        )
        result = trainer.fit()
    console.print(
        f"[green]✅ Trained {len(result.history)} steps[/green] "
        f"(loss {result.initial_loss:.4g} → {result.final_loss:.4g}); "
        f"checkpoint from step {result.best_iteration} written to {config.checkpoint}"
    )


@app.command(name="pretrain")
def pretrain_command(
    ctx: typer.Context,
    structure_dir: Path = typer.Option(..., "--structure-dir", help="Directory of PDB files"),
    ligand_chains: str = typer.Option("A", "--ligand-chains", "-L"),
    receptor_chains: str = typer.Option("B", "--receptor-chains", "-R"),
    out: Path = typer.Option(..., "--out", "-o", help="Checkpoint to write"),
    config_path: Path | None = typer.Option(None, "--config", "-c"),
    iterations: int | None = typer.Option(None, "--iterations", min=1),
    corruption: CorruptionKind | None = typer.Option(None, "--corruption"),
    log_file: Path | None = typer.Option(None, "--log-file"),
    seed: int | None = typer.Option(None, "--seed"),
) -> None:
    """Masked-refinement pretraining on unlabeled structures."""
    with handle_errors():
        config = load_config(
            config_path,
            {
                "log_file": log_file,
                "train": {
                    "max_iterations": iterations,
                    "corruption": corruption,
                    "seed": seed,
                },
            },
        )
        paths = sorted(Path(structure_dir).glob("*.pdb"))
        if not paths:
            msg = f"No .pdb files in {structure_dir}"
            raise DataFormatError(msg)
        lig, rec = _chains(ligand_chains), _chains(receptor_chains)
        structures = [load_structure(p, lig, rec) for p in paths]
        params = ModelParams.init(config.model, config.train.seed)
        losses = pretrain(
            structures,
            params,
            config.train,
            _tracker(ctx, "pretrain", config.train.max_iterations),
            config.log_file,
        )
        save_checkpoint(
            out, params.named_parameters(), config.model, config.train, len(losses)
        )
    console.print(
        f"[green]✅ Pretrained on {len(structures)} structures[/green] "
        f"(loss {losses[0]:.4g} → {losses[-1]:.4g}); saved {out}"
    )


@app.command(name="predict")
def predict_command(
    ckpt: Path = typer.Option(..., "--ckpt", help="Model checkpoint"),
    pdb: Path = typer.Option(..., "--pdb", help="Wild-type structure"),
    ligand_chains: str = typer.Option(..., "--ligand-chains", "-L"),
    receptor_chains: str = typer.Option(..., "--receptor-chains", "-R"),
    mutations: str = typer.Option(..., "--mutations", "-m", help="e.g. TI38A,RC106K"),
    out_pdb: Path | None = typer.Option(
        None, "--out-pdb", help="Write the refined mutant backbone"
    ),
    rmsf_file: Path | None = typer.Option(None, "--rmsf", help="RMSF table"),
    seed: int | None = typer.Option(None, "--seed"),
) -> None:
    """Predict ΔΔG (kcal/mol) for a set of mutations."""
    with handle_errors():
        params, cfg = load_model(ckpt)
        if seed is not None:
            cfg = cfg.model_copy(update={"seed": seed})
        wt = load_structure(pdb, _chains(ligand_chains), _chains(receptor_chains))
        rmsf = None
        if rmsf_file is not None:
            rmsf = rmsf_for_complex(wt, _read_rmsf_file(rmsf_file))
        result = predict(wt, parse_mutation(mutations), params, cfg, rmsf)
        if out_pdb is not None:
            out_pdb.write_text(
                serialize_pdb(wt, result.mutant_coords), encoding="utf-8"
            )
    console.print(f"ΔΔG\t{result.ddg:.6f}\tkcal/mol")
    if out_pdb is not None:
        console.print(f"Refined mutant backbone written to {out_pdb}")


@app.command(name="eval")
def eval_command(
    ckpt: Path = typer.Option(..., "--ckpt", help="Model checkpoint"),
    dataset: Path = typer.Option(..., "--dataset", help="Dataset TSV"),
    structure_dir: Path = typer.Option(..., "--structure-dir"),
    fold: int | None = typer.Option(
        None, "--fold", help="Evaluate only this fold (all entries when omitted)"
    ),
    n_folds: int = typer.Option(3, "--n-folds", min=2),
    rmsf_dir: Path | None = typer.Option(None, "--rmsf-dir"),
    out: Path | None = typer.Option(None, "--out", "-o", help="Metrics TSV"),
    seed: int | None = typer.Option(
        None, "--seed", help="Fold-split seed (the checkpoint's seed by default)"
    ),
    workers: int | None = typer.Option(
        None,
        "--workers",
        "-j",
        min=1,
        max=32,
        help="Number of parallel workers (auto-detects CPU cores if not specified)",
    ),
) -> None:
    """Predict every dataset record and report all metrics."""
    with handle_errors():
        params, cfg = load_model(ckpt)
        entries = load_dataset(dataset)
        if fold is not None:
            if not 0 <= fold < n_folds:
                msg = f"fold {fold} out of range for {n_folds} folds"
                raise ConfigurationError(msg)
            split_seed = cfg.seed if seed is None else seed
            entries = split_folds(entries, n_folds, split_seed).entries_in(entries, fold)
        complexes = load_structures(entries, structure_dir)
        rmsf = _rmsf_tables(rmsf_dir, {e.pdb_id for e in entries})
        samples = build_samples(entries, complexes, rmsf)
        records = predict_records(samples, params, cfg, workers or default_workers())
        report = evaluate(records)
        if out is not None:
            out.write_text(format_report(report), encoding="utf-8")
    _print_report(report)
    if out is not None:
        console.print(f"Metrics written to {out}")


@app.command()
def check(
    suite: CheckSuite = typer.Option(CheckSuite.ALL, "--suite", "-s", help="Suite to run"),
) -> None:
    """Run the property suites; exit 3 if any property fails."""
    with handle_errors():
        try:
            reports = run_checks(suite)
        except CheckFailedError as e:
            _print_checks(e.report)
            raise
    _print_checks(reports)
    console.print("[green]✅ All checks passed[/green]")


@app.command(name="correlate-uncertainty")
def correlate_uncertainty_command(
    ckpt: Path = typer.Option(..., "--ckpt", help="Model checkpoint"),
    pdb: Path = typer.Option(..., "--pdb"),
    ligand_chains: str = typer.Option("A", "--ligand-chains", "-L"),
    receptor_chains: str = typer.Option("B", "--receptor-chains", "-R"),
    rmsf_file: Path = typer.Option(..., "--rmsf", help="RMSF table"),
    cutoff: float | None = typer.Option(None, "--cutoff", help="Interface cutoff (Å)"),
) -> None:
    """Compare learned covariance magnitudes with RMSF."""
    with handle_errors():
        params, _ = load_model(ckpt)
        c = load_structure(pdb, _chains(ligand_chains), _chains(receptor_chains))
        rmsf = rmsf_for_complex(c, _read_rmsf_file(rmsf_file))
        report = correlate_uncertainty(c, rmsf, params, cutoff)
    table = Table(title="Covariance vs RMSF")
    table.add_column("partition", style="cyan")
    table.add_column("residues", justify="right")
    table.add_column("mean ‖Σ‖²", justify="right")
    table.add_column("mean RMSF", justify="right")
    table.add_row(
        "interface",
        str(report.n_interface),
        f"{report.interface_mean_sq_norm:.4f}",
        f"{report.interface_mean_rmsf:.4f}",
    )
    table.add_row(
        "non-interface",
        str(report.n_non_interface),
        f"{report.non_interface_mean_sq_norm:.4f}",
        f"{report.non_interface_mean_rmsf:.4f}",
    )
    console.print(table)
    console.print(f"pearson\t{report.pearson:.6f}")


@app.command(name="fit-uncertainty")
def fit_uncertainty_command(
    ctx: typer.Context,
    pdb: Path = typer.Option(..., "--pdb"),
    ligand_chains: str = typer.Option("A", "--ligand-chains", "-L"),
    receptor_chains: str = typer.Option("B", "--receptor-chains", "-R"),
    rmsf_file: Path = typer.Option(..., "--rmsf", help="RMSF table"),
    out: Path = typer.Option(..., "--out", "-o", help="Checkpoint to write"),
    ckpt: Path | None = typer.Option(None, "--ckpt", help="Start from this checkpoint"),
    config_path: Path | None = typer.Option(None, "--config", "-c"),
    steps: int = typer.Option(500, "--steps", min=1),
    lr: float = typer.Option(1e-3, "--lr"),
    seed: int = typer.Option(0, "--seed"),
) -> None:
    """Fit covariance magnitudes to an RMSF profile (encoder only)."""
    with handle_errors():
        if ckpt is not None:
            params, train_cfg = load_model(ckpt)
        else:
            config = load_config(config_path)
            params, train_cfg = ModelParams.init(config.model, seed), config.train
        c = load_structure(pdb, _chains(ligand_chains), _chains(receptor_chains))
        rmsf = rmsf_for_complex(c, _read_rmsf_file(rmsf_file))
        losses = fit_uncertainty(
            c, rmsf, params, steps, lr, _tracker(ctx, "fit-uncertainty", steps)
        )
        save_checkpoint(out, params.named_parameters(), params.config, train_cfg, steps)
    console.print(
        f"[green]✅ Uncertainty fit[/green]: loss {losses[0]:.4g} → {losses[-1]:.4g}; saved {out}"
    )


@app.command(name="mask-init")
def mask_init_command(
    pdb: Path = typer.Option(..., "--pdb"),
    ligand_chains: str = typer.Option(..., "--ligand-chains", "-L"),
    receptor_chains: str = typer.Option(..., "--receptor-chains", "-R"),
    mutations: str = typer.Option(..., "--mutations", "-m"),
    out: Path = typer.Option(..., "--out", "-o", help="Corrupted structure (PDB)"),
    mode: CorruptionKind = typer.Option(CorruptionKind.INTERPOLATE, "--mode"),
    left: int = typer.Option(5, "--l", min=0, help="Residues masked before each site"),
    right: int = typer.Option(5, "--r", min=0, help="Residues masked after each site"),
    alpha: float = typer.Option(0.5, "--alpha", help="Noise scale (Å)"),
    seed: int = typer.Option(0, "--seed"),
) -> None:
    """Write the corrupted starting structure around the given mutations."""
    with handle_errors():
        c = load_structure(pdb, _chains(ligand_chains), _chains(receptor_chains))
        region = select_mask_region(c, parse_mutation(mutations), left, right)
        coords = corrupt(c.coords, region, mode, alpha, seed)
        out.write_text(serialize_pdb(c, coords), encoding="utf-8")
        rmsd = masked_ca_rmsd(coords, c.coords, region)
    console.print(
        f"Masked {len(region)} residues ({mode.value}); CA RMSD {rmsd:.3f} Å; wrote {out}"
    )


@app.command(name="make-synthetic")
def make_synthetic_command(
    out_dir: Path = typer.Option(..., "--out-dir", "-o"),
    n_complexes: int = typer.Option(20, "--n-complexes", min=1),
    mutations_per_complex: int = typer.Option(1, "--mutations-per-complex", min=1),
    seed: int = typer.Option(0, "--seed"),
) -> None:
    """Generate a synthetic two-helix benchmark (structures, dataset, RMSF)."""
    bench = make_benchmark(n_complexes, mutations_per_complex, seed)
    structures = out_dir / "structures"
    rmsf_dir = out_dir / "rmsf"
    structures.mkdir(parents=True, exist_ok=True)
    rmsf_dir.mkdir(parents=True, exist_ok=True)
    for pdb_id, c in bench.complexes.items():
        (structures / f"{pdb_id}.pdb").write_text(serialize_pdb(c), encoding="utf-8")
        values = {
            (r.chain_id, r.seq_number): float(v)
            for r, v in zip(c.residues, bench.rmsf[pdb_id], strict=True)
        }
        (rmsf_dir / f"{pdb_id}.tsv").write_text(write_rmsf(values), encoding="utf-8")
    (out_dir / "dataset.tsv").write_text(write_dataset(bench.entries), encoding="utf-8")
    labels = np.array([e.ddg for e in bench.entries])
    console.print(
        f"[green]✅ Wrote {len(bench.complexes)} complexes and {len(bench.entries)} "
        f"entries[/green] to {out_dir} (ΔΔG range {labels.min():.2f} … {labels.max():.2f})"
    )


def cli(argv: list[str] | None = None) -> None:
    """CLI entry point; usage errors exit 1 instead of click's 2."""
    try:
        code: Any = app(args=argv, standalone_mode=False)
    except click_exceptions.UsageError as e:
        e.show()
        sys.exit(EXIT_USAGE)
    except click_exceptions.ClickException as e:
        e.show()
        sys.exit(e.exit_code)
    except click_exceptions.Abort:
        console.print("[yellow]Aborted[/yellow]")
        sys.exit(EXIT_USAGE)
    sys.exit(code if isinstance(code, int) else EXIT_OK)


if __name__ == "__main__":
    cli()
